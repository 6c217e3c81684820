#include "povgen/harness.hpp"

#include "povgen/gdb_mi.hpp"
#include "povgen/subprocess.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <regex>
#include <sstream>

namespace povgen::harness {

namespace {

constexpr std::size_t kTailCap = 64 * 1024;

// Per-run scratch directory, removed on scope exit.
struct RunDir {
    std::filesystem::path path;

    RunDir() {
        static std::atomic<unsigned> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("povgen_run_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~RunDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

std::filesystem::path write_input(const RunDir& dir, const std::string& input) {
    auto p = dir.path / "input.bin";
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(input.data(), static_cast<std::streamsize>(input.size()));
    return p;
}

std::string read_tail(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) return {};
    const auto size = static_cast<std::size_t>(in.tellg());
    const auto keep = std::min(size, kTailCap);
    in.seekg(static_cast<std::streamoff>(size - keep));
    std::string out(keep, '\0');
    in.read(out.data(), static_cast<std::streamsize>(keep));
    return out;
}

std::string exit_description(bool spawn_failed, bool timed_out, bool exited, int exit_code,
                             int term_signal) {
    if (spawn_failed) return "spawn failed";
    if (timed_out) return "killed on timeout";
    if (exited) return "exit " + std::to_string(exit_code);
    return "signal " + std::to_string(term_signal);
}

}  // namespace

Result<void> TargetConfig::validate() const {
    std::size_t first = cmd.find("{input}");
    if (first == std::string::npos || cmd.find("{input}", first + 1) != std::string::npos) {
        return make_error(ErrCode::InvalidConfig,
                          "cmd must contain the {input} placeholder exactly once");
    }
    try {
        std::regex r(reached_pattern);
        std::regex t(triggered_pattern);
    } catch (const std::regex_error& e) {
        return make_error(ErrCode::InvalidConfig,
                          std::string("pattern does not compile: ") + e.what());
    }
    return {};
}

Result<std::vector<std::string>> TargetConfig::argv_for(const std::string& input_path) const {
    std::vector<std::string> argv;
    try {
        argv = proc::split_command(cmd);
    } catch (const std::invalid_argument& e) {
        return make_error(ErrCode::InvalidConfig, e.what());
    }
    for (auto& tok : argv) {
        for (std::size_t pos = tok.find("{input}"); pos != std::string::npos;
             pos = tok.find("{input}")) {
            tok.replace(pos, 7, input_path);
        }
    }
    return argv;
}

Json TargetConfig::to_json() const {
    return {{"cmd", cmd},
            {"env", env},
            {"cwd", cwd.string()},
            {"run_timeout_ms", run_timeout.count()},
            {"reached_pattern", reached_pattern},
            {"triggered_pattern", triggered_pattern}};
}

Result<TargetConfig> TargetConfig::from_json(const Json& j) {
    TargetConfig cfg;
    if (!j.is_object() || !j.contains("cmd") || !j["cmd"].is_string()) {
        return make_error(ErrCode::InvalidConfig, "target config requires a cmd string");
    }
    cfg.cmd = j["cmd"].get<std::string>();
    if (j.contains("env")) {
        for (const auto& [k, v] : j["env"].items()) cfg.env[k] = v.get<std::string>();
    }
    if (j.contains("cwd")) cfg.cwd = j["cwd"].get<std::string>();
    if (j.contains("run_timeout_ms")) {
        cfg.run_timeout = std::chrono::milliseconds(j["run_timeout_ms"].get<std::int64_t>());
    }
    cfg.reached_pattern = j.value("reached_pattern", "");
    cfg.triggered_pattern = j.value("triggered_pattern", "");
    if (auto r = cfg.validate(); !r) return r.error();
    return cfg;
}

const char* to_string(Classification c) {
    switch (c) {
        case Classification::Triggered: return "triggered";
        case Classification::Reached: return "reached";
        case Classification::NoReach: return "no_reach";
        case Classification::Timeout: return "timeout";
        case Classification::Error: return "error";
    }
    return "?";
}

Json ExecutionOutcome::to_json() const {
    return {{"classification", to_string(classification)},
            {"exited", exited},
            {"exit_code", exit_code},
            {"term_signal", term_signal},
            {"stdout_tail", stdout_tail},
            {"stderr_tail", stderr_tail},
            {"wall_ms", wall.count()},
            {"detail", detail}};
}

Classification classify(const TargetConfig& target, const std::string& stdout_tail,
                        const std::string& stderr_tail, bool spawn_failed, bool timed_out,
                        int term_signal) {
    if (spawn_failed) return Classification::Error;
    const std::string combined = stdout_tail + "\n" + stderr_tail;
    if (!target.triggered_pattern.empty() &&
        std::regex_search(combined, std::regex(target.triggered_pattern))) {
        return Classification::Triggered;
    }
    if (!target.reached_pattern.empty() &&
        std::regex_search(combined, std::regex(target.reached_pattern))) {
        return Classification::Reached;
    }
    if (timed_out) return Classification::Timeout;
    if (term_signal != 0) return Classification::Error;  // crash without pattern
    return Classification::NoReach;
}

ExecutionOutcome run_plain(const TargetConfig& target, const std::string& input) {
    ExecutionOutcome out;
    RunDir dir;
    const auto input_path = write_input(dir, input);
    auto argv = target.argv_for(input_path.string());
    if (!argv) {
        out.classification = Classification::Error;
        out.detail = argv.error().message;
        return out;
    }

    proc::RunRequest req;
    req.argv = *argv;
    req.cwd = target.cwd;
    req.env = target.env;
    req.timeout = target.run_timeout;
    req.stdout_cap = kTailCap;
    req.stderr_cap = kTailCap;
    req.stdout_keep_tail = true;
    req.stderr_keep_tail = true;

    auto run = proc::run_process(req);
    out.exited = run.exited;
    out.exit_code = run.exit_code;
    out.term_signal = run.term_signal;
    out.stdout_tail = std::move(run.stdout_data);
    out.stderr_tail = std::move(run.stderr_data);
    out.wall = run.wall;
    out.classification = classify(target, out.stdout_tail, out.stderr_tail, !run.spawned,
                                  run.timed_out, run.term_signal);
    if (!run.spawned) {
        out.detail = "spawn failed: " + run.spawn_error;
    } else if (run.term_signal != 0 && out.classification == Classification::Error) {
        out.detail = "crash: signal " + std::to_string(run.term_signal);
    } else if (run.timed_out) {
        out.detail = exit_description(false, true, run.exited, run.exit_code, run.term_signal);
    }
    return out;
}

Json BreakpointSpec::to_json() const {
    return {{"location", location}, {"inline_expr", inline_expr}, {"hit_limit", hit_limit}};
}

Result<BreakpointSpec> BreakpointSpec::from_json(const Json& j) {
    BreakpointSpec spec;
    if (!j.is_object() || !j.contains("location") || !j["location"].is_string()) {
        return make_error(ErrCode::SchemaViolation, "breakpoint requires a location string");
    }
    spec.location = j["location"].get<std::string>();
    if (j.contains("inline_expr")) {
        for (const auto& e : j["inline_expr"]) spec.inline_expr.push_back(e.get<std::string>());
    }
    if (j.contains("hit_limit")) {
        auto v = j["hit_limit"].get<std::int64_t>();
        if (v < 1) return make_error(ErrCode::SchemaViolation, "hit_limit must be >= 1");
        spec.hit_limit = static_cast<std::uint64_t>(v);
    }
    return spec;
}

Json StackFrame::to_json() const { return {{"function", function}, {"location", location}}; }

Json BreakpointHit::to_json() const {
    Json stack = Json::array();
    for (const auto& f : callstack) stack.push_back(f.to_json());
    return {{"location", location},
            {"hit_index", hit_index},
            {"values", values},
            {"callstack", stack}};
}

BreakpointRunResult run_with_breakpoints(const TargetConfig& target, const std::string& input,
                                         const std::vector<BreakpointSpec>& breaks) {
    BreakpointRunResult res;
    RunDir dir;
    const auto input_path = write_input(dir, input);
    auto argv = target.argv_for(input_path.string());
    if (!argv) {
        res.outcome.classification = Classification::Error;
        res.outcome.detail = argv.error().message;
        return res;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&](bool timed_out, bool spawn_failed) {
        res.outcome.stdout_tail = read_tail(dir.path / "out.txt");
        res.outcome.stderr_tail = read_tail(dir.path / "err.txt");
        res.outcome.wall = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0);
        if (timed_out && res.outcome.wall < target.run_timeout) {
            res.outcome.wall = target.run_timeout;
        }
        res.outcome.classification =
            classify(target, res.outcome.stdout_tail, res.outcome.stderr_tail, spawn_failed,
                     timed_out, res.outcome.term_signal);
    };

    mi::GdbSession gdb;
    if (auto r = gdb.start(*argv, target.cwd, target.env, target.run_timeout); !r) {
        res.outcome.detail = r.error().message;
        finish(false, true);
        return res;
    }

    // Register breakpoints; unresolved ones are reported and skipped.
    std::map<int, std::size_t> by_number;       // gdb number -> spec index
    std::vector<std::uint64_t> hit_counts(breaks.size(), 0);
    for (std::size_t i = 0; i < breaks.size(); ++i) {
        auto num = gdb.insert_breakpoint(breaks[i].location);
        if (!num) {
            res.unresolved.push_back(breaks[i].location);
            continue;
        }
        by_number[*num] = i;
    }

    if (auto r = gdb.run_redirected(dir.path / "out.txt", dir.path / "err.txt"); !r) {
        res.outcome.detail = r.error().message;
        gdb.kill();
        finish(false, true);
        return res;
    }

    for (;;) {
        if (gdb.expired()) {
            gdb.kill();
            finish(true, false);
            return res;
        }
        auto stop = gdb.wait_stop();
        if (!stop) {
            gdb.kill();
            const bool timed_out = stop.error().code == ErrCode::Aborted;
            finish(timed_out, false);
            return res;
        }
        const std::string reason = stop->results.value("reason", "");
        if (reason == "breakpoint-hit") {
            const int num = std::stoi(stop->results.value("bkptno", "0"));
            auto it = by_number.find(num);
            if (it == by_number.end()) {
                if (auto r = gdb.resume(); !r) break;
                continue;
            }
            const auto idx = it->second;
            const auto& spec = breaks[idx];
            BreakpointHit hit;
            hit.location = spec.location;
            hit.hit_index = ++hit_counts[idx];
            for (const auto& expr : spec.inline_expr) {
                hit.values[expr] = gdb.evaluate(expr);
            }
            for (const auto& f : gdb.frames()) {
                hit.callstack.push_back({f.function, f.location});
            }
            res.hits.push_back(std::move(hit));
            if (hit_counts[idx] >= spec.hit_limit) {
                gdb.delete_breakpoint(num);
                by_number.erase(it);
            }
            if (auto r = gdb.resume(); !r) break;
            continue;
        }
        if (reason == "signal-received") {
            res.outcome.term_signal = -1;  // refined below from the signal name
            const std::string sig = stop->results.value("signal-name", "");
            res.outcome.detail = "crash: " + sig;
            res.outcome.term_signal = sig == "SIGSEGV" ? 11 : sig == "SIGABRT" ? 6 : 1;
            gdb.kill();
            finish(false, false);
            return res;
        }
        // exited / exited-normally / exited-signalled
        if (reason.rfind("exited", 0) == 0 || gdb.inferior_exited()) {
            res.outcome.exited = true;
            res.outcome.exit_code = gdb.inferior_exit_code();
            if (stop->results.contains("exit-code")) {
                res.outcome.exit_code =
                    std::stoi(stop->results["exit-code"].get<std::string>(), nullptr, 0);
            } else if (reason == "exited-normally") {
                res.outcome.exit_code = 0;
            }
            finish(false, false);
            return res;
        }
        if (auto r = gdb.resume(); !r) break;
    }
    gdb.kill();
    finish(false, false);
    return res;
}

// --- interactive session ------------------------------------------------------

class DebugSession::Impl {
  public:
    proc::PipeProcess proc;
};

Result<std::unique_ptr<DebugSession>> DebugSession::open(
    const std::vector<std::string>& cmd, std::chrono::milliseconds command_timeout,
    const std::filesystem::path& cwd) {
    if (cmd.empty()) {
        return make_error(ErrCode::InvalidConfig, "launch_gdb requires a command vector");
    }
    auto session = std::unique_ptr<DebugSession>(new DebugSession());
    session->impl_ = std::make_unique<Impl>();
    session->timeout_ = command_timeout;
    std::vector<std::string> argv = {"gdb", "-q", "--nx", "--args"};
    argv.insert(argv.end(), cmd.begin(), cmd.end());
    if (!session->impl_->proc.start(argv, cwd)) {
        return make_error(ErrCode::SpawnError,
                          "gdb spawn failed: " + session->impl_->proc.spawn_error());
    }
    auto banner = session->read_to_prompt();
    if (!banner) return banner.error();
    session->transcript_ += *banner;
    session->state_ = State::Idle;
    return session;
}

Result<std::string> DebugSession::read_to_prompt() {
    std::string acc;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        auto remain = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remain <= std::chrono::milliseconds(0)) {
            return make_error(ErrCode::Aborted, "debugger did not return to its prompt in time",
                              {{"partial", acc}});
        }
        auto chunk = impl_->proc.read_chunk(remain);
        if (!chunk) continue;
        if (chunk->empty() && impl_->proc.eof()) {
            return make_error(ErrCode::SessionDead, "debugger closed its pipe",
                              {{"partial", acc}});
        }
        acc += *chunk;
        if (acc.size() >= 6 && acc.compare(acc.size() - 6, 6, "(gdb) ") == 0) {
            return acc;
        }
    }
}

Result<std::string> DebugSession::send(const std::string& command) {
    if (closed_) return make_error(ErrCode::SessionDead, "session is closed");
    if (state_ == State::Exited &&
        command.rfind("run", 0) != 0) {  // allow re-running a finished program
        return make_error(ErrCode::StateError, "inferior exited; only run is accepted");
    }
    if (state_ == State::Running) {
        return make_error(ErrCode::StateError, "session is running");
    }
    state_ = State::Running;
    if (!impl_->proc.write_all(command + "\n")) {
        closed_ = true;
        return make_error(ErrCode::SessionDead, "debugger pipe write failed");
    }
    auto delta = read_to_prompt();
    if (!delta) {
        if (delta.error().code == ErrCode::SessionDead) closed_ = true;
        state_ = State::Exited;
        return delta.error();
    }
    transcript_ += *delta;

    static const std::regex at_break_re("(Temporary b|B)reakpoint [0-9]+, ");
    static const std::regex exited_re(
        "(exited normally|exited with code|Inferior [0-9]+ \\(process [0-9]+\\) exited)");
    if (std::regex_search(*delta, exited_re)) {
        state_ = State::Exited;
    } else if (std::regex_search(*delta, at_break_re)) {
        state_ = State::AtBreak;
    } else {
        state_ = State::Idle;
    }
    return *delta;
}

void DebugSession::close() {
    if (closed_) return;
    closed_ = true;
    impl_->proc.kill_group();
    impl_->proc.wait(true);
}

DebugSession::~DebugSession() { close(); }

}  // namespace povgen::harness
