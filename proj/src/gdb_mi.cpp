#include "povgen/gdb_mi.hpp"

#include <algorithm>
#include <cctype>

namespace povgen::mi {

namespace {

// value := c-string | tuple | list ; results are name=value pairs.
struct ValueParser {
    const std::string& s;
    std::size_t pos = 0;

    explicit ValueParser(const std::string& text, std::size_t start) : s(text), pos(start) {}

    bool at(char c) const { return pos < s.size() && s[pos] == c; }

    std::string parse_cstring() {
        std::string out;
        if (!at('"')) return out;
        ++pos;
        while (pos < s.size() && s[pos] != '"') {
            if (s[pos] == '\\' && pos + 1 < s.size()) {
                ++pos;
                switch (s[pos]) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case 'r': out += '\r'; break;
                    case '\\': out += '\\'; break;
                    case '"': out += '"'; break;
                    default: out += s[pos]; break;
                }
            } else {
                out += s[pos];
            }
            ++pos;
        }
        if (at('"')) ++pos;
        return out;
    }

    std::string parse_name() {
        std::string out;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '-' ||
                s[pos] == '_')) {
            out += s[pos++];
        }
        return out;
    }

    Json parse_value() {
        if (at('"')) return Json(parse_cstring());
        if (at('{')) {
            ++pos;
            Json obj = Json::object();
            while (pos < s.size() && !at('}')) {
                auto name = parse_name();
                if (at('=')) ++pos;
                obj[name] = parse_value();
                if (at(',')) ++pos;
            }
            if (at('}')) ++pos;
            return obj;
        }
        if (at('[')) {
            ++pos;
            Json arr = Json::array();
            while (pos < s.size() && !at(']')) {
                // Lists may hold bare values or name=value results; keep the
                // values, their names repeat ("frame", "bkpt", ...).
                std::size_t mark = pos;
                auto name = parse_name();
                if (!name.empty() && at('=')) {
                    ++pos;
                    arr.push_back(parse_value());
                } else {
                    pos = mark;
                    arr.push_back(parse_value());
                }
                if (at(',')) ++pos;
            }
            if (at(']')) ++pos;
            return arr;
        }
        // Bare token (rare); consume until delimiter.
        std::string out;
        while (pos < s.size() && s[pos] != ',' && s[pos] != '}' && s[pos] != ']') {
            out += s[pos++];
        }
        return Json(out);
    }

    Json parse_results() {
        Json obj = Json::object();
        while (pos < s.size()) {
            auto name = parse_name();
            if (name.empty() || !at('=')) break;
            ++pos;
            obj[name] = parse_value();
            if (at(',')) {
                ++pos;
                continue;
            }
            break;
        }
        return obj;
    }
};

}  // namespace

Record parse_line(const std::string& line) {
    Record rec;
    if (line.rfind("(gdb)", 0) == 0) {
        rec.type = Record::Type::Prompt;
        return rec;
    }
    std::size_t pos = 0;
    while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos >= line.size()) return rec;

    const char tag = line[pos];
    switch (tag) {
        case '^': rec.type = Record::Type::Result; break;
        case '*': rec.type = Record::Type::ExecAsync; break;
        case '+': rec.type = Record::Type::StatusAsync; break;
        case '=': rec.type = Record::Type::NotifyAsync; break;
        case '~': rec.type = Record::Type::ConsoleStream; break;
        case '@': rec.type = Record::Type::TargetStream; break;
        case '&': rec.type = Record::Type::LogStream; break;
        default: return rec;
    }
    ++pos;
    if (rec.type == Record::Type::ConsoleStream || rec.type == Record::Type::TargetStream ||
        rec.type == Record::Type::LogStream) {
        ValueParser vp(line, pos);
        rec.stream = vp.parse_cstring();
        return rec;
    }
    std::size_t cls_end = line.find(',', pos);
    rec.cls = line.substr(pos, cls_end == std::string::npos ? std::string::npos : cls_end - pos);
    if (cls_end != std::string::npos) {
        ValueParser vp(line, cls_end + 1);
        rec.results = vp.parse_results();
    } else {
        rec.results = Json::object();
    }
    return rec;
}

// --- session -----------------------------------------------------------

Result<void> GdbSession::start(const std::vector<std::string>& target_argv,
                               const std::filesystem::path& cwd,
                               const std::map<std::string, std::string>& env,
                               std::chrono::milliseconds deadline_budget) {
    deadline_ = std::chrono::steady_clock::now() + deadline_budget;
    if (target_argv.empty()) {
        return make_error(ErrCode::InvalidConfig, "empty target argv");
    }
    target_args_.assign(target_argv.begin() + 1, target_argv.end());
    std::vector<std::string> argv = {"gdb", "--interpreter=mi2", "-q", "--nx",
                                     target_argv[0]};
    if (!proc_.start(argv, cwd, env)) {
        return make_error(ErrCode::SpawnError, "gdb spawn failed: " + proc_.spawn_error());
    }
    // Consume startup output through the first prompt.
    for (;;) {
        auto rec = next_record(remaining());
        if (!rec) return rec.error();
        if (rec->type == Record::Type::Prompt) break;
    }
    auto conf = command("-gdb-set confirm off");
    if (!conf) return conf.error();
    return {};
}

std::chrono::milliseconds GdbSession::remaining() const {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline_ - std::chrono::steady_clock::now());
    return left;
}

void GdbSession::note_async(const Record& rec) {
    if (rec.type == Record::Type::NotifyAsync && rec.cls == "thread-group-exited") {
        inferior_exited_ = true;
        if (rec.results.contains("exit-code")) {
            inferior_exit_code_ =
                std::stoi(rec.results["exit-code"].get<std::string>(), nullptr, 0);
        } else {
            inferior_exit_code_ = 0;
        }
    }
    if (rec.type == Record::Type::ExecAsync && rec.cls == "stopped" &&
        rec.results.value("reason", "") == "signal-received") {
        crash_signal_ = rec.results.value("signal-name", "SIG?");
    }
}

Result<Record> GdbSession::next_record(std::chrono::milliseconds timeout) {
    auto capped = std::min(timeout, remaining());
    if (capped <= std::chrono::milliseconds(0)) {
        return make_error(ErrCode::Aborted, "debugger deadline expired");
    }
    auto line = proc_.read_line(capped);
    if (!line) return make_error(ErrCode::Aborted, "debugger deadline expired");
    if (line->empty() && proc_.eof()) {
        return make_error(ErrCode::SessionDead, "debugger closed its pipe");
    }
    auto rec = parse_line(*line);
    note_async(rec);
    return rec;
}

Result<GdbSession::CommandResult> GdbSession::command(const std::string& cmd) {
    if (!proc_.write_all(cmd + "\n")) {
        return make_error(ErrCode::SessionDead, "debugger pipe write failed");
    }
    CommandResult out;
    bool have_result = false;
    for (;;) {
        auto rec = next_record(remaining());
        if (!rec) return rec.error();
        switch (rec->type) {
            case Record::Type::Result:
                out.result = *rec;
                have_result = true;
                break;
            case Record::Type::Prompt:
                if (have_result) return out;
                break;
            default:
                out.async.push_back(*rec);
                break;
        }
    }
}

Result<Record> GdbSession::wait_stop() {
    for (;;) {
        auto rec = next_record(remaining());
        if (!rec) return rec.error();
        if (rec->type == Record::Type::ExecAsync && rec->cls == "stopped") return *rec;
        if (rec->type == Record::Type::NotifyAsync && rec->cls == "thread-group-exited") {
            // Some exits surface only as the notify record.
            Record stopped;
            stopped.type = Record::Type::ExecAsync;
            stopped.cls = "stopped";
            stopped.results = Json{{"reason", "exited"}};
            return stopped;
        }
    }
}

std::optional<int> GdbSession::insert_breakpoint(const std::string& location, bool temporary) {
    const std::string cmd =
        std::string("-break-insert ") + (temporary ? "-t " : "") + location;
    auto res = command(cmd);
    if (!res || res->result.cls != "done") return std::nullopt;
    if (!res->result.results.contains("bkpt")) return std::nullopt;
    const auto& bkpt = res->result.results["bkpt"];
    if (!bkpt.is_object() || !bkpt.contains("number")) return std::nullopt;
    return std::stoi(bkpt["number"].get<std::string>());
}

void GdbSession::delete_breakpoint(int number) {
    (void)command("-break-delete " + std::to_string(number));
}

Result<void> GdbSession::run_redirected(const std::filesystem::path& stdout_file,
                                        const std::filesystem::path& stderr_file) {
    // `run` with redirections overrides the argument list, so the target
    // arguments must ride along in `set args`.
    std::string args = "set args";
    for (const auto& a : target_args_) args += " '" + a + "'";
    args += " > " + stdout_file.string() + " 2> " + stderr_file.string();
    auto set = command("-interpreter-exec console \"" + args + "\"");
    if (!set) return set.error();
    if (set->result.cls == "error") {
        return make_error(ErrCode::SpawnError,
                          "set args failed: " + set->result.results.value("msg", ""));
    }
    auto res = command("-exec-run");
    if (!res) return res.error();
    if (res->result.cls == "error") {
        return make_error(ErrCode::SpawnError,
                          "run failed: " + res->result.results.value("msg", ""));
    }
    return {};
}

std::string GdbSession::evaluate(const std::string& expr) {
    std::string quoted;
    quoted.reserve(expr.size() + 2);
    quoted += '"';
    for (char c : expr) {
        if (c == '"' || c == '\\') quoted += '\\';
        quoted += c;
    }
    quoted += '"';
    auto res = command("-data-evaluate-expression " + quoted);
    if (!res) return "<eval-error: " + res.error().message + ">";
    if (res->result.cls != "done" || !res->result.results.contains("value")) {
        return "<eval-error: " + res->result.results.value("msg", "evaluation failed") + ">";
    }
    return res->result.results["value"].get<std::string>();
}

std::vector<GdbSession::Frame> GdbSession::frames() {
    std::vector<Frame> out;
    auto res = command("-stack-list-frames");
    if (!res || res->result.cls != "done" || !res->result.results.contains("stack")) return out;
    for (const auto& f : res->result.results["stack"]) {
        if (!f.is_object()) continue;
        Frame frame;
        frame.function = f.value("func", "?");
        if (f.contains("file") && f.contains("line")) {
            frame.location = f["file"].get<std::string>() + ":" + f["line"].get<std::string>();
        }
        out.push_back(std::move(frame));
    }
    return out;
}

Result<void> GdbSession::resume() {
    auto res = command("-exec-continue");
    if (!res) return res.error();
    if (res->result.cls == "error") {
        return make_error(ErrCode::StateError,
                          "continue failed: " + res->result.results.value("msg", ""));
    }
    return {};
}

void GdbSession::kill() { proc_.kill_group(); }

GdbSession::~GdbSession() {
    if (proc_.running()) {
        proc_.kill_group();
        proc_.wait(true);
    }
}

}  // namespace povgen::mi
