#include "povgen/corpus.hpp"

#include "povgen/subprocess.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace povgen::corpus {

namespace {

constexpr std::size_t kFrameCap = 64;

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string stack_key(const std::vector<harness::StackFrame>& stack) {
    std::string key;
    for (const auto& f : stack) {
        key += f.function;
        key += '@';
        key += f.location;
        key += '|';
    }
    return key;
}

}  // namespace

Json ReachingRoute::to_json() const {
    Json stack = Json::array();
    for (const auto& f : callstack) stack.push_back(f.to_json());
    return {{"callstack", stack}, {"testcase_file", testcase_file.string()}};
}

const char* to_string(JobState s) {
    switch (s) {
        case JobState::Idle: return "idle";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "?";
}

Json CorpusStatus::to_json() const {
    return {{"total", total},
            {"processed", processed},
            {"routes_found", routes_found},
            {"state", to_string(state)}};
}

struct CorpusJobs::Job {
    harness::TargetConfig target;
    std::vector<std::filesystem::path> files;
    std::vector<harness::BreakpointSpec> breaks;

    mutable std::mutex mu;
    CorpusStatus stat;
    std::vector<ReachingRoute> found;
    std::set<std::string> seen_stacks;
    std::thread worker;

    void run() {
        for (const auto& file : files) {
            const std::string bytes = read_file(file);
            auto res = harness::run_with_breakpoints(target, bytes, breaks);
            const bool reached =
                !res.hits.empty() ||
                res.outcome.classification == harness::Classification::Reached ||
                res.outcome.classification == harness::Classification::Triggered;
            std::lock_guard lock(mu);
            if (reached) {
                ReachingRoute route;
                route.testcase_file = file;
                if (!res.hits.empty()) {
                    route.callstack = res.hits.front().callstack;
                    if (route.callstack.size() > kFrameCap) {
                        route.callstack.resize(kFrameCap);
                    }
                }
                if (route.callstack.empty()) {
                    // Reached via the log signal without a breakpoint hit:
                    // keep a synthesized frame naming the signal.
                    route.callstack.push_back(
                        {"<reached-signal>",
                         breaks.empty() ? std::string() : breaks.front().location});
                }
                if (seen_stacks.insert(stack_key(route.callstack)).second) {
                    found.push_back(std::move(route));
                    ++stat.routes_found;
                }
            }
            ++stat.processed;
        }
        std::lock_guard lock(mu);
        stat.state = JobState::Done;
    }
};

CorpusJobs::~CorpusJobs() { wait_all(); }

void CorpusJobs::wait_all() {
    std::vector<std::shared_ptr<Job>> jobs;
    {
        std::lock_guard lock(mu_);
        for (auto& [_, job] : jobs_) jobs.push_back(job);
    }
    for (auto& job : jobs) {
        if (job->worker.joinable()) job->worker.join();
    }
}

Result<std::string> CorpusJobs::start(const harness::TargetConfig& target,
                                      const std::filesystem::path& corpus_dir,
                                      const facts::TargetSpec& targets) {
    auto job = std::make_shared<Job>();
    job->target = target;

    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec)) {
        if (entry.is_regular_file()) job->files.push_back(entry.path());
    }
    if (ec) {
        return make_error(ErrCode::IoError, "cannot read corpus dir: " + corpus_dir.string());
    }
    if (job->files.empty()) {
        return make_error(ErrCode::EmptyCorpus, "corpus directory has no files",
                          {{"dir", corpus_dir.string()}});
    }
    std::sort(job->files.begin(), job->files.end());

    for (const auto& loc : targets.locations) {
        harness::BreakpointSpec spec;
        spec.location = loc;
        spec.hit_limit = 1;
        job->breaks.push_back(std::move(spec));
    }

    job->stat.total = job->files.size();
    job->stat.state = JobState::Running;

    std::string handle;
    {
        std::lock_guard lock(mu_);
        handle = "corpus-" + std::to_string(next_id_++);
        jobs_[handle] = job;
    }
    job->worker = std::thread([job] { job->run(); });
    return handle;
}

Result<CorpusStatus> CorpusJobs::status(const std::string& handle) const {
    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(handle);
        if (it == jobs_.end()) {
            return make_error(ErrCode::UnknownJob, "unknown corpus job " + handle);
        }
        job = it->second;
    }
    std::lock_guard lock(job->mu);
    return job->stat;
}

Result<std::vector<ReachingRoute>> CorpusJobs::routes(const std::string& handle) const {
    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(handle);
        if (it == jobs_.end()) {
            return make_error(ErrCode::UnknownJob, "unknown corpus job " + handle);
        }
        job = it->second;
    }
    std::lock_guard lock(job->mu);
    return job->found;  // discovery order, append-only
}

Result<Json> extract_parameters(const gen::GeneratorSpec& extractor,
                                const std::vector<ReachingRoute>& routes) {
    if (routes.empty()) {
        return make_error(ErrCode::InvalidParams, "extract_parameters requires >= 1 route");
    }
    std::map<std::string, std::vector<Json>> observed;
    Json failures = Json::array();
    std::size_t ok = 0;

    for (const auto& route : routes) {
        proc::RunRequest req;
        req.argv = {extractor.program.string()};
        req.stdin_bytes = read_file(route.testcase_file);
        req.cwd = extractor.workdir;
        req.timeout = extractor.invoke_timeout;
        auto run = proc::run_process(req);
        auto fail = [&](const std::string& why) {
            failures.push_back({{"testcase", route.testcase_file.string()}, {"error", why}});
        };
        if (!run.spawned) {
            fail("spawn failed: " + run.spawn_error);
            continue;
        }
        if (run.timed_out) {
            fail("timeout");
            continue;
        }
        if (!run.exited || run.exit_code != 0) {
            fail("exit " + std::to_string(run.exit_code) + ": " + run.stderr_data);
            continue;
        }
        Json obs = Json::parse(run.stdout_data, nullptr, false);
        if (obs.is_discarded() || !obs.is_object()) {
            fail("output is not a JSON object");
            continue;
        }
        ++ok;
        for (const auto& [key, value] : obs.items()) observed[key].push_back(value);
    }

    if (ok == 0) {
        return make_error(ErrCode::AllExtractionsFailed,
                          "every extractor invocation failed", {{"failures", failures}});
    }

    Json out = Json::object();
    for (const auto& [key, values] : observed) {
        const bool numeric = std::all_of(values.begin(), values.end(),
                                         [](const Json& v) { return v.is_number(); });
        if (numeric) {
            Json mn = values.front(), mx = values.front();
            for (const auto& v : values) {
                if (v.get<double>() < mn.get<double>()) mn = v;
                if (v.get<double>() > mx.get<double>()) mx = v;
            }
            out[key] = {{"min", mn}, {"max", mx}};
        } else {
            std::set<std::string> uniq;
            for (const auto& v : values) {
                uniq.insert(v.is_string() ? v.get<std::string>() : v.dump());
            }
            out[key] = {{"values", std::vector<std::string>(uniq.begin(), uniq.end())}};
        }
    }
    if (!failures.empty()) out["_failures"] = failures;
    return out;
}

}  // namespace povgen::corpus
