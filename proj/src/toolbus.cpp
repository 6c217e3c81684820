#include "povgen/toolbus.hpp"

#include "povgen/templates.hpp"

#include <unistd.h>

#include <algorithm>
#include <iostream>
#include <sstream>

namespace povgen::bus {

namespace {

using workflow::Phase;

struct ToolInfo {
    const char* name;
    // Empty set: allowed in every phase (the workflow tools).
    std::set<Phase> phases;
    bool supported = true;
};

const std::vector<ToolInfo>& tool_table() {
    static const std::vector<ToolInfo> table = {
        {"write_workflow_block", {}, true},
        {"transition_phase", {}, true},
        {"check_phase_completion", {}, true},
        {"get_current_phase", {}, true},
        {"get_callers", {Phase::Plan, Phase::Reflect}, true},
        {"get_callees", {Phase::Plan, Phase::Reflect}, true},
        {"get_reaching_routes", {Phase::Plan}, true},
        {"get_corpus_status", {Phase::Plan}, true},
        {"extract_parameters", {Phase::Implement}, true},
        {"get_generator_api_doc", {Phase::Implement, Phase::Execute}, true},
        {"fuzz", {Phase::Execute}, true},
        {"detect_deviation", {Phase::Reflect}, true},
        {"launch_gdb", {Phase::Reflect}, true},
        {"gdb_send", {Phase::Reflect}, true},
        {"gdb_close", {Phase::Reflect}, true},
        {"get_target_distance", {}, false},
    };
    return table;
}

const ToolInfo* find_tool(const std::string& name) {
    for (const auto& t : tool_table()) {
        if (name == t.name) return &t;
    }
    return nullptr;
}

int rpc_code(ErrCode code) {
    switch (code) {
        case ErrCode::PhaseGating: return -32001;
        case ErrCode::PermissionDenied: return -32002;
        case ErrCode::SchemaViolation: return -32003;
        case ErrCode::ReferentialIntegrity: return -32004;
        case ErrCode::IllegalTransition: return -32005;
        case ErrCode::IncompletePhase: return -32006;
        case ErrCode::NotAvailable: return -32010;
        case ErrCode::NotSupported: return -32011;
        case ErrCode::UnknownMethod: return -32601;
        case ErrCode::InvalidParams: return -32602;
        default: return -32000;
    }
}

Json error_payload(const Error& err) {
    return {{"code", rpc_code(err.code)}, {"message", err.message}, {"data", err.to_json()}};
}

// Tool results and errors share one in-process shape: errors carry "error".
Json as_tool_result(const Error& err) { return error_payload(err); }

bool is_error(const Json& j) { return j.is_object() && j.contains("code") && j.contains("data"); }

std::chrono::milliseconds parse_timeout(const Json& v,
                                        std::chrono::milliseconds fallback) {
    if (v.is_number_integer()) return std::chrono::milliseconds(v.get<std::int64_t>());
    if (v.is_string()) {
        // "10s" / "1500ms" / plain seconds
        const std::string s = v.get<std::string>();
        try {
            if (s.size() > 2 && s.compare(s.size() - 2, 2, "ms") == 0) {
                return std::chrono::milliseconds(std::stoll(s.substr(0, s.size() - 2)));
            }
            if (!s.empty() && s.back() == 's') {
                return std::chrono::seconds(std::stoll(s.substr(0, s.size() - 1)));
            }
            return std::chrono::seconds(std::stoll(s));
        } catch (const std::exception&) {
            return fallback;
        }
    }
    return fallback;
}

}  // namespace

std::vector<std::string> tool_names() {
    std::vector<std::string> out;
    for (const auto& t : tool_table()) out.push_back(t.name);
    return out;
}

bool tool_allowed(const std::string& method, Phase phase) {
    const auto* tool = find_tool(method);
    if (tool == nullptr || !tool->supported) return false;
    return tool->phases.empty() || tool->phases.count(phase) != 0;
}

Result<std::unique_ptr<CampaignSession>> CampaignSession::create(
    const campaign::CampaignConfig& cfg) {
    if (auto r = cfg.target.validate(); !r) return r.error();
    if (cfg.target_locations.locations.empty()) {
        return make_error(ErrCode::InvalidConfig, "target_locations must be non-empty");
    }

    auto session = std::unique_ptr<CampaignSession>(new CampaignSession());
    session->cfg_ = cfg;
    session->dir_ = cfg.output_dir;
    std::filesystem::create_directories(session->dir_);

    // Render the two configuration documents.
    std::string locations_text;
    for (const auto& loc : cfg.target_locations.locations) {
        locations_text += "- " + loc + "\n";
    }
    if (!locations_text.empty()) locations_text.pop_back();
    auto project_config = tpl::render_project_config({
        {"cmd", cfg.target.cmd},
        {"source_code_folder", cfg.source_root.string()},
        {"output_dir", cfg.output_dir.string()},
        {"reached_pattern", cfg.target.reached_pattern},
        {"triggered_pattern", cfg.target.triggered_pattern},
        {"source_code_blocks", cfg.source_code_blocks},
        {"target_locations", locations_text},
    });
    if (!project_config) return project_config.error();
    if (auto r = workflow::atomic_write_file(session->dir_ / "project_config.md",
                                             *project_config);
        !r) {
        return r.error();
    }
    const auto state_path = session->dir_ / "workflow_state.md";
    if (auto r = workflow::atomic_write_file(state_path,
                                             tpl::render_workflow_state_initial());
        !r) {
        return r.error();
    }
    auto gk = workflow::Gatekeeper::open(state_path);
    if (!gk) return gk.error();
    session->gatekeeper_ = std::move(*gk);

    session->transcript_.open(session->dir_ / "transcript.jsonl", std::ios::trunc);

    // Static analysis artifacts; absence degrades the analysis tools.
    if (cfg.graph_file) {
        auto graph = facts::load_graph(*cfg.graph_file);
        if (graph) {
            auto resolved = facts::resolve_indirect_calls(*graph);
            auto reach = facts::compute_reach_set(resolved, cfg.target_locations);
            if (reach) {
                session->criticals_ = facts::compute_critical_locations(resolved, *reach);
                session->graph_ = std::move(resolved);
            } else {
                session->graph_warning_ = reach.error().message;
            }
        } else {
            session->graph_warning_ = graph.error().message;
        }
        if (!session->graph_warning_.empty()) {
            session->transcribe("event", {{"what", "analysis_degraded"},
                                          {"reason", session->graph_warning_}});
        }
    }

    if (cfg.corpus_dir) {
        auto job = session->corpus_jobs_.start(cfg.target, *cfg.corpus_dir,
                                               cfg.target_locations);
        if (job) {
            session->corpus_job_ = *job;
        } else {
            session->transcribe("event", {{"what", "corpus_degraded"},
                                          {"reason", job.error().message}});
        }
    }
    return session;
}

CampaignSession::~CampaignSession() = default;

std::optional<std::string> CampaignSession::pov_file() const {
    if (!last_fuzz_ || !last_fuzz_->pov) return std::nullopt;
    return last_fuzz_->pov->input_file.string();
}

void CampaignSession::transcribe(const std::string& kind, const Json& payload) {
    if (!transcript_.is_open()) return;
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started_);
    Json line = {{"seq", transcript_seq_++},
                 {"elapsed_ms", elapsed.count()},
                 {"kind", kind},
                 {"payload", payload}};
    transcript_ << line.dump() << "\n";
    transcript_.flush();
}

Json CampaignSession::call(const std::string& method, const Json& params) {
    // Write-ahead: the request is on disk before the tool runs.
    transcribe("request", {{"method", method}, {"params", params}});
    ++tool_call_counts_[method];
    Json result = dispatch(method, params);
    transcribe("response", {{"method", method}, {"result", result}});
    return result;
}

Json CampaignSession::dispatch(const std::string& method, const Json& params) {
    const auto* tool = find_tool(method);
    if (tool == nullptr) {
        return as_tool_result(
            make_error(ErrCode::UnknownMethod, "unknown method " + method));
    }
    if (!tool->supported) {
        return as_tool_result(make_error(
            ErrCode::NotSupported, method + " is registered but not supported",
            {{"method", method}}));
    }
    const Phase phase = this->phase();
    if (!tool->phases.empty() && tool->phases.count(phase) == 0) {
        std::vector<std::string> allowed;
        for (Phase p : tool->phases) allowed.push_back(workflow::to_string(p));
        return as_tool_result(make_error(
            ErrCode::PhaseGating,
            method + " is not allowed in " + workflow::to_string(phase),
            {{"method", method}, {"phase", workflow::to_string(phase)},
             {"allowed_phases", allowed}}));
    }

    if (method == "write_workflow_block") return tool_write_block(params);
    if (method == "transition_phase") return tool_transition(params);
    if (method == "check_phase_completion") return tool_check_completion(params);
    if (method == "get_current_phase") return tool_current_phase(params);
    if (method == "get_callers") return tool_get_callers(params, false);
    if (method == "get_callees") return tool_get_callers(params, true);
    if (method == "get_reaching_routes") return tool_reaching_routes(params);
    if (method == "get_corpus_status") return tool_corpus_status(params);
    if (method == "extract_parameters") return tool_extract_parameters(params);
    if (method == "get_generator_api_doc") return tool_api_doc(params);
    if (method == "fuzz") return tool_fuzz(params);
    if (method == "detect_deviation") return tool_detect_deviation(params);
    if (method == "launch_gdb") return tool_launch_gdb(params);
    if (method == "gdb_send") return tool_gdb_send(params);
    if (method == "gdb_close") return tool_gdb_close(params);
    return as_tool_result(make_error(ErrCode::UnknownMethod, "unhandled method " + method));
}

// --- workflow tools ---------------------------------------------------------

Json CampaignSession::tool_write_block(const Json& params) {
    if (!params.is_object() || !params.contains("target_block") ||
        !params["target_block"].is_string() || !params.contains("content_json")) {
        return as_tool_result(make_error(
            ErrCode::InvalidParams, "expected {target_block, content_json}"));
    }
    auto block = workflow::block_from_name(params["target_block"].get<std::string>());
    if (!block) {
        return as_tool_result(make_error(ErrCode::InvalidParams,
                                         "unknown block " +
                                             params["target_block"].get<std::string>()));
    }
    auto r = gatekeeper_.write_block(*block, params["content_json"]);
    if (!r) return as_tool_result(r.error());
    return {{"ok", true}, {"revision", gatekeeper_.doc().revision()}};
}

Json CampaignSession::tool_transition(const Json& params) {
    if (!params.is_object() || !params.contains("next_phase") ||
        !params["next_phase"].is_string()) {
        return as_tool_result(make_error(ErrCode::InvalidParams, "expected {next_phase}"));
    }
    auto next = workflow::phase_from_string(params["next_phase"].get<std::string>());
    if (!next) {
        return as_tool_result(make_error(ErrCode::InvalidParams,
                                         "unknown phase " +
                                             params["next_phase"].get<std::string>()));
    }
    if (*next == Phase::Execute) refresh_generator_registration();
    auto r = gatekeeper_.transition(*next);
    if (!r) return as_tool_result(r.error());
    if (*next == Phase::Plan) ++plan_entries_;
    if (*next == Phase::Reflect) manual_tests_in_reflect_ = 0;
    return {{"ok", true}, {"phase", workflow::to_string(*next)},
            {"revision", gatekeeper_.doc().revision()}};
}

void CampaignSession::refresh_generator_registration() {
    auto& session = gatekeeper_.session();
    if (session.generator_registered || !cfg_.generator_program) return;
    gen::GeneratorSpec spec;
    spec.program = *cfg_.generator_program;
    if (!spec.validate().ok()) return;
    auto space = param::ParameterSpace::from_json(
        gatekeeper_.doc().block(workflow::BlockId::ParameterSpace));
    if (!space || space->params.empty()) return;
    auto report = gen::self_test(spec, *space);
    transcribe("event", {{"what", "generator_self_test"}, {"report", report.to_json()}});
    session.generator_registered = report.all_ok();
}

Json CampaignSession::tool_check_completion(const Json&) {
    refresh_generator_registration();
    return gatekeeper_.check_completion().to_json();
}

Json CampaignSession::tool_current_phase(const Json&) {
    return {{"phase", workflow::to_string(phase())},
            {"revision", gatekeeper_.doc().revision()},
            {"analysis_available", graph_.has_value()},
            {"corpus_available", corpus_job_.has_value()}};
}

// --- analysis tools ----------------------------------------------------------

Json CampaignSession::tool_get_callers(const Json& params, bool callees) {
    if (!graph_) {
        return as_tool_result(make_error(ErrCode::NotAvailable,
                                         "call graph analysis is not available",
                                         {{"reason", graph_warning_}}));
    }
    if (!params.is_object() || !params.contains("function_name") ||
        !params["function_name"].is_string()) {
        return as_tool_result(
            make_error(ErrCode::InvalidParams, "expected {function_name}"));
    }
    const auto fn = params["function_name"].get<std::string>();
    auto r = callees ? facts::get_callees(*graph_, fn) : facts::get_callers(*graph_, fn);
    if (!r) return as_tool_result(r.error());
    return {{callees ? "callees" : "callers", *r}};
}

Json CampaignSession::tool_reaching_routes(const Json&) {
    if (!corpus_job_) {
        return as_tool_result(
            make_error(ErrCode::NotAvailable, "no corpus analysis is running"));
    }
    auto routes = corpus_jobs_.routes(*corpus_job_);
    if (!routes) return as_tool_result(routes.error());
    Json out = Json::array();
    for (const auto& r : *routes) out.push_back(r.to_json());
    return {{"routes", out}};
}

Json CampaignSession::tool_corpus_status(const Json&) {
    if (!corpus_job_) {
        return as_tool_result(
            make_error(ErrCode::NotAvailable, "no corpus analysis is running"));
    }
    auto st = corpus_jobs_.status(*corpus_job_);
    if (!st) return as_tool_result(st.error());
    return st->to_json();
}

Json CampaignSession::tool_extract_parameters(const Json& params) {
    if (!corpus_job_) {
        return as_tool_result(
            make_error(ErrCode::NotAvailable, "no corpus analysis is running"));
    }
    gen::GeneratorSpec extractor;
    if (params.contains("extractor_program") && params["extractor_program"].is_string()) {
        extractor.program = params["extractor_program"].get<std::string>();
    } else if (params.contains("extractor_code") && params["extractor_code"].is_string()) {
        // Materialize inline code to an executable script.
        auto dir = dir_ / "extractors";
        std::filesystem::create_directories(dir);
        auto path = dir / ("extractor_" + std::to_string(++extractor_counter_));
        std::ofstream out(path);
        out << params["extractor_code"].get<std::string>();
        out.close();
        std::filesystem::permissions(path, std::filesystem::perms::owner_all,
                                     std::filesystem::perm_options::add);
        extractor.program = path;
    } else {
        return as_tool_result(make_error(
            ErrCode::InvalidParams, "expected {extractor_code} or {extractor_program}"));
    }
    auto routes = corpus_jobs_.routes(*corpus_job_);
    if (!routes) return as_tool_result(routes.error());
    auto obs = corpus::extract_parameters(extractor, *routes);
    if (!obs) return as_tool_result(obs.error());
    return {{"parameter_space", *obs}};
}

Json CampaignSession::tool_api_doc(const Json& params) {
    const std::string topic =
        params.is_object() && params.contains("topic") && params["topic"].is_string()
            ? params["topic"].get<std::string>()
            : "";
    auto doc = gen::api_doc(topic);
    if (!doc) return as_tool_result(doc.error());
    return {{"documentation", *doc}};
}

// --- execute & reflect tools ---------------------------------------------------

Json CampaignSession::tool_fuzz(const Json& params) {
    const auto& doc = gatekeeper_.doc();
    auto space = param::ParameterSpace::from_json(
        doc.block(workflow::BlockId::ParameterSpace));
    if (!space) return as_tool_result(space.error());

    std::vector<param::ConcreteParams> plan;
    for (const auto& entry : doc.block(workflow::BlockId::FuzzPlan)) {
        auto p = param::ConcreteParams::from_json(entry);
        if (!p) return as_tool_result(p.error());
        plan.push_back(std::move(*p));
    }
    std::vector<harness::BreakpointSpec> breaks;
    for (const auto& entry : doc.block(workflow::BlockId::Breakpoints)) {
        auto b = harness::BreakpointSpec::from_json(entry);
        if (!b) return as_tool_result(b.error());
        breaks.push_back(std::move(*b));
    }
    auto metrics = workflow::MetricsRecord::from_json(
        doc.block(workflow::BlockId::Metrics));
    if (!metrics) return as_tool_result(metrics.error());

    gen::GeneratorSpec generator;
    if (params.is_object() && params.contains("generator") &&
        params["generator"].is_string()) {
        generator.program = params["generator"].get<std::string>();
    } else if (cfg_.generator_program) {
        generator.program = *cfg_.generator_program;
    } else {
        return as_tool_result(make_error(
            ErrCode::InvalidConfig, "no generator registered for this campaign"));
    }

    engine::FuzzSettings settings = cfg_.fuzz_defaults;
    settings.output_dir = dir_ / "fuzz";
    if (params.is_object()) {
        if (params.contains("max_iterations")) {
            settings.max_iterations = params["max_iterations"].get<std::uint64_t>();
        }
        if (params.contains("rng_seed")) {
            settings.rng_seed = params["rng_seed"].get<std::uint64_t>();
        }
        if (params.contains("workers")) settings.workers = params["workers"].get<unsigned>();
        if (params.contains("stage1_debug")) {
            settings.stage1_debug = params["stage1_debug"].get<bool>();
        }
        if (params.contains("wall_budget_ms")) {
            settings.wall_budget =
                std::chrono::milliseconds(params["wall_budget_ms"].get<std::int64_t>());
        }
    }
    // Reaching testcases feed base_seed domains.
    if (corpus_job_) {
        auto routes = corpus_jobs_.routes(*corpus_job_);
        if (routes) {
            for (const auto& r : *routes) {
                settings.seed_pools["reaching"].push_back(r.testcase_file.string());
            }
        }
    }

    auto report = engine::fuzz(*space, plan, generator, cfg_.target, breaks, settings,
                               *metrics);
    if (!report) return as_tool_result(report.error());
    last_fuzz_ = *report;
    if (report->pov) {
        gatekeeper_.session().pov_recorded = true;
        if (!tte_) {
            tte_ = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started_);
        }
    }
    Json results = report->to_json();
    Json metrics_json = results["metrics"];
    results.erase("metrics");
    return {{"results", results}, {"metrics", metrics_json}};
}

Json CampaignSession::tool_detect_deviation(const Json& params) {
    if (!graph_) {
        return as_tool_result(make_error(ErrCode::NotAvailable,
                                         "deviation analysis is not available",
                                         {{"reason", graph_warning_}}));
    }
    if (!params.is_object() || !params.contains("input_file_path") ||
        !params["input_file_path"].is_string()) {
        return as_tool_result(
            make_error(ErrCode::InvalidParams, "expected {input_file_path}"));
    }
    const std::filesystem::path input = params["input_file_path"].get<std::string>();
    if (!std::filesystem::exists(input)) {
        return as_tool_result(make_error(ErrCode::IoError,
                                         "input file not found: " + input.string()));
    }
    auto report = facts::diagnose_deviation(*graph_, cfg_.target, input, criticals_);
    if (!report) return as_tool_result(report.error());
    ++gatekeeper_.session().diagnosis_count;
    return report->to_json();
}

Json CampaignSession::tool_launch_gdb(const Json& params) {
    if (!params.is_object() || !params.contains("cmd") || !params["cmd"].is_array() ||
        params["cmd"].empty()) {
        return as_tool_result(
            make_error(ErrCode::InvalidParams, "expected {cmd: [argv...], timeout}"));
    }
    std::vector<std::string> cmd;
    for (const auto& a : params["cmd"]) cmd.push_back(a.get<std::string>());
    const auto timeout = parse_timeout(params.contains("timeout") ? params["timeout"] : Json(),
                                       std::chrono::milliseconds(10000));
    auto session = harness::DebugSession::open(cmd, timeout, cfg_.target.cwd);
    if (!session) return as_tool_result(session.error());

    const std::string id = "gdb-" + std::to_string(next_gdb_id_++);
    Json out = {{"session_id", id},
                {"state", "idle"},
                {"transcript", (*session)->transcript()}};
    gdb_sessions_[id] = std::move(*session);
    ++manual_tests_in_reflect_;
    if (manual_tests_in_reflect_ > 3) {
        out["warning"] =
            "manual test budget exceeded (3 per REFLECT entry); transition to PLAN";
    }
    return out;
}

namespace {
const char* session_state_name(harness::DebugSession::State s) {
    switch (s) {
        case harness::DebugSession::State::Idle: return "idle";
        case harness::DebugSession::State::Running: return "running";
        case harness::DebugSession::State::AtBreak: return "at_break";
        case harness::DebugSession::State::Exited: return "exited";
    }
    return "?";
}
}  // namespace

Json CampaignSession::tool_gdb_send(const Json& params) {
    if (!params.is_object() || !params.contains("session_id") ||
        !params.contains("command")) {
        return as_tool_result(
            make_error(ErrCode::InvalidParams, "expected {session_id, command}"));
    }
    auto it = gdb_sessions_.find(params["session_id"].get<std::string>());
    if (it == gdb_sessions_.end()) {
        return as_tool_result(make_error(ErrCode::SessionDead, "no such debug session"));
    }
    auto delta = it->second->send(params["command"].get<std::string>());
    if (!delta) return as_tool_result(delta.error());
    return {{"transcript_delta", *delta}, {"state", session_state_name(it->second->state())}};
}

Json CampaignSession::tool_gdb_close(const Json& params) {
    if (!params.is_object() || !params.contains("session_id")) {
        return as_tool_result(make_error(ErrCode::InvalidParams, "expected {session_id}"));
    }
    auto it = gdb_sessions_.find(params["session_id"].get<std::string>());
    if (it == gdb_sessions_.end()) {
        return as_tool_result(make_error(ErrCode::SessionDead, "no such debug session"));
    }
    it->second->close();
    gdb_sessions_.erase(it);
    ++gatekeeper_.session().diagnosis_count;  // interactive evidence gathered
    return {{"ok", true}};
}

// --- wire transport -----------------------------------------------------------

std::string CampaignSession::handle_line(const std::string& line) {
    Json request = Json::parse(line, nullptr, false);
    auto envelope = [](const Json& id, Json body, bool is_err) {
        Json out = {{"jsonrpc", "2.0"}, {"id", id}};
        out[is_err ? "error" : "result"] = std::move(body);
        return out.dump();
    };
    if (request.is_discarded()) {
        return envelope(Json(), Json{{"code", -32700}, {"message", "parse error"}}, true);
    }
    if (!request.is_object() || !request.contains("method") ||
        !request["method"].is_string()) {
        return envelope(request.is_object() ? request.value("id", Json()) : Json(),
                        Json{{"code", -32600}, {"message", "invalid request"}}, true);
    }
    const Json id = request.value("id", Json());
    const std::string method = request["method"].get<std::string>();
    const Json params =
        request.contains("params") ? request["params"] : Json::object();
    Json result = call(method, params);
    if (is_error(result)) return envelope(id, result, true);
    return envelope(id, result, false);
}

int serve_stdio(CampaignSession& session) {
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        std::cout << session.handle_line(line) << "\n" << std::flush;
    }
    return 0;
}

}  // namespace povgen::bus
