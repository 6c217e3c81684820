#include "povgen/campaign.hpp"

#include "povgen/toolbus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace povgen::campaign {

Json CampaignConfig::to_json() const {
    Json j = {{"target", target.to_json()},
              {"source_root", source_root.string()},
              {"output_dir", output_dir.string()},
              {"target_locations", target_locations.locations},
              {"source_code_blocks", source_code_blocks},
              {"agent_backend", agent_backend},
              {"campaign_budget_ms", budget.count()},
              {"fuzz", fuzz_defaults.to_json()}};
    if (corpus_dir) j["corpus_dir"] = corpus_dir->string();
    if (graph_file) j["graph_file"] = graph_file->string();
    if (generator_program) j["generator_program"] = generator_program->string();
    return j;
}

Result<CampaignConfig> CampaignConfig::from_json(const Json& j) {
    if (!j.is_object()) {
        return make_error(ErrCode::InvalidConfig, "campaign config must be a JSON object");
    }
    CampaignConfig cfg;
    if (!j.contains("target")) {
        return make_error(ErrCode::InvalidConfig, "campaign config requires a target");
    }
    auto target = harness::TargetConfig::from_json(j["target"]);
    if (!target) return target.error();
    cfg.target = *target;

    cfg.source_root = j.value("source_root", ".");
    if (!j.contains("output_dir") || !j["output_dir"].is_string()) {
        return make_error(ErrCode::InvalidConfig, "campaign config requires an output_dir");
    }
    cfg.output_dir = j["output_dir"].get<std::string>();

    if (!j.contains("target_locations") || !j["target_locations"].is_array() ||
        j["target_locations"].empty()) {
        return make_error(ErrCode::InvalidConfig, "target_locations must be non-empty");
    }
    for (const auto& loc : j["target_locations"]) {
        cfg.target_locations.locations.push_back(loc.get<std::string>());
    }
    cfg.source_code_blocks = j.value("source_code_blocks", "");
    if (j.contains("corpus_dir") && j["corpus_dir"].is_string()) {
        cfg.corpus_dir = j["corpus_dir"].get<std::string>();
    }
    if (j.contains("graph_file") && j["graph_file"].is_string()) {
        cfg.graph_file = j["graph_file"].get<std::string>();
    }
    if (j.contains("generator_program") && j["generator_program"].is_string()) {
        cfg.generator_program = j["generator_program"].get<std::string>();
    }
    cfg.agent_backend = j.value("agent_backend", "scripted");
    if (j.contains("campaign_budget_ms")) {
        cfg.budget = std::chrono::milliseconds(j["campaign_budget_ms"].get<std::int64_t>());
    }
    if (cfg.budget <= std::chrono::milliseconds(0)) {
        return make_error(ErrCode::InvalidConfig, "campaign budget must be positive");
    }
    if (j.contains("fuzz")) {
        const auto& f = j["fuzz"];
        if (f.contains("max_iterations")) {
            cfg.fuzz_defaults.max_iterations = f["max_iterations"].get<std::uint64_t>();
        }
        if (f.contains("wall_budget_ms")) {
            cfg.fuzz_defaults.wall_budget =
                std::chrono::milliseconds(f["wall_budget_ms"].get<std::int64_t>());
        }
        if (f.contains("stage1_debug")) {
            cfg.fuzz_defaults.stage1_debug = f["stage1_debug"].get<bool>();
        }
        if (f.contains("rng_seed")) {
            cfg.fuzz_defaults.rng_seed = f["rng_seed"].get<std::uint64_t>();
        }
        if (f.contains("workers")) cfg.fuzz_defaults.workers = f["workers"].get<unsigned>();
        if (f.contains("boundary_weight")) {
            cfg.fuzz_defaults.boundary_weight = f["boundary_weight"].get<double>();
        }
    }
    return cfg;
}

Result<CampaignConfig> CampaignConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return make_error(ErrCode::IoError, "cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Json j = Json::parse(buf.str(), nullptr, false);
    if (j.is_discarded()) {
        return make_error(ErrCode::ParseError, "config is not valid JSON: " + path.string());
    }
    return from_json(j);
}

const char* to_string(CampaignStatus s) {
    switch (s) {
        case CampaignStatus::Success: return "success";
        case CampaignStatus::Timeout: return "timeout";
        case CampaignStatus::Failed: return "failed";
    }
    return "?";
}

Json CampaignResult::to_json() const {
    Json j = {{"status", to_string(status)},
              {"tte_ms", tte ? Json(tte->count()) : Json()},
              {"loop_iterations", loop_iterations},
              {"tool_call_counts", tool_call_counts},
              {"pov_file", pov_file ? Json(*pov_file) : Json()},
              {"campaign_dir", campaign_dir}};
    return j;
}

Result<CampaignResult> CampaignResult::from_json(const Json& j) {
    CampaignResult r;
    const std::string status = j.value("status", "");
    if (status == "success") {
        r.status = CampaignStatus::Success;
    } else if (status == "timeout") {
        r.status = CampaignStatus::Timeout;
    } else if (status == "failed") {
        r.status = CampaignStatus::Failed;
    } else {
        return make_error(ErrCode::ParseError, "bad campaign status " + status);
    }
    if (j.contains("tte_ms") && j["tte_ms"].is_number()) {
        r.tte = std::chrono::milliseconds(j["tte_ms"].get<std::int64_t>());
    }
    r.loop_iterations = j.value("loop_iterations", 0);
    if (j.contains("tool_call_counts")) {
        for (const auto& [k, v] : j["tool_call_counts"].items()) {
            r.tool_call_counts[k] = v.get<int>();
        }
    }
    if (j.contains("pov_file") && j["pov_file"].is_string()) {
        r.pov_file = j["pov_file"].get<std::string>();
    }
    r.campaign_dir = j.value("campaign_dir", "");
    return r;
}

Result<CampaignResult> run_campaign(const CampaignConfig& cfg) {
    auto session = bus::CampaignSession::create(cfg);
    if (!session) return session.error();

    auto backend = bus::make_backend(cfg.agent_backend);
    if (!backend) return backend.error();

    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + cfg.budget;
    auto run = (*backend)->run(**session, deadline);

    CampaignResult result;
    result.campaign_dir = (*session)->dir().string();
    result.loop_iterations = (*session)->plan_entries();
    result.tool_call_counts = (*session)->tool_call_counts();
    if ((*session)->phase() == workflow::Phase::Success && (*session)->pov_recorded()) {
        result.status = CampaignStatus::Success;
        result.tte = (*session)->time_to_exposure();
        result.pov_file = (*session)->pov_file();
    } else if (!run || std::chrono::steady_clock::now() >= deadline) {
        result.status =
            std::chrono::steady_clock::now() >= deadline ? CampaignStatus::Timeout
                                                         : CampaignStatus::Failed;
    } else {
        result.status = CampaignStatus::Failed;
    }

    std::ofstream out((*session)->dir() / "result.json", std::ios::trunc);
    out << result.to_json().dump(2) << "\n";
    return result;
}

Json report(const std::vector<CampaignResult>& results) {
    Json rows = Json::array();
    std::map<std::string, int> merged_counts;
    int successes = 0;
    std::vector<std::int64_t> ttes;
    for (const auto& r : results) {
        rows.push_back(r.to_json());
        for (const auto& [k, v] : r.tool_call_counts) merged_counts[k] += v;
        if (r.status == CampaignStatus::Success) {
            ++successes;
            if (r.tte) ttes.push_back(r.tte->count());
        }
    }
    Json summary = {{"campaigns", results.size()},
                    {"successes", successes},
                    {"trigger_rate", results.empty()
                                         ? Json()
                                         : Json(static_cast<double>(successes) /
                                                static_cast<double>(results.size()))}};
    if (!ttes.empty()) {
        std::sort(ttes.begin(), ttes.end());
        summary["tte_ms_min"] = ttes.front();
        summary["tte_ms_median"] = ttes[ttes.size() / 2];
        summary["tte_ms_max"] = ttes.back();
    }
    return {{"rows", rows}, {"summary", summary}, {"tool_call_counts", merged_counts}};
}

std::string report_table(const Json& report_json) {
    std::ostringstream out;
    out << "campaign                         status   TTE        loops  pov\n";
    out << "-------------------------------- -------- ---------- ------ ---\n";
    for (const auto& row : report_json["rows"]) {
        std::string name = row.value("campaign_dir", "");
        if (auto slash = name.rfind('/'); slash != std::string::npos) {
            name = name.substr(slash + 1);
        }
        if (name.size() > 32) name = name.substr(name.size() - 32);
        std::string tte = "-";
        if (row.contains("tte_ms") && row["tte_ms"].is_number()) {
            const double s = row["tte_ms"].get<double>() / 1000.0;
            std::ostringstream t;
            t.precision(1);
            t << std::fixed << s << " s";
            tte = t.str();
        }
        out << name;
        out << std::string(name.size() < 32 ? 32 - name.size() + 1 : 1, ' ');
        std::string status = row.value("status", "?");
        out << status << std::string(status.size() < 8 ? 8 - status.size() + 1 : 1, ' ');
        out << tte << std::string(tte.size() < 10 ? 10 - tte.size() + 1 : 1, ' ');
        const std::string loops = std::to_string(row.value("loop_iterations", 0));
        out << loops << std::string(loops.size() < 6 ? 6 - loops.size() + 1 : 1, ' ');
        out << (row.contains("pov_file") && row["pov_file"].is_string() ? "yes" : "no");
        out << "\n";
    }
    const auto& s = report_json["summary"];
    out << "\n" << s.value("successes", 0) << "/" << s.value("campaigns", 0)
        << " campaigns succeeded";
    if (s.contains("tte_ms_median")) {
        out << "; median TTE " << s["tte_ms_median"].get<std::int64_t>() / 1000.0 << " s";
    }
    out << "\n\ntool call frequency:\n";
    for (const auto& [tool, count] : report_json["tool_call_counts"].items()) {
        out << "  " << tool << ": " << count.get<int>() << "\n";
    }
    return out.str();
}

}  // namespace povgen::campaign
