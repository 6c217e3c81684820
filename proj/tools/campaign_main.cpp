// Campaign CLI: run an agent-driven PoV campaign, serve the tool bus on
// stdio for an external agent harness, or aggregate result reports.

#include "povgen/campaign.hpp"
#include "povgen/toolbus.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, long budget_s,
            long rng_seed, const std::string& agent) {
    auto cfg = povgen::campaign::CampaignConfig::load(config_path);
    if (!cfg) {
        std::cerr << "error: " << cfg.error().message << "\n";
        return 2;
    }
    if (!out_dir.empty()) cfg->output_dir = out_dir;
    if (budget_s > 0) cfg->budget = std::chrono::seconds(budget_s);
    if (rng_seed >= 0) cfg->fuzz_defaults.rng_seed = static_cast<std::uint64_t>(rng_seed);
    if (!agent.empty()) cfg->agent_backend = agent;

    auto result = povgen::campaign::run_campaign(*cfg);
    if (!result) {
        std::cerr << "error: " << result.error().message << "\n";
        return 2;
    }
    std::cout << result->to_json().dump(2) << "\n";
    return result->status == povgen::campaign::CampaignStatus::Success ? 0 : 1;
}

int cmd_report(const std::string& in_dir, const std::string& json_out) {
    namespace fs = std::filesystem;
    std::vector<povgen::campaign::CampaignResult> results;
    auto try_load = [&](const fs::path& p) {
        std::ifstream in(p);
        if (!in) return;
        povgen::Json j = povgen::Json::parse(in, nullptr, false);
        if (j.is_discarded()) return;
        auto r = povgen::campaign::CampaignResult::from_json(j);
        if (r) results.push_back(*r);
    };
    if (fs::exists(fs::path(in_dir) / "result.json")) {
        try_load(fs::path(in_dir) / "result.json");
    }
    if (fs::is_directory(in_dir)) {
        for (const auto& entry : fs::directory_iterator(in_dir)) {
            if (entry.is_directory() && fs::exists(entry.path() / "result.json")) {
                try_load(entry.path() / "result.json");
            }
        }
    }
    auto report = povgen::campaign::report(results);
    if (!json_out.empty()) {
        std::ofstream out(json_out, std::ios::trunc);
        out << report.dump(2) << "\n";
    }
    std::cout << povgen::campaign::report_table(report);
    return 0;
}

int cmd_serve(const std::string& config_path, const std::string& out_dir) {
    auto cfg = povgen::campaign::CampaignConfig::load(config_path);
    if (!cfg) {
        std::cerr << "error: " << cfg.error().message << "\n";
        return 2;
    }
    if (!out_dir.empty()) cfg->output_dir = out_dir;
    auto session = povgen::bus::CampaignSession::create(*cfg);
    if (!session) {
        std::cerr << "error: " << session.error().message << "\n";
        return 2;
    }
    return povgen::bus::serve_stdio(**session);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agentic proof-of-vulnerability campaign driver"};
    app.require_subcommand(1);

    std::string config_path, out_dir, agent, in_dir, json_out;
    long budget_s = -1, rng_seed = -1;

    auto* run = app.add_subcommand("run", "run a campaign to completion");
    run->add_option("--config", config_path, "campaign config JSON")->required();
    run->add_option("--out", out_dir, "override the campaign output directory");
    run->add_option("--budget", budget_s, "campaign budget in seconds");
    run->add_option("--rng-seed", rng_seed, "engine rng seed");
    run->add_option("--agent", agent,
                    "agent backend: scripted | scripted:two-loop | scripted:idle | "
                    "process:<command>");

    auto* report = app.add_subcommand("report", "aggregate campaign results");
    report->add_option("--in", in_dir, "directory holding campaign result dirs")->required();
    report->add_option("--json", json_out, "also write the report as JSON");

    auto* serve = app.add_subcommand("serve-tools",
                                     "serve the JSON-RPC tool bus on stdin/stdout");
    serve->add_option("--config", config_path, "campaign config JSON")->required();
    serve->add_option("--out", out_dir, "override the campaign output directory");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, out_dir, budget_s, rng_seed, agent);
    if (report->parsed()) return cmd_report(in_dir, json_out);
    if (serve->parsed()) return cmd_serve(config_path, out_dir);
    return 2;
}
