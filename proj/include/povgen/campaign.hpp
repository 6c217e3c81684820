#pragma once
// Campaign configuration, results and reporting.

#include "povgen/engine.hpp"
#include "povgen/errors.hpp"
#include "povgen/harness.hpp"
#include "povgen/program_facts.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace povgen::campaign {

struct CampaignConfig {
    harness::TargetConfig target;
    std::filesystem::path source_root;
    std::filesystem::path output_dir;
    facts::TargetSpec target_locations;
    std::string source_code_blocks;
    std::optional<std::filesystem::path> corpus_dir;
    std::optional<std::filesystem::path> graph_file;
    std::optional<std::filesystem::path> generator_program;
    std::string agent_backend = "scripted";
    std::chrono::milliseconds budget = std::chrono::minutes(30);
    engine::FuzzSettings fuzz_defaults;

    Json to_json() const;
    static Result<CampaignConfig> from_json(const Json& j);
    static Result<CampaignConfig> load(const std::filesystem::path& path);
};

enum class CampaignStatus { Success, Timeout, Failed };

const char* to_string(CampaignStatus s);

struct CampaignResult {
    CampaignStatus status = CampaignStatus::Failed;
    std::optional<std::chrono::milliseconds> tte;
    int loop_iterations = 0;  // PLAN phase entries
    std::map<std::string, int> tool_call_counts;
    std::optional<std::string> pov_file;
    std::string campaign_dir;

    Json to_json() const;
    static Result<CampaignResult> from_json(const Json& j);
};

Result<CampaignResult> run_campaign(const CampaignConfig& cfg);

// Aggregated report: per-campaign rows, merged tool-call frequencies and the
// repeated-run consistency summary.
Json report(const std::vector<CampaignResult>& results);
std::string report_table(const Json& report_json);

}  // namespace povgen::campaign
