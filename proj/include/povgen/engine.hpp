#pragma once
// Two-stage PoV search. Stage 1 replays the agent's concrete parameter sets
// under debugger instrumentation and keeps the evidence; Stage 2 samples the
// parameter space at full speed until a trigger or the budget runs out. The
// whole run is a deterministic function of the rng seed (wall-clock fields
// aside), so campaigns replay.

#include "povgen/errors.hpp"
#include "povgen/generator.hpp"
#include "povgen/harness.hpp"
#include "povgen/paramspace.hpp"
#include "povgen/workflow.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <vector>

namespace povgen::engine {

struct FuzzSettings {
    std::uint64_t max_iterations = 5000;
    std::chrono::milliseconds wall_budget = std::chrono::minutes(25);
    bool stage1_debug = true;
    std::filesystem::path output_dir;
    std::uint64_t rng_seed = 0;
    unsigned workers = 1;
    double boundary_weight = 0.5;
    std::map<std::string, std::vector<std::string>> seed_pools;

    Json to_json() const;
};

enum class FuzzResult { PovFound, BudgetExhausted, Aborted };

const char* to_string(FuzzResult r);

struct Stage1Evidence {
    std::optional<std::string> plan_description;
    bool generator_failed = false;
    std::string generator_detail;
    harness::ExecutionOutcome outcome;
    std::vector<harness::BreakpointHit> hits;
    std::filesystem::path input_file;

    Json to_json() const;
};

struct PovRecord {
    std::filesystem::path input_file;
    param::ConcreteParams params;
    int stage = 1;
    std::uint64_t iteration = 0;

    Json to_json() const;
};

struct FuzzReport {
    FuzzResult result = FuzzResult::BudgetExhausted;
    workflow::MetricsRecord metrics;
    std::optional<PovRecord> pov;
    std::vector<Stage1Evidence> stage1_evidence;
    std::filesystem::path samples_log;

    Json to_json() const;
};

// Pure counter fold; triggered counts as reached, last_reached tracks the
// current fuzz call and is reset by the engine at call entry.
workflow::MetricsRecord update_metrics(const workflow::MetricsRecord& metrics,
                                       harness::Classification outcome,
                                       const std::string& timestamp = {});

Result<FuzzReport> fuzz(const param::ParameterSpace& space,
                        const std::vector<param::ConcreteParams>& plan,
                        const gen::GeneratorSpec& generator,
                        const harness::TargetConfig& target,
                        const std::vector<harness::BreakpointSpec>& breaks,
                        const FuzzSettings& settings,
                        const workflow::MetricsRecord& initial_metrics = {});

}  // namespace povgen::engine
