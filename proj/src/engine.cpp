#include "povgen/engine.hpp"

#include "povgen/rng.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <thread>

namespace povgen::engine {

namespace {

using harness::Classification;

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Classification map_generator_failure(gen::FailureKind kind) {
    return kind == gen::FailureKind::Timeout ? Classification::Timeout
                                             : Classification::Error;
}

struct IterationRecord {
    std::uint64_t iteration = 0;
    int stage = 2;
    Json params;
    Classification classification = Classification::Error;
    std::chrono::milliseconds wall{0};
    std::string note;            // generator failure detail, if any
    std::string trigger_bytes;   // payload when this iteration triggered

    Json to_line() const {
        Json j = {{"iteration", iteration},
                  {"stage", stage},
                  {"params", params},
                  {"classification", harness::to_string(classification)},
                  {"wall_time", wall.count()}};
        if (!note.empty()) j["note"] = note;
        return j;
    }
};

}  // namespace

Json FuzzSettings::to_json() const {
    return {{"max_iterations", max_iterations},
            {"wall_budget_ms", wall_budget.count()},
            {"stage1_debug", stage1_debug},
            {"output_dir", output_dir.string()},
            {"rng_seed", rng_seed},
            {"workers", workers},
            {"boundary_weight", boundary_weight}};
}

const char* to_string(FuzzResult r) {
    switch (r) {
        case FuzzResult::PovFound: return "pov_found";
        case FuzzResult::BudgetExhausted: return "budget_exhausted";
        case FuzzResult::Aborted: return "aborted";
    }
    return "?";
}

Json Stage1Evidence::to_json() const {
    Json hit_list = Json::array();
    for (const auto& h : hits) hit_list.push_back(h.to_json());
    return {{"plan_description", plan_description ? Json(*plan_description) : Json()},
            {"generator_failed", generator_failed},
            {"generator_detail", generator_detail},
            {"outcome", outcome.to_json()},
            {"hits", hit_list},
            {"input_file", input_file.string()}};
}

Json PovRecord::to_json() const {
    return {{"input_file", input_file.string()},
            {"params", params.to_json()},
            {"stage", stage},
            {"iteration", iteration}};
}

Json FuzzReport::to_json() const {
    Json evidence = Json::array();
    for (const auto& e : stage1_evidence) evidence.push_back(e.to_json());
    return {{"result", to_string(result)},
            {"metrics", metrics.to_json()},
            {"pov", pov ? pov->to_json() : Json()},
            {"stage1_evidence", evidence},
            {"samples_log", samples_log.string()}};
}

workflow::MetricsRecord update_metrics(const workflow::MetricsRecord& metrics,
                                       Classification outcome, const std::string& timestamp) {
    workflow::MetricsRecord m = metrics;
    m.total_iterations += 1;
    switch (outcome) {
        case Classification::Triggered:
            m.triggered_count += 1;
            m.total_reached_count += 1;
            m.last_reached_count += 1;
            break;
        case Classification::Reached:
            m.total_reached_count += 1;
            m.last_reached_count += 1;
            break;
        case Classification::Timeout:
            m.timeout_count += 1;
            break;
        case Classification::Error:
            m.error_count += 1;
            break;
        case Classification::NoReach:
            break;
    }
    m.last_updated = timestamp.empty() ? now_utc() : timestamp;
    return m;
}

Result<FuzzReport> fuzz(const param::ParameterSpace& space,
                        const std::vector<param::ConcreteParams>& plan,
                        const gen::GeneratorSpec& generator,
                        const harness::TargetConfig& target,
                        const std::vector<harness::BreakpointSpec>& breaks,
                        const FuzzSettings& settings,
                        const workflow::MetricsRecord& initial_metrics) {
    if (auto r = generator.validate(); !r) return r.error();
    if (auto r = target.validate(); !r) return r.error();
    if (settings.max_iterations < plan.size()) {
        return make_error(ErrCode::InvalidConfig,
                          "max_iterations must cover the whole plan");
    }
    if (settings.workers < 1) {
        return make_error(ErrCode::InvalidConfig, "workers must be >= 1");
    }
    if (!space.params.empty()) {
        if (auto v = param::validate_space(space); !v.empty()) {
            return make_error(ErrCode::SchemaViolation,
                              "parameter space invalid: " + v[0].parameter + ": " +
                                  v[0].message);
        }
        for (std::size_t i = 0; i < plan.size(); ++i) {
            auto violations = param::check_membership(space, plan[i]);
            if (!violations.empty()) {
                return make_error(ErrCode::InvalidParams,
                                  "plan entry " + std::to_string(i + 1) +
                                      " violates the space: " + violations[0].parameter +
                                      ": " + violations[0].message);
            }
        }
    }

    std::filesystem::create_directories(settings.output_dir);
    const auto seeds_dir = settings.output_dir / "seeds";
    std::filesystem::create_directories(seeds_dir);

    FuzzReport report;
    report.samples_log = settings.output_dir / "samples.jsonl";
    report.metrics = initial_metrics;
    report.metrics.last_reached_count = 0;

    std::ofstream log(report.samples_log, std::ios::trunc);
    const auto deadline = std::chrono::steady_clock::now() + settings.wall_budget;
    bool aborted = false;

    param::SamplerConfig sampler;
    sampler.rng_seed = settings.rng_seed;
    sampler.boundary_weight = settings.boundary_weight;
    sampler.seed_pools = settings.seed_pools;
    sampler.mutation_workdir = seeds_dir;

    auto finish_pov = [&](const std::string& bytes, const param::ConcreteParams& params,
                          int stage, std::uint64_t iteration) {
        PovRecord pov;
        pov.input_file = settings.output_dir / "pov_input.bin";
        pov.params = params;
        pov.stage = stage;
        pov.iteration = iteration;
        write_bytes(pov.input_file, bytes);
        Json meta = {{"stage", stage}, {"iteration", iteration},
                     {"params", params.to_json()}};
        write_bytes(settings.output_dir / "pov_params.json", meta.dump(2) + "\n");
        report.pov = std::move(pov);
        report.result = FuzzResult::PovFound;
    };

    // Stage 1: the plan, in order, with debugger evidence.
    std::uint64_t iteration = 0;
    for (const auto& params : plan) {
        if (std::chrono::steady_clock::now() >= deadline) {
            aborted = true;
            break;
        }
        ++iteration;
        const auto t0 = std::chrono::steady_clock::now();
        Stage1Evidence evidence;
        evidence.plan_description = params.plan_description;

        IterationRecord rec;
        rec.iteration = iteration;
        rec.stage = 1;
        rec.params = params.to_json();

        auto bytes = gen::invoke(generator, params, mix_seed(settings.rng_seed, iteration));
        if (!bytes.success) {
            evidence.generator_failed = true;
            evidence.generator_detail =
                std::string(gen::to_string(bytes.kind)) + ": " + bytes.detail;
            rec.classification = map_generator_failure(bytes.kind);
            rec.note = evidence.generator_detail;
            evidence.outcome.classification = rec.classification;
            evidence.outcome.detail = evidence.generator_detail;
            // Generator stderr stays available verbatim for diagnosis.
            evidence.outcome.stderr_tail = bytes.captured_stderr;
        } else {
            evidence.input_file =
                settings.output_dir / ("stage1_" + std::to_string(iteration) + ".bin");
            write_bytes(evidence.input_file, bytes.payload);
            if (settings.stage1_debug && !breaks.empty()) {
                auto run = harness::run_with_breakpoints(target, bytes.payload, breaks);
                evidence.outcome = run.outcome;
                evidence.hits = run.hits;
            } else {
                evidence.outcome = harness::run_plain(target, bytes.payload);
            }
            rec.classification = evidence.outcome.classification;
        }
        rec.wall = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0);
        report.metrics = update_metrics(report.metrics, rec.classification);
        log << rec.to_line().dump() << "\n";
        log.flush();
        const bool triggered = rec.classification == Classification::Triggered;
        if (triggered && bytes.success) {
            finish_pov(bytes.payload, params, 1, iteration);
        }
        report.stage1_evidence.push_back(std::move(evidence));
        if (triggered) break;
    }

    // Stage 2: high-throughput sampling, debugger off.
    if (!report.pov && !aborted && !space.params.empty() &&
        iteration < settings.max_iterations) {
        const std::uint64_t start = plan.size() + 1;
        std::atomic<std::uint64_t> best_trigger{UINT64_MAX};
        std::atomic<bool> abort_flag{false};
        std::vector<std::vector<IterationRecord>> worker_records(settings.workers);

        auto worker_fn = [&](unsigned worker_id) {
            for (std::uint64_t i = start + worker_id; i <= settings.max_iterations;
                 i += settings.workers) {
                if (i > best_trigger.load(std::memory_order_relaxed)) break;
                if (std::chrono::steady_clock::now() >= deadline) {
                    abort_flag.store(true, std::memory_order_relaxed);
                    break;
                }
                const auto t0 = std::chrono::steady_clock::now();
                IterationRecord rec;
                rec.iteration = i;
                rec.stage = 2;

                auto sampled = param::sample(space, sampler, i);
                if (!sampled) {
                    rec.classification = Classification::Error;
                    rec.note = sampled.error().message;
                    rec.params = Json::object();
                } else {
                    rec.params = sampled->to_json();
                    auto bytes =
                        gen::invoke(generator, *sampled, mix_seed(settings.rng_seed, i));
                    if (!bytes.success) {
                        rec.classification = map_generator_failure(bytes.kind);
                        rec.note = std::string(gen::to_string(bytes.kind)) + ": " + bytes.detail;
                    } else {
                        auto outcome = harness::run_plain(target, bytes.payload);
                        rec.classification = outcome.classification;
                        if (rec.classification == Classification::Triggered) {
                            rec.trigger_bytes = bytes.payload;
                            std::uint64_t prev = best_trigger.load();
                            while (i < prev && !best_trigger.compare_exchange_weak(prev, i)) {
                            }
                        }
                    }
                }
                rec.wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0);
                worker_records[worker_id].push_back(std::move(rec));
            }
        };

        if (settings.workers == 1) {
            worker_fn(0);
        } else {
            std::vector<std::thread> threads;
            for (unsigned w = 0; w < settings.workers; ++w) {
                threads.emplace_back(worker_fn, w);
            }
            for (auto& t : threads) t.join();
        }

        std::vector<IterationRecord> merged;
        for (auto& records : worker_records) {
            merged.insert(merged.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
        }
        std::sort(merged.begin(), merged.end(),
                  [](const IterationRecord& a, const IterationRecord& b) {
                      return a.iteration < b.iteration;
                  });
        // Iterations past the earliest trigger are dropped so the outcome does
        // not depend on worker count or completion order.
        const std::uint64_t cutoff = best_trigger.load();
        for (auto& rec : merged) {
            if (rec.iteration > cutoff) break;
            report.metrics = update_metrics(report.metrics, rec.classification);
            log << rec.to_line().dump() << "\n";
            if (rec.iteration == cutoff && !rec.trigger_bytes.empty()) {
                auto sampled = param::sample(space, sampler, rec.iteration);
                finish_pov(rec.trigger_bytes, sampled.ok() ? *sampled : param::ConcreteParams{},
                           2, rec.iteration);
            }
        }
        log.flush();
        if (!report.pov && abort_flag.load()) aborted = true;
    }

    if (!report.pov) {
        report.result = aborted ? FuzzResult::Aborted : FuzzResult::BudgetExhausted;
    }
    return report;
}

}  // namespace povgen::engine
