#pragma once
// Typed parameter domains and the heuristic sampler. A ParameterSpace encodes
// input-level constraints as named domains; sampling turns the space into
// concrete parameter assignments, deterministically per (space, config,
// iteration) so every search run can be replayed.

#include "povgen/errors.hpp"

#include "povgen/json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace povgen::param {

using Value = povgen::Json;

struct Domain;

struct IntRange {
    std::int64_t min = 0;
    std::int64_t max = 0;
};

struct FloatRange {
    double min = 0.0;
    double max = 0.0;
};

struct Categorical {
    std::vector<std::string> values;
};

struct Segments {
    std::int64_t count_min = 0;
    std::int64_t count_max = 0;
    std::shared_ptr<const Domain> element;
};

struct BaseSeed {
    std::string corpus_ref;
};

struct Domain {
    std::variant<IntRange, FloatRange, Categorical, Segments, BaseSeed> v;

    const char* kind() const;
    Json to_json() const;
    static Result<Domain> from_json(const Json& j);
};

Domain make_int_range(std::int64_t min, std::int64_t max);
Domain make_float_range(double min, double max);
Domain make_categorical(std::vector<std::string> values);
Domain make_segments(std::int64_t count_min, std::int64_t count_max, Domain element);
Domain make_base_seed(std::string corpus_ref);

struct ParameterSpace {
    std::map<std::string, Domain> params;

    Json to_json() const;
    static Result<ParameterSpace> from_json(const Json& j);
};

struct ConcreteParams {
    std::optional<std::string> plan_description;
    std::map<std::string, Value> values;

    // Flat map shape: plan_description inline beside the parameter values.
    Json to_json() const;
    static Result<ConcreteParams> from_json(const Json& j);
};

enum class MutationOp { BitFlip, ByteReplace, Truncate, Extend, ChunkDuplicate };

const char* to_string(MutationOp op);
std::optional<MutationOp> mutation_op_from_string(const std::string& s);

struct SamplerConfig {
    std::uint64_t rng_seed = 0;
    double boundary_weight = 0.5;
    std::vector<MutationOp> mutation_ops = {MutationOp::BitFlip, MutationOp::ByteReplace,
                                            MutationOp::Truncate, MutationOp::Extend,
                                            MutationOp::ChunkDuplicate};
    // base_seed resolution: corpus_ref -> candidate seed files.
    std::map<std::string, std::vector<std::string>> seed_pools;
    // When set, base_seed draws are mutated and written here; the parameter
    // value becomes the mutated file's path.
    std::optional<std::filesystem::path> mutation_workdir;
};

struct Violation {
    std::string parameter;
    std::string message;
};

// Total function: never throws, reports every broken invariant by name.
std::vector<Violation> validate_space(const ParameterSpace& space);

// Domain membership, recursive for segments.
bool contains(const Domain& domain, const Value& value);

// Membership of a full assignment: every space key present and in-domain,
// no extraneous keys.
std::vector<Violation> check_membership(const ParameterSpace& space, const ConcreteParams& p);

// Deterministic boundary candidates, every element satisfying contains().
std::vector<Value> boundary_values(const Domain& domain);

Result<ConcreteParams> sample(const ParameterSpace& space, const SamplerConfig& config,
                              std::uint64_t iteration);

struct MutationRecord {
    MutationOp op;
    std::size_t position = 0;  // bit index for BitFlip, byte offset otherwise
    std::size_t length = 0;    // bytes affected where meaningful
};

struct MutationTrace {
    std::string bytes;
    std::vector<MutationRecord> records;
};

Result<MutationTrace> mutate_seed_traced(const std::string& seed, const SamplerConfig& config,
                                         std::uint64_t iteration);
Result<std::string> mutate_seed(const std::string& seed, const SamplerConfig& config,
                                std::uint64_t iteration);

}  // namespace povgen::param
