#pragma once
// Hosts agent-synthesized input generators behind a subprocess protocol:
// one JSON object of parameters on stdin, raw test-input bytes on stdout,
// exit 0. Any language works; isolation and timeouts come from the process
// boundary.

#include "povgen/errors.hpp"
#include "povgen/paramspace.hpp"

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace povgen::gen {

struct GeneratorSpec {
    std::filesystem::path program;
    int protocol_version = 1;
    std::chrono::milliseconds invoke_timeout{10000};
    std::filesystem::path workdir;
    std::size_t output_cap = 64ull << 20;

    Result<void> validate() const;
};

enum class FailureKind { Timeout, NonzeroExit, ProtocolError, EmptyOutput };

const char* to_string(FailureKind k);

struct GenerationResult {
    bool success = false;
    std::string payload;  // raw generated input when success
    FailureKind kind = FailureKind::ProtocolError;
    std::string detail;
    std::string captured_stderr;

    Json to_json() const;
};

// Runs the generator on one concrete assignment. `rng_seed` is injected as
// the reserved `_rng_seed` parameter so generator-internal randomness replays.
GenerationResult invoke(const GeneratorSpec& gen, const param::ConcreteParams& params,
                        std::uint64_t rng_seed = 0);

struct SelfTestEntry {
    param::ConcreteParams params;
    GenerationResult result;
};

struct SelfTestReport {
    std::vector<SelfTestEntry> entries;  // always 3
    bool all_ok() const;
    Json to_json() const;
};

// Probes the generator on three boundary assignments drawn from the space.
SelfTestReport self_test(const GeneratorSpec& gen, const param::ParameterSpace& space,
                         const param::SamplerConfig& sampler = {});

// Generator protocol reference. Empty topic returns the whole document.
Result<std::string> api_doc(const std::string& topic = "");

}  // namespace povgen::gen
