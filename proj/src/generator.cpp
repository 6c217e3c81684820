#include "povgen/generator.hpp"

#include "povgen/subprocess.hpp"

#include <algorithm>
#include <map>

namespace povgen::gen {

namespace {

const std::vector<std::pair<std::string, std::string>>& doc_sections() {
    static const std::vector<std::pair<std::string, std::string>> sections = {
        {"overview",
         "# Generator API\n"
         "A generator turns one concrete parameter assignment into one raw test\n"
         "input. It is a standalone executable (any language; include a shebang\n"
         "for scripts) invoked once per test case.\n"},
        {"protocol",
         "## Protocol (version 1)\n"
         "- stdin: a single UTF-8 JSON object mapping parameter names to values.\n"
         "- stdout: the test input, written as raw bytes.\n"
         "- exit 0 on success; any other exit code marks the run failed.\n"
         "- stderr is captured verbatim and surfaced for diagnosis.\n"
         "- The process group is killed (SIGKILL) when the invocation timeout\n"
         "  expires (default 10 s).\n"},
        {"parameters",
         "## Parameter values\n"
         "- int_range / float_range parameters arrive as JSON numbers.\n"
         "- categorical parameters arrive as JSON strings.\n"
         "- segments parameters arrive as JSON arrays of element values.\n"
         "- Unknown keys must be ignored; missing keys should fall back to\n"
         "  documented defaults.\n"},
        {"base_seed",
         "## base_seed parameters\n"
         "A base_seed parameter arrives as a JSON string holding a filesystem\n"
         "path. The file is one of the reaching testcases from corpus analysis,\n"
         "possibly mutated by the engine. Read the file's bytes and embed or\n"
         "transform them; never treat the path itself as payload.\n"},
        {"determinism",
         "## Determinism and _rng_seed\n"
         "The engine injects a reserved `_rng_seed` parameter (64-bit unsigned\n"
         "integer). Seed every internal random source from it. Two invocations\n"
         "with identical parameter objects must produce identical bytes, or\n"
         "search results cannot be replayed.\n"},
        {"exit_codes",
         "## Failure classification\n"
         "- timeout: the invocation deadline expired.\n"
         "- nonzero_exit: the process exited with a nonzero code or a signal.\n"
         "- protocol_error: the output exceeded the configured cap, or the\n"
         "  process could not be spawned.\n"
         "- empty_output: exit 0 with zero bytes on stdout.\n"},
        {"examples",
         "## Example (Python)\n"
         "```python\n"
         "#!/usr/bin/env python3\n"
         "import json, random, sys\n"
         "params = json.load(sys.stdin)\n"
         "random.seed(params.get(\"_rng_seed\", 0))\n"
         "depth = params.get(\"nesting_depth\", 5)\n"
         "sys.stdout.buffer.write(build_input(depth, params))\n"
         "```\n"},
    };
    return sections;
}

}  // namespace

Result<void> GeneratorSpec::validate() const {
    if (protocol_version != 1) {
        return make_error(ErrCode::InvalidConfig,
                          "unsupported generator protocol version " +
                              std::to_string(protocol_version));
    }
    std::error_code ec;
    if (program.empty() || !std::filesystem::exists(program, ec)) {
        return make_error(ErrCode::InvalidConfig,
                          "generator program not found: " + program.string());
    }
    return {};
}

const char* to_string(FailureKind k) {
    switch (k) {
        case FailureKind::Timeout: return "timeout";
        case FailureKind::NonzeroExit: return "nonzero_exit";
        case FailureKind::ProtocolError: return "protocol_error";
        case FailureKind::EmptyOutput: return "empty_output";
    }
    return "?";
}

Json GenerationResult::to_json() const {
    if (success) return {{"outcome", "bytes"}, {"length", payload.size()}};
    return {{"outcome", "failure"},
            {"kind", to_string(kind)},
            {"detail", detail},
            {"captured_stderr", captured_stderr}};
}

GenerationResult invoke(const GeneratorSpec& gen, const param::ConcreteParams& params,
                        std::uint64_t rng_seed) {
    GenerationResult res;
    Json payload = params.to_json();
    payload.erase("plan_description");
    payload["_rng_seed"] = rng_seed;

    proc::RunRequest req;
    req.argv = {gen.program.string()};
    req.stdin_bytes = payload.dump();
    req.cwd = gen.workdir;
    req.timeout = gen.invoke_timeout;
    req.stdout_cap = gen.output_cap;

    auto run = proc::run_process(req);
    res.captured_stderr = run.stderr_data;
    if (!run.spawned) {
        res.kind = FailureKind::ProtocolError;
        res.detail = "spawn failed: " + run.spawn_error;
        return res;
    }
    if (run.timed_out) {
        res.kind = FailureKind::Timeout;
        res.detail = "no result within " + std::to_string(gen.invoke_timeout.count()) + " ms";
        return res;
    }
    if (!run.exited || run.exit_code != 0) {
        res.kind = FailureKind::NonzeroExit;
        res.detail = run.exited ? "exit code " + std::to_string(run.exit_code)
                                : "terminated by signal " + std::to_string(run.term_signal);
        return res;
    }
    if (run.stdout_truncated) {
        res.kind = FailureKind::ProtocolError;
        res.detail = "output exceeds cap of " + std::to_string(gen.output_cap) + " bytes";
        return res;
    }
    if (run.stdout_data.empty()) {
        res.kind = FailureKind::EmptyOutput;
        res.detail = "exit 0 with empty stdout";
        return res;
    }
    res.success = true;
    res.payload = std::move(run.stdout_data);
    return res;
}

bool SelfTestReport::all_ok() const {
    return entries.size() == 3 &&
           std::all_of(entries.begin(), entries.end(),
                       [](const SelfTestEntry& e) { return e.result.success; });
}

Json SelfTestReport::to_json() const {
    Json arr = Json::array();
    for (const auto& e : entries) {
        arr.push_back({{"params", e.params.to_json()}, {"result", e.result.to_json()}});
    }
    return {{"entries", arr}, {"all_ok", all_ok()}};
}

SelfTestReport self_test(const GeneratorSpec& gen, const param::ParameterSpace& space,
                         const param::SamplerConfig& sampler) {
    SelfTestReport report;
    for (int i = 0; i < 3; ++i) {
        SelfTestEntry entry;
        bool buildable = true;
        for (const auto& [name, domain] : space.params) {
            auto bvals = param::boundary_values(domain);
            if (!bvals.empty()) {
                entry.params.values[name] =
                    bvals[std::min<std::size_t>(i, bvals.size() - 1)];
                continue;
            }
            // base_seed: no enumerable boundaries, resolve from the pool.
            const auto* seed = std::get_if<param::BaseSeed>(&domain.v);
            auto pool = seed ? sampler.seed_pools.find(seed->corpus_ref)
                             : sampler.seed_pools.end();
            if (pool == sampler.seed_pools.end() || pool->second.empty()) {
                entry.result.kind = FailureKind::ProtocolError;
                entry.result.detail = "no boundary value for parameter " + name;
                buildable = false;
                break;
            }
            entry.params.values[name] =
                pool->second[std::min<std::size_t>(i, pool->second.size() - 1)];
        }
        if (buildable) {
            entry.result = invoke(gen, entry.params, /*rng_seed=*/static_cast<std::uint64_t>(i));
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

Result<std::string> api_doc(const std::string& topic) {
    if (topic.empty()) {
        std::string all;
        for (const auto& [_, text] : doc_sections()) {
            all += text;
            all += "\n";
        }
        return all;
    }
    for (const auto& [key, text] : doc_sections()) {
        if (key == topic) return text;
    }
    return make_error(ErrCode::UnknownTopic, "unknown documentation topic \"" + topic + "\"",
                      {{"topic", topic}});
}

}  // namespace povgen::gen
