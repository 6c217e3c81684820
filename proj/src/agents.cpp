#include "povgen/subprocess.hpp"
#include "povgen/templates.hpp"
#include "povgen/toolbus.hpp"

#include <thread>

namespace povgen::bus {

namespace {

using Clock = std::chrono::steady_clock;

bool deadline_passed(Clock::time_point deadline) { return Clock::now() >= deadline; }

Error deadline_error() {
    return make_error(ErrCode::Aborted, "campaign budget expired mid-policy");
}

// The five-dimensional DTD content-model space. `prefixed` false encodes the
// first-loop hypothesis that namespace prefixes are irrelevant.
Json dtd_space(bool prefixed) {
    auto range = [](int lo, int hi) {
        return Json{{"type", "int_range"}, {"min", lo}, {"max", hi}};
    };
    return Json{
        {"element_prefix_length", prefixed ? range(1, 200) : range(0, 0)},
        {"element_name_length", range(1, 200)},
        {"nesting_depth", range(1, 50)},
        {"num_elements", range(1, 100)},
        {"content_model_type",
         {{"type", "categorical"}, {"values", Json::array({"SEQ", "OR", "MIXED"})}}}};
}

Json dtd_plan(bool prefixed) {
    auto entry = [&](const std::string& desc, int depth, int prefix, int name, int num,
                     const std::string& type) {
        return Json{{"plan_description", desc},
                    {"element_prefix_length", prefixed ? prefix : 0},
                    {"element_name_length", name},
                    {"nesting_depth", depth},
                    {"num_elements", num},
                    {"content_model_type", type}};
    };
    return Json::array({
        entry("Test A1: Shallow with long names", 1, 150, 150, 10, "SEQ"),
        entry("Test A2: Flat list stress", 2, 100, 100, 10, "SEQ"),
        entry("Test A3: Alternation heavy", 5, 80, 80, 8, "OR"),
        entry("Test A4: Mixed operators", 6, 90, 90, 6, "MIXED"),
        entry("Test A5: Deep and narrow", 12, 40, 40, 3, "SEQ"),
        entry("Test A6: Balanced approach", 10, 70, 70, 10, "SEQ"),
        entry("Test A7: Maximum depth probe", 20, 60, 60, 4, "SEQ"),
    });
}

Json scenario_bug_predicates(const campaign::CampaignConfig& cfg) {
    return Json::array(
        {{{"id", "BP1"},
          {"location", cfg.target_locations.locations.front()},
          {"bug_condition", "(size - len - prefix_len) < (name_len + 10)"}}});
}

Json scenario_preconditions(bool with_prefix_constraint) {
    Json out = Json::array();
    out.push_back({{"id", "R1"},
                   {"statement", "Document must parse as a DTD element declaration"},
                   {"input_constraints",
                    Json::array({"Input must be a well-formed DOCTYPE with an ELEMENT "
                                 "content model"})}});
    out.push_back({{"id", "R2"},
                   {"statement", "Content model must nest to accumulate buffer length"},
                   {"input_constraints",
                    Json::array({"Nested SEQ/OR groups rather than flat lists"})}});
    if (with_prefix_constraint) {
        out.push_back(
            {{"id", "R3"},
             {"statement", "Element names must carry a namespace prefix"},
             {"input_constraints",
              Json::array({"Qualified names prefix:name reach the vulnerable append"})}});
    }
    return out;
}

Json scenario_root_causes(bool with_prefix_constraint) {
    Json related = Json::array({"R1", "R2"});
    if (with_prefix_constraint) related.push_back("R3");
    return Json::array({{{"id", "RC1"},
                         {"category", "buffer_overflow"},
                         {"description",
                          "Stale length after the prefix append lets the name append "
                          "run past the buffer"},
                         {"related_precondition_ids", related}}});
}

// Shared driver: one PLAN->IMPLEMENT->EXECUTE pass. Returns the fuzz response.
class ScriptedPolicy {
  public:
    ScriptedPolicy(CampaignSession& session, Clock::time_point deadline)
        : session_(session), deadline_(deadline) {}

    Result<Json> step(const std::string& method, const Json& params) {
        if (deadline_passed(deadline_)) return deadline_error();
        Json result = session_.call(method, params);
        if (result.is_object() && result.contains("code") && result.contains("data")) {
            return make_error(ErrCode::Aborted,
                              "tool " + method + " rejected: " + result.value("message", ""),
                              result);
        }
        return result;
    }

    Result<Json> write(const std::string& block, const Json& content) {
        return step("write_workflow_block",
                    {{"target_block", block}, {"content_json", content}});
    }

    Result<Json> plan_phase(bool informed) {
        const auto& cfg = session_.config();
        if (auto r = write("BugPredicates", scenario_bug_predicates(cfg)); !r) return r;
        if (auto r = write("Preconditions", scenario_preconditions(informed)); !r) return r;
        if (auto r = write("RootCauses", scenario_root_causes(informed)); !r) return r;
        Json plans = Json::array();
        if (!informed_plans_written_) {
            plans.push_back({{"id", "TP1"},
                             {"precondition_ids", Json::array({"R1", "R2"})},
                             {"description",
                              "Deep nesting with long unqualified names exhausts the buffer"},
                             {"complexity", 3},
                             {"status", "pending"}});
        } else {
            plans.push_back({{"id", "TP1"},
                             {"precondition_ids", Json::array({"R1", "R2"})},
                             {"description",
                              "Deep nesting with long unqualified names exhausts the buffer"},
                             {"complexity", 3},
                             {"status", "failed"}});
            plans.push_back({{"id", "TP2"},
                             {"precondition_ids", Json::array({"R1", "R2", "R3"})},
                             {"description",
                              "Deeply nested content models with qualified names"},
                             {"complexity", 4},
                             {"status", "pending"}});
        }
        if (informed) informed_plans_written_ = true;
        if (auto r = write("TriggerPlans", plans); !r) return r;
        if (auto r = step("check_phase_completion", Json::object()); !r) return r;
        return step("transition_phase", {{"next_phase", "IMPLEMENT"}});
    }

    Result<Json> implement_phase(bool informed) {
        if (auto r = step("get_generator_api_doc", Json::object()); !r) return r;
        if (auto r = write("ParameterSpace", dtd_space(informed)); !r) return r;
        if (auto r = write("FuzzPlan", dtd_plan(informed)); !r) return r;
        Json breaks = Json::array(
            {{{"location", session_.config().target_locations.locations.front()},
              {"inline_expr", Json::array({"sim_len", "prefix_len", "name_len"})},
              {"hit_limit", 5}}});
        if (auto r = write("Breakpoints", breaks); !r) return r;
        return step("transition_phase", {{"next_phase", "EXECUTE"}});
    }

    Result<Json> execute_phase(std::uint64_t max_iterations) {
        auto fuzz = step("fuzz", {{"max_iterations", max_iterations}});
        if (!fuzz) return fuzz;
        if (auto r = write("Metrics", (*fuzz)["metrics"]); !r) return r;
        return fuzz;
    }

    bool informed_plans_written_ = false;

  private:
    CampaignSession& session_;
    Clock::time_point deadline_;
};

// Single-pass policy: the correct hypothesis up front.
class ScriptedAgent : public AgentBackend {
  public:
    Result<void> run(CampaignSession& session, Clock::time_point deadline) override {
        ScriptedPolicy policy(session, deadline);
        policy.informed_plans_written_ = true;  // first plans already carry TP2
        if (auto r = policy.plan_phase(true); !r) return r.error();
        if (auto r = policy.implement_phase(true); !r) return r.error();
        auto fuzz = policy.execute_phase(2000);
        if (!fuzz) return fuzz.error();
        if ((*fuzz)["results"]["result"] == "pov_found") {
            if (auto r = policy.step("transition_phase", {{"next_phase", "SUCCESS"}}); !r) {
                return r.error();
            }
            return {};
        }
        return make_error(ErrCode::Aborted, "scripted policy found no PoV");
    }
};

// Two-loop policy: a wrong first hypothesis (prefixes irrelevant), refined
// through detect_deviation evidence.
class TwoLoopAgent : public AgentBackend {
  public:
    Result<void> run(CampaignSession& session, Clock::time_point deadline) override {
        ScriptedPolicy policy(session, deadline);

        // Loop 1: unqualified names only; nothing can reach the target.
        if (auto r = policy.plan_phase(false); !r) return r.error();
        if (auto r = policy.implement_phase(false); !r) return r.error();
        auto fuzz = policy.execute_phase(40);
        if (!fuzz) return fuzz.error();
        if ((*fuzz)["results"]["result"] == "pov_found") {
            // The hypothesis was supposed to fail; treat success as success.
            if (auto r = policy.step("transition_phase", {{"next_phase", "SUCCESS"}}); !r) {
                return r.error();
            }
            return {};
        }
        if (auto r = policy.step("transition_phase", {{"next_phase", "REFLECT"}}); !r) {
            return r.error();
        }

        // Diagnose one failed stage-1 input: divergence at the prefix guard.
        const auto& evidence = (*fuzz)["results"]["stage1_evidence"];
        if (!evidence.is_array() || evidence.empty()) {
            return make_error(ErrCode::Aborted, "no stage-1 evidence to diagnose");
        }
        const std::string input_file = evidence[0].value("input_file", "");
        auto deviation = policy.step("detect_deviation", {{"input_file_path", input_file}});
        if (!deviation) return deviation.error();

        // Loop 2: fold the prefix constraint in and search again.
        if (auto r = policy.step("transition_phase", {{"next_phase", "PLAN"}}); !r) {
            return r.error();
        }
        if (auto r = policy.plan_phase(true); !r) return r.error();
        if (auto r = policy.implement_phase(true); !r) return r.error();
        auto second = policy.execute_phase(2000);
        if (!second) return second.error();
        if ((*second)["results"]["result"] != "pov_found") {
            return make_error(ErrCode::Aborted, "refined policy still found no PoV");
        }
        if (auto r = policy.step("transition_phase", {{"next_phase", "SUCCESS"}}); !r) {
            return r.error();
        }
        return {};
    }
};

// No tool calls at all; the campaign must still terminate at its budget.
class IdleAgent : public AgentBackend {
  public:
    Result<void> run(CampaignSession&, Clock::time_point deadline) override {
        while (!deadline_passed(deadline)) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        return {};
    }
};

// External process speaking newline-delimited JSON-RPC on its stdio. The
// system prompt arrives as the first frame on stdin.
class ProcessAgent : public AgentBackend {
  public:
    explicit ProcessAgent(std::string command) : command_(std::move(command)) {}

    Result<void> run(CampaignSession& session, Clock::time_point deadline) override {
        std::vector<std::string> argv;
        try {
            argv = proc::split_command(command_);
        } catch (const std::invalid_argument& e) {
            return make_error(ErrCode::InvalidConfig, e.what());
        }
        proc::PipeProcess agent;
        if (!agent.start(argv, session.dir())) {
            return make_error(ErrCode::SpawnError,
                              "agent spawn failed: " + agent.spawn_error());
        }
        Json prompt = {{"jsonrpc", "2.0"},
                       {"method", "session/prompt"},
                       {"params", {{"text", tpl::mission_prompt()}}}};
        if (!agent.write_all(prompt.dump() + "\n")) {
            agent.wait(true);
            return make_error(ErrCode::SpawnError, "agent rejected the prompt");
        }
        while (!deadline_passed(deadline)) {
            auto remain = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - Clock::now());
            auto line = agent.read_line(std::min(remain, std::chrono::milliseconds(200)));
            if (!line) continue;  // poll tick
            if (line->empty() && agent.eof()) break;
            if (line->empty()) continue;
            const std::string response = session.handle_line(*line);
            if (!agent.write_all(response + "\n")) break;
        }
        const int code = agent.wait(true);
        if (code != 0 && session.phase() != workflow::Phase::Success) {
            return make_error(ErrCode::Aborted,
                              "agent exited with code " + std::to_string(code));
        }
        return {};
    }

  private:
    std::string command_;
};

}  // namespace

Result<std::unique_ptr<AgentBackend>> make_backend(const std::string& descriptor) {
    if (descriptor == "scripted") return std::unique_ptr<AgentBackend>(new ScriptedAgent());
    if (descriptor == "scripted:two-loop") {
        return std::unique_ptr<AgentBackend>(new TwoLoopAgent());
    }
    if (descriptor == "scripted:idle") return std::unique_ptr<AgentBackend>(new IdleAgent());
    if (descriptor.rfind("process:", 0) == 0) {
        return std::unique_ptr<AgentBackend>(new ProcessAgent(descriptor.substr(8)));
    }
    return make_error(ErrCode::InvalidConfig, "unknown agent backend " + descriptor,
                      {{"descriptor", descriptor}});
}

}  // namespace povgen::bus
