#include "povgen/workflow.hpp"

#include "povgen/rng.hpp"
#include "povgen/templates.hpp"
#include "support/tmpdir.hpp"

#include <doctest.h>

#include <algorithm>

using namespace povgen;
using namespace povgen::workflow;
using test_support::TmpDir;
using test_support::read_file;

namespace {

Result<Gatekeeper> open_fresh(const TmpDir& dir) {
    auto path = dir.write("workflow_state.md", tpl::render_workflow_state_initial());
    return Gatekeeper::open(path);
}

Json minimal_bug_predicates() {
    return Json::array({{{"id", "BP1"},
                         {"location", "valid.c:1342"},
                         {"bug_condition",
                          "(size - len - xmlStrlen(content->prefix)) < "
                          "(xmlStrlen(content->name) + 10)"}}});
}

Json minimal_preconditions() {
    return Json::array({{{"id", "R1"},
                         {"statement", "Must reach the vulnerable function"},
                         {"input_constraints", Json::array({"Input must be valid XML"})}}});
}

Json minimal_root_causes() {
    return Json::array({{{"id", "RC1"},
                         {"category", "buffer_overflow"},
                         {"description", "stale length after prefix append"},
                         {"related_precondition_ids", Json::array({"R1"})}}});
}

Json minimal_trigger_plans(const std::string& status = "pending") {
    return Json::array({{{"id", "TP1"},
                         {"precondition_ids", Json::array({"R1"})},
                         {"description", "deeply nested content models"},
                         {"complexity", 3},
                         {"status", status}}});
}

Json minimal_space() {
    return Json{{"nesting_depth", {{"type", "int_range"}, {"min", 1}, {"max", 50}}}};
}

Json minimal_fuzz_plan(int n) {
    Json plan = Json::array();
    for (int i = 0; i < n; ++i) plan.push_back(Json{{"nesting_depth", i + 1}});
    return plan;
}

Json minimal_breakpoints() {
    return Json::array(
        {{{"location", "valid.c:1342"}, {"inline_expr", Json::array({"size", "len"})},
          {"hit_limit", 5}}});
}

Json metrics_json(std::uint64_t iters, std::uint64_t reached, std::uint64_t triggered,
                  const std::string& stamp) {
    return Json{{"total_iterations", iters},  {"total_reached_count", reached},
                {"last_reached_count", reached}, {"triggered_count", triggered},
                {"timeout_count", 0},         {"error_count", 0},
                {"last_updated", stamp}};
}

void fill_plan_blocks(Gatekeeper& gk) {
    REQUIRE(gk.write_block(BlockId::BugPredicates, minimal_bug_predicates()).ok());
    REQUIRE(gk.write_block(BlockId::Preconditions, minimal_preconditions()).ok());
    REQUIRE(gk.write_block(BlockId::RootCauses, minimal_root_causes()).ok());
    REQUIRE(gk.write_block(BlockId::TriggerPlans, minimal_trigger_plans()).ok());
}

void advance_to_execute(Gatekeeper& gk) {
    fill_plan_blocks(gk);
    REQUIRE(gk.transition(Phase::Implement).ok());
    REQUIRE(gk.write_block(BlockId::ParameterSpace, minimal_space()).ok());
    REQUIRE(gk.write_block(BlockId::FuzzPlan, minimal_fuzz_plan(5)).ok());
    REQUIRE(gk.write_block(BlockId::Breakpoints, minimal_breakpoints()).ok());
    gk.session().generator_registered = true;
    REQUIRE(gk.transition(Phase::Execute).ok());
}

// Synthetic documents with the dynamic blocks permuted and randomly filled;
// payloads are rendered canonically so byte-level round-trips are expected.
std::string random_permuted_doc(std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<BlockId> order(kAllBlocks.begin(), kAllBlocks.end());
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_below(i)]);
    }

    std::vector<std::string> pre_ids;
    const int n_pre = 1 + static_cast<int>(rng.next_below(3));
    for (int i = 0; i < n_pre; ++i) pre_ids.push_back("R" + std::to_string(i + 1));

    auto payload = [&](BlockId b) -> Json {
        switch (b) {
            case BlockId::State: {
                const char* phases[] = {"PLAN", "IMPLEMENT", "EXECUTE", "REFLECT", "SUCCESS"};
                return Json{{"phase", phases[rng.next_below(5)]},
                            {"status", "s" + std::to_string(rng.next_below(100))},
                            {"current_task", "t"},
                            {"next_action", "n"}};
            }
            case BlockId::BugPredicates:
                return Json::array({{{"id", "BP1"},
                                     {"location", "f.c:" + std::to_string(rng.next_below(999))},
                                     {"bug_condition", "a < b"}}});
            case BlockId::Preconditions: {
                Json arr = Json::array();
                for (const auto& id : pre_ids) {
                    arr.push_back(Json{{"id", id},
                                       {"statement", "reach"},
                                       {"input_constraints", Json::array({"c1"})}});
                }
                return arr;
            }
            case BlockId::RootCauses:
                return Json::array(
                    {{{"id", "RC1"},
                      {"category", "buffer_overflow"},
                      {"description", "d"},
                      {"related_precondition_ids", Json::array({pre_ids[0]})}}});
            case BlockId::ParameterSpace:
                return rng.next_below(2) == 0
                           ? Json::object()
                           : Json{{"depth",
                                   {{"type", "int_range"},
                                    {"min", 1},
                                    {"max", 1 + static_cast<std::int64_t>(rng.next_below(50))}}}};
            case BlockId::TriggerPlans:
                return Json::array(
                    {{{"id", "TP1"},
                      {"precondition_ids", Json::array({pre_ids[rng.next_below(pre_ids.size())]})},
                      {"description", "plan"},
                      {"complexity", 1 + static_cast<int>(rng.next_below(10))},
                      {"status", "pending"}}});
            case BlockId::FuzzPlan: {
                Json arr = Json::array();
                const int n = static_cast<int>(rng.next_below(4));
                for (int i = 0; i < n; ++i) arr.push_back(Json{{"depth", i}});
                return arr;
            }
            case BlockId::Breakpoints:
                return Json::array({{{"location", "f.c:10"},
                                     {"inline_expr", Json::array({"x"})},
                                     {"hit_limit", 1 + static_cast<int>(rng.next_below(5))}}});
            case BlockId::Metrics: {
                const std::uint64_t iters = rng.next_below(100);
                const std::uint64_t reached = iters == 0 ? 0 : rng.next_below(iters + 1);
                const std::uint64_t triggered = reached == 0 ? 0 : rng.next_below(reached + 1);
                return metrics_json(iters, reached, triggered, "2026-01-01T00:00:00Z");
            }
        }
        return Json();
    };

    std::string text = "# Synthetic Workflow State\n\n";
    for (BlockId b : order) {
        text += std::string("<!-- DYNAMIC:") + block_marker(b) + ":START -->\n";
        text += std::string("## ") + block_name(b) + "\n";
        text += "```json\n";
        text += payload(b).dump(2);
        text += "\n```\n";
        text += std::string("<!-- DYNAMIC:") + block_marker(b) + ":END -->\n\n";
    }
    return text;
}

}  // namespace

TEST_SUITE_BEGIN("workflow");

TEST_CASE("fresh template loads with phase PLAN and empty blocks") {
    auto doc = WorkflowDocument::parse(tpl::render_workflow_state_initial());
    REQUIRE(doc.ok());
    CHECK(doc->phase() == Phase::Plan);
    for (BlockId b : {BlockId::BugPredicates, BlockId::Preconditions, BlockId::RootCauses,
                      BlockId::TriggerPlans, BlockId::FuzzPlan, BlockId::Breakpoints}) {
        CHECK(doc->block(b) == Json::array());
    }
    CHECK(doc->block(BlockId::ParameterSpace) == Json::object());
    auto m = MetricsRecord::from_json(doc->block(BlockId::Metrics));
    REQUIRE(m.ok());
    CHECK(m->total_iterations == 0);
    CHECK(m->last_updated.empty());
}

TEST_CASE("missing METRICS markers is a parse error naming the block") {
    std::string text = tpl::render_workflow_state_initial();
    auto start = text.find("<!-- DYNAMIC:METRICS:START -->");
    auto end = text.find("<!-- DYNAMIC:METRICS:END -->");
    REQUIRE(start != std::string::npos);
    text.erase(start, end - start + std::string("<!-- DYNAMIC:METRICS:END -->\n").size());
    auto doc = WorkflowDocument::parse(text);
    REQUIRE_FALSE(doc.ok());
    CHECK(doc.error().code == ErrCode::ParseError);
    CHECK(doc.error().message.find("METRICS") != std::string::npos);
}

TEST_CASE("stored payloads are schema-checked on load, naming the block") {
    std::string text = tpl::render_workflow_state_initial();
    auto pos = text.find("\"total_iterations\": 0");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("\"total_iterations\": 0").size(),
                 "\"total_iterations\": -4");
    auto doc = WorkflowDocument::parse(text);
    REQUIRE_FALSE(doc.ok());
    CHECK(doc.error().code == ErrCode::SchemaViolation);
    CHECK(doc.error().message.find("Metrics") != std::string::npos);
}

TEST_CASE("unbalanced marker is a parse error") {
    std::string text = tpl::render_workflow_state_initial();
    auto pos = text.find("<!-- DYNAMIC:FUZZ_PLAN:END -->");
    text.erase(pos, std::string("<!-- DYNAMIC:FUZZ_PLAN:END -->").size());
    auto doc = WorkflowDocument::parse(text);
    REQUIRE_FALSE(doc.ok());
    CHECK(doc.error().code == ErrCode::ParseError);
}

TEST_CASE("template render round-trips byte-for-byte") {
    const std::string text = tpl::render_workflow_state_initial();
    auto doc = WorkflowDocument::parse(text);
    REQUIRE(doc.ok());
    CHECK(doc->render() == text);
}

TEST_CASE("render(load(f)) byte-equals f on block-permuted documents") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::string text = random_permuted_doc(seed);
        auto doc = WorkflowDocument::parse(text);
        REQUIRE_MESSAGE(doc.ok(), "seed=", seed, " err=", doc.ok() ? "" : doc.error().message);
        CHECK_MESSAGE(doc->render() == text, "seed=", seed);
        auto again = WorkflowDocument::parse(doc->render());
        REQUIRE(again.ok());
        CHECK(*again == *doc);
    }
}

TEST_CASE("REFLECT rejects memory block writes") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    advance_to_execute(*gk);
    REQUIRE(gk->write_block(BlockId::Metrics, metrics_json(10, 0, 0, "stamp-1")).ok());
    REQUIRE(gk->transition(Phase::Reflect).ok());

    auto r = gk->write_block(BlockId::Preconditions, minimal_preconditions());
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::PermissionDenied);
    CHECK(r.error().data["phase"] == "REFLECT");
}

TEST_CASE("empty list write is schema-valid in PLAN") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    CHECK(gk->write_block(BlockId::BugPredicates, Json::array()).ok());
}

TEST_CASE("complexity out of range is a schema violation at .complexity") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    REQUIRE(gk->write_block(BlockId::Preconditions, minimal_preconditions()).ok());
    auto plans = minimal_trigger_plans();
    plans[0]["complexity"] = 11;
    auto r = gk->write_block(BlockId::TriggerPlans, plans);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::SchemaViolation);
    CHECK(r.error().data["path"].get<std::string>().find(".complexity") != std::string::npos);
}

TEST_CASE("unknown fields bounce back") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    auto bp = minimal_bug_predicates();
    bp[0]["confidence"] = 0.9;
    auto r = gk->write_block(BlockId::BugPredicates, bp);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::SchemaViolation);
    CHECK(r.error().data["path"].get<std::string>().find("confidence") != std::string::npos);
}

TEST_CASE("root causes demand resolvable precondition ids") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    auto r = gk->write_block(BlockId::RootCauses, minimal_root_causes());
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::ReferentialIntegrity);

    REQUIRE(gk->write_block(BlockId::Preconditions, minimal_preconditions()).ok());
    CHECK(gk->write_block(BlockId::RootCauses, minimal_root_causes()).ok());
}

TEST_CASE("trigger plan status may not regress") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    REQUIRE(gk->write_block(BlockId::Preconditions, minimal_preconditions()).ok());
    REQUIRE(gk->write_block(BlockId::TriggerPlans, minimal_trigger_plans("in_progress")).ok());
    auto r = gk->write_block(BlockId::TriggerPlans, minimal_trigger_plans("pending"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::SchemaViolation);
    CHECK(gk->write_block(BlockId::TriggerPlans, minimal_trigger_plans("failed")).ok());
    CHECK_FALSE(gk->write_block(BlockId::TriggerPlans, minimal_trigger_plans("completed")).ok());
}

TEST_CASE("state phase field only changes via transition_phase") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    Json state = gk->doc().block(BlockId::State);
    state["phase"] = "EXECUTE";
    auto r = gk->write_block(BlockId::State, state);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::SchemaViolation);

    state["phase"] = "PLAN";
    state["status"] = "updated";
    CHECK(gk->write_block(BlockId::State, state).ok());
}

TEST_CASE("automaton: PLAN cannot jump to EXECUTE") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    auto r = gk->transition(Phase::Execute);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::IllegalTransition);
}

TEST_CASE("automaton: all 25 pairs match the legal relation") {
    const std::set<std::pair<Phase, Phase>> legal = {
        {Phase::Plan, Phase::Implement},
        {Phase::Implement, Phase::Execute},
        {Phase::Execute, Phase::Reflect},
        {Phase::Execute, Phase::Success},
        {Phase::Reflect, Phase::Plan},
    };
    for (Phase from : kAllPhases) {
        for (Phase to : kAllPhases) {
            CHECK(transition_legal(from, to) == (legal.count({from, to}) != 0));
        }
    }
}

TEST_CASE("EXECUTE to SUCCESS requires an engine-recorded PoV") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    advance_to_execute(*gk);
    REQUIRE(gk->write_block(BlockId::Metrics, metrics_json(10, 2, 0, "stamp-1")).ok());
    auto r = gk->transition(Phase::Success);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::IncompletePhase);

    gk->session().pov_recorded = true;
    REQUIRE(gk->write_block(BlockId::Metrics, metrics_json(12, 3, 1, "stamp-2")).ok());
    CHECK(gk->transition(Phase::Success).ok());
    CHECK(gk->doc().phase() == Phase::Success);

    auto after = gk->write_block(BlockId::State, gk->doc().block(BlockId::State));
    REQUIRE_FALSE(after.ok());
    CHECK(after.error().code == ErrCode::PermissionDenied);
}

TEST_CASE("PLAN completes exactly when all four blocks are non-empty") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    auto report = gk->check_completion();
    CHECK_FALSE(report.satisfied);
    REQUIRE(report.unmet.size() == 4);
    CHECK(report.unmet[0] == "BugPredicates empty");

    fill_plan_blocks(*gk);
    report = gk->check_completion();
    CHECK(report.satisfied);
    CHECK(gk->transition(Phase::Implement).ok());
}

TEST_CASE("IMPLEMENT completion names the FuzzPlan size rule") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    fill_plan_blocks(*gk);
    REQUIRE(gk->transition(Phase::Implement).ok());
    REQUIRE(gk->write_block(BlockId::ParameterSpace, minimal_space()).ok());
    REQUIRE(gk->write_block(BlockId::FuzzPlan, minimal_fuzz_plan(3)).ok());
    REQUIRE(gk->write_block(BlockId::Breakpoints, minimal_breakpoints()).ok());
    gk->session().generator_registered = true;
    auto report = gk->check_completion();
    CHECK_FALSE(report.satisfied);
    REQUIRE(report.unmet.size() == 1);
    CHECK(report.unmet[0] == "FuzzPlan requires 5-10 entries");
}

TEST_CASE("completion report agrees with transition gating on random documents") {
    SplitMix64 rng(2026);
    auto base = WorkflowDocument::parse(tpl::render_workflow_state_initial());
    REQUIRE(base.ok());
    for (int i = 0; i < 200; ++i) {
        WorkflowDocument doc = *base;
        Json state = doc.block(BlockId::State);
        const Phase phase = kAllPhases[rng.next_below(4)];  // non-terminal
        state["phase"] = to_string(phase);
        doc.set_block(BlockId::State, state);
        if (rng.next_below(2)) doc.set_block(BlockId::BugPredicates, minimal_bug_predicates());
        if (rng.next_below(2)) doc.set_block(BlockId::Preconditions, minimal_preconditions());
        if (rng.next_below(2) && !doc.block_empty(BlockId::Preconditions)) {
            doc.set_block(BlockId::RootCauses, minimal_root_causes());
            doc.set_block(BlockId::TriggerPlans, minimal_trigger_plans());
        }
        if (rng.next_below(2)) doc.set_block(BlockId::ParameterSpace, minimal_space());
        doc.set_block(BlockId::FuzzPlan, minimal_fuzz_plan(static_cast<int>(rng.next_below(12))));
        if (rng.next_below(2)) doc.set_block(BlockId::Breakpoints, minimal_breakpoints());
        if (rng.next_below(2)) {
            doc.set_block(BlockId::Metrics, metrics_json(5, 1, 0, "advanced"));
        }
        SessionContext session;
        session.generator_registered = rng.next_below(2) != 0;
        session.pov_recorded = rng.next_below(2) != 0;
        session.diagnosis_count = static_cast<int>(rng.next_below(2));
        session.metrics_stamp_on_execute_entry = "";

        auto report = check_phase_completion(doc, session);
        Phase forward;
        switch (phase) {
            case Phase::Plan: forward = Phase::Implement; break;
            case Phase::Implement: forward = Phase::Execute; break;
            case Phase::Execute:
                forward = session.pov_recorded ? Phase::Success : Phase::Reflect;
                break;
            default: forward = Phase::Plan; break;
        }
        CHECK(report.satisfied == check_transition(doc, session, forward).ok());
    }
}

TEST_CASE("revision increases on success, failed writes leave the file untouched") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    CHECK(gk->doc().revision() == 0);
    REQUIRE(gk->write_block(BlockId::BugPredicates, minimal_bug_predicates()).ok());
    CHECK(gk->doc().revision() == 1);

    const std::string snapshot = read_file(gk->path());
    auto bad = gk->write_block(BlockId::TriggerPlans, minimal_trigger_plans());
    REQUIRE_FALSE(bad.ok());  // no preconditions yet
    CHECK(gk->doc().revision() == 1);
    CHECK(read_file(gk->path()) == snapshot);

    auto reloaded = Gatekeeper::open(gk->path());
    REQUIRE(reloaded.ok());
    CHECK(reloaded->doc().revision() == 1);
    CHECK(reloaded->doc() == gk->doc());
}

TEST_CASE("interrupted write leaves either the old or the new document") {
    TmpDir dir;
    auto path = dir.write("doc.md", "old contents\n");

    // Crash between temp write and rename: target unchanged.
    auto temp = write_temp_file(path, "new contents\n");
    REQUIRE(temp.ok());
    CHECK(read_file(path) == "old contents\n");

    // Crash after rename: new contents, no temp litter.
    REQUIRE(commit_temp_file(*temp, path).ok());
    CHECK(read_file(path) == "new contents\n");
    CHECK_FALSE(std::filesystem::exists(*temp));
}

TEST_CASE("metrics writes enforce the counter chain and monotonicity") {
    TmpDir dir;
    auto gk = open_fresh(dir);
    REQUIRE(gk.ok());
    advance_to_execute(*gk);

    auto bad_chain = metrics_json(5, 6, 0, "s");
    auto r = gk->write_block(BlockId::Metrics, bad_chain);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == ErrCode::SchemaViolation);

    REQUIRE(gk->write_block(BlockId::Metrics, metrics_json(10, 4, 1, "s1")).ok());
    auto regress = gk->write_block(BlockId::Metrics, metrics_json(9, 4, 1, "s2"));
    REQUIRE_FALSE(regress.ok());

    // last_reached_count tracks the current fuzz call and may reset.
    Json next = metrics_json(15, 6, 2, "s3");
    next["last_reached_count"] = 0;
    CHECK(gk->write_block(BlockId::Metrics, next).ok());
}

TEST_CASE("permission matrix: exhaustive 45-pair sweep") {
    struct Probe {
        Phase phase;
        std::set<BlockId> writable;
    };
    const std::vector<Probe> expected = {
        {Phase::Plan,
         {BlockId::State, BlockId::BugPredicates, BlockId::Preconditions, BlockId::RootCauses,
          BlockId::TriggerPlans}},
        {Phase::Implement,
         {BlockId::State, BlockId::ParameterSpace, BlockId::FuzzPlan, BlockId::Breakpoints}},
        {Phase::Execute, {BlockId::State, BlockId::Metrics, BlockId::ParameterSpace}},
        {Phase::Reflect, {BlockId::State}},
        {Phase::Success, {}},
    };
    for (const auto& probe : expected) {
        for (BlockId b : kAllBlocks) {
            CHECK_MESSAGE(block_writable(probe.phase, b) == (probe.writable.count(b) != 0),
                          "phase=", to_string(probe.phase), " block=", block_name(b));
        }
    }
}

TEST_SUITE_END();
