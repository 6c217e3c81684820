#include "povgen/program_facts.hpp"

#include "povgen/generator.hpp"
#include "support/fixtures.hpp"
#include "support/graph_oracle.hpp"
#include "support/simulator_graph.hpp"
#include "support/tmpdir.hpp"

#include <doctest.h>

#include <algorithm>

using namespace povgen;
using namespace povgen::facts;
using test_support::fixture_bin;
using test_support::TmpDir;

namespace {

Json minimal_graph() {
    return Json{{"version", 1},
                {"entry_functions", Json::array({"main"})},
                {"functions",
                 {{"main",
                   {{"signature", "() -> i32"},
                    {"address_taken", false},
                    {"entry_block", "b0"},
                    {"blocks",
                     {{"b0",
                       {{"location", "main.c:1"},
                        {"successors", Json::array()},
                        {"callsites", Json::array()},
                        {"is_exit", true}}}}}}}}}};
}

// A chain with a diamond: e0 -> guard -> {arm_t -> target_fn() ...,
// arm_f -> done}; only one arm reaches the target.
Json diamond_graph() {
    Json g = Json{{"version", 1}, {"entry_functions", Json::array({"main"})}};
    g["functions"]["main"] = {
        {"signature", "() -> i32"},
        {"address_taken", false},
        {"entry_block", "e0"},
        {"blocks",
         {{"e0",
           {{"location", "m.c:1"}, {"successors", Json::array({"guard"})},
            {"callsites", Json::array()}, {"is_exit", false}}},
          {"guard",
           {{"location", "m.c:5"}, {"successors", Json::array({"arm_t", "arm_f"})},
            {"callsites", Json::array()}, {"is_exit", false}}},
          {"arm_t",
           {{"location", "m.c:10"}, {"successors", Json::array({"done"})},
            {"callsites", Json::array({Json{{"direct", "victim"}}})}, {"is_exit", false}}},
          {"arm_f",
           {{"location", "m.c:20"}, {"successors", Json::array({"done"})},
            {"callsites", Json::array()}, {"is_exit", false}}},
          {"done",
           {{"location", "m.c:30"}, {"successors", Json::array()},
            {"callsites", Json::array()}, {"is_exit", true}}}}}};
    g["functions"]["victim"] = {
        {"signature", "() -> void"},
        {"address_taken", false},
        {"entry_block", "v0"},
        {"blocks",
         {{"v0",
           {{"location", "v.c:100"}, {"successors", Json::array()},
            {"callsites", Json::array()}, {"is_exit", false}}}}}};
    return g;
}

}  // namespace

TEST_SUITE_BEGIN("program_facts");

TEST_CASE("minimal graph loads with one function") {
    auto g = parse_graph(minimal_graph());
    REQUIRE(g.ok());
    CHECK(g->functions.size() == 1);
    CHECK(g->exit_points.count({"main", "b0"}) == 1);
}

TEST_CASE("dangling successor is rejected") {
    auto j = minimal_graph();
    j["functions"]["main"]["blocks"]["b0"]["successors"] = Json::array({"nowhere"});
    auto g = parse_graph(j);
    REQUIRE_FALSE(g.ok());
    CHECK(g.error().code == ErrCode::DanglingReference);
}

TEST_CASE("dangling direct callee is rejected") {
    auto j = minimal_graph();
    j["functions"]["main"]["blocks"]["b0"]["callsites"] =
        Json::array({Json{{"direct", "ghost"}}});
    auto g = parse_graph(j);
    REQUIRE_FALSE(g.ok());
    CHECK(g.error().code == ErrCode::DanglingReference);
}

TEST_CASE("version and entry functions are mandatory") {
    auto j = minimal_graph();
    j.erase("version");
    CHECK_FALSE(parse_graph(j).ok());

    j = minimal_graph();
    j["entry_functions"] = Json::array();
    CHECK_FALSE(parse_graph(j).ok());
}

TEST_CASE("simulator scenario graph loads with its five functions") {
    auto g = parse_graph(test_support::simulator_graph());
    REQUIRE(g.ok());
    CHECK(g->functions.size() == 5);
    CHECK(g->functions.count("append_name") == 1);
    CHECK(g->entry_functions.count("main") == 1);
}

TEST_CASE("indirect calls resolve to address-taken signature matches only") {
    Json j = Json{{"version", 1}, {"entry_functions", Json::array({"main"})}};
    auto plain_fn = [](const std::string& sig, bool taken) {
        return Json{{"signature", sig},
                    {"address_taken", taken},
                    {"entry_block", "b0"},
                    {"blocks",
                     {{"b0",
                       {{"location", "x.c:1"}, {"successors", Json::array()},
                        {"callsites", Json::array()}, {"is_exit", false}}}}}};
    };
    j["functions"]["main"] = plain_fn("() -> i32", false);
    j["functions"]["main"]["blocks"]["b0"]["callsites"] =
        Json::array({Json{{"indirect", "(i32) -> i32"}}});
    j["functions"]["handler_a"] = plain_fn("(i32) -> i32", true);
    j["functions"]["handler_b"] = plain_fn("(i32) -> i32", true);
    j["functions"]["not_taken"] = plain_fn("(i32) -> i32", false);
    j["functions"]["wrong_sig"] = plain_fn("(i64) -> i32", true);

    auto g = parse_graph(j);
    REQUIRE(g.ok());
    auto resolved = resolve_indirect_calls(*g);

    // Oracle: brute-force signature scan.
    std::vector<std::string> expected;
    for (const auto& [name, fn] : resolved.functions) {
        if (fn.address_taken && fn.signature == "(i32) -> i32") expected.push_back(name);
    }
    const auto& cs = resolved.functions.at("main").blocks.at("b0").callsites.at(0);
    CHECK(cs.resolved == expected);
    CHECK(cs.resolved == std::vector<std::string>{"handler_a", "handler_b"});
    CHECK_FALSE(cs.flagged_unresolved);

    // Idempotence.
    auto twice = resolve_indirect_calls(resolved);
    CHECK(twice.functions.at("main").blocks.at("b0").callsites.at(0).resolved == cs.resolved);

    // No address-taken candidates: flagged, empty.
    j["functions"]["handler_a"]["address_taken"] = false;
    j["functions"]["handler_b"]["address_taken"] = false;
    auto none = resolve_indirect_calls(*parse_graph(j));
    const auto& cs2 = none.functions.at("main").blocks.at("b0").callsites.at(0);
    CHECK(cs2.resolved.empty());
    CHECK(cs2.flagged_unresolved);
}

TEST_CASE("callers and callees are sorted, deduplicated, and typed") {
    Json j = Json{{"version", 1}, {"entry_functions", Json::array({"f"})}};
    auto fn = [](Json callsites, const std::string& sig = "() -> void",
                 bool taken = false) {
        return Json{{"signature", sig},
                    {"address_taken", taken},
                    {"entry_block", "b0"},
                    {"blocks",
                     {{"b0",
                       {{"location", "x.c:1"}, {"successors", Json::array()},
                        {"callsites", callsites}, {"is_exit", false}}}}}};
    };
    j["functions"]["f"] = fn(Json::array(
        {Json{{"direct", "g"}}, Json{{"direct", "g"}}, Json{{"indirect", "(i8) -> i8"}}}));
    j["functions"]["g"] = fn(Json::array());
    j["functions"]["h"] = fn(Json::array(), "(i8) -> i8", true);

    auto g = resolve_indirect_calls(*parse_graph(j));
    auto callees = get_callees(g, "f");
    REQUIRE(callees.ok());
    CHECK(*callees == std::vector<std::string>{"g", "h"});

    auto callers = get_callers(g, "h");
    REQUIRE(callers.ok());
    CHECK(*callers == std::vector<std::string>{"f"});

    auto leaf = get_callees(g, "g");
    REQUIRE(leaf.ok());
    CHECK(leaf->empty());

    auto unknown = get_callers(g, "nope");
    REQUIRE_FALSE(unknown.ok());
    CHECK(unknown.error().code == ErrCode::UnknownFunction);
}

TEST_CASE("reach set: straight chain includes every predecessor") {
    Json j = Json{{"version", 1}, {"entry_functions", Json::array({"main"})}};
    j["functions"]["main"] = {
        {"signature", "() -> i32"},
        {"address_taken", false},
        {"entry_block", "A"},
        {"blocks",
         {{"A",
           {{"location", "m.c:1"}, {"successors", Json::array({"B"})},
            {"callsites", Json::array()}, {"is_exit", false}}},
          {"B",
           {{"location", "m.c:2"}, {"successors", Json::array({"C"})},
            {"callsites", Json::array()}, {"is_exit", false}}},
          {"C",
           {{"location", "m.c:3"}, {"successors", Json::array()},
            {"callsites", Json::array()}, {"is_exit", false}}}}}};
    auto g = parse_graph(j);
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{"m.c:3"}});
    REQUIRE(reach.ok());
    CHECK(reach->members ==
          std::set<BlockRef>{{"main", "A"}, {"main", "B"}, {"main", "C"}});
}

TEST_CASE("reach set: non-reaching diamond arm is excluded, one critical emerges") {
    auto g = parse_graph(diamond_graph());
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{"v.c:100"}});
    REQUIRE(reach.ok());
    CHECK(reach->contains({"main", "arm_t"}));
    CHECK_FALSE(reach->contains({"main", "arm_f"}));
    CHECK_FALSE(reach->contains({"main", "done"}));
    CHECK(reach->contains({"main", "guard"}));

    auto criticals = compute_critical_locations(*g, *reach);
    REQUIRE(criticals.size() == 1);
    CHECK(criticals[0].branch_block == BlockRef{"main", "guard"});
    CHECK(criticals[0].reachable_successor == "arm_t");
    CHECK(criticals[0].unreachable_successor == "arm_f");
    CHECK(criticals[0].branch_location == "m.c:5");
}

TEST_CASE("fully reachable graphs have no critical locations") {
    Json j = minimal_graph();
    auto g = parse_graph(j);
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{"main.c:1"}});
    REQUIRE(reach.ok());
    CHECK(compute_critical_locations(*g, *reach).empty());
}

TEST_CASE("two independent guards produce two critical locations") {
    auto g = parse_graph(test_support::simulator_graph());
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{test_support::simulator_target_location()}});
    REQUIRE(reach.ok());
    auto criticals = compute_critical_locations(*g, *reach);
    // append guard, parse guard, prefix guard, walk room guard
    REQUIRE(criticals.size() == 4);
    std::set<std::string> branches;
    for (const auto& c : criticals) branches.insert(c.branch_block.str());
    CHECK(branches == std::set<std::string>{"append_name/a0", "main/m1", "main/m2",
                                            "walk_node/w0"});
}

TEST_CASE("unmapped target location is reported") {
    auto g = parse_graph(minimal_graph());
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{"ghost.c:404"}});
    REQUIRE_FALSE(reach.ok());
    CHECK(reach.error().code == ErrCode::TargetUnmapped);
}

TEST_CASE("target in an uncalled function excludes entry blocks") {
    auto j = diamond_graph();
    // Remove the only call edge to victim.
    j["functions"]["main"]["blocks"]["arm_t"]["callsites"] = Json::array();
    auto g = parse_graph(j);
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{"v.c:100"}});
    REQUIRE(reach.ok());
    CHECK(reach->members == std::set<BlockRef>{{"victim", "v0"}});
    CHECK_FALSE(reach->contains({"main", "e0"}));
}

TEST_CASE("backward BFS agrees with the forward oracle on random graphs") {
    int with_targets = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        auto j = test_support::random_graph(seed);
        auto g = parse_graph(j);
        REQUIRE_MESSAGE(g.ok(), "seed=", seed);
        auto resolved = resolve_indirect_calls(*g);

        // Pick the first block of the last function as target.
        const auto& fns = resolved.functions;
        const auto& target_fn = std::prev(fns.end())->second;
        const auto& target_block = target_fn.blocks.begin()->second;
        auto span = SourceSpan::parse(target_block.location);
        REQUIRE(span.ok());
        const std::string target_loc =
            span->file + ":" + std::to_string(span->first_line());

        auto reach = compute_reach_set(resolved, {{target_loc}});
        REQUIRE(reach.ok());
        ++with_targets;

        // Oracle targets: every block covering the location.
        std::set<std::string> targets;
        for (const auto& [fname, fn] : fns) {
            for (const auto& [bid, block] : fn.blocks) {
                auto bs = SourceSpan::parse(block.location);
                if (bs.ok() && bs->covers(span->file, span->first_line())) {
                    targets.insert(fname + "/" + bid);
                }
            }
        }
        auto oracle = test_support::oracle_reach(
            test_support::oracle_edges(resolved.to_json()), targets);
        std::set<std::string> got;
        for (const auto& ref : reach->members) got.insert(ref.str());
        CHECK_MESSAGE(got == oracle, "seed=", seed);

        // Critical-location membership invariant on the same instance.
        for (const auto& c : compute_critical_locations(resolved, *reach)) {
            CHECK(reach->contains({c.branch_block.function, c.reachable_successor}));
            CHECK_FALSE(reach->contains({c.branch_block.function, c.unreachable_successor}));
        }
    }
    CHECK(with_targets == 25);
}

TEST_CASE("adding an edge never shrinks the reach set") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        auto j = test_support::random_graph(seed);
        auto g = parse_graph(j);
        REQUIRE(g.ok());
        const auto& fn0 = g->functions.begin()->second;
        auto span = SourceSpan::parse(std::prev(fn0.blocks.end())->second.location);
        const std::string target_loc = span->file + ":" + std::to_string(span->first_line());
        auto before = compute_reach_set(*g, {{target_loc}});
        REQUIRE(before.ok());

        // Add an edge from every function's entry to its last block.
        auto j2 = j;
        for (auto& [fname, fj] : j2["functions"].items()) {
            auto& blocks = fj["blocks"];
            const std::string last = std::prev(blocks.items().begin(), 0).key();
            auto& entry_succ = blocks[fj["entry_block"].get<std::string>()]["successors"];
            std::string last_id;
            for (const auto& [bid, _] : blocks.items()) last_id = bid;
            entry_succ.push_back(last_id);
            (void)last;
        }
        auto g2 = parse_graph(j2);
        REQUIRE(g2.ok());
        auto after = compute_reach_set(*g2, {{target_loc}});
        REQUIRE(after.ok());
        CHECK(std::includes(after->members.begin(), after->members.end(),
                            before->members.begin(), before->members.end()));
    }
}

TEST_CASE("deviation diagnosis pinpoints the failed guard on the simulator") {
    auto g = parse_graph(test_support::simulator_graph());
    REQUIRE(g.ok());
    auto reach = compute_reach_set(*g, {{test_support::simulator_target_location()}});
    REQUIRE(reach.ok());
    auto criticals = compute_critical_locations(*g, *reach);
    REQUIRE_FALSE(criticals.empty());

    harness::TargetConfig target;
    target.cmd = fixture_bin("xmlish_target").string() + " {input}";
    target.reached_pattern = "MAGMA: Bug 9 reached";
    target.triggered_pattern = "MAGMA: Bug 9 triggered";
    TmpDir dir;

    SUBCASE("unprefixed input diverges at the prefix guard") {
        // Generate a document whose content model has no namespace prefixes.
        gen::GeneratorSpec gen_spec;
        gen_spec.program = fixture_bin("xmlish_generator");
        auto params = param::ConcreteParams::from_json(
            Json{{"element_prefix_length", 0}, {"nesting_depth", 3}, {"num_elements", 4}});
        auto bytes = gen::invoke(gen_spec, *params, 7);
        REQUIRE(bytes.success);
        auto input = dir.write("noprefix.xml", bytes.payload);

        auto report = diagnose_deviation(*g, target, input, criticals);
        if (!report.ok()) MESSAGE(report.error().message);
        REQUIRE(report.ok());
        REQUIRE(report->divergence.has_value());
        CHECK(report->divergence->branch_block == BlockRef{"main", "m2"});
        CHECK_FALSE(report->reached);
        REQUIRE_FALSE(report->callstack.empty());
        CHECK(report->callstack[0].function == "main");
    }

    SUBCASE("garbage input diverges at the parse guard") {
        auto input = dir.write("garbage.xml", "this is not a document");
        auto report = diagnose_deviation(*g, target, input, criticals);
        REQUIRE(report.ok());
        REQUIRE(report->divergence.has_value());
        CHECK(report->divergence->branch_block == BlockRef{"main", "m1"});
    }

    SUBCASE("reaching input reports no divergence") {
        gen::GeneratorSpec gen_spec;
        gen_spec.program = fixture_bin("xmlish_generator");
        auto params = param::ConcreteParams::from_json(
            Json{{"element_prefix_length", 5}, {"element_name_length", 5},
                 {"nesting_depth", 2}, {"num_elements", 3}, {"content_model_type", "SEQ"}});
        auto bytes = gen::invoke(gen_spec, *params, 7);
        REQUIRE(bytes.success);
        auto input = dir.write("ok.xml", bytes.payload);

        auto report = diagnose_deviation(*g, target, input, criticals);
        REQUIRE(report.ok());
        CHECK(report->reached);
        CHECK_FALSE(report->divergence.has_value());
    }

    SUBCASE("empty criticals list is NoCriticalHit") {
        auto input = dir.write("any.xml", "x");
        auto report = diagnose_deviation(*g, target, input, {});
        REQUIRE_FALSE(report.ok());
        CHECK(report.error().code == ErrCode::NoCriticalHit);
    }
}

TEST_SUITE_END();
