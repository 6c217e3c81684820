#include "povgen/corpus.hpp"

#include "support/fixtures.hpp"
#include "support/tmpdir.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

using namespace povgen;
using namespace povgen::corpus;
using test_support::fixture_bin;
using test_support::fixture_src;
using test_support::scan_anchors;
using test_support::TmpDir;

namespace {

harness::TargetConfig signal_target() {
    harness::TargetConfig cfg;
    cfg.cmd = fixture_bin("signal_target").string() + " {input}";
    cfg.reached_pattern = "MAGMA: Bug 9 reached";
    cfg.triggered_pattern = "MAGMA: Bug 9 triggered";
    return cfg;
}

facts::TargetSpec reached_targets() {
    auto anchors = scan_anchors(fixture_src("signal_target.c"), "bp");
    return {{"signal_target.c:" + std::to_string(anchors.at("reached_r"))}};
}

CorpusStatus wait_done(CorpusJobs& jobs, const std::string& handle) {
    for (int i = 0; i < 600; ++i) {
        auto st = jobs.status(handle);
        REQUIRE(st.ok());
        if (st->state == JobState::Done || st->state == JobState::Failed) return *st;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    FAIL("corpus job did not finish");
    return {};
}

}  // namespace

TEST_SUITE_BEGIN("corpus");

TEST_CASE("analysis finds the single reaching file in a mixed corpus") {
    TmpDir dir;
    dir.write("corpus/a.bin", "Qnothing");
    dir.write("corpus/b.bin", "Rreaching");
    dir.write("corpus/c.bin", "Xreject");

    CorpusJobs jobs;
    auto handle = jobs.start(signal_target(), dir.file("corpus"), reached_targets());
    REQUIRE(handle.ok());

    auto st = wait_done(jobs, *handle);
    CHECK(st.state == JobState::Done);
    CHECK(st.total == 3);
    CHECK(st.processed == 3);
    CHECK(st.routes_found == 1);

    auto routes = jobs.routes(*handle);
    REQUIRE(routes.ok());
    REQUIRE(routes->size() == 1);
    CHECK((*routes)[0].testcase_file.filename() == "b.bin");
    REQUIRE_FALSE((*routes)[0].callstack.empty());
    CHECK((*routes)[0].callstack[0].function == "main");

    // Replay validation: the recorded testcase reproduces a hit.
    std::ifstream in((*routes)[0].testcase_file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    auto replay = harness::run_with_breakpoints(signal_target(), buf.str(), {
        harness::BreakpointSpec{reached_targets().locations[0], {}, 1}});
    CHECK_FALSE(replay.hits.empty());
}

TEST_CASE("identical callstacks deduplicate to one route") {
    TmpDir dir;
    dir.write("corpus/r1.bin", "Rone");
    dir.write("corpus/r2.bin", "Rtwo");

    CorpusJobs jobs;
    auto handle = jobs.start(signal_target(), dir.file("corpus"), reached_targets());
    REQUIRE(handle.ok());
    auto st = wait_done(jobs, *handle);
    CHECK(st.processed == 2);
    CHECK(st.routes_found == 1);
}

TEST_CASE("empty corpus directory is rejected") {
    TmpDir dir;
    std::filesystem::create_directories(dir.file("corpus"));
    CorpusJobs jobs;
    auto handle = jobs.start(signal_target(), dir.file("corpus"), reached_targets());
    REQUIRE_FALSE(handle.ok());
    CHECK(handle.error().code == ErrCode::EmptyCorpus);
}

TEST_CASE("unknown handles are rejected, status stays monotone") {
    CorpusJobs jobs;
    CHECK(jobs.status("corpus-99").error().code == ErrCode::UnknownJob);
    CHECK(jobs.routes("corpus-99").error().code == ErrCode::UnknownJob);

    TmpDir dir;
    for (int i = 0; i < 4; ++i) dir.write("corpus/f" + std::to_string(i), "Q");
    auto handle = jobs.start(signal_target(), dir.file("corpus"), reached_targets());
    REQUIRE(handle.ok());
    std::size_t last = 0;
    for (int i = 0; i < 50; ++i) {
        auto st = jobs.status(*handle);
        REQUIRE(st.ok());
        CHECK(st->processed >= last);
        CHECK(st->processed <= st->total);
        last = st->processed;
        if (st->state == JobState::Done) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    CHECK(wait_done(jobs, *handle).state == JobState::Done);
}

TEST_CASE("extract_parameters merges numeric ranges and value sets") {
    TmpDir dir;
    std::vector<ReachingRoute> routes;
    for (const auto& [name, content] :
         std::vector<std::pair<std::string, std::string>>{
             {"s1.bin", "PK1"}, {"s2.bin", "PK45678"}, {"s3.bin", "PKxyzzyz"}}) {
        ReachingRoute r;
        r.testcase_file = dir.write(name, content);
        r.callstack.push_back({"main", "x.c:1"});
        routes.push_back(std::move(r));
    }

    gen::GeneratorSpec extractor;
    extractor.program = fixture_bin("observe_extractor");

    auto obs = extract_parameters(extractor, routes);
    REQUIRE(obs.ok());
    CHECK((*obs)["len"]["min"] == 3);
    CHECK((*obs)["len"]["max"] == 8);
    CHECK((*obs)["magic"]["values"] == Json::array({"PK"}));

    // Merge is order-independent.
    auto shuffled = routes;
    std::reverse(shuffled.begin(), shuffled.end());
    auto obs2 = extract_parameters(extractor, shuffled);
    REQUIRE(obs2.ok());
    CHECK(*obs == *obs2);
}

TEST_CASE("extract_parameters failure modes") {
    CHECK(extract_parameters({}, {}).error().code == ErrCode::InvalidParams);

    TmpDir dir;
    ReachingRoute r;
    r.testcase_file = dir.write("x.bin", "data");
    r.callstack.push_back({"main", "x.c:1"});

    gen::GeneratorSpec broken;
    broken.program = fixture_bin("fail_generator");
    auto res = extract_parameters(broken, {r});
    REQUIRE_FALSE(res.ok());
    CHECK(res.error().code == ErrCode::AllExtractionsFailed);
}

TEST_SUITE_END();
