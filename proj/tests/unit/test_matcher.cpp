#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "stcorr/matcher.hpp"
#include "stcorr/run_config.hpp"
#include "test_util.hpp"

using namespace stcorr;

TEST_CASE("matcher registry lists the expected names") {
    const auto names = matcher_names();
    for (const char* expected :
         {"st-match", "sequential-nn", "sequential-dtw", "ants", "st-cats"})
        CHECK(std::find(names.begin(), names.end(), expected) != names.end());
}

TEST_CASE("st-cats slot exists but is unimplemented") {
    MatcherConfig cfg;
    cfg.name = "st-cats";
    CHECK_THROWS_WITH_AS(make_matcher(cfg), "unimplemented matcher: st-cats",
                         UnimplementedError);
}

TEST_CASE("unknown matcher names are rejected") {
    MatcherConfig cfg;
    cfg.name = "pose-baseline";
    CHECK_THROWS_AS(make_matcher(cfg), std::invalid_argument);
}

TEST_CASE("ants matcher requires params") {
    MatcherConfig cfg;
    cfg.name = "ants";
    CHECK_THROWS_AS(make_matcher(cfg), std::invalid_argument);
}

TEST_CASE("default grids depend on the matcher") {
    CHECK(default_grid("st-match") == GridShape(32, 16, 16));
    CHECK(default_grid("sequential-dtw") == GridShape(32, 16, 16));
    CHECK(default_grid("ants") == GridShape(8, 8, 8));
}

TEST_CASE("st-match matcher equals the explicit pipeline") {
    Rng rng(95);
    const GridShape g(2, 2, 2);
    const auto vs = testutil::distinct_unit_vectors(rng, g.cells(), 8);
    const auto vt = testutil::distinct_unit_vectors(rng, g.cells(), 8);
    const auto src = testutil::pyramid_from_layers(
        {testutil::layer_from_cell_vectors(vs, g)}, g);
    const auto tgt = testutil::pyramid_from_layers(
        {testutil::layer_from_cell_vectors(vt, g)}, g);
    const VideoDims dims(2, 2, 2);

    const std::vector<SpaceTimeKeypoint> kps = {{1.0, 0.0, 1, 0, true}};
    MatcherConfig cfg;  // st-match
    const auto out = make_matcher(cfg)->predict({src, tgt, dims, dims}, kps);

    const auto flow = argmax_flow(stmatch_volume(stack_correlations(src, tgt)));
    const auto direct = transfer_keypoints(flow, kps, dims, dims);
    REQUIRE(out.keypoints.size() == 1);
    CHECK(out.keypoints[0] == direct[0]);
    REQUIRE(out.flow.has_value());
    CHECK(testutil::bits_equal(out.flow->flow, flow.flow));
}

TEST_CASE("run config parsing") {
    CHECK(parse_grid("8x8x8") == GridShape(8, 8, 8));
    CHECK(parse_grid("32x16x16") == GridShape(32, 16, 16));
    CHECK_THROWS_AS(parse_grid("8x8"), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid("axbxc"), std::invalid_argument);
    CHECK_THROWS_AS(parse_grid("0x8x8"), std::invalid_argument);
    CHECK(parse_ks("1,3,5") == std::vector<int>{1, 3, 5});
    CHECK(parse_ks("5") == std::vector<int>{5});
}

TEST_CASE("run config file loading") {
    testutil::TempDir dir("cfg");
    const auto path = dir.path() / "run.json";
    {
        std::ofstream os(path);
        os << R"({"grid":"4x4x4","matcher":"ants","temperature":0.25,
                  "alpha":0.05,"ks":[1,5],"seed":9,"min_shared":2,"jobs":3,
                  "normalize_features":false})";
    }
    const RunConfig cfg = load_run_config(path);
    CHECK(cfg.grid == GridShape(4, 4, 4));
    CHECK(cfg.matcher == "ants");
    CHECK(cfg.temperature == 0.25);
    CHECK(cfg.alpha == 0.05);
    CHECK(cfg.ks == std::vector<int>{1, 5});
    CHECK(cfg.seed == 9);
    CHECK(cfg.min_shared == 2);
    CHECK(cfg.jobs == 3);
    CHECK(cfg.normalize_features == false);
    CHECK_FALSE(cfg.setup.has_value());
}
