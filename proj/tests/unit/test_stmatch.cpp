#include <doctest.h>

#include <cmath>

#include "stcorr/stmatch.hpp"
#include "test_util.hpp"

using namespace stcorr;
using testutil::random_tensor;

namespace {

MatchVolume volume_from(const GridShape& g, const std::vector<float>& scores) {
    MatchVolume mv;
    mv.grid = g;
    mv.scores = Tensor({std::size_t(g.cells()), std::size_t(g.cells())}, scores);
    return mv;
}

MatchVolume permutation_volume(const GridShape& g, const std::vector<int>& perm) {
    const int n = g.cells();
    std::vector<float> scores(std::size_t(n) * std::size_t(n), 0.0f);
    for (int s = 0; s < n; ++s)
        scores[std::size_t(s) * std::size_t(n) + std::size_t(perm[std::size_t(s)])] =
            1.0f;
    return volume_from(g, scores);
}

}  // namespace

TEST_CASE("stmatch_volume averages constant slices") {
    const GridShape g(1, 1, 2);
    CorrVolume corr;
    corr.grid = g;
    corr.scores = Tensor({2, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) corr.scores[i] = 1.0f;
    for (std::size_t i = 4; i < 8; ++i) corr.scores[i] = 3.0f;
    const MatchVolume mv = stmatch_volume(corr);
    for (float v : mv.scores.values()) CHECK(v == 2.0f);
}

TEST_CASE("stmatch_volume single layer is a passthrough") {
    Rng rng(30);
    CorrVolume corr;
    corr.grid = GridShape(1, 1, 3);
    corr.scores = random_tensor(rng, {1, 3, 3});
    const MatchVolume mv = stmatch_volume(corr);
    for (std::size_t i = 0; i < 9; ++i) CHECK(mv.scores[i] == corr.scores[i]);
}

TEST_CASE("stmatch_volume matches a scalar-loop mean") {
    Rng rng(31);
    CorrVolume corr;
    corr.grid = GridShape(1, 2, 2);
    corr.scores = random_tensor(rng, {3, 4, 4});
    const MatchVolume mv = stmatch_volume(corr);
    for (std::size_t p = 0; p < 16; ++p) {
        double sum = 0;
        for (std::size_t m = 0; m < 3; ++m) sum += corr.scores[m * 16 + p];
        CHECK(mv.scores[p] == doctest::Approx(sum / 3.0).epsilon(1e-6));
    }
}

TEST_CASE("argmax_flow of a diagonal-dominant volume is zero") {
    const GridShape g(2, 1, 2);
    const int n = g.cells();
    std::vector<float> scores(std::size_t(n) * std::size_t(n), 0.1f);
    for (int i = 0; i < n; ++i)
        scores[std::size_t(i) * std::size_t(n) + std::size_t(i)] = 5.0f;
    const DisplacementFlow flow = argmax_flow(volume_from(g, scores));
    for (float v : flow.flow.values()) CHECK(v == 0.0f);
}

TEST_CASE("argmax_flow recovers planted permutations") {
    Rng rng(32);
    const GridShape g(2, 2, 2);
    for (int it = 0; it < 20; ++it) {
        const auto perm = testutil::random_permutation(rng, g.cells());
        const DisplacementFlow flow = argmax_flow(permutation_volume(g, perm));
        for (int s = 0; s < g.cells(); ++s) {
            const auto sc = cell_coord(g, s);
            const auto qc = cell_coord(g, perm[std::size_t(s)]);
            CHECK(flow.flow[std::size_t(0 * g.cells() + s)] == float(qc[0] - sc[0]));
            CHECK(flow.flow[std::size_t(1 * g.cells() + s)] == float(qc[1] - sc[1]));
            CHECK(flow.flow[std::size_t(2 * g.cells() + s)] == float(qc[2] - sc[2]));
        }
    }
}

TEST_CASE("argmax_flow ties resolve to the lowest cell") {
    const GridShape g(1, 1, 3);
    const MatchVolume mv = volume_from(g, std::vector<float>(9, 0.5f));
    const DisplacementFlow flow = argmax_flow(mv);
    // every source cell matches cell 0
    for (int s = 0; s < 3; ++s)
        CHECK(flow.flow[std::size_t(2 * 3 + s)] == float(0 - s));
}

TEST_CASE("argmax_flow is invariant under monotone row transforms") {
    Rng rng(33);
    const GridShape g(2, 2, 1);
    for (int it = 0; it < 20; ++it) {
        Tensor scores = random_tensor(rng, {4, 4}, -5, 5);
        MatchVolume mv;
        mv.grid = g;
        mv.scores = scores;
        const DisplacementFlow base = argmax_flow(mv);

        auto transformed = [&](float (*f)(float)) {
            MatchVolume out;
            out.grid = g;
            out.scores = Tensor(scores.dims());
            for (std::size_t i = 0; i < scores.size(); ++i)
                out.scores[i] = f(scores[i]);
            return argmax_flow(out);
        };
        const auto affine = transformed([](float x) { return 2.0f * x + 1.0f; });
        const auto cubed = transformed([](float x) { return x * x * x; });
        const auto exped = transformed([](float x) { return std::exp(x); });
        for (std::size_t i = 0; i < base.flow.size(); ++i) {
            CHECK(affine.flow[i] == base.flow[i]);
            CHECK(cubed.flow[i] == base.flow[i]);
            CHECK(exped.flow[i] == base.flow[i]);
        }
    }
}

TEST_CASE("soft_argmax_flow equals argmax on one-hot rows") {
    const GridShape g(1, 2, 2);
    const int n = g.cells();
    std::vector<float> scores(std::size_t(n) * std::size_t(n), 0.0f);
    const std::vector<int> perm = {2, 0, 3, 1};
    for (int s = 0; s < n; ++s)
        scores[std::size_t(s) * std::size_t(n) + std::size_t(perm[std::size_t(s)])] =
            50.0f;
    const MatchVolume mv = volume_from(g, scores);
    const DisplacementFlow hard = argmax_flow(mv);
    const DisplacementFlow soft = soft_argmax_flow(mv, 0.05);
    for (std::size_t i = 0; i < hard.flow.size(); ++i)
        CHECK(soft.flow[i] == doctest::Approx(hard.flow[i]).epsilon(1e-6));
}

TEST_CASE("soft_argmax_flow of a uniform row is the grid centroid") {
    const GridShape g(2, 2, 2);
    const int n = g.cells();
    const MatchVolume mv =
        volume_from(g, std::vector<float>(std::size_t(n) * std::size_t(n), 0.7f));
    const DisplacementFlow flow = soft_argmax_flow(mv, 1.0);
    // source cell (0,0,0): expectation (0.5, 0.5, 0.5)
    CHECK(flow.flow[std::size_t(0 * n + 0)] == doctest::Approx(0.5));
    CHECK(flow.flow[std::size_t(1 * n + 0)] == doctest::Approx(0.5));
    CHECK(flow.flow[std::size_t(2 * n + 0)] == doctest::Approx(0.5));
}

TEST_CASE("soft_argmax_flow approaches argmax as temperature vanishes") {
    Rng rng(34);
    const GridShape g(2, 2, 2);
    Tensor scores = random_tensor(rng, {8, 8}, 0, 1);
    // widen every row's max so it is unique by a clear margin
    for (int s = 0; s < 8; ++s) {
        int best = 0;
        for (int q = 1; q < 8; ++q)
            if (scores(s, q) > scores(s, best)) best = q;
        scores(s, best) += 0.2f;
    }
    MatchVolume mv;
    mv.grid = g;
    mv.scores = scores;
    const DisplacementFlow hard = argmax_flow(mv);
    const DisplacementFlow soft = soft_argmax_flow(mv, 1e-3);
    for (std::size_t i = 0; i < hard.flow.size(); ++i)
        CHECK(std::abs(soft.flow[i] - hard.flow[i]) < 1e-4f);
}

TEST_CASE("soft_argmax_flow displacements stay within the grid diameter") {
    Rng rng(35);
    const GridShape g(3, 2, 4);
    const int n = g.cells();
    for (int it = 0; it < 20; ++it) {
        MatchVolume mv;
        mv.grid = g;
        mv.scores = random_tensor(rng, {std::size_t(n), std::size_t(n)}, -4, 4);
        const DisplacementFlow flow = soft_argmax_flow(mv, 0.3);
        const float lim[3] = {float(g.t - 1), float(g.h - 1), float(g.w - 1)};
        for (int d = 0; d < 3; ++d)
            for (int s = 0; s < n; ++s)
                CHECK(std::abs(flow.flow[std::size_t(d * n + s)]) <= lim[d] + 1e-6f);
    }
}

TEST_CASE("transfer_keypoints is the identity under zero flow") {
    const GridShape g(2, 2, 2);
    DisplacementFlow flow;
    flow.grid = g;
    flow.flow = Tensor({3, 2, 2, 2});
    const VideoDims dims(2, 2, 2);
    const std::vector<SpaceTimeKeypoint> kps = {{1.0, 0.0, 1, 7, true},
                                                {0.0, 1.0, 0, 8, true}};
    const auto out = transfer_keypoints(flow, kps, dims, dims);
    REQUIRE(out.size() == 2);
    for (std::size_t i = 0; i < kps.size(); ++i) {
        CHECK(out[i].x == doctest::Approx(kps[i].x).epsilon(1e-9));
        CHECK(out[i].y == doctest::Approx(kps[i].y).epsilon(1e-9));
        CHECK(out[i].t == kps[i].t);
        CHECK(out[i].type_id == kps[i].type_id);
    }
}

TEST_CASE("transfer_keypoints shifts time under constant temporal flow") {
    const GridShape g(4, 2, 2);
    DisplacementFlow flow;
    flow.grid = g;
    flow.flow = Tensor({3, 4, 2, 2});
    for (int s = 0; s < g.cells(); ++s) flow.flow[std::size_t(s)] = 1.0f;  // dt=+1

    const VideoDims dims(4, 2, 2);  // align-corners scale 1
    std::vector<SpaceTimeKeypoint> kps;
    for (int t = 0; t < 3; ++t) kps.push_back({1.0, 1.0, t, 0, true});
    kps.push_back({1.0, 1.0, 3, 0, true});  // clamps at the last frame

    const auto out = transfer_keypoints(flow, kps, dims, dims);
    CHECK(out[0].t == 1);
    CHECK(out[1].t == 2);
    CHECK(out[2].t == 3);
    CHECK(out[3].t == 3);
    for (const auto& kp : out) {
        CHECK(kp.x == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(kp.y == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("transfer_keypoints follows a planted permutation at grid nodes") {
    Rng rng(36);
    const GridShape g(2, 2, 2);
    const auto perm = testutil::random_permutation(rng, g.cells());
    const DisplacementFlow flow = argmax_flow(permutation_volume(g, perm));
    const VideoDims dims(2, 2, 2);

    for (int s = 0; s < g.cells(); ++s) {
        const auto sc = cell_coord(g, s);
        const SpaceTimeKeypoint kp{double(sc[2]), double(sc[1]), sc[0], 0, true};
        const auto out = transfer_keypoints(flow, {kp}, dims, dims);
        const auto qc = cell_coord(g, perm[std::size_t(s)]);
        CHECK(out[0].t == qc[0]);
        CHECK(out[0].y == doctest::Approx(double(qc[1])).epsilon(1e-9));
        CHECK(out[0].x == doctest::Approx(double(qc[2])).epsilon(1e-9));
    }
}

TEST_CASE("transfer_keypoints nearest-cell sampling snaps to node flow") {
    const GridShape g(1, 1, 3);
    DisplacementFlow flow;
    flow.grid = g;
    // flow only in w: cells carry dw = 0, -1, -0.5
    flow.flow = Tensor({3, 1, 1, 3}, {0, 0, 0, 0, 0, 0, 0.0f, -1.0f, -0.5f});
    const VideoDims dims(1, 1, 3);

    // keypoint at x=1.4: trilinear blends the two cells, nearest snaps to cell 1
    const SpaceTimeKeypoint kp{1.4, 0.0, 0, 0, true};
    const auto tri =
        transfer_keypoints(flow, {kp}, dims, dims, FlowSampling::trilinear);
    const auto near =
        transfer_keypoints(flow, {kp}, dims, dims, FlowSampling::nearest);
    CHECK(tri[0].x == doctest::Approx(1.4 - 0.8).epsilon(1e-6));
    CHECK(near[0].x == doctest::Approx(1.4 - 1.0).epsilon(1e-6));
}

TEST_CASE("transfer_keypoints rejects out-of-range keypoints") {
    DisplacementFlow flow;
    flow.grid = GridShape(2, 2, 2);
    flow.flow = Tensor({3, 2, 2, 2});
    const VideoDims dims(2, 2, 2);
    CHECK_THROWS_AS(
        transfer_keypoints(flow, {{5.0, 0.0, 0, 0, true}}, dims, dims),
        std::invalid_argument);
    CHECK_THROWS_AS(
        transfer_keypoints(flow, {{0.0, 0.0, 9, 0, true}}, dims, dims),
        std::invalid_argument);
}

TEST_CASE("planted permutation pyramids are recovered end to end") {
    const GridShape g(2, 2, 2);
    const VideoDims dims(2, 2, 2);
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(std::uint64_t(seed) + 100);
        const auto vectors = testutil::distinct_unit_vectors(rng, g.cells(), 8);
        const auto perm = testutil::random_permutation(rng, g.cells());

        // target cell perm[s] holds source cell s's vector
        std::vector<std::vector<float>> permuted(vectors.size());
        for (int s = 0; s < g.cells(); ++s)
            permuted[std::size_t(perm[std::size_t(s)])] = vectors[std::size_t(s)];

        const auto src = testutil::pyramid_from_layers(
            {testutil::layer_from_cell_vectors(vectors, g)}, g);
        const auto tgt = testutil::pyramid_from_layers(
            {testutil::layer_from_cell_vectors(permuted, g)}, g);

        const DisplacementFlow flow =
            argmax_flow(stmatch_volume(stack_correlations(src, tgt)));
        for (int s = 0; s < g.cells(); ++s) {
            const auto sc = cell_coord(g, s);
            const SpaceTimeKeypoint kp{double(sc[2]), double(sc[1]), sc[0], 0, true};
            const auto out = transfer_keypoints(flow, {kp}, dims, dims);
            const auto qc = cell_coord(g, perm[std::size_t(s)]);
            CHECK(out[0].t == qc[0]);
            CHECK(out[0].y == doctest::Approx(double(qc[1])).epsilon(1e-9));
            CHECK(out[0].x == doctest::Approx(double(qc[2])).epsilon(1e-9));
        }
    }
}
