#include <doctest.h>

#include "stcorr/features.hpp"
#include "test_util.hpp"

using namespace stcorr;
using testutil::bits_equal;
using testutil::random_tensor;

TEST_CASE("assemble_hyperpixel keeps a layer already at the grid") {
    Rng rng(10);
    const Tensor raw = random_tensor(rng, {3, 2, 2, 2});
    const auto pyr = assemble_hyperpixel({raw}, {0}, GridShape(2, 2, 2), false);
    REQUIRE(pyr.layer_count() == 1);
    CHECK(bits_equal(pyr.layers[0], raw));
    CHECK(pyr.grid == GridShape(2, 2, 2));
}

TEST_CASE("assemble_hyperpixel resamples to the shared grid") {
    Rng rng(11);
    const Tensor a = random_tensor(rng, {4, 2, 4, 4});
    const Tensor b = random_tensor(rng, {8, 4, 8, 8});
    const auto pyr = assemble_hyperpixel({a, b}, {0, 1}, GridShape(2, 4, 4), false);
    CHECK(pyr.layers[0].dims() == std::vector<std::size_t>{4, 2, 4, 4});
    CHECK(pyr.layers[1].dims() == std::vector<std::size_t>{8, 2, 4, 4});
}

TEST_CASE("assemble_hyperpixel records ablation-style layer id sets") {
    Rng rng(12);
    std::vector<Tensor> layers;
    for (int i = 0; i < 5; ++i) layers.push_back(random_tensor(rng, {2, 2, 2, 2}));
    const std::vector<int> ids = {0, 3, 7, 13, 16};
    const auto pyr = assemble_hyperpixel(layers, ids, GridShape(2, 2, 2), true);
    CHECK(pyr.layer_ids == ids);
}

TEST_CASE("assemble_hyperpixel rejects bad inputs") {
    Rng rng(13);
    const Tensor raw = random_tensor(rng, {2, 2, 2, 2});
    CHECK_THROWS_AS(assemble_hyperpixel({raw, raw}, {0}, GridShape(2, 2, 2), false),
                    std::invalid_argument);
    CHECK_THROWS_AS(assemble_hyperpixel({raw, raw}, {3, 3}, GridShape(2, 2, 2), false),
                    std::invalid_argument);
    CHECK_THROWS_AS(assemble_hyperpixel({}, {}, GridShape(2, 2, 2), false),
                    std::invalid_argument);
}

TEST_CASE("correlation_layer identity on orthonormal one-hot features") {
    const GridShape g(1, 2, 2);
    std::vector<std::vector<float>> vectors;
    for (int i = 0; i < 4; ++i) {
        std::vector<float> v(4, 0.0f);
        v[std::size_t(i)] = 1.0f;
        vectors.push_back(v);
    }
    const Tensor layer = testutil::layer_from_cell_vectors(vectors, g);
    const Tensor corr = correlation_layer(layer, layer);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(corr(i, j) == (i == j ? 1.0f : 0.0f));
}

TEST_CASE("correlation_layer orthogonal single cell") {
    const Tensor src({2, 1, 1, 1}, {1.0f, 0.0f});
    const Tensor tgt({2, 1, 1, 1}, {0.0f, 1.0f});
    const Tensor corr = correlation_layer(src, tgt);
    REQUIRE(corr.size() == 1);
    CHECK(corr[0] == 0.0f);
}

TEST_CASE("correlation_layer matches hand dot products") {
    // two cells, C=2: rows are source cells, columns target cells
    const Tensor src({2, 1, 1, 2}, {1.0f, 2.0f,   // channel 0 of cells 0,1
                                    2.0f, 1.0f}); // channel 1 of cells 0,1
    const Tensor tgt({2, 1, 1, 2}, {5.0f, 7.0f,
                                    6.0f, 8.0f});
    const Tensor corr = correlation_layer(src, tgt);
    // cell vectors: src0=(1,2) src1=(2,1), tgt0=(5,6) tgt1=(7,8)
    CHECK(corr(0, 0) == 17.0f);
    CHECK(corr(0, 1) == 23.0f);
    CHECK(corr(1, 0) == 16.0f);
    CHECK(corr(1, 1) == 22.0f);
}

TEST_CASE("correlation_layer rejects dim mismatch") {
    CHECK_THROWS_AS(correlation_layer(Tensor({1, 1, 1, 2}), Tensor({1, 1, 1, 3})),
                    std::invalid_argument);
}

TEST_CASE("stack_correlations single layer equals correlation_layer") {
    Rng rng(14);
    const GridShape g(1, 2, 2);
    const auto s = testutil::pyramid_from_layers({random_tensor(rng, {3, 1, 2, 2})}, g);
    const auto t = testutil::pyramid_from_layers({random_tensor(rng, {3, 1, 2, 2})}, g);
    const CorrVolume vol = stack_correlations(s, t);
    const Tensor direct = correlation_layer(s.layers[0], t.layers[0]);
    REQUIRE(vol.layer_count() == 1);
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(vol.scores[i] == direct[i]);
}

TEST_CASE("stack_correlations identical pyramids give equal slices") {
    Rng rng(15);
    const GridShape g(2, 1, 2);
    const Tensor layer = random_tensor(rng, {3, 2, 1, 2});
    const auto pyr = testutil::pyramid_from_layers({layer, layer}, g);
    const CorrVolume vol = stack_correlations(pyr, pyr);
    const std::size_t plane = std::size_t(g.cells()) * std::size_t(g.cells());
    for (std::size_t i = 0; i < plane; ++i)
        CHECK(vol.scores[i] == vol.scores[plane + i]);
}

TEST_CASE("stack_correlations transpose duality") {
    Rng rng(16);
    for (int it = 0; it < 50; ++it) {
        const GridShape g(2, 2, 2);
        const auto a = testutil::pyramid_from_layers(
            {random_tensor(rng, {3, 2, 2, 2}), random_tensor(rng, {5, 2, 2, 2})}, g);
        const auto b = testutil::pyramid_from_layers(
            {random_tensor(rng, {3, 2, 2, 2}), random_tensor(rng, {5, 2, 2, 2})}, g);
        const CorrVolume ab = stack_correlations(a, b);
        const CorrVolume ba = stack_correlations(b, a);
        const int n = g.cells();
        for (int m = 0; m < 2; ++m)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    CHECK(ab.scores(m, i, j) == ba.scores(m, j, i));
    }
}

TEST_CASE("stack_correlations rejects mismatched pyramids") {
    Rng rng(17);
    const GridShape g(1, 2, 2);
    const auto one = testutil::pyramid_from_layers({random_tensor(rng, {3, 1, 2, 2})}, g);
    const auto two = testutil::pyramid_from_layers(
        {random_tensor(rng, {3, 1, 2, 2}), random_tensor(rng, {3, 1, 2, 2})}, g);
    CHECK_THROWS_AS(stack_correlations(one, two), std::invalid_argument);
}

TEST_CASE("normalized features bound correlation scores") {
    Rng rng(18);
    for (int it = 0; it < 50; ++it) {
        const GridShape g(2, 2, 2);
        const auto a = assemble_hyperpixel({random_tensor(rng, {4, 2, 2, 2})}, {0}, g, true);
        const auto b = assemble_hyperpixel({random_tensor(rng, {4, 2, 2, 2})}, {0}, g, true);
        const CorrVolume vol = stack_correlations(a, b);
        for (float v : vol.scores.values()) {
            CHECK(v <= 1.0f + 1e-5f);
            CHECK(v >= -1.0f - 1e-5f);
        }
    }
}

TEST_CASE("scaling a layer scales its correlation slice") {
    Rng rng(19);
    const GridShape g(1, 2, 2);
    const Tensor base = random_tensor(rng, {3, 1, 2, 2}, -1, 1);
    const Tensor other = random_tensor(rng, {3, 1, 2, 2}, -1, 1);
    const float c = 2.75f;
    Tensor scaled(base.dims());
    for (std::size_t i = 0; i < base.size(); ++i) scaled[i] = c * base[i];

    const Tensor plain = correlation_layer(base, other);
    const Tensor boosted = correlation_layer(scaled, other);
    for (std::size_t i = 0; i < plain.size(); ++i)
        CHECK(boosted[i] == doctest::Approx(c * plain[i]).epsilon(1e-5));
}

TEST_CASE("frame_slice extracts per-frame pyramids") {
    Rng rng(20);
    const GridShape g(3, 2, 2);
    const Tensor layer = random_tensor(rng, {2, 3, 2, 2});
    const auto pyr = testutil::pyramid_from_layers({layer}, g);
    const auto slice = frame_slice(pyr, 1);
    CHECK(slice.grid == GridShape(1, 2, 2));
    for (int c = 0; c < 2; ++c)
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 2; ++w)
                CHECK(slice.layers[0](c, 0, h, w) == layer(c, 1, h, w));
    CHECK_THROWS_AS(frame_slice(pyr, 3), std::invalid_argument);
}
