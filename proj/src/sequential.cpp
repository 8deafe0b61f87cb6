#include "stcorr/sequential.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

namespace stcorr {

namespace {

double sq_distance(const float* a, const float* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

void require_compatible(const EmbeddingSequence& a, const EmbeddingSequence& b) {
    if (a.dim != b.dim)
        throw std::invalid_argument("embedding dim mismatch");
    if (a.frames < 1 || b.frames < 1)
        throw std::invalid_argument("empty embedding sequence");
}

}  // namespace

EmbeddingSequence frame_embeddings(const FeaturePyramid& pyr, int layer_pick) {
    if (layer_pick < 0 || layer_pick >= pyr.layer_count())
        throw std::invalid_argument("frame_embeddings: bad layer index " +
                                    std::to_string(layer_pick));
    const Tensor& layer = pyr.layers[std::size_t(layer_pick)];
    const int c = int(layer.dim(0));
    const int t = pyr.grid.t;
    const std::size_t plane = std::size_t(pyr.grid.h) * std::size_t(pyr.grid.w);

    EmbeddingSequence seq;
    seq.frames = t;
    seq.dim = c;
    seq.values = Tensor({std::size_t(t), std::size_t(c)});
    for (int f = 0; f < t; ++f) {
        double sq = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const float* p =
                layer.data() + (std::size_t(ch) * std::size_t(t) + std::size_t(f)) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            const double mean = acc / double(plane);
            seq.values(f, ch) = float(mean);
            sq += mean * mean;
        }
        const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
        for (int ch = 0; ch < c; ++ch) seq.values(f, ch) = float(seq.values(f, ch) * inv);
    }
    return seq;
}

Alignment nn_align(const EmbeddingSequence& source,
                   const EmbeddingSequence& target) {
    require_compatible(source, target);
    Alignment out;
    out.monotone = false;
    out.map.resize(std::size_t(source.frames));
    for (int i = 0; i < source.frames; ++i) {
        const float* si = source.values.data() + std::size_t(i) * std::size_t(source.dim);
        int best = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        for (int j = 0; j < target.frames; ++j) {
            const float* tj = target.values.data() + std::size_t(j) * std::size_t(target.dim);
            const double cost = sq_distance(si, tj, source.dim);
            if (cost < best_cost) {  // strict: ties keep the lowest index
                best_cost = cost;
                best = j;
            }
        }
        out.map[std::size_t(i)] = best;
    }
    return out;
}

DtwResult dtw_align(const EmbeddingSequence& source,
                    const EmbeddingSequence& target) {
    require_compatible(source, target);
    const int m = source.frames, n = target.frames;
    const int dim = source.dim;

    std::vector<double> cost(std::size_t(m) * std::size_t(n));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            cost[std::size_t(i) * std::size_t(n) + std::size_t(j)] = sq_distance(
                source.values.data() + std::size_t(i) * std::size_t(dim),
                target.values.data() + std::size_t(j) * std::size_t(dim), dim);

    // D[i,j] = c(i,j) + min(D[i-1,j], D[i,j-1], D[i-1,j-1])
    std::vector<double> acc(cost);
    auto at = [n](std::vector<double>& v, int i, int j) -> double& {
        return v[std::size_t(i) * std::size_t(n) + std::size_t(j)];
    };
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == 0 && j == 0) continue;
            double best = std::numeric_limits<double>::infinity();
            if (i > 0 && j > 0) best = std::min(best, at(acc, i - 1, j - 1));
            if (i > 0) best = std::min(best, at(acc, i - 1, j));
            if (j > 0) best = std::min(best, at(acc, i, j - 1));
            at(acc, i, j) += best;
        }

    // backtrack, preferring diagonal then (i-1,j) then (i,j-1) on ties
    std::vector<std::pair<int, int>> path;
    int i = m - 1, j = n - 1;
    path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        double best = std::numeric_limits<double>::infinity();
        int ni = i, nj = j;
        if (i > 0 && j > 0 && at(acc, i - 1, j - 1) < best) {
            best = at(acc, i - 1, j - 1);
            ni = i - 1;
            nj = j - 1;
        }
        if (i > 0 && at(acc, i - 1, j) < best) {
            best = at(acc, i - 1, j);
            ni = i - 1;
            nj = j;
        }
        if (j > 0 && at(acc, i, j - 1) < best) {
            ni = i;
            nj = j - 1;
        }
        i = ni;
        j = nj;
        path.emplace_back(i, j);
    }

    DtwResult out;
    out.total_cost = at(acc, m - 1, n - 1);
    out.alignment.monotone = true;
    out.alignment.map.assign(std::size_t(m), 0);

    // collapse: per source frame keep the matched target of minimal local cost
    std::vector<double> best_local(std::size_t(m),
                                   std::numeric_limits<double>::infinity());
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const auto [pi, pj] = *it;
        const double c = at(cost, pi, pj);
        if (c < best_local[std::size_t(pi)]) {  // strict: ties keep lowest j
            best_local[std::size_t(pi)] = c;
            out.alignment.map[std::size_t(pi)] = pj;
        }
    }
    return out;
}

std::vector<SpaceTimeKeypoint> sequential_transfer(
    const Alignment& alignment, const FeaturePyramid& pyr_s,
    const FeaturePyramid& pyr_t, const std::vector<SpaceTimeKeypoint>& kps,
    const VideoDims& src_dims, const VideoDims& tgt_dims,
    FlowSampling sampling) {
    const GridShape g = pyr_s.grid;
    if (alignment.map.size() != std::size_t(g.t))
        throw std::invalid_argument("sequential_transfer: alignment/grid mismatch");

    const double to_gt = axis_scale(src_dims.frames, g.t);
    const double to_pt = axis_scale(pyr_t.grid.t, tgt_dims.frames);

    // spatial flow per distinct (source frame, target frame) pair
    std::map<std::pair<int, int>, DisplacementFlow> flows;
    auto frame_flow = [&](int fs, int ft) -> const DisplacementFlow& {
        const auto key = std::make_pair(fs, ft);
        auto it = flows.find(key);
        if (it == flows.end()) {
            const CorrVolume corr =
                stack_correlations(frame_slice(pyr_s, fs), frame_slice(pyr_t, ft));
            it = flows.emplace(key, argmax_flow(stmatch_volume(corr))).first;
        }
        return it->second;
    };

    const VideoDims frame_src(1, src_dims.height, src_dims.width);
    const VideoDims frame_tgt(1, tgt_dims.height, tgt_dims.width);

    std::vector<SpaceTimeKeypoint> out;
    out.reserve(kps.size());
    for (const auto& kp : kps) {
        if (kp.t < 0 || kp.t >= src_dims.frames)
            throw std::invalid_argument("sequential_transfer: keypoint frame out of range");

        const int gs = std::clamp(int(std::lround(kp.t * to_gt)), 0, g.t - 1);
        const int gt = alignment.map[std::size_t(gs)];
        if (gt < 0 || gt >= pyr_t.grid.t)
            throw std::invalid_argument("sequential_transfer: aligned frame out of range");

        SpaceTimeKeypoint flat = kp;
        flat.t = 0;
        SpaceTimeKeypoint moved =
            transfer_keypoints(frame_flow(gs, gt), {flat}, frame_src, frame_tgt,
                               sampling)[0];
        moved.t = std::clamp(int(std::lround(gt * to_pt)), 0, tgt_dims.frames - 1);
        out.push_back(moved);
    }
    return out;
}

}  // namespace stcorr
