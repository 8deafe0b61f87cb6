#include "stcorr/stmatch.hpp"

#include <string>

namespace stcorr {

namespace {

void require_square(const MatchVolume& mv) {
    if (mv.scores.rank() != 2 || mv.scores.dim(0) != mv.scores.dim(1) ||
        mv.scores.dim(0) != std::size_t(mv.grid.cells()))
        throw std::invalid_argument("match volume is not square over the grid");
}

}  // namespace

MatchVolume stmatch_volume(const CorrVolume& corr) {
    const std::size_t m = std::size_t(corr.layer_count());
    if (m == 0) throw std::invalid_argument("stmatch_volume: empty volume");
    const std::size_t cells = corr.scores.dim(1);
    const std::size_t plane = cells * cells;

    MatchVolume mv;
    mv.grid = corr.grid;
    mv.scores = Tensor({cells, cells});
    const double inv = 1.0 / double(m);
    for (std::size_t p = 0; p < plane; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += corr.scores[i * plane + p];
        mv.scores[p] = float(acc * inv);
    }
    return mv;
}

DisplacementFlow argmax_flow(const MatchVolume& mv) {
    require_square(mv);
    const GridShape g = mv.grid;
    const int n = g.cells();

    DisplacementFlow out;
    out.grid = g;
    out.flow = Tensor({3, std::size_t(g.t), std::size_t(g.h), std::size_t(g.w)});
    for (int s = 0; s < n; ++s) {
        const float* row = mv.scores.data() + std::size_t(s) * std::size_t(n);
        int best = 0;
        for (int q = 1; q < n; ++q)
            if (row[q] > row[best]) best = q;  // ties keep the lowest index
        const auto sc = cell_coord(g, s);
        const auto qc = cell_coord(g, best);
        out.flow[std::size_t(0 * n + s)] = float(qc[0] - sc[0]);
        out.flow[std::size_t(1 * n + s)] = float(qc[1] - sc[1]);
        out.flow[std::size_t(2 * n + s)] = float(qc[2] - sc[2]);
    }
    return out;
}

DisplacementFlow soft_argmax_flow(const MatchVolume& mv, double temperature) {
    require_square(mv);
    if (!(temperature > 0))
        throw std::invalid_argument("soft_argmax_flow: temperature must be > 0");
    const GridShape g = mv.grid;
    const int n = g.cells();

    DisplacementFlow out;
    out.grid = g;
    out.flow = Tensor({3, std::size_t(g.t), std::size_t(g.h), std::size_t(g.w)});
    std::vector<double> row(std::size_t(n), 0.0);
    for (int s = 0; s < n; ++s) {
        const float* src = mv.scores.data() + std::size_t(s) * std::size_t(n);
        for (int q = 0; q < n; ++q) row[std::size_t(q)] = src[q];
        const auto d = detail::soft_argmax_row(row.data(), g, s, temperature);
        out.flow[std::size_t(0 * n + s)] = float(d[0]);
        out.flow[std::size_t(1 * n + s)] = float(d[1]);
        out.flow[std::size_t(2 * n + s)] = float(d[2]);
    }
    return out;
}

std::vector<SpaceTimeKeypoint> transfer_keypoints(
    const DisplacementFlow& flow, const std::vector<SpaceTimeKeypoint>& kps,
    const VideoDims& src_dims, const VideoDims& tgt_dims,
    FlowSampling sampling) {
    const GridShape g = flow.grid;

    // pixel -> grid and grid -> pixel factors per axis
    const double to_gt = axis_scale(src_dims.frames, g.t);
    const double to_gh = axis_scale(src_dims.height, g.h);
    const double to_gw = axis_scale(src_dims.width, g.w);
    const double to_pt = axis_scale(g.t, tgt_dims.frames);
    const double to_ph = axis_scale(g.h, tgt_dims.height);
    const double to_pw = axis_scale(g.w, tgt_dims.width);

    std::vector<SpaceTimeKeypoint> out;
    out.reserve(kps.size());
    for (const auto& kp : kps) {
        if (kp.t < 0 || kp.t >= src_dims.frames || kp.x < 0 ||
            kp.x > src_dims.width - 1 || kp.y < 0 || kp.y > src_dims.height - 1)
            throw std::invalid_argument("transfer_keypoints: keypoint outside source dims");

        const double gt = kp.t * to_gt;
        const double gh = kp.y * to_gh;
        const double gw = kp.x * to_gw;
        const auto d = detail::sample_flow(flow.flow, g, gt, gh, gw, sampling);

        const double pt = (gt + d[0]) * to_pt;
        const double py = (gh + d[1]) * to_ph;
        const double px = (gw + d[2]) * to_pw;

        SpaceTimeKeypoint p = kp;
        p.t = std::clamp(int(std::lround(pt)), 0, tgt_dims.frames - 1);
        p.y = std::clamp(py, 0.0, double(tgt_dims.height - 1));
        p.x = std::clamp(px, 0.0, double(tgt_dims.width - 1));
        out.push_back(p);
    }
    return out;
}

}  // namespace stcorr
