#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "stcorr/features.hpp"
#include "stcorr/keypoint.hpp"

namespace stcorr {

// (THW)×(THW) matching scores; row = source cell, column = target cell
struct MatchVolume {
    GridShape grid;
    Tensor scores;
};

// Per source cell, displacement (Δt, Δh, Δw) to the matched target cell in
// grid units, stored [3, T, H, W].
struct DisplacementFlow {
    GridShape grid;
    Tensor flow;
};

enum class FlowSampling { trilinear, nearest };

// mean pooling of the M correlation slices
MatchVolume stmatch_volume(const CorrVolume& corr);

// row-wise hard argmax; ties resolve to the lowest linear index
DisplacementFlow argmax_flow(const MatchVolume& mv);

// row-wise softmax-weighted expected target coordinate (max-subtracted)
DisplacementFlow soft_argmax_flow(const MatchVolume& mv, double temperature);

// Maps keypoints to grid coordinates (align-corners), reads the flow field
// at that position, and maps the displaced position into target pixel
// space. Predicted time is rounded to the nearest frame and clamped.
std::vector<SpaceTimeKeypoint> transfer_keypoints(
    const DisplacementFlow& flow, const std::vector<SpaceTimeKeypoint>& kps,
    const VideoDims& src_dims, const VideoDims& tgt_dims,
    FlowSampling sampling = FlowSampling::trilinear);

namespace detail {

// one row of a match volume -> (Δt, Δh, Δw) via a tempered softmax
template <class Real>
std::array<Real, 3> soft_argmax_row(const Real* row, const GridShape& g,
                                    int source_cell, Real temperature) {
    const int n = g.cells();
    Real mx = row[0];
    for (int q = 1; q < n; ++q) mx = std::max(mx, row[q]);

    Real wsum = 0, et = 0, eh = 0, ew = 0;
    for (int q = 0; q < n; ++q) {
        const Real w = std::exp((row[q] - mx) / temperature);
        const auto c = cell_coord(g, q);
        wsum += w;
        et += w * Real(c[0]);
        eh += w * Real(c[1]);
        ew += w * Real(c[2]);
    }
    const auto s = cell_coord(g, source_cell);
    return {et / wsum - Real(s[0]), eh / wsum - Real(s[1]),
            ew / wsum - Real(s[2])};
}

// reads a [3,T,H,W] flow field at real grid coordinates
template <class Real>
std::array<Real, 3> sample_flow(const BasicTensor<Real>& flow,
                                const GridShape& g, double ft, double fh,
                                double fw, FlowSampling sampling) {
    if (sampling == FlowSampling::nearest) {
        const int t = std::clamp(int(std::lround(ft)), 0, g.t - 1);
        const int h = std::clamp(int(std::lround(fh)), 0, g.h - 1);
        const int w = std::clamp(int(std::lround(fw)), 0, g.w - 1);
        return {flow(0, t, h, w), flow(1, t, h, w), flow(2, t, h, w)};
    }
    return {sample_trilinear(flow, 0, ft, fh, fw),
            sample_trilinear(flow, 1, ft, fh, fw),
            sample_trilinear(flow, 2, ft, fh, fw)};
}

}  // namespace detail

}  // namespace stcorr
