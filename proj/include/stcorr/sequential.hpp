#pragma once

#include <vector>

#include "stcorr/features.hpp"
#include "stcorr/keypoint.hpp"
#include "stcorr/stmatch.hpp"

namespace stcorr {

// per-frame embeddings, [frames, dim]
struct EmbeddingSequence {
    int frames = 0;
    int dim = 0;
    Tensor values;
};

// one target frame per source frame
struct Alignment {
    std::vector<int> map;
    bool monotone = false;
};

struct DtwResult {
    Alignment alignment;
    double total_cost = 0.0;
};

// chosen layer averaged over H,W per frame, then L2-normalized per frame
EmbeddingSequence frame_embeddings(const FeaturePyramid& pyr, int layer_pick);

// per source frame, the target frame at minimal squared Euclidean distance;
// ties resolve to the lowest index
Alignment nn_align(const EmbeddingSequence& source,
                   const EmbeddingSequence& target);

// Optimal monotone warping path with steps {(1,0),(0,1),(1,1)} and squared
// Euclidean cost. The path is collapsed to one target per source frame by
// keeping the matched target of minimal local cost (ties -> lowest index).
DtwResult dtw_align(const EmbeddingSequence& source,
                    const EmbeddingSequence& target);

// Maps each keypoint's frame through the alignment, then matches spatially
// on the aligned frame pair using single-frame match volumes.
std::vector<SpaceTimeKeypoint> sequential_transfer(
    const Alignment& alignment, const FeaturePyramid& pyr_s,
    const FeaturePyramid& pyr_t, const std::vector<SpaceTimeKeypoint>& kps,
    const VideoDims& src_dims, const VideoDims& tgt_dims,
    FlowSampling sampling = FlowSampling::trilinear);

}  // namespace stcorr
