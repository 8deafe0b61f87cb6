#pragma once

#include <vector>

#include "stcorr/tensor.hpp"

namespace stcorr {

// M selected layers resampled to one T×H×W grid, layer i shaped [C_i,T,H,W]
struct FeaturePyramid {
    GridShape grid;
    std::vector<Tensor> layers;
    std::vector<int> layer_ids;

    int layer_count() const { return int(layers.size()); }
    int channels(int i) const { return int(layers[std::size_t(i)].dim(0)); }
    int total_channels() const {
        int n = 0;
        for (const auto& l : layers) n += int(l.dim(0));
        return n;
    }
};

// Stacked per-layer correlation scores [M, THW, THW]; row = source cell,
// column = target cell, linear cell index t*H*W + h*W + w.
struct CorrVolume {
    GridShape grid;
    Tensor scores;

    int layer_count() const { return int(scores.dim(0)); }
};

// Resamples each raw layer to `grid`; with `normalize` set the C-vector at
// every position is L2-normalized so correlations become cosine similarities.
FeaturePyramid assemble_hyperpixel(const std::vector<Tensor>& raw_layers,
                                   const std::vector<int>& layer_ids,
                                   const GridShape& grid, bool normalize);

// all-pairs dot products between source and target cells, [THW, THW]
Tensor correlation_layer(const Tensor& src, const Tensor& tgt);

CorrVolume stack_correlations(const FeaturePyramid& source,
                              const FeaturePyramid& target);

// single-frame [C_i,1,H,W] view of every layer, for per-frame spatial matching
FeaturePyramid frame_slice(const FeaturePyramid& pyr, int frame);

}  // namespace stcorr
