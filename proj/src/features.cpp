#include "stcorr/features.hpp"

#include <cstring>
#include <string>

namespace stcorr {

FeaturePyramid assemble_hyperpixel(const std::vector<Tensor>& raw_layers,
                                   const std::vector<int>& layer_ids,
                                   const GridShape& grid, bool normalize) {
    if (raw_layers.empty())
        throw std::invalid_argument("assemble_hyperpixel: no layers");
    if (raw_layers.size() != layer_ids.size())
        throw std::invalid_argument(
            "assemble_hyperpixel: layer/id length mismatch");
    for (std::size_t i = 1; i < layer_ids.size(); ++i)
        if (layer_ids[i] <= layer_ids[i - 1])
            throw std::invalid_argument(
                "assemble_hyperpixel: layer ids must be strictly increasing");

    FeaturePyramid pyr;
    pyr.grid = grid;
    pyr.layer_ids = layer_ids;
    pyr.layers.reserve(raw_layers.size());
    for (const auto& raw : raw_layers) {
        Tensor t = trilinear_resample(raw, grid);
        if (normalize) t = l2_normalize_positions(t);
        pyr.layers.push_back(std::move(t));
    }
    return pyr;
}

Tensor correlation_layer(const Tensor& src, const Tensor& tgt) {
    if (src.rank() != 4 || tgt.rank() != 4 || src.dims() != tgt.dims())
        throw std::invalid_argument("correlation_layer: dim mismatch");

    const std::size_t c = src.dim(0);
    const std::size_t cells = src.dim(1) * src.dim(2) * src.dim(3);

    // cell-major scratch copies keep the dot products contiguous
    std::vector<float> s(cells * c), t(cells * c);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < cells; ++p) {
            s[p * c + ch] = src[ch * cells + p];
            t[p * c + ch] = tgt[ch * cells + p];
        }

    Tensor out({cells, cells});
    for (std::size_t i = 0; i < cells; ++i) {
        const float* si = &s[i * c];
        for (std::size_t j = 0; j < cells; ++j) {
            const float* tj = &t[j * c];
            double acc = 0.0;  // accumulated in channel index order
            for (std::size_t ch = 0; ch < c; ++ch) acc += double(si[ch]) * tj[ch];
            out[i * cells + j] = float(acc);
        }
    }
    return out;
}

CorrVolume stack_correlations(const FeaturePyramid& source,
                              const FeaturePyramid& target) {
    if (source.layer_count() != target.layer_count() ||
        !(source.grid == target.grid))
        throw std::invalid_argument("stack_correlations: pyramid mismatch");
    for (int i = 0; i < source.layer_count(); ++i)
        if (source.layers[std::size_t(i)].dims() !=
            target.layers[std::size_t(i)].dims())
            throw std::invalid_argument("stack_correlations: pyramid mismatch");

    const std::size_t m = std::size_t(source.layer_count());
    const std::size_t cells = std::size_t(source.grid.cells());

    CorrVolume vol;
    vol.grid = source.grid;
    vol.scores = Tensor({m, cells, cells});
    for (std::size_t i = 0; i < m; ++i) {
        const Tensor slice = correlation_layer(source.layers[i], target.layers[i]);
        std::memcpy(vol.scores.data() + i * cells * cells, slice.data(),
                    cells * cells * sizeof(float));
    }
    return vol;
}

FeaturePyramid frame_slice(const FeaturePyramid& pyr, int frame) {
    if (frame < 0 || frame >= pyr.grid.t)
        throw std::invalid_argument("frame_slice: frame " +
                                    std::to_string(frame) + " out of range");

    FeaturePyramid out;
    out.grid = GridShape(1, pyr.grid.h, pyr.grid.w);
    out.layer_ids = pyr.layer_ids;
    const std::size_t plane = std::size_t(pyr.grid.h) * std::size_t(pyr.grid.w);
    for (const auto& layer : pyr.layers) {
        const std::size_t c = layer.dim(0);
        Tensor t({c, 1, std::size_t(pyr.grid.h), std::size_t(pyr.grid.w)});
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(t.data() + ch * plane,
                        layer.data() + (ch * std::size_t(pyr.grid.t) + frame) * plane,
                        plane * sizeof(float));
        out.layers.push_back(std::move(t));
    }
    return out;
}

}  // namespace stcorr
