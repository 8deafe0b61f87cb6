#include "stcorr/tensor.hpp"

namespace stcorr {

Tensor trilinear_resample(const Tensor& src, const GridShape& target) {
    if (src.rank() != 4)
        throw std::invalid_argument("trilinear_resample: expected rank-4 [C,T,H,W]");
    if (target.t < 1 || target.h < 1 || target.w < 1)
        throw std::invalid_argument("trilinear_resample: target must be positive");

    const std::size_t c = src.dim(0);
    const int st = int(src.dim(1)), sh = int(src.dim(2)), sw = int(src.dim(3));

    // identity targets pass through bit-exactly
    if (st == target.t && sh == target.h && sw == target.w) return src;

    const double kt = axis_scale(target.t, st);
    const double kh = axis_scale(target.h, sh);
    const double kw = axis_scale(target.w, sw);

    Tensor out({c, std::size_t(target.t), std::size_t(target.h),
                std::size_t(target.w)});
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (int t = 0; t < target.t; ++t)
            for (int h = 0; h < target.h; ++h)
                for (int w = 0; w < target.w; ++w)
                    out[o++] = sample_trilinear(src, ch, t * kt, h * kh, w * kw);
    return out;
}

Tensor l2_normalize_positions(const Tensor& t, float epsilon) {
    if (t.rank() != 4)
        throw std::invalid_argument("l2_normalize_positions: expected rank-4 [C,T,H,W]");
    const std::size_t c = t.dim(0);
    const std::size_t cells = t.dim(1) * t.dim(2) * t.dim(3);

    Tensor out(t.dims());
    for (std::size_t p = 0; p < cells; ++p) {
        double sq = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = t[ch * cells + p];
            sq += v * v;
        }
        const double inv = 1.0 / std::max(std::sqrt(sq), double(epsilon));
        for (std::size_t ch = 0; ch < c; ++ch)
            out[ch * cells + p] = float(t[ch * cells + p] * inv);
    }
    return out;
}

}  // namespace stcorr
