#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace stcorr {

// Dense row-major tensor of rank 1-5. Feature maps use channel-first
// [C, T, H, W] ordering throughout.
template <class T>
class BasicTensor {
    static_assert(std::is_floating_point_v<T>);

public:
    BasicTensor() = default;

    // zero-filled
    explicit BasicTensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(checked_size(dims_), T{}) {}

    BasicTensor(std::vector<std::size_t> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_size(dims_))
            throw std::invalid_argument("tensor data length does not match dims");
    }

    std::size_t rank() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <class... Ix>
    T& operator()(Ix... ix) {
        return data_[offset(ix...)];
    }
    template <class... Ix>
    const T& operator()(Ix... ix) const {
        return data_[offset(ix...)];
    }

    // flat offset of a full multi-index
    template <class... Ix>
    std::size_t offset(Ix... ix) const {
        static_assert((std::is_integral_v<Ix> && ...));
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        constexpr std::size_t n = sizeof...(Ix);
        if (n != dims_.size())
            throw std::invalid_argument("tensor index rank mismatch");
        std::size_t off = 0;
        for (std::size_t i = 0; i < n; ++i) off = off * dims_[i] + idx[i];
        return off;
    }

    template <class U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
        return BasicTensor<U>(dims_, std::move(out));
    }

    bool operator==(const BasicTensor&) const = default;

private:
    static std::size_t checked_size(const std::vector<std::size_t>& dims) {
        if (dims.empty() || dims.size() > 5)
            throw std::invalid_argument("tensor rank must be between 1 and 5");
        std::size_t n = 1;
        constexpr std::size_t limit = std::size_t(1) << 40;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("tensor dims must be positive");
            if (d > limit / n) throw std::invalid_argument("tensor size overflow");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> dims_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

// T frames, H rows, W cols of a feature grid
struct GridShape {
    int t = 1, h = 1, w = 1;

    GridShape() = default;
    GridShape(int t_, int h_, int w_) : t(t_), h(h_), w(w_) {
        if (t < 1 || h < 1 || w < 1)
            throw std::invalid_argument("grid dims must be positive");
    }

    int cells() const { return t * h * w; }
    bool operator==(const GridShape&) const = default;
};

// project-wide linear cell index: t*H*W + h*W + w
inline int cell_index(const GridShape& g, int t, int h, int w) {
    return (t * g.h + h) * g.w + w;
}

inline std::array<int, 3> cell_coord(const GridShape& g, int idx) {
    return {idx / (g.h * g.w), (idx / g.w) % g.h, idx % g.w};
}

// Align-corners axis factor: index i of an extent-`from` axis maps to
// coordinate i*scale on an extent-`to` axis, so endpoints land on endpoints.
// Degenerate axes (extent 1 on either side) map to coordinate 0.
inline double axis_scale(int from_extent, int to_extent) {
    return (from_extent > 1 && to_extent > 1)
               ? double(to_extent - 1) / double(from_extent - 1)
               : 0.0;
}

// Trilinear read of a [C, T, H, W] volume at real coordinates; coordinates
// are clamped to the grid, integer coordinates reproduce cell values exactly.
template <class T>
T sample_trilinear(const BasicTensor<T>& vol, std::size_t channel, double ft,
                   double fh, double fw) {
    const int nt = int(vol.dim(1)), nh = int(vol.dim(2)), nw = int(vol.dim(3));
    ft = std::clamp(ft, 0.0, double(nt - 1));
    fh = std::clamp(fh, 0.0, double(nh - 1));
    fw = std::clamp(fw, 0.0, double(nw - 1));
    const int t0 = int(ft), h0 = int(fh), w0 = int(fw);
    const int t1 = std::min(t0 + 1, nt - 1), h1 = std::min(h0 + 1, nh - 1),
              w1 = std::min(w0 + 1, nw - 1);
    const double at = ft - t0, ah = fh - h0, aw = fw - w0;
    const std::size_t c = channel;
    const double v000 = vol(c, t0, h0, w0), v001 = vol(c, t0, h0, w1);
    const double v010 = vol(c, t0, h1, w0), v011 = vol(c, t0, h1, w1);
    const double v100 = vol(c, t1, h0, w0), v101 = vol(c, t1, h0, w1);
    const double v110 = vol(c, t1, h1, w0), v111 = vol(c, t1, h1, w1);
    const double r00 = v000 + (v001 - v000) * aw;
    const double r01 = v010 + (v011 - v010) * aw;
    const double r10 = v100 + (v101 - v100) * aw;
    const double r11 = v110 + (v111 - v110) * aw;
    const double r0 = r00 + (r01 - r00) * ah;
    const double r1 = r10 + (r11 - r10) * ah;
    return T(r0 + (r1 - r0) * at);
}

// Per-channel trilinear interpolation onto `target`, align-corners
// convention. Size-1 source axes broadcast constantly.
Tensor trilinear_resample(const Tensor& src, const GridShape& target);

// At each (t,h,w), divides the C-vector by max(L2 norm, epsilon).
Tensor l2_normalize_positions(const Tensor& t, float epsilon = 1e-8f);

}  // namespace stcorr
