#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "stcorr/features.hpp"
#include "stcorr/keypoint.hpp"
#include "stcorr/stmatch.hpp"

namespace stcorr {

// Network sizing. The input channel count is derived: the correlation volume
// reshaped to M*THW channels over the source grid, concatenated with all
// source then all target feature channels.
struct AntsConfig {
    int n_layers = 2;
    int hidden_channels = 16;
    GridShape grid;
    int corr_layers = 1;  // M
    std::vector<int> src_channels, tgt_channels;

    int input_channels() const {
        int n = corr_layers * grid.cells();
        for (int c : src_channels) n += c;
        for (int c : tgt_channels) n += c;
        return n;
    }
    int output_channels() const { return grid.cells(); }
    int layer_input(int layer) const {
        return layer == 0 ? input_channels() : hidden_channels;
    }
    int layer_output(int layer) const {
        return layer == n_layers - 1 ? output_channels() : hidden_channels;
    }
    void validate() const;
};

template <class Real>
struct Conv3dLayer {
    BasicTensor<Real> kernel;  // [C_out, C_in, 3, 3, 3]
    BasicTensor<Real> bias;    // [C_out]
};

template <class Real>
struct AntsParamsT {
    AntsConfig config;
    std::vector<Conv3dLayer<Real>> layers;

    template <class U>
    AntsParamsT<U> cast() const {
        AntsParamsT<U> out;
        out.config = config;
        for (const auto& l : layers)
            out.layers.push_back(
                {l.kernel.template cast<U>(), l.bias.template cast<U>()});
        return out;
    }
};

using AntsParams = AntsParamsT<float>;

// ground-truth sparse flow sample: source grid position and displacement
struct GtCorrespondence {
    double t = 0, h = 0, w = 0;     // within the grid, real-valued
    double dt = 0, dh = 0, dw = 0;  // grid units
};

// correlation volume and feature layers in one container; the double
// instantiation backs the gradient checks
template <class Real>
struct AntsInput {
    GridShape grid;
    BasicTensor<Real> corr;                     // [M, THW, THW]
    std::vector<BasicTensor<Real>> src_layers;  // [C_i, T, H, W]
    std::vector<BasicTensor<Real>> tgt_layers;
};

AntsInput<float> make_ants_input(const CorrVolume& corr,
                                 const FeaturePyramid& src,
                                 const FeaturePyramid& tgt);

// kernels uniform(-a, a) with a = sqrt(1/(C_in*27)), biases zero;
// zero_init replaces the draws with zeros (debug mode)
AntsParams ants_init(const AntsConfig& config, std::uint64_t seed,
                     bool zero_init = false);

MatchVolume ants_forward(const CorrVolume& corr, const FeaturePyramid& src,
                         const FeaturePyramid& tgt, const AntsParams& params);

// Mean over GT samples of the squared distance between the soft-argmax flow
// interpolated at the GT source position and the GT displacement.
double sparse_flow_loss(const MatchVolume& mv,
                        const std::vector<GtCorrespondence>& gts,
                        double temperature);

struct AntsGradient {
    double loss = 0;
    AntsParams grads;
};

AntsGradient ants_gradient(const CorrVolume& corr, const FeaturePyramid& src,
                           const FeaturePyramid& tgt, const AntsParams& params,
                           const std::vector<GtCorrespondence>& gts,
                           double temperature);

struct TrainingPair {
    CorrVolume corr;
    FeaturePyramid src, tgt;
    std::vector<GtCorrespondence> gts;
};

struct TrainResult {
    AntsParams params;
    std::vector<double> losses;  // loss per step, before that step's update
};

// plain SGD over uniformly sampled pairs; aborts on non-finite loss
TrainResult train_ants(const std::vector<TrainingPair>& pairs,
                       const AntsConfig& config, double lr, int steps,
                       std::uint64_t seed, double temperature);

// pixel-space matches -> grid positions and displacements (align-corners)
std::vector<GtCorrespondence> to_grid_correspondences(
    const std::vector<Correspondence>& matches, const VideoDims& src_dims,
    const VideoDims& tgt_dims, const GridShape& grid);

// directory of STT1 tensors plus params.json descriptor
void save_ants_params(const std::filesystem::path& dir, const AntsParams& params,
                      std::uint64_t seed);
AntsParams load_ants_params(const std::filesystem::path& dir);

// Random 64-bit instance for finite-difference verification. Instances are
// redrawn until every ReLU pre-activation clears the finite-difference step
// by a wide margin, so the loss stays smooth in the probed neighborhood.
struct GradCheckInstance {
    AntsInput<double> input;
    AntsParamsT<double> params;
    std::vector<GtCorrespondence> gts;
    double temperature = 0.5;
};

GradCheckInstance make_gradcheck_instance(std::uint64_t seed,
                                          const GridShape& grid = GridShape(2, 2, 2),
                                          int feature_channels = 4,
                                          int hidden_channels = 4);

// max over parameters of |analytic - central difference| / max(1, |a|, |n|)
double ants_gradient_check(const GradCheckInstance& instance, double fd_step);

// ---- precision-parametric core ----

namespace detail {

template <class Real>
void conv3d_forward(const BasicTensor<Real>& in, const Conv3dLayer<Real>& layer,
                    BasicTensor<Real>& out) {
    const int ci = int(in.dim(0));
    const int nt = int(in.dim(1)), nh = int(in.dim(2)), nw = int(in.dim(3));
    const int co = int(layer.kernel.dim(0));
    const Real* k = layer.kernel.data();
    const Real* b = layer.bias.data();
    const Real* x = in.data();
    Real* y = out.data();

    const std::size_t cell_count = std::size_t(nt) * nh * nw;
    for (int o = 0; o < co; ++o) {
        const Real* ko = k + std::size_t(o) * std::size_t(ci) * 27;
        Real* yo = y + std::size_t(o) * cell_count;
        for (int t = 0; t < nt; ++t)
            for (int h = 0; h < nh; ++h)
                for (int w = 0; w < nw; ++w) {
                    Real acc = b[o];
                    for (int i = 0; i < ci; ++i) {
                        const Real* xi = x + std::size_t(i) * cell_count;
                        const Real* ki = ko + std::size_t(i) * 27;
                        for (int dt = 0; dt < 3; ++dt) {
                            const int it = t + dt - 1;
                            if (it < 0 || it >= nt) continue;  // zero padding
                            for (int dh = 0; dh < 3; ++dh) {
                                const int ih = h + dh - 1;
                                if (ih < 0 || ih >= nh) continue;
                                for (int dw = 0; dw < 3; ++dw) {
                                    const int iw = w + dw - 1;
                                    if (iw < 0 || iw >= nw) continue;
                                    acc += ki[(dt * 3 + dh) * 3 + dw] *
                                           xi[(std::size_t(it) * nh + ih) * nw + iw];
                                }
                            }
                        }
                    }
                    yo[(std::size_t(t) * nh + h) * nw + w] = acc;
                }
    }
}

// gradients w.r.t. the parameters and (optionally) the layer input
template <class Real>
void conv3d_backward(const BasicTensor<Real>& in, const Conv3dLayer<Real>& layer,
                     const BasicTensor<Real>& gout, Conv3dLayer<Real>& glayer,
                     BasicTensor<Real>* gin) {
    const int ci = int(in.dim(0));
    const int nt = int(in.dim(1)), nh = int(in.dim(2)), nw = int(in.dim(3));
    const int co = int(layer.kernel.dim(0));
    const std::size_t cell_count = std::size_t(nt) * nh * nw;

    const Real* x = in.data();
    const Real* g = gout.data();
    Real* gk = glayer.kernel.data();
    Real* gb = glayer.bias.data();

    for (int o = 0; o < co; ++o) {
        const Real* go = g + std::size_t(o) * cell_count;
        Real acc = 0;
        for (std::size_t p = 0; p < cell_count; ++p) acc += go[p];
        gb[o] += acc;

        Real* gko = gk + std::size_t(o) * std::size_t(ci) * 27;
        for (int t = 0; t < nt; ++t)
            for (int h = 0; h < nh; ++h)
                for (int w = 0; w < nw; ++w) {
                    const Real gv = go[(std::size_t(t) * nh + h) * nw + w];
                    if (gv == Real(0)) continue;
                    for (int i = 0; i < ci; ++i) {
                        const Real* xi = x + std::size_t(i) * cell_count;
                        Real* gki = gko + std::size_t(i) * 27;
                        for (int dt = 0; dt < 3; ++dt) {
                            const int it = t + dt - 1;
                            if (it < 0 || it >= nt) continue;
                            for (int dh = 0; dh < 3; ++dh) {
                                const int ih = h + dh - 1;
                                if (ih < 0 || ih >= nh) continue;
                                for (int dw = 0; dw < 3; ++dw) {
                                    const int iw = w + dw - 1;
                                    if (iw < 0 || iw >= nw) continue;
                                    gki[(dt * 3 + dh) * 3 + dw] +=
                                        gv * xi[(std::size_t(it) * nh + ih) * nw + iw];
                                }
                            }
                        }
                    }
                }
    }

    if (gin == nullptr) return;
    const Real* k = layer.kernel.data();
    Real* gx = gin->data();
    for (int o = 0; o < co; ++o) {
        const Real* go = g + std::size_t(o) * cell_count;
        const Real* ko = k + std::size_t(o) * std::size_t(ci) * 27;
        for (int t = 0; t < nt; ++t)
            for (int h = 0; h < nh; ++h)
                for (int w = 0; w < nw; ++w) {
                    const Real gv = go[(std::size_t(t) * nh + h) * nw + w];
                    if (gv == Real(0)) continue;
                    for (int i = 0; i < ci; ++i) {
                        Real* gxi = gx + std::size_t(i) * cell_count;
                        const Real* ki = ko + std::size_t(i) * 27;
                        for (int dt = 0; dt < 3; ++dt) {
                            const int it = t + dt - 1;
                            if (it < 0 || it >= nt) continue;
                            for (int dh = 0; dh < 3; ++dh) {
                                const int ih = h + dh - 1;
                                if (ih < 0 || ih >= nh) continue;
                                for (int dw = 0; dw < 3; ++dw) {
                                    const int iw = w + dw - 1;
                                    if (iw < 0 || iw >= nw) continue;
                                    gxi[(std::size_t(it) * nh + ih) * nw + iw] +=
                                        gv * ki[(dt * 3 + dh) * 3 + dw];
                                }
                            }
                        }
                    }
                }
    }
}

// [C_in, T, H, W] input planes: correlation rows as per-source-cell channel
// vectors, then source feature channels, then target feature channels
template <class Real>
BasicTensor<Real> ants_input_planes(const AntsInput<Real>& input) {
    const GridShape g = input.grid;
    const std::size_t n = std::size_t(g.cells());
    const std::size_t m = input.corr.dim(0);

    std::size_t c_total = m * n;
    for (const auto& l : input.src_layers) c_total += l.dim(0);
    for (const auto& l : input.tgt_layers) c_total += l.dim(0);

    BasicTensor<Real> planes({c_total, std::size_t(g.t), std::size_t(g.h),
                              std::size_t(g.w)});
    Real* out = planes.data();
    const Real* corr = input.corr.data();
    // channel (i*N + q) at source cell s holds corr[i, s, q]
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < n; ++q) {
            Real* plane = out + (i * n + q) * n;
            const Real* src = corr + i * n * n + q;
            for (std::size_t s = 0; s < n; ++s) plane[s] = src[s * n];
        }
    std::size_t offset = m * n * n;
    for (const auto& l : input.src_layers) {
        std::copy(l.data(), l.data() + l.size(), out + offset);
        offset += l.size();
    }
    for (const auto& l : input.tgt_layers) {
        std::copy(l.data(), l.data() + l.size(), out + offset);
        offset += l.size();
    }
    return planes;
}

template <class Real>
struct ForwardTape {
    std::vector<BasicTensor<Real>> acts;  // acts[0]=input, then post-ReLU
    BasicTensor<Real> last;               // pre-reshape conv output [THW,T,H,W]
    BasicTensor<Real> match;              // [THW, THW]
};

template <class Real>
ForwardTape<Real> ants_forward_tape(const AntsInput<Real>& input,
                                    const AntsParamsT<Real>& params) {
    const AntsConfig& cfg = params.config;
    cfg.validate();
    const GridShape g = input.grid;
    if (!(g == cfg.grid))
        throw std::invalid_argument("ants_forward: grid mismatch");
    const std::size_t n = std::size_t(g.cells());

    if (int(params.layers.size()) != cfg.n_layers)
        throw std::invalid_argument("ants_forward: layer count mismatch");

    ForwardTape<Real> tape;
    tape.acts.push_back(ants_input_planes(input));
    if (int(tape.acts[0].dim(0)) != cfg.input_channels())
        throw std::invalid_argument("ants_forward: channel count mismatch");

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& layer = params.layers[std::size_t(l)];
        if (int(layer.kernel.dim(0)) != cfg.layer_output(l) ||
            int(layer.kernel.dim(1)) != cfg.layer_input(l))
            throw std::invalid_argument("ants_forward: kernel shape mismatch");
        BasicTensor<Real> out({std::size_t(cfg.layer_output(l)),
                               std::size_t(g.t), std::size_t(g.h),
                               std::size_t(g.w)});
        conv3d_forward(tape.acts.back(), layer, out);
        if (l + 1 < cfg.n_layers) {
            for (auto& v : out.values()) v = std::max(v, Real(0));  // ReLU
            tape.acts.push_back(std::move(out));
        } else {
            tape.last = std::move(out);
        }
    }

    // match[s][q] = channel q of the final conv at source cell s
    tape.match = BasicTensor<Real>({n, n});
    const Real* last = tape.last.data();
    Real* match = tape.match.data();
    for (std::size_t q = 0; q < n; ++q)
        for (std::size_t s = 0; s < n; ++s) match[s * n + q] = last[q * n + s];
    return tape;
}

// trilinear corner cells and weights of a grid position
struct FlowCorner {
    int cell;
    double weight;
};

inline std::vector<FlowCorner> flow_corners(const GridShape& g, double t,
                                            double h, double w) {
    t = std::clamp(t, 0.0, double(g.t - 1));
    h = std::clamp(h, 0.0, double(g.h - 1));
    w = std::clamp(w, 0.0, double(g.w - 1));
    const int t0 = int(t), h0 = int(h), w0 = int(w);
    const int t1 = std::min(t0 + 1, g.t - 1), h1 = std::min(h0 + 1, g.h - 1),
              w1 = std::min(w0 + 1, g.w - 1);
    const double at = t - t0, ah = h - h0, aw = w - w0;

    std::vector<FlowCorner> out;
    const int ts[2] = {t0, t1}, hs[2] = {h0, h1}, ws[2] = {w0, w1};
    const double wt[2] = {1 - at, at}, wh[2] = {1 - ah, ah}, ww[2] = {1 - aw, aw};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double weight = wt[a] * wh[b] * ww[c];
                if (weight == 0.0) continue;
                out.push_back({cell_index(g, ts[a], hs[b], ws[c]), weight});
            }
    return out;
}

// softmax probabilities with max subtraction; returns expected coordinates
template <class Real>
std::array<Real, 3> softmax_expectation(const Real* row, const GridShape& g,
                                        Real temperature,
                                        std::vector<Real>* probs) {
    const int n = g.cells();
    Real mx = row[0];
    for (int q = 1; q < n; ++q) mx = std::max(mx, row[q]);
    Real wsum = 0;
    if (probs != nullptr) probs->assign(std::size_t(n), Real(0));
    std::array<Real, 3> mean{0, 0, 0};
    for (int q = 0; q < n; ++q) {
        const Real e = std::exp((row[q] - mx) / temperature);
        wsum += e;
        if (probs != nullptr) (*probs)[std::size_t(q)] = e;
        const auto c = cell_coord(g, q);
        mean[0] += e * Real(c[0]);
        mean[1] += e * Real(c[1]);
        mean[2] += e * Real(c[2]);
    }
    for (auto& v : mean) v /= wsum;
    if (probs != nullptr)
        for (auto& p : *probs) p /= wsum;
    return mean;
}

inline void check_gts(const GridShape& g, const std::vector<GtCorrespondence>& gts) {
    if (gts.empty()) throw std::invalid_argument("sparse flow loss: empty gts");
    for (const auto& gt : gts)
        if (gt.t < 0 || gt.t > g.t - 1 || gt.h < 0 || gt.h > g.h - 1 ||
            gt.w < 0 || gt.w > g.w - 1)
            throw std::invalid_argument("sparse flow loss: gt source outside grid");
}

template <class Real>
Real sparse_flow_loss_on_match(const BasicTensor<Real>& match,
                               const GridShape& g,
                               const std::vector<GtCorrespondence>& gts,
                               Real temperature) {
    check_gts(g, gts);
    if (!(temperature > 0))
        throw std::invalid_argument("sparse flow loss: temperature must be > 0");
    const std::size_t n = std::size_t(g.cells());

    std::vector<char> have(n, 0);
    std::vector<std::array<Real, 3>> flow(n);
    auto row_flow = [&](int cell) -> const std::array<Real, 3>& {
        if (!have[std::size_t(cell)]) {
            const auto mean = softmax_expectation<Real>(
                match.data() + std::size_t(cell) * n, g, temperature, nullptr);
            const auto c = cell_coord(g, cell);
            flow[std::size_t(cell)] = {mean[0] - Real(c[0]), mean[1] - Real(c[1]),
                                       mean[2] - Real(c[2])};
            have[std::size_t(cell)] = 1;
        }
        return flow[std::size_t(cell)];
    };

    Real loss = 0;
    for (const auto& gt : gts) {
        std::array<Real, 3> pred{0, 0, 0};
        for (const auto& corner : flow_corners(g, gt.t, gt.h, gt.w)) {
            const auto& f = row_flow(corner.cell);
            for (int d = 0; d < 3; ++d) pred[d] += Real(corner.weight) * f[d];
        }
        const Real et = pred[0] - Real(gt.dt);
        const Real eh = pred[1] - Real(gt.dh);
        const Real ew = pred[2] - Real(gt.dw);
        loss += et * et + eh * eh + ew * ew;
    }
    return loss / Real(gts.size());
}

template <class Real>
Real ants_loss(const AntsInput<Real>& input, const AntsParamsT<Real>& params,
               const std::vector<GtCorrespondence>& gts, Real temperature) {
    const auto tape = ants_forward_tape(input, params);
    return sparse_flow_loss_on_match(tape.match, input.grid, gts, temperature);
}

template <class Real>
std::pair<Real, AntsParamsT<Real>> ants_gradient_full(
    const AntsInput<Real>& input, const AntsParamsT<Real>& params,
    const std::vector<GtCorrespondence>& gts, Real temperature) {
    const AntsConfig& cfg = params.config;
    const GridShape g = input.grid;
    const std::size_t n = std::size_t(g.cells());
    check_gts(g, gts);
    if (!(temperature > 0))
        throw std::invalid_argument("sparse flow loss: temperature must be > 0");

    const auto tape = ants_forward_tape(input, params);

    // forward through the decoder, keeping rows that the GT samples touch
    std::vector<char> have(n, 0);
    std::vector<std::array<Real, 3>> flow(n);
    auto row_flow = [&](int cell) -> const std::array<Real, 3>& {
        if (!have[std::size_t(cell)]) {
            const auto mean = softmax_expectation<Real>(
                tape.match.data() + std::size_t(cell) * n, g, temperature, nullptr);
            const auto c = cell_coord(g, cell);
            flow[std::size_t(cell)] = {mean[0] - Real(c[0]), mean[1] - Real(c[1]),
                                       mean[2] - Real(c[2])};
            have[std::size_t(cell)] = 1;
        }
        return flow[std::size_t(cell)];
    };

    Real loss = 0;
    std::vector<std::array<Real, 3>> gflow(n, {0, 0, 0});
    const Real inv_n = Real(1) / Real(gts.size());
    for (const auto& gt : gts) {
        const auto corners = flow_corners(g, gt.t, gt.h, gt.w);
        std::array<Real, 3> pred{0, 0, 0};
        for (const auto& corner : corners) {
            const auto& f = row_flow(corner.cell);
            for (int d = 0; d < 3; ++d) pred[d] += Real(corner.weight) * f[d];
        }
        const std::array<Real, 3> err{pred[0] - Real(gt.dt),
                                      pred[1] - Real(gt.dh),
                                      pred[2] - Real(gt.dw)};
        loss += (err[0] * err[0] + err[1] * err[1] + err[2] * err[2]) * inv_n;
        for (const auto& corner : corners)
            for (int d = 0; d < 3; ++d)
                gflow[std::size_t(corner.cell)][d] +=
                    Real(2) * inv_n * err[d] * Real(corner.weight);
    }

    // flow -> match volume rows (softmax-expectation backward)
    BasicTensor<Real> gmatch({n, n});
    std::vector<Real> probs;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& gf = gflow[s];
        if (gf[0] == Real(0) && gf[1] == Real(0) && gf[2] == Real(0)) continue;
        const auto mean = softmax_expectation<Real>(tape.match.data() + s * n, g,
                                                    temperature, &probs);
        for (std::size_t q = 0; q < n; ++q) {
            const auto c = cell_coord(g, int(q));
            const Real inner = gf[0] * (Real(c[0]) - mean[0]) +
                               gf[1] * (Real(c[1]) - mean[1]) +
                               gf[2] * (Real(c[2]) - mean[2]);
            gmatch[s * n + q] = probs[q] * inner / temperature;
        }
    }

    // match reshape backward: glast[q at channel][cell s] = gmatch[s][q]
    BasicTensor<Real> gout({n, std::size_t(g.t), std::size_t(g.h),
                            std::size_t(g.w)});
    for (std::size_t q = 0; q < n; ++q)
        for (std::size_t s = 0; s < n; ++s)
            gout[q * n + s] = gmatch[s * n + q];

    AntsParamsT<Real> grads;
    grads.config = cfg;
    grads.layers.resize(std::size_t(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
        grads.layers[std::size_t(l)].kernel =
            BasicTensor<Real>(params.layers[std::size_t(l)].kernel.dims());
        grads.layers[std::size_t(l)].bias =
            BasicTensor<Real>(params.layers[std::size_t(l)].bias.dims());
    }

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& in = tape.acts[std::size_t(l)];
        BasicTensor<Real> gin;
        BasicTensor<Real>* gin_ptr = nullptr;
        if (l > 0) {
            gin = BasicTensor<Real>(in.dims());
            gin_ptr = &gin;
        }
        conv3d_backward(in, params.layers[std::size_t(l)], gout,
                        grads.layers[std::size_t(l)], gin_ptr);
        if (l > 0) {
            // ReLU mask of the activation that fed this layer
            const auto& act = tape.acts[std::size_t(l)];
            for (std::size_t i = 0; i < gin.size(); ++i)
                if (act[i] <= Real(0)) gin[i] = Real(0);
            gout = std::move(gin);
        }
    }
    return {loss, std::move(grads)};
}

}  // namespace detail

}  // namespace stcorr
