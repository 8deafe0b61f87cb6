#include "stcorr/ants.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "stcorr/rng.hpp"
#include "stcorr/tensor_io.hpp"

namespace stcorr {

void AntsConfig::validate() const {
    if (n_layers < 1) throw std::invalid_argument("ants: n_layers must be >= 1");
    if (hidden_channels < 1 && n_layers > 1)
        throw std::invalid_argument("ants: hidden_channels must be >= 1");
    if (corr_layers < 1) throw std::invalid_argument("ants: corr_layers must be >= 1");
    for (int c : src_channels)
        if (c < 1) throw std::invalid_argument("ants: bad source channel count");
    for (int c : tgt_channels)
        if (c < 1) throw std::invalid_argument("ants: bad target channel count");
}

AntsInput<float> make_ants_input(const CorrVolume& corr,
                                 const FeaturePyramid& src,
                                 const FeaturePyramid& tgt) {
    if (!(corr.grid == src.grid) || !(corr.grid == tgt.grid))
        throw std::invalid_argument("ants input: grid mismatch");
    AntsInput<float> input;
    input.grid = corr.grid;
    input.corr = corr.scores;
    input.src_layers = src.layers;
    input.tgt_layers = tgt.layers;
    return input;
}

AntsParams ants_init(const AntsConfig& config, std::uint64_t seed,
                     bool zero_init) {
    config.validate();
    Rng rng(seed);

    AntsParams params;
    params.config = config;
    for (int l = 0; l < config.n_layers; ++l) {
        const int ci = config.layer_input(l);
        const int co = config.layer_output(l);
        Conv3dLayer<float> layer;
        layer.kernel = Tensor({std::size_t(co), std::size_t(ci), 3, 3, 3});
        layer.bias = Tensor({std::size_t(co)});
        if (!zero_init) {
            const double a = std::sqrt(1.0 / (double(ci) * 27.0));
            for (auto& v : layer.kernel.values()) v = float(rng.uniform(-a, a));
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

MatchVolume ants_forward(const CorrVolume& corr, const FeaturePyramid& src,
                         const FeaturePyramid& tgt, const AntsParams& params) {
    const auto tape =
        detail::ants_forward_tape(make_ants_input(corr, src, tgt), params);
    MatchVolume mv;
    mv.grid = corr.grid;
    mv.scores = tape.match;
    return mv;
}

double sparse_flow_loss(const MatchVolume& mv,
                        const std::vector<GtCorrespondence>& gts,
                        double temperature) {
    // evaluated in double for a stable training signal
    const auto match = mv.scores.cast<double>();
    return detail::sparse_flow_loss_on_match<double>(match, mv.grid, gts,
                                                     temperature);
}

AntsGradient ants_gradient(const CorrVolume& corr, const FeaturePyramid& src,
                           const FeaturePyramid& tgt, const AntsParams& params,
                           const std::vector<GtCorrespondence>& gts,
                           double temperature) {
    auto [loss, grads] = detail::ants_gradient_full<float>(
        make_ants_input(corr, src, tgt), params, gts, float(temperature));
    return AntsGradient{double(loss), std::move(grads)};
}

TrainResult train_ants(const std::vector<TrainingPair>& pairs,
                       const AntsConfig& config, double lr, int steps,
                       std::uint64_t seed, double temperature) {
    if (pairs.empty()) throw std::invalid_argument("train: empty dataset");

    std::vector<AntsInput<float>> inputs;
    inputs.reserve(pairs.size());
    for (const auto& p : pairs)
        inputs.push_back(make_ants_input(p.corr, p.src, p.tgt));

    TrainResult result;
    result.params = ants_init(config, seed);
    Rng pick(derive_seed(seed, 0x747261696eULL));

    for (int step = 0; step < steps; ++step) {
        const std::size_t i =
            std::size_t(pick.uniform_int(0, std::int64_t(pairs.size()) - 1));
        auto [loss, grads] = detail::ants_gradient_full<float>(
            inputs[i], result.params, pairs[i].gts, float(temperature));
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at step " +
                                     std::to_string(step));
        result.losses.push_back(double(loss));
        for (int l = 0; l < config.n_layers; ++l) {
            auto& layer = result.params.layers[std::size_t(l)];
            const auto& glayer = grads.layers[std::size_t(l)];
            for (std::size_t j = 0; j < layer.kernel.size(); ++j)
                layer.kernel[j] -= float(lr) * glayer.kernel[j];
            for (std::size_t j = 0; j < layer.bias.size(); ++j)
                layer.bias[j] -= float(lr) * glayer.bias[j];
        }
    }
    return result;
}

std::vector<GtCorrespondence> to_grid_correspondences(
    const std::vector<Correspondence>& matches, const VideoDims& src_dims,
    const VideoDims& tgt_dims, const GridShape& grid) {
    const double st = axis_scale(src_dims.frames, grid.t);
    const double sh = axis_scale(src_dims.height, grid.h);
    const double sw = axis_scale(src_dims.width, grid.w);
    const double tt = axis_scale(tgt_dims.frames, grid.t);
    const double th = axis_scale(tgt_dims.height, grid.h);
    const double tw = axis_scale(tgt_dims.width, grid.w);

    std::vector<GtCorrespondence> out;
    out.reserve(matches.size());
    for (const auto& m : matches) {
        GtCorrespondence g;
        g.t = m.src.t * st;
        g.h = m.src.y * sh;
        g.w = m.src.x * sw;
        g.dt = m.tgt.t * tt - g.t;
        g.dh = m.tgt.y * th - g.h;
        g.dw = m.tgt.x * tw - g.w;
        out.push_back(g);
    }
    return out;
}

void save_ants_params(const std::filesystem::path& dir, const AntsParams& params,
                      std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["n_layers"] = params.config.n_layers;
    j["hidden_channels"] = params.config.hidden_channels;
    j["grid"] = {{"t", params.config.grid.t},
                 {"h", params.config.grid.h},
                 {"w", params.config.grid.w}};
    j["corr_layers"] = params.config.corr_layers;
    j["src_channels"] = params.config.src_channels;
    j["tgt_channels"] = params.config.tgt_channels;
    j["seed"] = seed;
    j["layers"] = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const std::string kernel = "layer" + std::to_string(l) + ".kernel.stt";
        const std::string bias = "layer" + std::to_string(l) + ".bias.stt";
        write_tensor(dir / kernel, params.layers[l].kernel);
        write_tensor(dir / bias, params.layers[l].bias);
        j["layers"].push_back({{"kernel", kernel}, {"bias", bias}});
    }
    std::ofstream os(dir / "params.json");
    if (!os) throw std::runtime_error("cannot write " + (dir / "params.json").string());
    os << j.dump(2) << '\n';
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed,
                                          const GridShape& grid,
                                          int feature_channels,
                                          int hidden_channels) {
    AntsConfig config;
    config.n_layers = 2;
    config.hidden_channels = hidden_channels;
    config.grid = grid;
    config.corr_layers = 1;
    config.src_channels = {feature_channels};
    config.tgt_channels = {feature_channels};
    const std::size_t n = std::size_t(grid.cells());

    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, attempt));
        GradCheckInstance inst;
        inst.input.grid = grid;
        inst.input.corr = BasicTensor<double>({1, n, n});
        for (auto& v : inst.input.corr.values()) v = rng.normal(0.0, 0.5);
        auto layer = [&] {
            BasicTensor<double> t({std::size_t(feature_channels),
                                   std::size_t(grid.t), std::size_t(grid.h),
                                   std::size_t(grid.w)});
            for (auto& v : t.values()) v = rng.normal(0.0, 0.5);
            return t;
        };
        inst.input.src_layers.push_back(layer());
        inst.input.tgt_layers.push_back(layer());

        inst.params.config = config;
        for (int l = 0; l < config.n_layers; ++l) {
            const int ci = config.layer_input(l);
            const int co = config.layer_output(l);
            Conv3dLayer<double> cl;
            cl.kernel = BasicTensor<double>(
                {std::size_t(co), std::size_t(ci), 3, 3, 3});
            cl.bias = BasicTensor<double>({std::size_t(co)});
            const double a = std::sqrt(1.0 / (double(ci) * 27.0));
            for (auto& v : cl.kernel.values()) v = rng.uniform(-a, a);
            inst.params.layers.push_back(std::move(cl));
        }

        const int n_gts = 4;
        for (int i = 0; i < n_gts; ++i) {
            GtCorrespondence gt;
            gt.t = rng.uniform(0.0, grid.t - 1.0);
            gt.h = rng.uniform(0.0, grid.h - 1.0);
            gt.w = rng.uniform(0.0, grid.w - 1.0);
            gt.dt = rng.uniform(-1.0, 1.0);
            gt.dh = rng.uniform(-1.0, 1.0);
            gt.dw = rng.uniform(-1.0, 1.0);
            inst.gts.push_back(gt);
        }

        // reject instances with ReLU pre-activations near zero
        const auto planes = detail::ants_input_planes(inst.input);
        BasicTensor<double> pre({std::size_t(config.layer_output(0)),
                                 std::size_t(grid.t), std::size_t(grid.h),
                                 std::size_t(grid.w)});
        detail::conv3d_forward(planes, inst.params.layers[0], pre);
        bool ok = true;
        for (double v : pre.values())
            if (std::abs(v) < 1e-3) {
                ok = false;
                break;
            }
        if (ok) return inst;
    }
}

double ants_gradient_check(const GradCheckInstance& instance, double fd_step) {
    const auto [loss, grads] = detail::ants_gradient_full<double>(
        instance.input, instance.params, instance.gts, instance.temperature);
    (void)loss;

    double max_rel = 0.0;
    AntsParamsT<double> shifted = instance.params;
    auto probe = [&](BasicTensor<double>& theta, const BasicTensor<double>& grad) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + fd_step;
            const double up = detail::ants_loss(instance.input, shifted,
                                                instance.gts, instance.temperature);
            theta[i] = saved - fd_step;
            const double down = detail::ants_loss(instance.input, shifted,
                                                  instance.gts, instance.temperature);
            theta[i] = saved;
            const double numeric = (up - down) / (2.0 * fd_step);
            const double analytic = grad[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({1.0, std::abs(analytic), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    };
    for (std::size_t l = 0; l < shifted.layers.size(); ++l) {
        probe(shifted.layers[l].kernel, grads.layers[l].kernel);
        probe(shifted.layers[l].bias, grads.layers[l].bias);
    }
    return max_rel;
}

AntsParams load_ants_params(const std::filesystem::path& dir) {
    std::ifstream is(dir / "params.json");
    if (!is) throw std::runtime_error("cannot open " + (dir / "params.json").string());
    nlohmann::json j;
    is >> j;

    AntsParams params;
    params.config.n_layers = j.at("n_layers").get<int>();
    params.config.hidden_channels = j.at("hidden_channels").get<int>();
    const auto& jg = j.at("grid");
    params.config.grid = GridShape(jg.at("t").get<int>(), jg.at("h").get<int>(),
                                   jg.at("w").get<int>());
    params.config.corr_layers = j.at("corr_layers").get<int>();
    params.config.src_channels = j.at("src_channels").get<std::vector<int>>();
    params.config.tgt_channels = j.at("tgt_channels").get<std::vector<int>>();
    for (const auto& jl : j.at("layers")) {
        Conv3dLayer<float> layer;
        layer.kernel = read_tensor(dir / jl.at("kernel").get<std::string>());
        layer.bias = read_tensor(dir / jl.at("bias").get<std::string>());
        params.layers.push_back(std::move(layer));
    }
    if (int(params.layers.size()) != params.config.n_layers)
        throw std::runtime_error("ants params: layer count mismatch");
    return params;
}

}  // namespace stcorr
