#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "stcorr/ants.hpp"
#include "stcorr/benchmark.hpp"
#include "stcorr/evaluation.hpp"
#include "stcorr/log.hpp"
#include "stcorr/matcher.hpp"
#include "stcorr/run_config.hpp"
#include "stcorr/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace stcorr;

namespace {

// flag > config file > built-in default
template <class T>
T resolve(const CLI::Option* opt, const T& flag_value,
          const std::optional<T>& cfg_value, const T& fallback) {
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (cfg_value.has_value()) return *cfg_value;
    return fallback;
}

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string grid_text;
    std::string matcher = "st-match";
    double temperature = 0.05;
    double alpha = 0.1;
    std::string k_text = "1,3,5";
    int min_shared = 3;
    int jobs = 1;
    std::string out;

    CLI::Option *o_seed = nullptr, *o_grid = nullptr, *o_matcher = nullptr,
                *o_temperature = nullptr, *o_alpha = nullptr, *o_k = nullptr,
                *o_min_shared = nullptr, *o_jobs = nullptr, *o_out = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file; flags override");
        o_seed = cmd->add_option("--seed", seed, "run seed");
        o_grid = cmd->add_option("--grid", grid_text, "feature grid TxHxW");
        o_matcher = cmd->add_option("--matcher", matcher,
                                    "st-match|sequential-nn|sequential-dtw|ants|st-cats");
        o_temperature = cmd->add_option("--temperature", temperature,
                                        "soft-argmax temperature");
        o_alpha = cmd->add_option("--alpha", alpha, "PCK threshold factor");
        o_k = cmd->add_option("--k", k_text, "time allowances, csv");
        o_min_shared = cmd->add_option("--min-shared", min_shared,
                                       "min shared visible keypoints per moment");
        o_jobs = cmd->add_option("--jobs", jobs, "worker threads");
        o_out = cmd->add_option("--out", out, "output path");
    }

    RunConfig file_config() const {
        if (config_path.empty()) return {};
        return load_run_config(config_path);
    }
};

std::uint64_t pick_seed(const CommonFlags& c, const RunConfig& cfg) {
    return resolve<std::uint64_t>(c.o_seed, c.seed, cfg.seed, 0);
}

std::string require_out(const CommonFlags& c, const RunConfig& cfg) {
    const std::string out = resolve<std::string>(c.o_out, c.out, cfg.out, "");
    if (out.empty()) throw std::invalid_argument("--out is required");
    return out;
}

// ---- synth ----

int run_synth(const CommonFlags& common, const SynthConfig& synth_flags) {
    const RunConfig cfg = common.file_config();
    SynthConfig sc = synth_flags;
    if (common.o_grid->count() > 0)
        sc.grid = parse_grid(common.grid_text);
    else if (cfg.grid.has_value())
        sc.grid = *cfg.grid;

    const std::uint64_t seed = pick_seed(common, cfg);
    const fs::path out = require_out(common, cfg);
    const SynthDataset ds = synth_dataset(sc, seed);
    write_synth_dataset(out, ds);
    std::cout << "synth: wrote " << ds.annotations.size() << " videos, "
              << ds.ground_truth.pairs.size() << " gt pairs to " << out.string()
              << "\n";
    return 0;
}

// ---- build-pairs ----

int run_build_pairs(const CommonFlags& common, const std::string& annotations_path,
                    const std::string& setup_name) {
    const RunConfig cfg = common.file_config();
    const auto annotations = load_annotations(annotations_path);
    const std::string setup_id =
        !setup_name.empty() ? setup_name : cfg.setup.value_or("3+3");
    const SetupSpec setup = SetupSpec::preset(setup_id);
    const int min_shared =
        resolve<int>(common.o_min_shared, common.min_shared, cfg.min_shared, 3);

    PairList list;
    list.pairs = build_pairs(annotations, setup, min_shared);
    list.setup = setup_id;
    list.min_shared = min_shared;
    save_pair_list(require_out(common, cfg), list);
    std::cout << "build-pairs: " << list.pairs.size() << " ordered pairs ("
              << setup_id << ", min_shared=" << min_shared << ")\n";
    return 0;
}

// ---- match ----

struct LoadedData {
    std::vector<VideoAnnotation> annotations;
    std::map<std::string, const VideoAnnotation*> by_id;
    FeatureManifest manifest;
    fs::path base_dir;
};

LoadedData load_data(const std::string& data_dir,
                     const std::string& annotations_path,
                     const std::string& manifest_path) {
    LoadedData d;
    d.base_dir = data_dir.empty() ? fs::path(manifest_path).parent_path()
                                  : fs::path(data_dir);
    const fs::path ann = annotations_path.empty()
                             ? fs::path(data_dir) / "annotations.json"
                             : fs::path(annotations_path);
    const fs::path man = manifest_path.empty()
                             ? fs::path(data_dir) / "manifest.json"
                             : fs::path(manifest_path);
    d.annotations = load_annotations(ann);
    d.manifest = load_manifest(man);
    for (const auto& a : d.annotations) d.by_id[a.id] = &a;
    return d;
}

std::map<std::string, FeaturePyramid> build_pyramids(
    const LoadedData& data, const std::vector<VideoPair>& pairs,
    const GridShape& grid, bool normalize) {
    std::map<std::string, FeaturePyramid> out;
    for (const auto& p : pairs)
        for (const std::string& id : {p.src, p.tgt}) {
            if (out.count(id) != 0) continue;
            const auto raw = load_video_features(data.manifest, id, data.base_dir);
            out[id] =
                assemble_hyperpixel(raw, data.manifest.layer_ids, grid, normalize);
        }
    return out;
}

// visible source keypoints restricted to the shared types per key moment
std::vector<SpaceTimeKeypoint> source_keypoints(
    const VideoAnnotation& src, const std::vector<std::vector<int>>& shared) {
    std::vector<SpaceTimeKeypoint> out;
    for (std::size_t k = 0; k < shared.size(); ++k) {
        const int frame = src.key_moments[k];
        for (int type : shared[k])
            for (const auto& kp : src.keypoints)
                if (kp.visible && kp.type_id == type && kp.t == frame) {
                    out.push_back(kp);
                    break;
                }
    }
    return out;
}

void run_pair_pool(std::size_t n, int jobs,
                   const std::function<void(std::size_t)>& work) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    if (jobs <= 1) {
        body();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < jobs; ++i) threads.emplace_back(body);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

int run_match(const CommonFlags& common, const std::string& data_dir,
              const std::string& annotations_path, const std::string& manifest_path,
              const std::string& pairs_path, const std::string& params_dir,
              const std::string& flow_out, const std::string& align_out,
              bool no_normalize) {
    const RunConfig cfg = common.file_config();
    const std::string matcher_name =
        resolve<std::string>(common.o_matcher, common.matcher, cfg.matcher,
                             "st-match");

    MatcherConfig mc;
    mc.name = matcher_name;
    mc.temperature = resolve<double>(common.o_temperature, common.temperature,
                                     cfg.temperature, 0.05);
    if (!params_dir.empty())
        mc.ants_params = std::make_shared<AntsParams>(load_ants_params(params_dir));
    const auto matcher = make_matcher(mc);  // st-cats raises here

    const LoadedData data = load_data(data_dir, annotations_path, manifest_path);
    const PairList pair_list = load_pair_list(pairs_path);
    const SetupSpec setup = SetupSpec::preset(pair_list.setup);

    GridShape grid = default_grid(matcher_name);
    if (common.o_grid->count() > 0)
        grid = parse_grid(common.grid_text);
    else if (cfg.grid.has_value())
        grid = *cfg.grid;
    const bool normalize = no_normalize ? false : cfg.normalize_features.value_or(true);

    const auto pyramids = build_pyramids(data, pair_list.pairs, grid, normalize);

    const int jobs = resolve<int>(common.o_jobs, common.jobs, cfg.jobs, 1);
    CorrespondenceSet preds;
    preds.pairs.resize(pair_list.pairs.size());
    std::vector<std::optional<DisplacementFlow>> flows(pair_list.pairs.size());
    std::vector<std::optional<AlignmentRecord>> alignments(pair_list.pairs.size());

    run_pair_pool(pair_list.pairs.size(), jobs, [&](std::size_t i) {
        const VideoPair& vp = pair_list.pairs[i];
        const auto sit = data.by_id.find(vp.src);
        const auto tit = data.by_id.find(vp.tgt);
        if (sit == data.by_id.end() || tit == data.by_id.end())
            throw std::runtime_error("pair references unknown video '" + vp.src +
                                     "' -> '" + vp.tgt + "'");
        const VideoAnnotation& src = *sit->second;
        const VideoAnnotation& tgt = *tit->second;

        const auto shared =
            shared_visible_types(src, tgt, setup, pair_list.min_shared);
        if (shared.empty())
            throw std::runtime_error("pair " + vp.src + " -> " + vp.tgt +
                                     " no longer satisfies the setup");
        const auto kps = source_keypoints(src, shared);

        MatchContext ctx;
        ctx.src = pyramids.at(vp.src);
        ctx.tgt = pyramids.at(vp.tgt);
        ctx.src_dims = src.dims;
        ctx.tgt_dims = tgt.dims;
        const MatchOutput result = matcher->predict(ctx, kps);

        PairCorrespondences pc;
        pc.src = vp.src;
        pc.tgt = vp.tgt;
        for (std::size_t j = 0; j < kps.size(); ++j) {
            Correspondence m;
            m.type_id = kps[j].type_id;
            m.src = kps[j];
            m.tgt = result.keypoints[j];
            pc.matches.push_back(m);
        }
        preds.pairs[i] = std::move(pc);
        flows[i] = result.flow;
        alignments[i] = result.alignment;
    });

    save_correspondences(require_out(common, cfg), preds);
    if (!flow_out.empty()) {
        fs::create_directories(flow_out);
        for (std::size_t i = 0; i < flows.size(); ++i) {
            if (!flows[i].has_value()) continue;
            const auto& vp = pair_list.pairs[i];
            write_tensor(fs::path(flow_out) / (vp.src + "__" + vp.tgt + ".flow.stt"),
                         flows[i]->flow);
        }
    }
    if (!align_out.empty()) {
        fs::create_directories(align_out);
        for (std::size_t i = 0; i < alignments.size(); ++i) {
            if (!alignments[i].has_value()) continue;
            const auto& vp = pair_list.pairs[i];
            nlohmann::ordered_json j;
            j["map"] = alignments[i]->map;
            j["total_cost"] = alignments[i]->total_cost;
            j["monotone"] = alignments[i]->monotone;
            std::ofstream os(fs::path(align_out) /
                             (vp.src + "__" + vp.tgt + ".align.json"));
            if (!os) throw std::runtime_error("cannot write alignment output");
            os << j.dump(2) << '\n';
        }
    }
    std::cout << "match: " << preds.pairs.size() << " pairs with " << matcher_name
              << "\n";
    return 0;
}

// ---- train-ants ----

int run_train_ants(const CommonFlags& common, const std::string& data_dir,
                   const std::string& annotations_path,
                   const std::string& manifest_path, const std::string& pairs_path,
                   const std::string& gt_path, int n_layers, int hidden,
                   double lr, int steps, bool no_normalize) {
    const RunConfig cfg = common.file_config();
    const LoadedData data = load_data(data_dir, annotations_path, manifest_path);
    const PairList pair_list = load_pair_list(pairs_path);
    const fs::path gt_file =
        gt_path.empty() ? fs::path(data_dir) / "gt.json" : fs::path(gt_path);
    const CorrespondenceSet gt = load_correspondences(gt_file);

    GridShape grid(8, 8, 8);
    if (common.o_grid->count() > 0)
        grid = parse_grid(common.grid_text);
    else if (cfg.grid.has_value())
        grid = *cfg.grid;
    const bool normalize = no_normalize ? false : cfg.normalize_features.value_or(true);
    const auto pyramids = build_pyramids(data, pair_list.pairs, grid, normalize);

    std::vector<TrainingPair> training;
    for (const auto& vp : pair_list.pairs) {
        const PairCorrespondences* pc = nullptr;
        for (const auto& g : gt.pairs)
            if (g.src == vp.src && g.tgt == vp.tgt) {
                pc = &g;
                break;
            }
        if (pc == nullptr || pc->matches.empty()) {
            log::warn("train-ants: no ground truth for pair " + vp.src + " -> " +
                      vp.tgt + ", skipping");
            continue;
        }
        TrainingPair tp;
        tp.src = pyramids.at(vp.src);
        tp.tgt = pyramids.at(vp.tgt);
        tp.corr = stack_correlations(tp.src, tp.tgt);
        tp.gts = to_grid_correspondences(pc->matches, data.by_id.at(vp.src)->dims,
                                         data.by_id.at(vp.tgt)->dims, grid);
        training.push_back(std::move(tp));
    }
    if (training.empty())
        throw std::runtime_error("train-ants: no pairs with ground truth");

    AntsConfig config;
    config.n_layers = n_layers;
    config.hidden_channels = hidden;
    config.grid = grid;
    config.corr_layers = int(data.manifest.layer_ids.size());
    const auto& sample = training.front();
    for (const auto& l : sample.src.layers) config.src_channels.push_back(int(l.dim(0)));
    for (const auto& l : sample.tgt.layers) config.tgt_channels.push_back(int(l.dim(0)));

    const std::uint64_t seed = pick_seed(common, cfg);
    const double temperature = resolve<double>(
        common.o_temperature, common.temperature, cfg.temperature, 0.05);
    const TrainResult result =
        train_ants(training, config, lr, steps, seed, temperature);

    for (std::size_t i = 0; i < result.losses.size(); ++i)
        log::info("step " + std::to_string(i) + " loss " +
                  std::to_string(result.losses[i]));
    save_ants_params(require_out(common, cfg), result.params, seed);
    std::cout << "train-ants: " << steps << " steps on " << training.size()
              << " pairs, loss " << (result.losses.empty() ? 0.0 : result.losses.front())
              << " -> " << (result.losses.empty() ? 0.0 : result.losses.back())
              << "\n";
    return 0;
}

// ---- eval ----

int run_eval(const CommonFlags& common, const std::string& pred_path,
             const std::string& gt_path, const std::string& annotations_path,
             const std::string& setup_name, const std::string& csv_path) {
    const RunConfig cfg = common.file_config();
    const auto predictions = load_correspondences(pred_path);
    const auto gt = load_correspondences(gt_path);
    const auto annotations = load_annotations(annotations_path);

    EvalConfig ec;
    ec.alpha = resolve<double>(common.o_alpha, common.alpha, cfg.alpha, 0.1);
    ec.ks = common.o_k->count() > 0 ? parse_ks(common.k_text)
                                    : cfg.ks.value_or(std::vector<int>{1, 3, 5});
    const EvalReport report = evaluate(predictions, gt, annotations, ec);

    const std::string setup_id =
        !setup_name.empty() ? setup_name : cfg.setup.value_or("3+3");
    const Tally overall = report.overall();
    for (std::size_t i = 0; i < report.ks.size(); ++i)
        std::printf("T@%d-PCK@%g: %.2f (n=%ld)\n", report.ks[i], ec.alpha,
                    overall.accuracy(i), overall.total[i]);

    const std::string out = resolve<std::string>(common.o_out, common.out, cfg.out, "");
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << report_to_json(report, setup_id).dump(2) << '\n';
    }
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw std::runtime_error("cannot write " + csv_path);
        os << report_to_csv(report, setup_id);
    }
    return 0;
}

// ---- gradcheck ----

int run_gradcheck(const CommonFlags& common, int n_seeds, double step,
                  double tolerance) {
    const RunConfig cfg = common.file_config();
    const std::uint64_t base = pick_seed(common, cfg);
    GridShape grid(2, 2, 2);
    if (common.o_grid->count() > 0)
        grid = parse_grid(common.grid_text);
    else if (cfg.grid.has_value())
        grid = *cfg.grid;

    bool ok = true;
    for (int i = 0; i < n_seeds; ++i) {
        const auto instance = make_gradcheck_instance(base + std::uint64_t(i), grid);
        const double rel = ants_gradient_check(instance, step);
        const bool pass = rel < tolerance;
        ok = ok && pass;
        std::printf("gradcheck seed %llu: max rel err %.3e [%s]\n",
                    static_cast<unsigned long long>(base + std::uint64_t(i)), rel,
                    pass ? "ok" : "FAIL");
    }
    if (!ok) throw std::runtime_error("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"space-time semantic correspondence toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    CommonFlags synth_common;
    synth_common.attach(synth);
    SynthConfig synth_cfg;
    synth->add_option("--videos", synth_cfg.n_videos, "video count");
    synth->add_option("--actions", synth_cfg.n_actions, "action count");
    synth->add_option("--moments", synth_cfg.key_moments_per_action,
                      "key moments per action");
    synth->add_option("--noise", synth_cfg.noise_level, "feature noise stddev");
    synth->add_option("--pixel-scale", synth_cfg.pixel_scale,
                      "pixels between grid nodes");
    synth->add_option("--split", synth_cfg.split, "split label");

    // build-pairs
    auto* bp = app.add_subcommand("build-pairs", "construct benchmark pairs");
    CommonFlags bp_common;
    bp_common.attach(bp);
    std::string bp_annotations, bp_setup;
    bp->add_option("--annotations", bp_annotations, "annotations.json")->required();
    bp->add_option("--setup", bp_setup, "3+3 or 13+3");

    // match
    auto* match = app.add_subcommand("match", "predict correspondences for pairs");
    CommonFlags match_common;
    match_common.attach(match);
    std::string match_data, match_annotations, match_manifest, match_pairs,
        match_params, match_flow_out, match_align_out;
    bool match_no_normalize = false;
    match->add_option("--data", match_data, "dataset directory");
    match->add_option("--annotations", match_annotations, "annotations.json");
    match->add_option("--manifest", match_manifest, "manifest.json");
    match->add_option("--pairs", match_pairs, "pair list json")->required();
    match->add_option("--params", match_params, "trained ants params dir");
    match->add_option("--flow-out", match_flow_out,
                      "directory for per-pair displacement flows");
    match->add_option("--align-out", match_align_out,
                      "directory for per-pair time alignments (sequential)");
    match->add_flag("--no-normalize", match_no_normalize,
                    "skip per-position feature normalization");

    // train-ants
    auto* train = app.add_subcommand("train-ants", "train the aggregation network");
    CommonFlags train_common;
    train_common.attach(train);
    std::string train_data, train_annotations, train_manifest, train_pairs, train_gt;
    int train_layers = 2, train_hidden = 16, train_steps = 200;
    double train_lr = 1.2e-4;
    bool train_no_normalize = false;
    train->add_option("--data", train_data, "dataset directory");
    train->add_option("--annotations", train_annotations, "annotations.json");
    train->add_option("--manifest", train_manifest, "manifest.json");
    train->add_option("--pairs", train_pairs, "pair list json")->required();
    train->add_option("--gt", train_gt, "ground truth correspondences json");
    train->add_option("--layers", train_layers, "conv layer count");
    train->add_option("--hidden", train_hidden, "hidden channels");
    train->add_option("--lr", train_lr, "learning rate");
    train->add_option("--steps", train_steps, "SGD steps");
    train->add_flag("--no-normalize", train_no_normalize,
                    "skip per-position feature normalization");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "T@k-PCK@alpha report");
    CommonFlags eval_common;
    eval_common.attach(eval_cmd);
    std::string eval_pred, eval_gt, eval_annotations, eval_setup, eval_csv;
    eval_cmd->add_option("--pred", eval_pred, "predictions json")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground truth json")->required();
    eval_cmd->add_option("--annotations", eval_annotations, "annotations.json")
        ->required();
    eval_cmd->add_option("--setup", eval_setup, "setup label for the report");
    eval_cmd->add_option("--csv", eval_csv, "CSV output path");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference check of the ants gradients");
    CommonFlags gc_common;
    gc_common.attach(gc);
    int gc_seeds = 20;
    double gc_step = 1e-5, gc_tolerance = 1e-4;
    gc->add_option("--seeds", gc_seeds, "number of random instances");
    gc->add_option("--step", gc_step, "finite-difference step");
    gc->add_option("--tolerance", gc_tolerance, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_common, synth_cfg);
        if (bp->parsed()) return run_build_pairs(bp_common, bp_annotations, bp_setup);
        if (match->parsed())
            return run_match(match_common, match_data, match_annotations,
                             match_manifest, match_pairs, match_params,
                             match_flow_out, match_align_out, match_no_normalize);
        if (train->parsed())
            return run_train_ants(train_common, train_data, train_annotations,
                                  train_manifest, train_pairs, train_gt,
                                  train_layers, train_hidden, train_lr,
                                  train_steps, train_no_normalize);
        if (eval_cmd->parsed())
            return run_eval(eval_common, eval_pred, eval_gt, eval_annotations,
                            eval_setup, eval_csv);
        if (gc->parsed())
            return run_gradcheck(gc_common, gc_seeds, gc_step, gc_tolerance);
    } catch (const std::exception& e) {
        std::cerr << "stcorr: error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
