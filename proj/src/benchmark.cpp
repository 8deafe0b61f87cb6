#include "stcorr/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "stcorr/tensor_io.hpp"

namespace stcorr {

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("parse failure in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::filesystem::path& path, const ojson& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os << j.dump(2) << '\n';
}

[[noreturn]] void reject(const std::string& video_id, const std::string& why) {
    throw std::runtime_error("annotation validation: video '" + video_id + "': " + why);
}

void validate_annotation(const VideoAnnotation& v) {
    if (v.id.empty()) throw std::runtime_error("annotation validation: empty video id");
    const std::set<int> moments(v.key_moments.begin(), v.key_moments.end());
    for (std::size_t i = 0; i < v.key_moments.size(); ++i) {
        const int f = v.key_moments[i];
        if (f < 0 || f >= v.dims.frames)
            reject(v.id, "key moment " + std::to_string(f) + " outside video");
        if (i > 0 && f <= v.key_moments[i - 1])
            reject(v.id, "key moments not strictly increasing");
    }
    for (const auto& kp : v.keypoints) {
        if (moments.count(kp.t) == 0)
            reject(v.id, "keypoint at frame " + std::to_string(kp.t) +
                             " is not a key moment");
        if (kp.visible &&
            (kp.x < 0 || kp.x > v.dims.width - 1 || kp.y < 0 ||
             kp.y > v.dims.height - 1))
            reject(v.id, "visible keypoint outside video dims");
    }
}

}  // namespace

// ---- annotation schema ----

std::vector<VideoAnnotation> annotations_from_json(const nlohmann::json& j) {
    std::vector<VideoAnnotation> out;
    for (const auto& jv : j.at("videos")) {
        VideoAnnotation v;
        v.id = jv.at("id").get<std::string>();
        v.action = jv.at("action").get<std::string>();
        v.split = jv.at("split").get<std::string>();
        const auto& jd = jv.at("dims");
        v.dims = VideoDims(jd.at("t").get<int>(), jd.at("h").get<int>(),
                           jd.at("w").get<int>());
        v.key_moments = jv.at("key_moments").get<std::vector<int>>();
        for (const auto& jk : jv.at("keypoints")) {
            SpaceTimeKeypoint kp;
            kp.t = jk.at("t").get<int>();
            kp.type_id = jk.at("type_id").get<int>();
            kp.x = jk.at("x").get<double>();
            kp.y = jk.at("y").get<double>();
            kp.visible = jk.at("visible").get<bool>();
            v.keypoints.push_back(kp);
        }
        validate_annotation(v);
        out.push_back(std::move(v));
    }
    return out;
}

ojson annotations_to_json(const std::vector<VideoAnnotation>& annotations) {
    ojson j;
    j["videos"] = ojson::array();
    for (const auto& v : annotations) {
        ojson jv;
        jv["id"] = v.id;
        jv["action"] = v.action;
        jv["split"] = v.split;
        jv["dims"] = {{"t", v.dims.frames}, {"h", v.dims.height}, {"w", v.dims.width}};
        jv["key_moments"] = v.key_moments;
        jv["keypoints"] = ojson::array();
        for (const auto& kp : v.keypoints)
            jv["keypoints"].push_back({{"t", kp.t},
                                       {"type_id", kp.type_id},
                                       {"x", kp.x},
                                       {"y", kp.y},
                                       {"visible", kp.visible}});
        j["videos"].push_back(std::move(jv));
    }
    return j;
}

std::vector<VideoAnnotation> load_annotations(const std::filesystem::path& path) {
    return annotations_from_json(read_json_file(path));
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<VideoAnnotation>& annotations) {
    write_json_file(path, annotations_to_json(annotations));
}

// ---- pair construction ----

void SetupSpec::validate() const {
    for (int id : human_types)
        if (object_types.count(id) != 0)
            throw std::invalid_argument("setup '" + name + "': type " +
                                        std::to_string(id) +
                                        " is both human and object");
}

SetupSpec SetupSpec::preset(const std::string& name) {
    SetupSpec s;
    s.name = name;
    s.object_types = {13, 14, 15};
    if (name == "3+3") {
        s.human_types = {0, 1, 2};
    } else if (name == "13+3") {
        for (int i = 0; i < 13; ++i) s.human_types.insert(i);
    } else {
        throw std::invalid_argument("unknown setup preset: " + name);
    }
    return s;
}

namespace {

// visible, setup-allowed type ids per key moment ordinal
std::vector<std::set<int>> visible_types_per_moment(const VideoAnnotation& v,
                                                    const SetupSpec& setup) {
    std::map<int, std::size_t> moment_of;
    for (std::size_t i = 0; i < v.key_moments.size(); ++i)
        moment_of[v.key_moments[i]] = i;
    std::vector<std::set<int>> out(v.key_moments.size());
    for (const auto& kp : v.keypoints)
        if (kp.visible && setup.allows(kp.type_id))
            out[moment_of.at(kp.t)].insert(kp.type_id);
    return out;
}

}  // namespace

std::vector<std::vector<int>> shared_visible_types(const VideoAnnotation& a,
                                                   const VideoAnnotation& b,
                                                   const SetupSpec& setup,
                                                   int min_shared) {
    if (a.action != b.action || a.split != b.split || a.id == b.id) return {};
    if (a.key_moments.size() != b.key_moments.size() || a.key_moments.empty())
        return {};

    const auto ta = visible_types_per_moment(a, setup);
    const auto tb = visible_types_per_moment(b, setup);
    std::vector<std::vector<int>> shared(ta.size());
    for (std::size_t k = 0; k < ta.size(); ++k) {
        std::set_intersection(ta[k].begin(), ta[k].end(), tb[k].begin(),
                              tb[k].end(), std::back_inserter(shared[k]));
        if (int(shared[k].size()) < min_shared) return {};
    }
    return shared;
}

std::vector<VideoPair> build_pairs(const std::vector<VideoAnnotation>& annotations,
                                   const SetupSpec& setup, int min_shared) {
    if (min_shared < 1)
        throw std::invalid_argument("build_pairs: min_shared must be >= 1");
    setup.validate();

    std::vector<VideoPair> out;
    for (const auto& a : annotations)
        for (const auto& b : annotations) {
            if (&a == &b) continue;
            auto shared = shared_visible_types(a, b, setup, min_shared);
            if (shared.empty()) continue;
            out.push_back(VideoPair{a.id, b.id, std::move(shared)});
        }
    return out;
}

PairList load_pair_list(const std::filesystem::path& path) {
    const auto j = read_json_file(path);
    PairList list;
    list.setup = j.at("setup").get<std::string>();
    list.min_shared = j.at("min_shared").get<int>();
    for (const auto& jp : j.at("pairs"))
        list.pairs.push_back(VideoPair{jp.at("src").get<std::string>(),
                                       jp.at("tgt").get<std::string>(),
                                       {}});
    return list;
}

void save_pair_list(const std::filesystem::path& path, const PairList& list) {
    ojson j;
    j["pairs"] = ojson::array();
    for (const auto& p : list.pairs)
        j["pairs"].push_back({{"src", p.src}, {"tgt", p.tgt}});
    j["setup"] = list.setup;
    j["min_shared"] = list.min_shared;
    write_json_file(path, j);
}

// ---- correspondence schema ----

CorrespondenceSet correspondences_from_json(const nlohmann::json& j) {
    CorrespondenceSet set;
    for (const auto& jp : j.at("pairs")) {
        PairCorrespondences pc;
        pc.src = jp.at("src").get<std::string>();
        pc.tgt = jp.at("tgt").get<std::string>();
        for (const auto& jm : jp.at("matches")) {
            Correspondence m;
            m.type_id = jm.at("type_id").get<int>();
            auto read_kp = [&](const nlohmann::json& jk) {
                SpaceTimeKeypoint kp;
                kp.x = jk.at("x").get<double>();
                kp.y = jk.at("y").get<double>();
                kp.t = jk.at("t").get<int>();
                kp.type_id = m.type_id;
                return kp;
            };
            m.src = read_kp(jm.at("src"));
            m.tgt = read_kp(jm.at("tgt"));
            pc.matches.push_back(m);
        }
        set.pairs.push_back(std::move(pc));
    }
    return set;
}

ojson correspondences_to_json(const CorrespondenceSet& set) {
    ojson j;
    j["pairs"] = ojson::array();
    for (const auto& pc : set.pairs) {
        ojson jp;
        jp["src"] = pc.src;
        jp["tgt"] = pc.tgt;
        jp["matches"] = ojson::array();
        for (const auto& m : pc.matches)
            jp["matches"].push_back(
                {{"type_id", m.type_id},
                 {"src", {{"x", m.src.x}, {"y", m.src.y}, {"t", m.src.t}}},
                 {"tgt", {{"x", m.tgt.x}, {"y", m.tgt.y}, {"t", m.tgt.t}}}});
        j["pairs"].push_back(std::move(jp));
    }
    return j;
}

CorrespondenceSet load_correspondences(const std::filesystem::path& path) {
    return correspondences_from_json(read_json_file(path));
}

void save_correspondences(const std::filesystem::path& path,
                          const CorrespondenceSet& set) {
    write_json_file(path, correspondences_to_json(set));
}

// ---- clip sampling and geometric augmentation ----

ClipSample sample_clip(const VideoAnnotation& video, int clip_len, Rng& rng) {
    if (clip_len < 1) throw std::invalid_argument("sample_clip: bad clip length");
    if (video.dims.frames < clip_len)
        throw std::runtime_error("sample_clip: video '" + video.id + "' has " +
                                 std::to_string(video.dims.frames) +
                                 " frames < clip length " + std::to_string(clip_len));

    int lo = 0, hi = video.dims.frames - clip_len;
    if (!video.key_moments.empty()) {
        const int first = video.key_moments.front();
        const int last = video.key_moments.back();
        if (last - first + 1 > clip_len)
            throw std::runtime_error(
                "sample_clip: video '" + video.id + "' key moments span " +
                std::to_string(last - first + 1) + " frames > clip length " +
                std::to_string(clip_len));
        lo = std::max(lo, last - clip_len + 1);
        hi = std::min(hi, first);
    }

    ClipSample out;
    out.window = TimeWindow{int(rng.uniform_int(lo, hi)), clip_len};
    out.clipped = video;
    out.clipped.dims.frames = clip_len;
    for (int& f : out.clipped.key_moments) f -= out.window.start;
    for (auto& kp : out.clipped.keypoints) kp.t -= out.window.start;
    return out;
}

AugmentResult geometric_augment(const VideoDims& dims, const TimeWindow& window,
                                const std::vector<SpaceTimeKeypoint>& keypoints,
                                double crop_prob, int out_h, int out_w, Rng& rng) {
    for (const auto& kp : keypoints)
        if (kp.visible && (kp.x < 0 || kp.x > dims.width - 1 || kp.y < 0 ||
                           kp.y > dims.height - 1))
            throw std::invalid_argument("geometric_augment: keypoint outside dims");

    const double W = dims.width, H = dims.height;
    CropRect crop{0, 0, W, H};
    if (rng.uniform() < crop_prob) {
        // one box for the whole clip so it stays temporally coherent
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double area = rng.uniform(0.5, 1.0) * W * H;
            const double aspect = rng.uniform(3.0 / 4.0, 4.0 / 3.0);
            const double cw = std::sqrt(area * aspect);
            const double ch = std::sqrt(area / aspect);
            if (cw > W || ch > H) continue;
            crop = CropRect{rng.uniform(0.0, W - cw), rng.uniform(0.0, H - ch),
                            cw, ch};
            break;
        }
    }

    AugmentResult out;
    out.transform = GeometricTransform{crop, out_h, out_w, window};
    out.keypoints = apply_transform(out.transform, keypoints);
    return out;
}

std::vector<SpaceTimeKeypoint> apply_transform(
    const GeometricTransform& transform,
    const std::vector<SpaceTimeKeypoint>& keypoints) {
    const CropRect& crop = transform.crop;
    const double sx = transform.out_w / crop.w;
    const double sy = transform.out_h / crop.h;
    std::vector<SpaceTimeKeypoint> out;
    out.reserve(keypoints.size());
    for (const auto& kp : keypoints) {
        SpaceTimeKeypoint k = kp;
        const bool inside = kp.x >= crop.x && kp.x < crop.x + crop.w &&
                            kp.y >= crop.y && kp.y < crop.y + crop.h;
        k.x = (kp.x - crop.x) * sx;
        k.y = (kp.y - crop.y) * sy;
        k.visible = kp.visible && inside;
        out.push_back(k);
    }
    return out;
}

std::vector<SpaceTimeKeypoint> invert_transform(
    const GeometricTransform& transform,
    const std::vector<SpaceTimeKeypoint>& keypoints) {
    const double sx = transform.out_w / transform.crop.w;
    const double sy = transform.out_h / transform.crop.h;
    std::vector<SpaceTimeKeypoint> out;
    out.reserve(keypoints.size());
    for (const auto& kp : keypoints) {
        SpaceTimeKeypoint k = kp;
        k.x = kp.x / sx + transform.crop.x;
        k.y = kp.y / sy + transform.crop.y;
        out.push_back(k);
    }
    return out;
}

// ---- feature file manifest ----

FeatureManifest manifest_from_json(const nlohmann::json& j) {
    FeatureManifest m;
    m.layer_ids = j.at("layer_ids").get<std::vector<int>>();
    for (const auto& jv : j.at("videos")) {
        ManifestEntry e;
        e.id = jv.at("id").get<std::string>();
        e.files = jv.at("files").get<std::vector<std::string>>();
        if (e.files.size() != m.layer_ids.size())
            throw std::runtime_error("manifest: video '" + e.id +
                                     "' file count does not match layer ids");
        m.videos.push_back(std::move(e));
    }
    return m;
}

ojson manifest_to_json(const FeatureManifest& manifest) {
    ojson j;
    j["layer_ids"] = manifest.layer_ids;
    j["videos"] = ojson::array();
    for (const auto& v : manifest.videos)
        j["videos"].push_back({{"id", v.id}, {"files", v.files}});
    return j;
}

FeatureManifest load_manifest(const std::filesystem::path& path) {
    return manifest_from_json(read_json_file(path));
}

void save_manifest(const std::filesystem::path& path, const FeatureManifest& m) {
    write_json_file(path, manifest_to_json(m));
}

std::vector<Tensor> load_video_features(const FeatureManifest& manifest,
                                        const std::string& video_id,
                                        const std::filesystem::path& base_dir) {
    for (const auto& v : manifest.videos) {
        if (v.id != video_id) continue;
        std::vector<Tensor> out;
        out.reserve(v.files.size());
        for (const auto& f : v.files) out.push_back(read_tensor(base_dir / f));
        return out;
    }
    throw std::runtime_error("manifest: unknown video id '" + video_id + "'");
}

// ---- synthetic dataset ----

void SynthConfig::validate() const {
    if (n_videos < 1 || n_actions < 1 || n_videos < n_actions)
        throw std::invalid_argument("synth: need at least one video per action");
    if (key_moments_per_action < 1 || key_moments_per_action > grid.t)
        throw std::invalid_argument("synth: key moments must fit the grid frames");
    if (layer_ids.size() != layer_channels.size() || layer_ids.empty())
        throw std::invalid_argument("synth: layer ids/channels mismatch");
    if (type_ids.empty())
        throw std::invalid_argument("synth: need at least one keypoint type");
    const int slots = int(type_ids.size()) * key_moments_per_action;
    for (int c : layer_channels)
        if (c < slots)
            throw std::invalid_argument(
                "synth: layer channels must be >= types * key moments for "
                "orthogonal latents");
    if (int(type_ids.size()) > grid.h * grid.w)
        throw std::invalid_argument("synth: more types than grid cells per frame");
    if (pixel_scale < 1) throw std::invalid_argument("synth: bad pixel scale");
}

namespace {

// random unit vector orthogonalized against `basis` (Gram-Schmidt)
std::vector<double> unit_ortho(Rng& rng, int dim,
                               const std::vector<std::vector<double>>& basis) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<double> v(std::size_t(dim), 0.0);
        for (auto& x : v) x = rng.normal();
        for (const auto& b : basis) {
            double d = 0;
            for (int i = 0; i < dim; ++i) d += v[std::size_t(i)] * b[std::size_t(i)];
            for (int i = 0; i < dim; ++i) v[std::size_t(i)] -= d * b[std::size_t(i)];
        }
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 1e-6) {
            for (auto& x : v) x /= n;
            return v;
        }
    }
    throw std::runtime_error("synth: failed to draw an orthogonal vector");
}

std::string video_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "vid%04d", i);
    return buf;
}

const char* kActionNames[] = {"bowling",       "golf_swing",    "tennis_serve",
                              "baseball_pitch", "squats",        "baseball_swing",
                              "tennis_forehand", "clean_and_jerk"};

std::string action_name(int i) {
    const int n = int(std::size(kActionNames));
    if (i < n) return kActionNames[i];
    return std::string(kActionNames[i % n]) + "_" + std::to_string(i / n);
}

}  // namespace

SynthDataset synth_dataset(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    const GridShape g = config.grid;
    const int n_types = int(config.type_ids.size());
    const int n_moments = config.key_moments_per_action;
    const int slots = n_types * n_moments;  // one latent per (type, moment)

    SynthDataset ds;
    ds.layer_ids = config.layer_ids;

    // per action: latent unit vectors, orthonormal across (type, moment)
    // slots, one set per layer
    struct ActionLatents {
        // [layer][slot][dim]
        std::vector<std::vector<std::vector<double>>> latents;
        std::vector<int> key_frames;  // key moment grid frames
    };
    std::vector<ActionLatents> actions(std::size_t(config.n_actions));
    for (int a = 0; a < config.n_actions; ++a) {
        Rng arng(derive_seed(seed, 0x10000 + std::uint64_t(a)));
        auto& act = actions[std::size_t(a)];
        act.latents.resize(config.layer_ids.size());
        for (std::size_t l = 0; l < config.layer_ids.size(); ++l) {
            auto& layer_lat = act.latents[l];
            for (int s = 0; s < slots; ++s)
                layer_lat.push_back(
                    unit_ortho(arng, config.layer_channels[l], layer_lat));
        }
        // distinct key moment frames, shared by all videos of the action
        std::vector<int> frames(std::size_t(g.t));
        for (int i = 0; i < g.t; ++i) frames[std::size_t(i)] = i;
        for (int i = 0; i < n_moments; ++i) {
            const int j = int(arng.uniform_int(i, g.t - 1));
            std::swap(frames[std::size_t(i)], frames[std::size_t(j)]);
        }
        act.key_frames.assign(frames.begin(), frames.begin() + n_moments);
        std::sort(act.key_frames.begin(), act.key_frames.end());
    }

    const VideoDims dims(g.t, (g.h - 1) * config.pixel_scale + 1,
                         (g.w - 1) * config.pixel_scale + 1);

    for (int v = 0; v < config.n_videos; ++v) {
        const int a = v % config.n_actions;
        const auto& act = actions[std::size_t(a)];
        Rng vrng(derive_seed(seed, 0x20000 + std::uint64_t(v)));

        VideoAnnotation ann;
        ann.id = video_name(v);
        ann.action = action_name(a);
        ann.split = config.split;
        ann.dims = dims;
        ann.key_moments = act.key_frames;

        // planted (h, w) node per (type, moment), distinct within a frame
        std::vector<std::array<int, 3>> planted(std::size_t(slots),
                                                std::array<int, 3>{0, 0, 0});
        for (int k = 0; k < n_moments; ++k) {
            std::vector<int> cells(std::size_t(g.h) * std::size_t(g.w));
            for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = int(i);
            for (int ty = 0; ty < n_types; ++ty) {
                const int j = int(vrng.uniform_int(ty, int(cells.size()) - 1));
                std::swap(cells[std::size_t(ty)], cells[std::size_t(j)]);
                const int cell = cells[std::size_t(ty)];
                planted[std::size_t(k * n_types + ty)] = {
                    act.key_frames[std::size_t(k)], cell / g.w, cell % g.w};
            }
        }

        for (int k = 0; k < n_moments; ++k)
            for (int ty = 0; ty < n_types; ++ty) {
                const auto& p = planted[std::size_t(k * n_types + ty)];
                SpaceTimeKeypoint kp;
                kp.t = p[0];
                kp.y = double(p[1] * config.pixel_scale);
                kp.x = double(p[2] * config.pixel_scale);
                kp.type_id = config.type_ids[std::size_t(ty)];
                kp.visible = true;
                ann.keypoints.push_back(kp);
            }

        // feature layers: orthogonal-complement distractors everywhere,
        // latent vectors at the planted nodes, then additive noise
        std::vector<Tensor> layers;
        for (std::size_t l = 0; l < config.layer_ids.size(); ++l) {
            const int c = config.layer_channels[l];
            const std::size_t cells = std::size_t(g.cells());
            Tensor layer({std::size_t(c), std::size_t(g.t), std::size_t(g.h),
                          std::size_t(g.w)});
            for (std::size_t cell = 0; cell < cells; ++cell) {
                const auto d = unit_ortho(vrng, c, act.latents[l]);
                for (int ch = 0; ch < c; ++ch)
                    layer[std::size_t(ch) * cells + cell] = float(d[std::size_t(ch)]);
            }
            for (int s = 0; s < slots; ++s) {
                const auto& p = planted[std::size_t(s)];
                const std::size_t cell = std::size_t(cell_index(g, p[0], p[1], p[2]));
                for (int ch = 0; ch < c; ++ch)
                    layer[std::size_t(ch) * cells + cell] =
                        float(act.latents[l][std::size_t(s)][std::size_t(ch)]);
            }
            if (config.noise_level > 0)
                for (auto& x : layer.values())
                    x += float(vrng.normal(0.0, config.noise_level));
            layers.push_back(std::move(layer));
        }

        ds.features[ann.id] = std::move(layers);
        ds.annotations.push_back(std::move(ann));
    }

    // planted ground truth for every same-action ordered pair
    for (const auto& a : ds.annotations)
        for (const auto& b : ds.annotations) {
            if (a.id == b.id || a.action != b.action) continue;
            PairCorrespondences pc;
            pc.src = a.id;
            pc.tgt = b.id;
            for (std::size_t k = 0; k < a.key_moments.size(); ++k)
                for (int ty : config.type_ids) {
                    auto find_kp = [&](const VideoAnnotation& v,
                                       int frame) -> const SpaceTimeKeypoint* {
                        for (const auto& kp : v.keypoints)
                            if (kp.type_id == ty && kp.t == frame) return &kp;
                        return nullptr;
                    };
                    const auto* ka = find_kp(a, a.key_moments[k]);
                    const auto* kb = find_kp(b, b.key_moments[k]);
                    if (ka == nullptr || kb == nullptr) continue;
                    Correspondence m;
                    m.type_id = ty;
                    m.src = *ka;
                    m.tgt = *kb;
                    pc.matches.push_back(m);
                }
            ds.ground_truth.pairs.push_back(std::move(pc));
        }

    return ds;
}

void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds) {
    std::filesystem::create_directories(dir);
    save_annotations(dir / "annotations.json", ds.annotations);
    save_correspondences(dir / "gt.json", ds.ground_truth);

    FeatureManifest manifest;
    manifest.layer_ids = ds.layer_ids;
    for (const auto& ann : ds.annotations) {
        ManifestEntry e;
        e.id = ann.id;
        const auto& layers = ds.features.at(ann.id);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string name =
                ann.id + ".layer" + std::to_string(ds.layer_ids[l]) + ".stt";
            write_tensor(dir / name, layers[l]);
            e.files.push_back(name);
        }
        manifest.videos.push_back(std::move(e));
    }
    save_manifest(dir / "manifest.json", manifest);
}

}  // namespace stcorr
