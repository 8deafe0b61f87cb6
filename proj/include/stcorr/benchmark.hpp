#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcorr/keypoint.hpp"
#include "stcorr/rng.hpp"
#include "stcorr/tensor.hpp"

namespace stcorr {

using ojson = nlohmann::ordered_json;

// keypoints are annotated only at key-moment frames
struct VideoAnnotation {
    std::string id;
    std::string action;
    std::string split;  // "train" | "val"
    VideoDims dims;
    std::vector<int> key_moments;           // strictly increasing frames
    std::vector<SpaceTimeKeypoint> keypoints;

    bool operator==(const VideoAnnotation&) const = default;
};

// ordered source/target pair with the shared visible types per key moment
struct VideoPair {
    std::string src, tgt;
    std::vector<std::vector<int>> shared_types;

    bool operator==(const VideoPair&) const = default;
};

// pair list as persisted: {pairs:[{src,tgt}], setup, min_shared}
struct PairList {
    std::vector<VideoPair> pairs;
    std::string setup;
    int min_shared = 3;
};

// keypoint vocabulary for a benchmark setup; human and object ids disjoint
struct SetupSpec {
    std::string name;
    std::set<int> human_types, object_types;

    bool allows(int type_id) const {
        return human_types.count(type_id) != 0 || object_types.count(type_id) != 0;
    }

    void validate() const;  // rejects overlapping id sets

    // "3+3" (head + both wrists + objects) and "13+3" (all human + objects)
    static SetupSpec preset(const std::string& name);
};

struct TimeWindow {
    int start = 0, length = 0;
    bool operator==(const TimeWindow&) const = default;
};

struct CropRect {
    double x = 0, y = 0, w = 0, h = 0;
    bool operator==(const CropRect&) const = default;
};

// one crop + scale + time window applied coherently to a whole clip
struct GeometricTransform {
    CropRect crop;
    int out_h = 128, out_w = 128;
    TimeWindow window;
};

struct ClipSample {
    TimeWindow window;
    VideoAnnotation clipped;  // key moments and keypoint times re-indexed
};

struct AugmentResult {
    GeometricTransform transform;
    std::vector<SpaceTimeKeypoint> keypoints;
};

// ---- annotation schema ----

std::vector<VideoAnnotation> annotations_from_json(const nlohmann::json& j);
ojson annotations_to_json(const std::vector<VideoAnnotation>& annotations);
std::vector<VideoAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path,
                      const std::vector<VideoAnnotation>& annotations);

// ---- pair construction ----

// Ordered pairs (both directions) of same-action, same-split videos whose
// setup-filtered visible keypoint types intersect in at least `min_shared`
// types at every key moment.
std::vector<VideoPair> build_pairs(const std::vector<VideoAnnotation>& annotations,
                                   const SetupSpec& setup, int min_shared = 3);

PairList load_pair_list(const std::filesystem::path& path);
void save_pair_list(const std::filesystem::path& path, const PairList& list);

// shared visible types per key moment for one ordered pair, or empty if the
// pair does not satisfy the setup/min_shared rule
std::vector<std::vector<int>> shared_visible_types(const VideoAnnotation& a,
                                                   const VideoAnnotation& b,
                                                   const SetupSpec& setup,
                                                   int min_shared);

// ---- correspondence schema (ground truth and predictions) ----

CorrespondenceSet correspondences_from_json(const nlohmann::json& j);
ojson correspondences_to_json(const CorrespondenceSet& set);
CorrespondenceSet load_correspondences(const std::filesystem::path& path);
void save_correspondences(const std::filesystem::path& path,
                          const CorrespondenceSet& set);

// ---- clip sampling and geometric augmentation ----

// uniformly random clip_len-frame window covering all key moments
ClipSample sample_clip(const VideoAnnotation& video, int clip_len, Rng& rng);

// With probability crop_prob draws one crop box (area >= 50% of the frame,
// aspect in [3/4, 4/3]) shared by all frames, then scales to out_size.
// Keypoints falling outside the crop are marked invisible.
AugmentResult geometric_augment(const VideoDims& dims, const TimeWindow& window,
                                const std::vector<SpaceTimeKeypoint>& keypoints,
                                double crop_prob, int out_h, int out_w, Rng& rng);

// crop+scale mapping of one transform; keypoints outside the crop box are
// marked invisible (times unchanged)
std::vector<SpaceTimeKeypoint> apply_transform(
    const GeometricTransform& transform,
    const std::vector<SpaceTimeKeypoint>& keypoints);

// exact inverse of the crop+scale mapping (times unchanged)
std::vector<SpaceTimeKeypoint> invert_transform(
    const GeometricTransform& transform,
    const std::vector<SpaceTimeKeypoint>& keypoints);

// ---- feature file manifest ----

struct ManifestEntry {
    std::string id;
    std::vector<std::string> files;  // one per layer id, in order

    bool operator==(const ManifestEntry&) const = default;
};

struct FeatureManifest {
    std::vector<int> layer_ids;
    std::vector<ManifestEntry> videos;

    bool operator==(const FeatureManifest&) const = default;
};

FeatureManifest manifest_from_json(const nlohmann::json& j);
ojson manifest_to_json(const FeatureManifest& manifest);
FeatureManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const FeatureManifest& m);

// raw layer tensors for one video, in manifest layer order
std::vector<Tensor> load_video_features(const FeatureManifest& manifest,
                                        const std::string& video_id,
                                        const std::filesystem::path& base_dir);

// ---- synthetic dataset with planted ground truth ----

struct SynthConfig {
    int n_videos = 4;
    int n_actions = 2;
    int key_moments_per_action = 2;
    GridShape grid{4, 4, 4};
    std::vector<int> layer_ids = {0, 1};
    std::vector<int> layer_channels = {16, 16};
    std::vector<int> type_ids = {0, 1, 2, 13, 14, 15};
    double noise_level = 0.0;
    int pixel_scale = 16;  // pixel spacing between adjacent grid nodes
    std::string split = "train";

    void validate() const;
};

struct SynthDataset {
    std::vector<VideoAnnotation> annotations;
    std::vector<int> layer_ids;
    std::map<std::string, std::vector<Tensor>> features;  // id -> per-layer
    CorrespondenceSet ground_truth;  // all same-action ordered pairs
};

// Videos of one action share per-type latent feature vectors planted at
// known grid nodes; with zero noise the planted matches are recoverable
// exactly at grid resolution. Deterministic per seed.
SynthDataset synth_dataset(const SynthConfig& config, std::uint64_t seed);

// writes annotations.json, manifest.json, gt.json and <id>.layer<k>.stt files
void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds);

}  // namespace stcorr
