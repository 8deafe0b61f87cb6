#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stcorr/ants.hpp"
#include "stcorr/features.hpp"
#include "stcorr/keypoint.hpp"
#include "stcorr/stmatch.hpp"

namespace stcorr {

struct UnimplementedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MatchContext {
    FeaturePyramid src, tgt;
    VideoDims src_dims, tgt_dims;
};

// time alignment as emitted by --align-out; for NN the total cost is the
// sum of the chosen per-frame distances, for DTW the optimal path cost
struct AlignmentRecord {
    std::vector<int> map;
    double total_cost = 0.0;
    bool monotone = false;
};

struct MatchOutput {
    std::vector<SpaceTimeKeypoint> keypoints;
    std::optional<DisplacementFlow> flow;          // dense matchers only
    std::optional<AlignmentRecord> alignment;      // sequential matchers only
};

enum class AntsDecode { soft, argmax };

struct MatcherConfig {
    std::string name = "st-match";
    double temperature = 0.05;
    FlowSampling sampling = FlowSampling::trilinear;
    int seq_layer_pick = -1;  // -1 selects the deepest layer
    AntsDecode ants_decode = AntsDecode::soft;
    std::shared_ptr<const AntsParams> ants_params;
};

class Matcher {
public:
    virtual ~Matcher() = default;
    virtual MatchOutput predict(const MatchContext& ctx,
                                const std::vector<SpaceTimeKeypoint>& kps) const = 0;
};

// registered names: st-match, sequential-nn, sequential-dtw, ants, st-cats
std::vector<std::string> matcher_names();

// throws UnimplementedError for st-cats, invalid_argument for unknown names
std::unique_ptr<Matcher> make_matcher(const MatcherConfig& config);

// 32×16×16 for the non-trainable matchers, 8×8×8 for the learned ones
GridShape default_grid(const std::string& matcher_name);

}  // namespace stcorr
