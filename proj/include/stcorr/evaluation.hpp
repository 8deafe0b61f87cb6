#pragma once

#include <map>
#include <string>
#include <vector>

#include "stcorr/benchmark.hpp"
#include "stcorr/keypoint.hpp"

namespace stcorr {

enum class KeypointClass { human, object };

inline const char* to_string(KeypointClass c) {
    return c == KeypointClass::human ? "human" : "object";
}

struct EvalConfig {
    double alpha = 0.1;
    std::vector<int> ks = {1, 3, 5};
    // overrides for the default rule (type_id < 13 -> human, else object)
    std::map<int, KeypointClass> class_map;

    KeypointClass classify(int type_id) const {
        auto it = class_map.find(type_id);
        if (it != class_map.end()) return it->second;
        return type_id < 13 ? KeypointClass::human : KeypointClass::object;
    }

    void validate() const;
};

// correct/total counts per k, indexed by position in EvalConfig::ks
struct Tally {
    std::vector<long> correct, total;

    void resize(std::size_t nk) {
        correct.assign(nk, 0);
        total.assign(nk, 0);
    }
    void add(std::size_t ki, bool ok) {
        total[ki] += 1;
        if (ok) correct[ki] += 1;
    }
    void merge(const Tally& other) {
        for (std::size_t i = 0; i < correct.size(); ++i) {
            correct[i] += other.correct[i];
            total[i] += other.total[i];
        }
    }
    double accuracy(std::size_t ki) const {
        return total[ki] == 0 ? 0.0 : 100.0 * double(correct[ki]) / double(total[ki]);
    }
};

// T@k accuracies, overall and partitioned by action and keypoint class
struct EvalReport {
    std::vector<int> ks;
    // counts are kept jointly per (action, class); marginals are derived so
    // partitions always sum to the overall counts
    std::map<std::string, std::map<std::string, Tally>> cells;
    long judged = 0;

    Tally overall() const;
    std::map<std::string, Tally> by_action() const;
    std::map<std::string, Tally> by_class() const;
};

// Larger side of the axis-aligned bounding box of the visible keypoints in
// one frame, floored at 1 pixel.
double bbox_scale(const std::vector<SpaceTimeKeypoint>& frame_keypoints);

// |t_pr - t_gt| <= k and ||(x_pr,y_pr) - (x_gt,y_gt)||_2 <= alpha*b, inclusive
bool judge_keypoint(const SpaceTimeKeypoint& pred, const SpaceTimeKeypoint& gt,
                    int k, double alpha, double b);

// Judges every ground-truth match against the prediction with the same
// (type_id, source time) key; missing predictions count as incorrect.
EvalReport evaluate(const CorrespondenceSet& predictions,
                    const CorrespondenceSet& ground_truth,
                    const std::vector<VideoAnnotation>& annotations,
                    const EvalConfig& config);

nlohmann::ordered_json report_to_json(const EvalReport& report,
                                      const std::string& setup);
// rows: setup,action,class,k,accuracy,n
std::string report_to_csv(const EvalReport& report, const std::string& setup);

}  // namespace stcorr
