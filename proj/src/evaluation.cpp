#include "stcorr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stcorr {

void EvalConfig::validate() const {
    if (!(alpha > 0)) throw std::invalid_argument("eval: alpha must be > 0");
    if (ks.empty()) throw std::invalid_argument("eval: ks must be nonempty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] < 0) throw std::invalid_argument("eval: ks must be non-negative");
        if (i > 0 && ks[i] <= ks[i - 1])
            throw std::invalid_argument("eval: ks must be sorted ascending");
    }
}

double bbox_scale(const std::vector<SpaceTimeKeypoint>& frame_keypoints) {
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool any = false;
    for (const auto& kp : frame_keypoints) {
        if (!kp.visible) continue;
        if (!any) {
            min_x = max_x = kp.x;
            min_y = max_y = kp.y;
            any = true;
        } else {
            min_x = std::min(min_x, kp.x);
            max_x = std::max(max_x, kp.x);
            min_y = std::min(min_y, kp.y);
            max_y = std::max(max_y, kp.y);
        }
    }
    if (!any) throw std::invalid_argument("bbox_scale: no visible keypoints");
    return std::max({max_x - min_x, max_y - min_y, 1.0});
}

bool judge_keypoint(const SpaceTimeKeypoint& pred, const SpaceTimeKeypoint& gt,
                    int k, double alpha, double b) {
    if (!(b > 0)) throw std::invalid_argument("judge_keypoint: b must be > 0");
    if (std::abs(pred.t - gt.t) > k) return false;
    const double dx = pred.x - gt.x, dy = pred.y - gt.y;
    return std::sqrt(dx * dx + dy * dy) <= alpha * b;
}

Tally EvalReport::overall() const {
    Tally t;
    t.resize(ks.size());
    for (const auto& [action, row] : cells)
        for (const auto& [cls, tally] : row) t.merge(tally);
    return t;
}

std::map<std::string, Tally> EvalReport::by_action() const {
    std::map<std::string, Tally> out;
    for (const auto& [action, row] : cells) {
        Tally t;
        t.resize(ks.size());
        for (const auto& [cls, tally] : row) t.merge(tally);
        out[action] = std::move(t);
    }
    return out;
}

std::map<std::string, Tally> EvalReport::by_class() const {
    std::map<std::string, Tally> out;
    for (const auto& [action, row] : cells)
        for (const auto& [cls, tally] : row) {
            auto [it, fresh] = out.try_emplace(cls);
            if (fresh) it->second.resize(ks.size());
            it->second.merge(tally);
        }
    return out;
}

EvalReport evaluate(const CorrespondenceSet& predictions,
                    const CorrespondenceSet& ground_truth,
                    const std::vector<VideoAnnotation>& annotations,
                    const EvalConfig& config) {
    config.validate();

    std::map<std::string, const VideoAnnotation*> by_id;
    for (const auto& a : annotations) by_id[a.id] = &a;

    // predictions joined on (pair, type_id, source time)
    using MatchKey = std::pair<int, int>;
    std::map<std::pair<std::string, std::string>,
             std::map<MatchKey, const Correspondence*>>
        pred_index;
    for (const auto& pc : predictions.pairs) {
        bool known = false;
        for (const auto& gt_pc : ground_truth.pairs)
            if (gt_pc.src == pc.src && gt_pc.tgt == pc.tgt) {
                known = true;
                break;
            }
        if (!known)
            throw std::invalid_argument("evaluate: prediction references unknown pair " +
                                        pc.src + " -> " + pc.tgt);
        auto& slot = pred_index[{pc.src, pc.tgt}];
        for (const auto& m : pc.matches) {
            const MatchKey key{m.type_id, m.src.t};
            if (!slot.emplace(key, &m).second)
                throw std::invalid_argument("evaluate: duplicate prediction for pair " +
                                            pc.src + " -> " + pc.tgt);
        }
    }

    EvalReport report;
    report.ks = config.ks;
    const std::size_t nk = config.ks.size();

    for (const auto& gt_pc : ground_truth.pairs) {
        const auto src_it = by_id.find(gt_pc.src);
        const auto tgt_it = by_id.find(gt_pc.tgt);
        if (src_it == by_id.end() || tgt_it == by_id.end())
            throw std::invalid_argument("evaluate: pair references unknown video");
        const std::string& action = src_it->second->action;

        // b per target key-moment frame, from the GT keypoints in that frame
        std::map<int, double> frame_b;
        {
            std::map<int, std::vector<SpaceTimeKeypoint>> per_frame;
            for (const auto& m : gt_pc.matches) per_frame[m.tgt.t].push_back(m.tgt);
            for (const auto& [frame, kps] : per_frame)
                frame_b[frame] = bbox_scale(kps);
        }

        const auto* preds = [&]() -> const std::map<MatchKey, const Correspondence*>* {
            auto it = pred_index.find({gt_pc.src, gt_pc.tgt});
            return it == pred_index.end() ? nullptr : &it->second;
        }();

        for (const auto& m : gt_pc.matches) {
            const std::string cls = to_string(config.classify(m.type_id));
            auto [it, fresh] = report.cells[action].try_emplace(cls);
            if (fresh) it->second.resize(nk);

            const Correspondence* pred = nullptr;
            if (preds != nullptr) {
                auto pit = preds->find({m.type_id, m.src.t});
                if (pit != preds->end()) pred = pit->second;
            }
            const double b = frame_b.at(m.tgt.t);
            for (std::size_t ki = 0; ki < nk; ++ki) {
                const bool ok = pred != nullptr &&
                                judge_keypoint(pred->tgt, m.tgt, config.ks[ki],
                                               config.alpha, b);
                it->second.add(ki, ok);
            }
            report.judged += 1;
        }
    }
    return report;
}

namespace {

ojson tally_json(const Tally& t, const std::vector<int>& ks) {
    ojson arr = ojson::array();
    for (std::size_t i = 0; i < ks.size(); ++i)
        arr.push_back({{"k", ks[i]},
                       {"accuracy", t.accuracy(i)},
                       {"n", t.total[i]}});
    return arr;
}

}  // namespace

ojson report_to_json(const EvalReport& report, const std::string& setup) {
    ojson j;
    j["setup"] = setup;
    j["ks"] = report.ks;
    j["judged"] = report.judged;
    j["overall"] = tally_json(report.overall(), report.ks);
    j["actions"] = ojson::object();
    for (const auto& [action, t] : report.by_action())
        j["actions"][action] = tally_json(t, report.ks);
    j["classes"] = ojson::object();
    for (const auto& [cls, t] : report.by_class())
        j["classes"][cls] = tally_json(t, report.ks);
    return j;
}

std::string report_to_csv(const EvalReport& report, const std::string& setup) {
    std::ostringstream os;
    os << "setup,action,class,k,accuracy,n\n";
    os.precision(10);

    auto row = [&](const std::string& action, const std::string& cls,
                   const Tally& t) {
        for (std::size_t i = 0; i < report.ks.size(); ++i)
            os << setup << ',' << action << ',' << cls << ',' << report.ks[i]
               << ',' << t.accuracy(i) << ',' << t.total[i] << '\n';
    };

    row("all", "all", report.overall());
    for (const auto& [cls, t] : report.by_class()) row("all", cls, t);
    for (const auto& [action, t] : report.by_action()) row(action, "all", t);
    for (const auto& [action, cols] : report.cells)
        for (const auto& [cls, t] : cols) row(action, cls, t);
    return os.str();
}

}  // namespace stcorr
