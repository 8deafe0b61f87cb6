#include "stcorr/matcher.hpp"

#include <functional>
#include <map>

#include "stcorr/sequential.hpp"

namespace stcorr {

namespace {

class StMatchMatcher final : public Matcher {
public:
    explicit StMatchMatcher(MatcherConfig config) : config_(std::move(config)) {}

    MatchOutput predict(const MatchContext& ctx,
                        const std::vector<SpaceTimeKeypoint>& kps) const override {
        const CorrVolume corr = stack_correlations(ctx.src, ctx.tgt);
        const DisplacementFlow flow = argmax_flow(stmatch_volume(corr));
        MatchOutput out;
        out.keypoints = transfer_keypoints(flow, kps, ctx.src_dims, ctx.tgt_dims,
                                           config_.sampling);
        out.flow = flow;
        return out;
    }

private:
    MatcherConfig config_;
};

class SequentialMatcher final : public Matcher {
public:
    SequentialMatcher(MatcherConfig config, bool dtw)
        : config_(std::move(config)), dtw_(dtw) {}

    MatchOutput predict(const MatchContext& ctx,
                        const std::vector<SpaceTimeKeypoint>& kps) const override {
        int pick = config_.seq_layer_pick;
        if (pick < 0) pick = ctx.src.layer_count() - 1;
        const EmbeddingSequence es = frame_embeddings(ctx.src, pick);
        const EmbeddingSequence et = frame_embeddings(ctx.tgt, pick);

        Alignment alignment;
        double total_cost = 0.0;
        if (dtw_) {
            const DtwResult r = dtw_align(es, et);
            alignment = r.alignment;
            total_cost = r.total_cost;
        } else {
            alignment = nn_align(es, et);
            for (int i = 0; i < es.frames; ++i) {
                const int j = alignment.map[std::size_t(i)];
                for (int c = 0; c < es.dim; ++c) {
                    const double d =
                        double(es.values(i, c)) - double(et.values(j, c));
                    total_cost += d * d;
                }
            }
        }

        MatchOutput out;
        out.keypoints = sequential_transfer(alignment, ctx.src, ctx.tgt, kps,
                                            ctx.src_dims, ctx.tgt_dims,
                                            config_.sampling);
        out.alignment =
            AlignmentRecord{alignment.map, total_cost, alignment.monotone};
        return out;
    }

private:
    MatcherConfig config_;
    bool dtw_;
};

class AntsMatcher final : public Matcher {
public:
    explicit AntsMatcher(MatcherConfig config) : config_(std::move(config)) {
        if (config_.ants_params == nullptr)
            throw std::invalid_argument("ants matcher requires trained params");
    }

    MatchOutput predict(const MatchContext& ctx,
                        const std::vector<SpaceTimeKeypoint>& kps) const override {
        const CorrVolume corr = stack_correlations(ctx.src, ctx.tgt);
        const MatchVolume mv =
            ants_forward(corr, ctx.src, ctx.tgt, *config_.ants_params);
        const DisplacementFlow flow =
            config_.ants_decode == AntsDecode::soft
                ? soft_argmax_flow(mv, config_.temperature)
                : argmax_flow(mv);
        MatchOutput out;
        out.keypoints = transfer_keypoints(flow, kps, ctx.src_dims, ctx.tgt_dims,
                                           config_.sampling);
        out.flow = flow;
        return out;
    }

private:
    MatcherConfig config_;
};

using Factory = std::function<std::unique_ptr<Matcher>(const MatcherConfig&)>;

const std::map<std::string, Factory>& registry() {
    static const std::map<std::string, Factory> map = {
        {"st-match",
         [](const MatcherConfig& c) { return std::make_unique<StMatchMatcher>(c); }},
        {"sequential-nn",
         [](const MatcherConfig& c) {
             return std::make_unique<SequentialMatcher>(c, false);
         }},
        {"sequential-dtw",
         [](const MatcherConfig& c) {
             return std::make_unique<SequentialMatcher>(c, true);
         }},
        {"ants",
         [](const MatcherConfig& c) { return std::make_unique<AntsMatcher>(c); }},
        {"st-cats",
         [](const MatcherConfig&) -> std::unique_ptr<Matcher> {
             throw UnimplementedError("unimplemented matcher: st-cats");
         }},
    };
    return map;
}

}  // namespace

std::vector<std::string> matcher_names() {
    std::vector<std::string> names;
    for (const auto& [name, factory] : registry()) names.push_back(name);
    return names;
}

std::unique_ptr<Matcher> make_matcher(const MatcherConfig& config) {
    const auto it = registry().find(config.name);
    if (it == registry().end())
        throw std::invalid_argument("unknown matcher: " + config.name);
    return it->second(config);
}

GridShape default_grid(const std::string& matcher_name) {
    if (matcher_name == "st-match" || matcher_name == "sequential-nn" ||
        matcher_name == "sequential-dtw")
        return GridShape(32, 16, 16);
    return GridShape(8, 8, 8);
}

}  // namespace stcorr
