#include <doctest.h>

#include "stcorr/evaluation.hpp"
#include "test_util.hpp"

using namespace stcorr;

namespace {

SpaceTimeKeypoint kp(double x, double y, int t, int type = 0) {
    return SpaceTimeKeypoint{x, y, t, type, true};
}

VideoAnnotation stub_video(const std::string& id, const std::string& action) {
    VideoAnnotation v;
    v.id = id;
    v.action = action;
    v.split = "val";
    v.dims = VideoDims(64, 256, 256);
    v.key_moments = {0};
    return v;
}

// one pair whose GT targets sit on a 10-wide bbox frame (b = 10)
struct Scenario {
    CorrespondenceSet gt;
    std::vector<VideoAnnotation> annotations;
};

Scenario simple_scenario(const std::string& action = "bowling") {
    Scenario s;
    s.annotations = {stub_video("a", action), stub_video("b", action)};
    PairCorrespondences pc;
    pc.src = "a";
    pc.tgt = "b";
    // target bbox (0,0)-(10,4): b = 10
    pc.matches.push_back(Correspondence{0, kp(1, 1, 0, 0), kp(0.0, 0.0, 0, 0)});
    pc.matches.push_back(Correspondence{1, kp(2, 2, 0, 1), kp(10.0, 4.0, 0, 1)});
    pc.matches.push_back(Correspondence{13, kp(3, 3, 0, 13), kp(5.0, 2.0, 0, 13)});
    s.gt.pairs.push_back(pc);
    return s;
}

CorrespondenceSet exact_predictions(const CorrespondenceSet& gt) {
    return gt;  // predictions equal the ground truth
}

}  // namespace

TEST_CASE("bbox_scale takes the larger bbox side") {
    CHECK(bbox_scale({kp(0, 0, 0), kp(10, 4, 0)}) == 10.0);
    CHECK(bbox_scale({kp(0, 0, 0), kp(2, 7, 0), kp(5, 3, 0)}) == 7.0);
}

TEST_CASE("bbox_scale floors degenerate boxes at one pixel") {
    CHECK(bbox_scale({kp(3, 3, 0)}) == 1.0);
    CHECK(bbox_scale({kp(3, 3, 0), kp(3.2, 3.0, 0)}) == 1.0);
    auto hidden = kp(50, 50, 0);
    hidden.visible = false;
    CHECK(bbox_scale({kp(0, 0, 0), kp(4, 0, 0), hidden}) == 4.0);
    CHECK_THROWS_AS(bbox_scale({hidden}), std::invalid_argument);
}

TEST_CASE("judge_keypoint exact matches pass at every k") {
    const auto p = kp(5, 5, 3);
    for (int k : {0, 1, 3, 5}) CHECK(judge_keypoint(p, p, k, 0.1, 10.0));
}

TEST_CASE("judge_keypoint applies the time threshold") {
    const auto gt = kp(5, 5, 3);
    const auto pred = kp(5, 5, 5);  // |dt| = 2
    CHECK_FALSE(judge_keypoint(pred, gt, 1, 0.1, 10.0));
    CHECK(judge_keypoint(pred, gt, 3, 0.1, 10.0));
    CHECK(judge_keypoint(pred, gt, 5, 0.1, 10.0));
}

TEST_CASE("judge_keypoint spatial boundary is inclusive") {
    const auto gt = kp(0, 0, 0);
    const auto pred = kp(1.0, 0.0, 0);  // distance exactly alpha*b = 0.1*10
    CHECK(judge_keypoint(pred, gt, 0, 0.1, 10.0));
    CHECK_FALSE(judge_keypoint(kp(1.0001, 0.0, 0), gt, 0, 0.1, 10.0));
    CHECK_THROWS_AS(judge_keypoint(pred, gt, 0, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("evaluate scores a perfect run at 100 everywhere") {
    const Scenario s = simple_scenario();
    EvalConfig cfg;
    const EvalReport report = evaluate(exact_predictions(s.gt), s.gt,
                                       s.annotations, cfg);
    CHECK(report.judged == 3);
    const Tally overall = report.overall();
    for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki)
        CHECK(overall.accuracy(ki) == 100.0);
    for (const auto& [cls, tally] : report.by_class())
        for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki)
            CHECK(tally.accuracy(ki) == 100.0);
}

TEST_CASE("evaluate counts missing predictions as incorrect") {
    const Scenario s = simple_scenario();
    CorrespondenceSet preds = s.gt;
    preds.pairs[0].matches.pop_back();  // drop one of three predictions
    EvalConfig cfg;
    const EvalReport report = evaluate(preds, s.gt, s.annotations, cfg);
    const Tally overall = report.overall();
    CHECK(overall.total[0] == 3);
    CHECK(overall.correct[0] == 2);
}

TEST_CASE("evaluate reaches 50 percent when half the predictions miss") {
    const Scenario s = simple_scenario();
    // four keypoints on one pair, two predicted far away
    CorrespondenceSet gt = s.gt;
    gt.pairs[0].matches.push_back(
        Correspondence{14, kp(4, 4, 0, 14), kp(2.0, 1.0, 0, 14)});
    CorrespondenceSet preds = gt;
    preds.pairs[0].matches[0].tgt.x += 200.0;
    preds.pairs[0].matches[1].tgt.x += 200.0;

    EvalConfig cfg;
    cfg.ks = {5};
    const EvalReport report = evaluate(preds, gt, s.annotations, cfg);
    CHECK(report.overall().accuracy(0) == 50.0);
}

TEST_CASE("evaluate splits accuracy by action and class") {
    // bowling pair: human keypoint correct, object keypoint wrong
    // squats pair: both correct
    std::vector<VideoAnnotation> annotations = {
        stub_video("a", "bowling"), stub_video("b", "bowling"),
        stub_video("c", "squats"), stub_video("d", "squats")};

    CorrespondenceSet gt;
    PairCorrespondences bowling;
    bowling.src = "a";
    bowling.tgt = "b";
    bowling.matches.push_back(Correspondence{0, kp(1, 1, 0, 0), kp(0, 0, 0, 0)});
    bowling.matches.push_back(
        Correspondence{13, kp(2, 2, 0, 13), kp(20, 0, 0, 13)});
    gt.pairs.push_back(bowling);
    PairCorrespondences squats;
    squats.src = "c";
    squats.tgt = "d";
    squats.matches.push_back(Correspondence{0, kp(1, 1, 0, 0), kp(0, 0, 0, 0)});
    squats.matches.push_back(Correspondence{14, kp(2, 2, 0, 14), kp(0, 20, 0, 14)});
    gt.pairs.push_back(squats);

    CorrespondenceSet preds = gt;
    preds.pairs[0].matches[1].tgt.y += 100.0;  // break bowling's object keypoint

    EvalConfig cfg;
    cfg.ks = {1};
    const EvalReport report = evaluate(preds, gt, annotations, cfg);

    const auto actions = report.by_action();
    CHECK(actions.at("bowling").accuracy(0) == 50.0);
    CHECK(actions.at("squats").accuracy(0) == 100.0);
    const auto classes = report.by_class();
    CHECK(classes.at("human").accuracy(0) == 100.0);
    CHECK(classes.at("object").accuracy(0) == 50.0);
    // partitions sum to the overall counts
    long total = 0;
    for (const auto& [cls, tally] : classes) total += tally.total[0];
    CHECK(total == report.overall().total[0]);
}

TEST_CASE("evaluate rejects predictions for unknown pairs") {
    const Scenario s = simple_scenario();
    CorrespondenceSet preds = s.gt;
    preds.pairs[0].tgt = "zzz";
    EvalConfig cfg;
    CHECK_THROWS_AS(evaluate(preds, s.gt, s.annotations, cfg),
                    std::invalid_argument);
}

TEST_CASE("accuracy is monotone in k") {
    Rng rng(90);
    for (int it = 0; it < 100; ++it) {
        Scenario s = simple_scenario();
        CorrespondenceSet preds = s.gt;
        for (auto& m : preds.pairs[0].matches) {
            m.tgt.x += rng.uniform(-3, 3);
            m.tgt.y += rng.uniform(-3, 3);
            m.tgt.t = int(rng.uniform_int(0, 8));
        }
        EvalConfig cfg;
        cfg.ks = {1, 3, 5};
        const EvalReport report = evaluate(preds, s.gt, s.annotations, cfg);
        const Tally overall = report.overall();
        CHECK(overall.accuracy(0) <= overall.accuracy(1));
        CHECK(overall.accuracy(1) <= overall.accuracy(2));
    }
}

TEST_CASE("report is invariant under joint translation and scaling") {
    Rng rng(91);
    Scenario s = simple_scenario();
    CorrespondenceSet preds = s.gt;
    for (auto& m : preds.pairs[0].matches) {
        m.tgt.x += rng.uniform(-2, 2);
        m.tgt.y += rng.uniform(-2, 2);
    }
    EvalConfig cfg;
    const EvalReport base = evaluate(preds, s.gt, s.annotations, cfg);

    auto shift_scale = [](CorrespondenceSet set, double dx, double dy, double f) {
        for (auto& pc : set.pairs)
            for (auto& m : pc.matches) {
                m.tgt.x = (m.tgt.x + dx) * f;
                m.tgt.y = (m.tgt.y + dy) * f;
            }
        return set;
    };

    // translation: thresholds depend only on relative geometry
    const EvalReport shifted =
        evaluate(shift_scale(preds, 7, -3, 1.0), shift_scale(s.gt, 7, -3, 1.0),
                 s.annotations, cfg);
    // scaling: b scales together with the distances
    const EvalReport scaled =
        evaluate(shift_scale(preds, 0, 0, 4.0), shift_scale(s.gt, 0, 0, 4.0),
                 s.annotations, cfg);

    const Tally b0 = base.overall(), b1 = shifted.overall(), b2 = scaled.overall();
    for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki) {
        CHECK(b0.accuracy(ki) == b1.accuracy(ki));
        CHECK(b0.accuracy(ki) == b2.accuracy(ki));
    }
}

TEST_CASE("report serializes to json and csv") {
    const Scenario s = simple_scenario();
    EvalConfig cfg;
    const EvalReport report =
        evaluate(exact_predictions(s.gt), s.gt, s.annotations, cfg);
    const auto j = report_to_json(report, "3+3");
    CHECK(j.at("setup") == "3+3");
    CHECK(j.at("judged") == 3);
    CHECK(j.at("overall").size() == 3);

    const std::string csv = report_to_csv(report, "3+3");
    CHECK(csv.find("setup,action,class,k,accuracy,n") == 0);
    CHECK(csv.find("3+3,all,all,1,100,3") != std::string::npos);
    CHECK(csv.find("3+3,bowling,human,") != std::string::npos);
}
