#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stcorr {

// pixel-space video extents
struct VideoDims {
    int frames = 1, height = 1, width = 1;

    VideoDims() = default;
    VideoDims(int frames_, int height_, int width_)
        : frames(frames_), height(height_), width(width_) {
        if (frames < 1 || height < 1 || width < 1)
            throw std::invalid_argument("video dims must be positive");
    }

    bool operator==(const VideoDims&) const = default;
};

// (x, y) in pixels, t a frame index; type_id names the semantic keypoint class
struct SpaceTimeKeypoint {
    double x = 0.0, y = 0.0;
    int t = 0;
    int type_id = 0;
    bool visible = true;

    bool operator==(const SpaceTimeKeypoint&) const = default;
};

// one matched source/target keypoint pair
struct Correspondence {
    int type_id = 0;
    SpaceTimeKeypoint src, tgt;

    bool operator==(const Correspondence&) const = default;
};

struct PairCorrespondences {
    std::string src, tgt;
    std::vector<Correspondence> matches;

    bool operator==(const PairCorrespondences&) const = default;
};

// ground-truth or predicted correspondences for a set of video pairs
struct CorrespondenceSet {
    std::vector<PairCorrespondences> pairs;

    bool operator==(const CorrespondenceSet&) const = default;
};

}  // namespace stcorr
