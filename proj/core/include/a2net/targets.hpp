#pragma once

#include <cstdint>
#include <vector>

#include "a2net/geometry.hpp"

namespace a2net {

/// Eq. 1 gains: center offset is scaled by alpha * anchor width, width
/// ratio enters through beta * log.
struct RegressionCoeffs {
    double alpha = 1e-4;
    double beta = 1e-4;
};

struct AfLevelTargets {
    std::vector<long> class_target;   // 0 background, else class; one per location
    std::vector<double> start_dist;   // input steps, meaningful where class > 0
    std::vector<double> end_dist;
};

struct AfTargets {
    std::vector<AfLevelTargets> levels;
    long num_foreground = 0;
};

struct AbLevelTargets {
    std::vector<long> class_target;
    std::vector<double> overlap_target;  // matched IoU at positives
    std::vector<double> reg_center;      // encoded center offset
    std::vector<double> reg_width;       // encoded log width ratio
    std::vector<char> pos_mask;
    std::vector<char> neg_mask;          // sampled negatives, disjoint from pos
};

struct AbTargets {
    std::vector<AbLevelTargets> levels;
    long num_positive = 0;
    long num_negative = 0;
};

/// Each ground truth trains exactly one level (by scale); at that level,
/// every location whose mapped position falls inside the closed interval
/// becomes foreground with boundary distances per the location's offset.
/// Collisions between overlapping ground truths resolve to the shorter one.
AfTargets encode_af(const std::vector<Segment>& gt, const PyramidSpec& spec);

/// Inverts the foreground encoding: start = j' - r_s, end = j' + r_e,
/// clipped to the window. Distances are in input steps and must be >= 0.
Segment decode_af(const PyramidSpec& spec, long level_index, long j, double r_s, double r_e,
                  long label, double score);

/// Anchors with best-GT IoU above `positive_iou` become positives carrying
/// the matched IoU, class, and exact-inverse regression targets; negatives
/// are drawn uniformly (seeded) from the rest to match the positive count.
AbTargets encode_ab(const std::vector<Segment>& gt, const PyramidSpec& spec,
                    const RegressionCoeffs& coeffs, std::uint64_t seed,
                    double positive_iou = 0.5);

/// Applies the regression deltas to an anchor and clips to the window.
Segment decode_ab(const Anchor& anchor, double delta_c, double delta_w,
                  const RegressionCoeffs& coeffs, long window_steps, long label, double score);

}  // namespace a2net
