#pragma once

#include <vector>

#include "a2net/tensor.hpp"

namespace a2net {

/// Temporal interval on the model timeline (feature steps) or, at the data
/// boundary, in seconds. Label 0 means background; real classes are 1..C.
struct Segment {
    double start = 0.0;
    double end = 0.0;
    long label = 0;
    double score = 1.0;

    double length() const { return end - start; }
    double center() const { return 0.5 * (start + end); }
};

/// Intersection over union; 0 when disjoint, 1 iff identical.
double iou(const Segment& a, const Segment& b);

struct LevelSpec {
    long index = 0;          // 1-based level number
    long length = 0;         // t_i, temporal extent of the feature map
    long stride = 0;         // s_i, cumulative stride on the input timeline
    long channels = 0;       // feature width at this level
    double scale_lo = 0.0;   // scale range in base-step units, inclusive
    double scale_hi = 0.0;   // exclusive; infinity at the top level
    double anchor_width = 0.0;  // default anchor width in input steps
};

/// Static geometry of the feature pyramid: per-level lengths, strides,
/// channel widths, scale ranges, and the default anchor layout.
struct PyramidSpec {
    long window_steps = 0;     // T, input length
    long num_levels = 0;       // L
    long base_channels = 0;
    double anchor_scale = 0.0;
    long extra_reductions = 0;  // parameter-free pool steps inserted for L < 6
    double base_step = 0.0;     // input steps per base-step unit (T / 2^L)
    std::vector<LevelSpec> levels;

    const LevelSpec& level(long index) const;  // 1-based
    long total_locations() const;
};

/// One default anchor per pyramid location, centered on the mapped-back
/// position of that location.
struct Anchor {
    double center = 0.0;  // input steps
    double width = 0.0;   // input steps
    long level = 0;       // 1-based
    long location = 0;    // index within the level
};

/// Requires T divisible by 2^L; supports L in [3, 6]. For L < 6 the gap to
/// the reference depth is closed by extra parameter-free reductions before
/// the pyramid, as many as T's divisibility allows (see extra_reductions).
PyramidSpec build_pyramid_spec(long window_steps, long num_levels, long base_channels,
                               double anchor_scale);

/// Position of location j on the input timeline: floor(s_i / 2) + j * s_i.
long map_to_input(const LevelSpec& level, long j);

/// Level whose scale range contains the length (measured in base-step
/// units); lengths past the top range clamp to level L.
long assign_level(double action_length_steps, const PyramidSpec& spec);

std::vector<Anchor> make_anchors(const PyramidSpec& spec);

inline Segment anchor_segment(const Anchor& a) {
    return Segment{a.center - 0.5 * a.width, a.center + 0.5 * a.width, 0, 1.0};
}

}  // namespace a2net
