#include "a2net/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace a2net {

double iou(const Segment& a, const Segment& b) {
    if (!(a.end > a.start) || !(b.end > b.start)) {
        throw std::invalid_argument("iou: degenerate segment");
    }
    const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter <= 0.0) return 0.0;
    const double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return inter / uni;
}

const LevelSpec& PyramidSpec::level(long index) const {
    if (index < 1 || index > num_levels) {
        throw std::invalid_argument("level index " + std::to_string(index) + " outside [1, " +
                                    std::to_string(num_levels) + "]");
    }
    return levels[static_cast<std::size_t>(index - 1)];
}

long PyramidSpec::total_locations() const {
    long n = 0;
    for (const auto& l : levels) n += l.length;
    return n;
}

PyramidSpec build_pyramid_spec(long window_steps, long num_levels, long base_channels,
                               double anchor_scale) {
    if (num_levels < 3 || num_levels > 6) {
        throw std::invalid_argument("pyramid supports 3 to 6 levels, got " +
                                    std::to_string(num_levels));
    }
    if (base_channels < 1 || anchor_scale <= 0.0) {
        throw std::invalid_argument("pyramid needs positive base channels and anchor scale");
    }
    if (window_steps < 1 || (window_steps % (1L << num_levels)) != 0) {
        throw std::invalid_argument("input length " + std::to_string(window_steps) +
                                    " not divisible by 2^" + std::to_string(num_levels));
    }

    // Shallower variants keep the reference geometry by pooling further
    // before the pyramid, as far as the input length divides evenly.
    const long reduction_cap = (6 - num_levels + 1) / 2;
    long extra = 0;
    for (long d = reduction_cap; d >= 1; --d) {
        if (window_steps % (1L << (num_levels + d)) == 0) {
            extra = d;
            break;
        }
    }

    PyramidSpec spec;
    spec.window_steps = window_steps;
    spec.num_levels = num_levels;
    spec.base_channels = base_channels;
    spec.anchor_scale = anchor_scale;
    spec.extra_reductions = extra;
    spec.base_step = static_cast<double>(window_steps) / static_cast<double>(1L << num_levels);

    long length = window_steps / (1L << (1 + extra));  // after base pool + extras
    long stride = 1L << (1 + extra);
    for (long i = 1; i <= num_levels; ++i) {
        LevelSpec l;
        l.index = i;
        l.length = length;
        l.stride = stride;
        l.channels = base_channels * (1L << (i / 2));
        l.scale_lo = i == 1 ? 0.0 : static_cast<double>(1L << (i - 1));
        l.scale_hi = i == num_levels ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(1L << i);
        l.anchor_width = anchor_scale * static_cast<double>(stride);
        spec.levels.push_back(l);
        if (i < num_levels) {
            length /= 2;
            stride *= 2;
        }
    }
    return spec;
}

long map_to_input(const LevelSpec& level, long j) {
    if (j < 0 || j >= level.length) {
        throw std::invalid_argument("location " + std::to_string(j) + " outside level of length " +
                                    std::to_string(level.length));
    }
    return level.stride / 2 + j * level.stride;
}

long assign_level(double action_length_steps, const PyramidSpec& spec) {
    if (!(action_length_steps > 0.0)) {
        throw std::invalid_argument("assign_level: action length must be positive");
    }
    const double base_units = action_length_steps / spec.base_step;
    long level = 1;
    double hi = 2.0;
    while (level < spec.num_levels && base_units >= hi) {
        ++level;
        hi *= 2.0;
    }
    return level;
}

std::vector<Anchor> make_anchors(const PyramidSpec& spec) {
    std::vector<Anchor> anchors;
    anchors.reserve(static_cast<std::size_t>(spec.total_locations()));
    for (const auto& l : spec.levels) {
        for (long j = 0; j < l.length; ++j) {
            Anchor a;
            a.center = static_cast<double>(map_to_input(l, j));
            a.width = l.anchor_width;
            a.level = l.index;
            a.location = j;
            anchors.push_back(a);
        }
    }
    return anchors;
}

}  // namespace a2net
