#include "a2net/targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "a2net/rng.hpp"

namespace a2net {

namespace {

void check_gt_in_window(const Segment& g, long window_steps) {
    if (!(g.end > g.start) || g.start < 0.0 ||
        g.end > static_cast<double>(window_steps)) {
        throw std::invalid_argument("ground truth [" + std::to_string(g.start) + ", " +
                                    std::to_string(g.end) + ") outside window of " +
                                    std::to_string(window_steps) + " steps");
    }
    if (g.label < 1) {
        throw std::invalid_argument("ground truth carries background label");
    }
}

}  // namespace

AfTargets encode_af(const std::vector<Segment>& gt, const PyramidSpec& spec) {
    AfTargets targets;
    targets.levels.resize(static_cast<std::size_t>(spec.num_levels));
    for (long i = 1; i <= spec.num_levels; ++i) {
        auto& lt = targets.levels[static_cast<std::size_t>(i - 1)];
        const std::size_t n = static_cast<std::size_t>(spec.level(i).length);
        lt.class_target.assign(n, 0);
        lt.start_dist.assign(n, 0.0);
        lt.end_dist.assign(n, 0.0);
    }

    // Track the assigned action's length per location so a contested
    // location keeps the shorter action.
    std::vector<std::vector<double>> assigned_length(
        static_cast<std::size_t>(spec.num_levels));
    for (long i = 1; i <= spec.num_levels; ++i) {
        assigned_length[static_cast<std::size_t>(i - 1)].assign(
            static_cast<std::size_t>(spec.level(i).length), 0.0);
    }

    for (const Segment& g : gt) {
        check_gt_in_window(g, spec.window_steps);
        const long li = assign_level(g.length(), spec);
        const LevelSpec& level = spec.level(li);
        auto& lt = targets.levels[static_cast<std::size_t>(li - 1)];
        auto& occupied = assigned_length[static_cast<std::size_t>(li - 1)];
        for (long j = 0; j < level.length; ++j) {
            const double pos = static_cast<double>(map_to_input(level, j));
            if (pos < g.start || pos > g.end) continue;
            auto& cls = lt.class_target[static_cast<std::size_t>(j)];
            if (cls != 0 && occupied[static_cast<std::size_t>(j)] <= g.length()) continue;
            if (cls == 0) ++targets.num_foreground;
            cls = g.label;
            lt.start_dist[static_cast<std::size_t>(j)] = pos - g.start;
            lt.end_dist[static_cast<std::size_t>(j)] = g.end - pos;
            occupied[static_cast<std::size_t>(j)] = g.length();
        }
    }
    return targets;
}

Segment decode_af(const PyramidSpec& spec, long level_index, long j, double r_s, double r_e,
                  long label, double score) {
    if (r_s < 0.0 || r_e < 0.0) {
        throw std::invalid_argument("decode distances must be non-negative");
    }
    const double pos = static_cast<double>(map_to_input(spec.level(level_index), j));
    Segment out;
    out.start = std::max(0.0, pos - r_s);
    out.end = std::min(static_cast<double>(spec.window_steps), pos + r_e);
    out.label = label;
    out.score = score;
    return out;
}

AbTargets encode_ab(const std::vector<Segment>& gt, const PyramidSpec& spec,
                    const RegressionCoeffs& coeffs, std::uint64_t seed,
                    double positive_iou) {
    if (coeffs.alpha <= 0.0 || coeffs.beta <= 0.0) {
        throw std::invalid_argument("regression coefficients must be positive");
    }
    for (const Segment& g : gt) {
        check_gt_in_window(g, spec.window_steps);
    }

    AbTargets targets;
    targets.levels.resize(static_cast<std::size_t>(spec.num_levels));
    for (long i = 1; i <= spec.num_levels; ++i) {
        auto& lt = targets.levels[static_cast<std::size_t>(i - 1)];
        const std::size_t n = static_cast<std::size_t>(spec.level(i).length);
        lt.class_target.assign(n, 0);
        lt.overlap_target.assign(n, 0.0);
        lt.reg_center.assign(n, 0.0);
        lt.reg_width.assign(n, 0.0);
        lt.pos_mask.assign(n, 0);
        lt.neg_mask.assign(n, 0);
    }

    const std::vector<Anchor> anchors = make_anchors(spec);
    std::vector<std::size_t> negatives;
    negatives.reserve(anchors.size());

    for (std::size_t ai = 0; ai < anchors.size(); ++ai) {
        const Anchor& a = anchors[ai];
        const Segment aseg = anchor_segment(a);
        double best = 0.0;
        const Segment* match = nullptr;
        for (const Segment& g : gt) {
            const double v = iou(aseg, g);
            if (v > best) {
                best = v;
                match = &g;
            }
        }
        auto& lt = targets.levels[static_cast<std::size_t>(a.level - 1)];
        const auto j = static_cast<std::size_t>(a.location);
        if (match != nullptr && best > positive_iou) {
            lt.pos_mask[j] = 1;
            lt.class_target[j] = match->label;
            lt.overlap_target[j] = best;
            lt.reg_center[j] = (match->center() - a.center) / (coeffs.alpha * a.width);
            lt.reg_width[j] = std::log(match->length() / a.width) / coeffs.beta;
            ++targets.num_positive;
        } else {
            negatives.push_back(ai);
        }
    }

    const long want = std::min<long>(targets.num_positive,
                                     static_cast<long>(negatives.size()));
    if (want > 0) {
        Rng rng(seed);
        for (long pick : rng.sample_without_replacement(
                 static_cast<long>(negatives.size()), want)) {
            const Anchor& a = anchors[negatives[static_cast<std::size_t>(pick)]];
            targets.levels[static_cast<std::size_t>(a.level - 1)]
                .neg_mask[static_cast<std::size_t>(a.location)] = 1;
            ++targets.num_negative;
        }
    }
    return targets;
}

Segment decode_ab(const Anchor& anchor, double delta_c, double delta_w,
                  const RegressionCoeffs& coeffs, long window_steps, long label,
                  double score) {
    if (!std::isfinite(delta_c) || !std::isfinite(delta_w)) {
        throw std::invalid_argument("decode deltas must be finite");
    }
    const double c = anchor.center + coeffs.alpha * delta_c * anchor.width;
    const double w = anchor.width * std::exp(std::min(coeffs.beta * delta_w, 700.0));
    Segment out;
    out.start = std::max(0.0, c - 0.5 * w);
    out.end = std::min(static_cast<double>(window_steps), c + 0.5 * w);
    out.label = label;
    out.score = score;
    return out;
}

}  // namespace a2net
