#include "a2net/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace a2net {

namespace {

Segment as_segment(const Detection& d) {
    return Segment{d.start, d.end, d.label, d.score};
}

/// Ranking used everywhere detections are ordered: confidence first, then
/// earlier start, then original position for stability.
std::vector<std::size_t> ranked_order(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        if (dets[a].start != dets[b].start) return dets[a].start < dets[b].start;
        return a < b;
    });
    return order;
}

}  // namespace

std::vector<Detection> decode_window(const ModelOutputs& outputs, long batch_index,
                                     const PyramidSpec& spec, const RegressionCoeffs& coeffs,
                                     double score_floor, BranchMode mode) {
    if (outputs.levels.size() != static_cast<std::size_t>(spec.num_levels)) {
        throw std::invalid_argument("outputs do not match the pyramid");
    }
    const long num_scores = outputs.levels.front().af_class->value.dim(1);

    // Softmax winner among the class scores at one location; background
    // winners return label 0.
    auto best_class = [num_scores](const Tensor& logits, long b, long t_len, long j,
                                   double& prob_out) {
        const double* base = logits.data() + (b * num_scores) * t_len;
        double mx = base[j];
        long arg = 0;
        for (long c = 1; c < num_scores; ++c) {
            const double v = base[c * t_len + j];
            if (v > mx) {
                mx = v;
                arg = c;
            }
        }
        double z = 0.0;
        for (long c = 0; c < num_scores; ++c) {
            z += std::exp(base[c * t_len + j] - mx);
        }
        prob_out = 1.0 / z;  // softmax of the max logit
        return arg;
    };

    std::vector<Detection> out;
    const std::vector<Anchor> anchors = make_anchors(spec);
    std::size_t anchor_base = 0;

    for (long li = 0; li < spec.num_levels; ++li) {
        const LevelOutputs& lo = outputs.levels[static_cast<std::size_t>(li)];
        const LevelSpec& level = spec.level(li + 1);
        const long t_len = level.length;
        const long b = batch_index;
        if (b < 0 || b >= lo.af_class->value.dim(0)) {
            throw std::invalid_argument("batch index outside forward batch");
        }

        if (mode != BranchMode::ab_only) {
            const Tensor& cls = lo.af_class->value;
            const Tensor& reg = lo.af_reg->value;
            for (long j = 0; j < t_len; ++j) {
                double prob = 0.0;
                const long label = best_class(cls, b, t_len, j, prob);
                if (label == 0 || prob < score_floor) continue;
                const double r_s =
                    reg.data()[(b * 2 + 0) * t_len + j] * static_cast<double>(level.stride);
                const double r_e =
                    reg.data()[(b * 2 + 1) * t_len + j] * static_cast<double>(level.stride);
                const Segment seg = decode_af(spec, li + 1, j, r_s, r_e, label, prob);
                if (seg.end <= seg.start) continue;
                out.push_back({seg.start, seg.end, label, prob, Branch::af});
            }
        }

        if (mode != BranchMode::af_only) {
            const Tensor& cls = lo.ab_class->value;
            const Tensor& overlap = lo.ab_overlap->value;
            const Tensor& reg = lo.ab_reg->value;
            for (long j = 0; j < t_len; ++j) {
                double prob = 0.0;
                const long label = best_class(cls, b, t_len, j, prob);
                if (label == 0) continue;
                const double p_o = overlap.data()[b * t_len + j];
                const double conf = p_o * prob;
                if (conf < score_floor) continue;
                const double dc = reg.data()[(b * 2 + 0) * t_len + j];
                const double dw = reg.data()[(b * 2 + 1) * t_len + j];
                const Anchor& anchor = anchors[anchor_base + static_cast<std::size_t>(j)];
                const Segment seg =
                    decode_ab(anchor, dc, dw, coeffs, spec.window_steps, label, conf);
                if (seg.end <= seg.start) continue;
                out.push_back({seg.start, seg.end, label, conf, Branch::ab});
            }
        }
        anchor_base += static_cast<std::size_t>(t_len);
    }
    return out;
}

std::vector<Detection> lambda_merge(const std::vector<Detection>& af_dets,
                                    const std::vector<Detection>& ab_dets, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw std::invalid_argument("lambda must lie in [0, 1]");
    }
    std::vector<Detection> out;
    out.reserve(af_dets.size() + ab_dets.size());
    for (Detection d : af_dets) {
        d.score *= 1.0 - lambda;
        out.push_back(d);
    }
    for (Detection d : ab_dets) {
        d.score *= lambda;
        out.push_back(d);
    }
    return out;
}

std::vector<Detection> top_k_by_score(std::vector<Detection> dets, long k) {
    if (k < 0) {
        throw std::invalid_argument("top_k must be non-negative");
    }
    if (static_cast<long>(dets.size()) <= k) return dets;
    std::vector<Detection> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::size_t idx : ranked_order(dets)) {
        if (static_cast<long>(out.size()) == k) break;
        out.push_back(dets[idx]);
    }
    return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw std::invalid_argument("suppression threshold must lie in (0, 1)");
    }
    const std::vector<std::size_t> order = ranked_order(dets);
    std::vector<bool> gone(dets.size(), false);
    std::vector<Detection> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (gone[i]) continue;
        kept.push_back(dets[i]);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (gone[j] || dets[j].label != dets[i].label) continue;
            if (iou(as_segment(dets[i]), as_segment(dets[j])) > iou_threshold) {
                gone[j] = true;
            }
        }
    }
    return kept;
}

std::vector<Detection> stitch_windows(const std::vector<WindowDetections>& windows,
                                      double nms_iou) {
    std::vector<Detection> all;
    for (const auto& w : windows) {
        for (Detection d : w.dets) {
            d.start += w.offset;
            d.end += w.offset;
            all.push_back(d);
        }
    }
    return nms(all, nms_iou);
}

}  // namespace a2net
