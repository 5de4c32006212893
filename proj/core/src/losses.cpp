#include "a2net/losses.hpp"

#include <sstream>
#include <stdexcept>

namespace a2net {

namespace {

NodePtr zero_scalar() {
    return constant(Tensor::scalar(0.0));
}

/// mean over all groups = sum_g (n_g / n_total) * mean_g, assembled
/// without concatenating across levels.
struct WeightedMean {
    long total = 0;

    void add(const NodePtr& group_mean, long group_count) {
        if (group_count <= 0) return;
        total += group_count;
        parts.emplace_back(group_mean, group_count);
    }

    NodePtr finish() {
        if (parts.empty()) return zero_scalar();
        NodePtr out;
        for (const auto& [mean, count] : parts) {
            NodePtr term = scale(mean, static_cast<double>(count) / static_cast<double>(total));
            out = out ? a2net::add(out, term) : term;
        }
        return out;
    }

private:
    std::vector<std::pair<NodePtr, long>> parts;
};

}  // namespace

std::string branch_mode_name(BranchMode mode) {
    switch (mode) {
        case BranchMode::joint: return "joint";
        case BranchMode::af_only: return "af_only";
        case BranchMode::ab_only: return "ab_only";
    }
    throw std::invalid_argument("unknown branch mode");
}

BranchMode parse_branch_mode(const std::string& name) {
    if (name == "joint") return BranchMode::joint;
    if (name == "af_only") return BranchMode::af_only;
    if (name == "ab_only") return BranchMode::ab_only;
    throw std::invalid_argument("branch mode must be joint, af_only, or ab_only; got '" +
                                name + "'");
}

std::string LossReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"total\":" << total << ",\"af_cls\":" << af_cls << ",\"af_reg\":" << af_reg
       << ",\"ab_cls\":" << ab_cls << ",\"ab_overlap\":" << ab_overlap
       << ",\"ab_reg\":" << ab_reg << ",\"num_locations\":" << num_locations
       << ",\"num_af_foreground\":" << num_af_foreground
       << ",\"num_ab_positive\":" << num_ab_positive
       << ",\"num_ab_negative\":" << num_ab_negative << "}";
    return os.str();
}

LossReport LossNodes::report() const {
    LossReport r;
    r.total = total->value.item();
    r.af_cls = af_cls->value.item();
    r.af_reg = af_reg->value.item();
    r.ab_cls = ab_cls->value.item();
    r.ab_overlap = ab_overlap->value.item();
    r.ab_reg = ab_reg->value.item();
    r.num_locations = num_locations;
    r.num_af_foreground = num_af_foreground;
    r.num_ab_positive = num_ab_positive;
    r.num_ab_negative = num_ab_negative;
    return r;
}

LossNodes build_losses(const ModelOutputs& outputs, const std::vector<AfTargets>& af,
                       const std::vector<AbTargets>& ab, const PyramidSpec& spec,
                       const LossWeights& weights, BranchMode mode) {
    const long num_levels = static_cast<long>(outputs.levels.size());
    if (num_levels != spec.num_levels) {
        throw std::invalid_argument("outputs carry " + std::to_string(num_levels) +
                                    " levels but the pyramid has " +
                                    std::to_string(spec.num_levels));
    }
    const long batch = outputs.levels.front().af_class->value.dim(0);
    const bool want_af = mode != BranchMode::ab_only;
    const bool want_ab = mode != BranchMode::af_only;
    if (want_af && static_cast<long>(af.size()) != batch) {
        throw std::invalid_argument("need one anchor-free target set per batch entry");
    }
    if (want_ab && static_cast<long>(ab.size()) != batch) {
        throw std::invalid_argument("need one anchor-based target set per batch entry");
    }

    LossNodes out;
    out.num_locations = batch * spec.total_locations();
    out.af_cls = zero_scalar();
    out.af_reg = zero_scalar();
    out.ab_cls = zero_scalar();
    out.ab_overlap = zero_scalar();
    out.ab_reg = zero_scalar();

    if (want_af) {
        WeightedMean cls_mean;
        WeightedMean reg_mean;
        for (long li = 0; li < num_levels; ++li) {
            const LevelOutputs& lo = outputs.levels[static_cast<std::size_t>(li)];
            const LevelSpec& level = spec.level(li + 1);
            const long t = level.length;

            std::vector<std::pair<long, long>> everywhere;
            std::vector<long> labels;
            everywhere.reserve(static_cast<std::size_t>(batch * t));
            labels.reserve(static_cast<std::size_t>(batch * t));
            std::vector<std::pair<long, long>> fg;
            std::vector<double> fg_dist;
            for (long b = 0; b < batch; ++b) {
                const AfLevelTargets& lt = af[static_cast<std::size_t>(b)]
                                               .levels[static_cast<std::size_t>(li)];
                if (static_cast<long>(lt.class_target.size()) != t) {
                    throw std::invalid_argument("anchor-free targets do not match level length");
                }
                for (long j = 0; j < t; ++j) {
                    everywhere.emplace_back(b, j);
                    const long cls = lt.class_target[static_cast<std::size_t>(j)];
                    labels.push_back(cls);
                    if (cls > 0) {
                        fg.emplace_back(b, j);
                        fg_dist.push_back(lt.start_dist[static_cast<std::size_t>(j)]);
                        fg_dist.push_back(lt.end_dist[static_cast<std::size_t>(j)]);
                    }
                }
            }

            cls_mean.add(softmax_cross_entropy(gather_rows(lo.af_class, everywhere), labels),
                         batch * t);

            const long fg_count = static_cast<long>(fg.size());
            out.num_af_foreground += fg_count;
            if (fg_count > 0) {
                // Predictions leave the head in stride units; compare on the
                // input timeline so boundary error is measured in steps
                // regardless of level.
                NodePtr pred = scale(gather_rows(lo.af_reg, fg),
                                     static_cast<double>(level.stride));
                Tensor target({fg_count, 2}, std::move(fg_dist));
                // smooth_l1 averages over both boundary entries; the 2x
                // restores the per-point sum of start and end terms.
                reg_mean.add(scale(smooth_l1(pred, target), 2.0), fg_count);
            }
        }
        out.af_cls = cls_mean.finish();
        out.af_reg = reg_mean.finish();
    }

    if (want_ab) {
        WeightedMean cls_mean;
        WeightedMean overlap_mean;
        WeightedMean reg_mean;
        for (long li = 0; li < num_levels; ++li) {
            const LevelOutputs& lo = outputs.levels[static_cast<std::size_t>(li)];
            const long t = spec.level(li + 1).length;

            std::vector<std::pair<long, long>> sampled;
            std::vector<long> sampled_labels;
            std::vector<std::pair<long, long>> pos;
            std::vector<double> pos_overlap;
            std::vector<double> pos_reg;
            for (long b = 0; b < batch; ++b) {
                const AbLevelTargets& lt = ab[static_cast<std::size_t>(b)]
                                               .levels[static_cast<std::size_t>(li)];
                if (static_cast<long>(lt.class_target.size()) != t) {
                    throw std::invalid_argument("anchor targets do not match level length");
                }
                for (long j = 0; j < t; ++j) {
                    const auto sj = static_cast<std::size_t>(j);
                    if (lt.pos_mask[sj]) {
                        sampled.emplace_back(b, j);
                        sampled_labels.push_back(lt.class_target[sj]);
                        pos.emplace_back(b, j);
                        pos_overlap.push_back(lt.overlap_target[sj]);
                        pos_reg.push_back(lt.reg_center[sj]);
                        pos_reg.push_back(lt.reg_width[sj]);
                    } else if (lt.neg_mask[sj]) {
                        sampled.emplace_back(b, j);
                        sampled_labels.push_back(0);
                    }
                }
            }

            const long pos_count = static_cast<long>(pos.size());
            out.num_ab_positive += pos_count;
            out.num_ab_negative += static_cast<long>(sampled.size()) - pos_count;
            if (!sampled.empty()) {
                cls_mean.add(
                    softmax_cross_entropy(gather_rows(lo.ab_class, sampled), sampled_labels),
                    static_cast<long>(sampled.size()));
            }
            if (pos_count > 0) {
                overlap_mean.add(mse(gather_channel(lo.ab_overlap, 0, pos),
                                     Tensor({pos_count}, std::move(pos_overlap))),
                                 pos_count);
                reg_mean.add(scale(smooth_l1(gather_rows(lo.ab_reg, pos),
                                             Tensor({pos_count, 2}, std::move(pos_reg))),
                                   2.0),
                             pos_count);
            }
        }
        out.ab_cls = cls_mean.finish();
        out.ab_overlap = overlap_mean.finish();
        out.ab_reg = reg_mean.finish();
    }

    NodePtr af_total = add(out.af_reg, scale(out.af_cls, weights.gamma_af));
    NodePtr ab_total = add(out.ab_cls, add(scale(out.ab_overlap, weights.gamma_ab1),
                                           scale(out.ab_reg, weights.gamma_ab2)));
    out.total = add(af_total, scale(ab_total, weights.gamma));
    return out;
}

}  // namespace a2net
