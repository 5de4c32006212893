#pragma once

#include <string>
#include <vector>

#include "a2net/network.hpp"
#include "a2net/targets.hpp"

namespace a2net {

enum class BranchMode { joint, af_only, ab_only };

std::string branch_mode_name(BranchMode mode);
BranchMode parse_branch_mode(const std::string& name);

struct LossWeights {
    double gamma = 1.0;      // anchor-based branch weight in the total
    double gamma_af = 30.0;  // anchor-free classification weight
    double gamma_ab1 = 10.0;  // overlap weight
    double gamma_ab2 = 10.0;  // anchor regression weight
};

/// Scalar snapshot of one training step, serializable as a JSON object.
struct LossReport {
    double total = 0.0;
    double af_cls = 0.0;
    double af_reg = 0.0;
    double ab_cls = 0.0;
    double ab_overlap = 0.0;
    double ab_reg = 0.0;
    long num_locations = 0;
    long num_af_foreground = 0;
    long num_ab_positive = 0;
    long num_ab_negative = 0;

    std::string to_json() const;
};

/// Differentiable loss graph plus the counts that went into each mean.
struct LossNodes {
    NodePtr total;
    NodePtr af_cls;
    NodePtr af_reg;
    NodePtr ab_cls;
    NodePtr ab_overlap;
    NodePtr ab_reg;
    long num_locations = 0;
    long num_af_foreground = 0;
    long num_ab_positive = 0;
    long num_ab_negative = 0;

    LossReport report() const;
};

/// Assembles the five losses over a batch and combines them with the
/// configured weights. `af` and `ab` hold one target set per batch entry.
/// Classification averages over every location of every level; masked
/// losses average over their surviving points and contribute zero when the
/// mask is empty. Single-branch modes build only their branch's losses and
/// pin the other branch's terms to constant zero.
LossNodes build_losses(const ModelOutputs& outputs, const std::vector<AfTargets>& af,
                       const std::vector<AbTargets>& ab, const PyramidSpec& spec,
                       const LossWeights& weights, BranchMode mode);

}  // namespace a2net
