#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "a2net/graph.hpp"
#include "a2net/tensor.hpp"

namespace a2net {

using ParamList = std::vector<std::pair<std::string, NodePtr>>;

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// optimizer state survives checkpointing independent of registration order.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Applies one update from the gradients currently stored on `params`.
    /// A parameter with no gradient buffer counts as zero gradient.
    void step(const ParamList& params);

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_count_; }

    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }

    void restore(long step_count, std::map<std::string, Tensor> m,
                 std::map<std::string, Tensor> v);

private:
    AdamConfig cfg_;
    long step_count_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

}  // namespace a2net
