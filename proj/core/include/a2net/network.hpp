#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "a2net/geometry.hpp"
#include "a2net/graph.hpp"
#include "a2net/optim.hpp"
#include "a2net/rng.hpp"
#include "a2net/targets.hpp"

namespace a2net {

struct ModelConfig {
    long input_dim = 2048;      // D
    long window_steps = 128;    // T
    long num_levels = 6;        // L
    long num_classes = 5;       // C, foreground classes
    long base_channels = 512;   // conv1 width; deeper levels scale from it
    long head_channels = 512;   // anchor-free trunk width
    double anchor_scale = 2.0;
    RegressionCoeffs coeffs;

    void validate() const;
};

/// Per-level head outputs. Class maps are raw logits; af_reg has passed
/// through the exponential (stride units) and ab_overlap through the
/// sigmoid.
struct LevelOutputs {
    NodePtr af_class;    // [B, C+1, t_i]
    NodePtr af_reg;      // [B, 2, t_i], positive
    NodePtr ab_class;    // [B, C+1, t_i]
    NodePtr ab_overlap;  // [B, 1, t_i], in (0, 1)
    NodePtr ab_reg;      // [B, 2, t_i]
};

struct ModelOutputs {
    std::vector<LevelOutputs> levels;
};

/// The full detector: shared base convs, feature pyramid, and one
/// anchor-free plus one anchor-based head per level. Parameters are leaf
/// nodes reused across forward calls; each forward builds a fresh graph
/// over them.
class Network {
public:
    Network(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const PyramidSpec& pyramid() const { return spec_; }
    const ParamList& params() const { return params_; }
    long param_count() const;

    ModelOutputs forward(const Tensor& features) const;

    void zero_grads();

    std::vector<std::pair<std::string, Tensor>> state() const;
    /// Replaces parameter values; every registered name must be present
    /// with a matching shape. Extra entries are ignored.
    void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

private:
    NodePtr param(const std::string& name) const;
    void register_conv(const std::string& name, long out_ch, long in_ch, long kernel, Rng& rng);

    ModelConfig cfg_;
    PyramidSpec spec_;
    ParamList params_;
};

}  // namespace a2net
