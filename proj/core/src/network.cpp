#include "a2net/network.hpp"

#include <cmath>
#include <stdexcept>

namespace a2net {

void ModelConfig::validate() const {
    if (input_dim < 1) {
        throw std::invalid_argument("model needs a positive input dimension");
    }
    if (num_classes < 1) {
        throw std::invalid_argument("model needs at least one foreground class");
    }
    if (head_channels < 1) {
        throw std::invalid_argument("model needs a positive head width");
    }
    if (!(coeffs.alpha > 0.0) || !(coeffs.beta > 0.0)) {
        throw std::invalid_argument("decode coefficients alpha and beta must be positive");
    }
    // Pyramid constraints (T, L, base_channels, anchor_scale) share the
    // checks the builder applies, so run it and discard the result.
    (void)build_pyramid_spec(window_steps, num_levels, base_channels, anchor_scale);
}

Network::Network(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      spec_(build_pyramid_spec(cfg.window_steps, cfg.num_levels, cfg.base_channels,
                               cfg.anchor_scale)) {
    cfg_.validate();
    Rng rng(seed);
    const long fg = cfg_.num_classes + 1;  // background + classes

    register_conv("base1", cfg_.base_channels, cfg_.input_dim, 1, rng);
    register_conv("base2", cfg_.base_channels, cfg_.base_channels, 9, rng);

    long prev = cfg_.base_channels;
    for (long i = 1; i <= cfg_.num_levels; ++i) {
        const long ch = spec_.level(i).channels;
        register_conv("conv" + std::to_string(i), ch, prev, 3, rng);
        prev = ch;
    }
    for (long i = 1; i <= cfg_.num_levels; ++i) {
        const long ch = spec_.level(i).channels;
        const std::string base = "level" + std::to_string(i);
        register_conv(base + ".af.conv1", cfg_.head_channels, ch, 1, rng);
        register_conv(base + ".af.conv2", cfg_.head_channels, cfg_.head_channels, 3, rng);
        register_conv(base + ".af.conv3", cfg_.head_channels, cfg_.head_channels, 3, rng);
        register_conv(base + ".af.pred_cls", fg, cfg_.head_channels, 3, rng);
        register_conv(base + ".af.pred_reg", 2, cfg_.head_channels, 3, rng);
        register_conv(base + ".ab.pred", fg + 1 + 2, ch, 3, rng);
    }
}

void Network::register_conv(const std::string& name, long out_ch, long in_ch, long kernel,
                            Rng& rng) {
    Tensor w({out_ch, in_ch, kernel});
    // Trunk convs get fan-in scaled init; the final prediction convs get a
    // near-zero init so logits start at chance and the exponential
    // regression map starts at one stride, keeping the initial loss terms
    // on comparable scales.
    const bool is_pred = name.find("pred") != std::string::npos;
    const double stddev =
        is_pred ? 0.01 : std::sqrt(2.0 / static_cast<double>(in_ch * kernel));
    for (double& v : w.values()) {
        v = rng.gaussian(0.0, stddev);
    }
    params_.emplace_back(name + ".weight", leaf(std::move(w)));
    params_.emplace_back(name + ".bias", leaf(Tensor({out_ch})));
}

NodePtr Network::param(const std::string& name) const {
    for (const auto& [n, node] : params_) {
        if (n == name) return node;
    }
    throw std::invalid_argument("unknown parameter '" + name + "'");
}

long Network::param_count() const {
    long n = 0;
    for (const auto& [name, node] : params_) {
        n += node->value.numel();
    }
    return n;
}

ModelOutputs Network::forward(const Tensor& features) const {
    if (features.rank() != 3 || features.dim(1) != cfg_.input_dim ||
        features.dim(2) != cfg_.window_steps) {
        throw std::invalid_argument("forward expects [B, " + std::to_string(cfg_.input_dim) +
                                    ", " + std::to_string(cfg_.window_steps) + "], got " +
                                    features.shape_str());
    }
    const long fg = cfg_.num_classes + 1;

    auto conv = [&](const NodePtr& x, const std::string& name, long stride, long padding) {
        return conv1d(x, param(name + ".weight"), param(name + ".bias"), stride, padding);
    };

    NodePtr x = constant(features);
    x = relu(conv(x, "base1", 1, 0));
    x = relu(conv(x, "base2", 1, 4));
    x = maxpool1d(x, 2, 2);
    for (long d = 0; d < spec_.extra_reductions; ++d) {
        x = maxpool1d(x, 2, 2);
    }

    ModelOutputs out;
    for (long i = 1; i <= cfg_.num_levels; ++i) {
        x = relu(conv(x, "conv" + std::to_string(i), i == 1 ? 1 : 2, 1));

        const std::string base = "level" + std::to_string(i);
        NodePtr h = relu(conv(x, base + ".af.conv1", 1, 0));
        h = relu(conv(h, base + ".af.conv2", 1, 1));
        h = relu(conv(h, base + ".af.conv3", 1, 1));

        LevelOutputs lo;
        lo.af_class = conv(h, base + ".af.pred_cls", 1, 1);
        lo.af_reg = exp(conv(h, base + ".af.pred_reg", 1, 1));

        NodePtr ab = conv(x, base + ".ab.pred", 1, 1);
        lo.ab_class = slice_channels(ab, 0, fg);
        lo.ab_overlap = sigmoid(slice_channels(ab, fg, fg + 1));
        lo.ab_reg = slice_channels(ab, fg + 1, fg + 3);
        out.levels.push_back(std::move(lo));
    }
    return out;
}

void Network::zero_grads() {
    for (auto& [name, node] : params_) {
        node->zero_grad();
    }
}

std::vector<std::pair<std::string, Tensor>> Network::state() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(params_.size());
    for (const auto& [name, node] : params_) {
        out.emplace_back(name, node->value);
    }
    return out;
}

void Network::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
    for (auto& [name, node] : params_) {
        const Tensor* found = nullptr;
        for (const auto& [n, t] : state) {
            if (n == name) {
                found = &t;
                break;
            }
        }
        if (found == nullptr) {
            throw std::invalid_argument("state is missing parameter '" + name + "'");
        }
        if (!found->same_shape(node->value)) {
            throw std::invalid_argument("parameter '" + name + "' has shape " +
                                        found->shape_str() + " in state but model expects " +
                                        node->value.shape_str());
        }
        node->value = *found;
    }
}

}  // namespace a2net
