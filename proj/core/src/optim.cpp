#include "a2net/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace a2net {

void Adam::step(const ParamList& params) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    for (const auto& [name, node] : params) {
        Tensor& p = node->value;
        auto [mit, fresh_m] = m_.try_emplace(name, Tensor(p.shape()));
        auto [vit, fresh_v] = v_.try_emplace(name, Tensor(p.shape()));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        if (!m.same_shape(p) || !v.same_shape(p)) {
            throw std::invalid_argument("Adam: stored state for '" + name +
                                        "' has shape " + m.shape_str() +
                                        " but parameter is " + p.shape_str());
        }

        const bool has_grad = !node->grad.empty();
        const double* g = has_grad ? node->grad.data() : nullptr;
        double* pd = p.data();
        double* md = m.data();
        double* vd = v.data();
        const long n = p.numel();
        for (long i = 0; i < n; ++i) {
            const double gi = has_grad ? g[i] : 0.0;
            md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gi;
            vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            pd[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::restore(long step_count, std::map<std::string, Tensor> m,
                   std::map<std::string, Tensor> v) {
    if (step_count < 0) {
        throw std::invalid_argument("Adam: negative step count");
    }
    step_count_ = step_count;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace a2net
