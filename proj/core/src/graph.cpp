#include "a2net/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace a2net {

namespace {

// exp() saturates instead of overflowing so a wild logit cannot poison the
// whole graph with inf/nan.
constexpr double kExpClamp = 700.0;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

void check_rank(const Tensor& t, std::size_t rank, const char* op, const char* role) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": " + role + " must have rank " +
                                    std::to_string(rank) + ", got " + t.shape_str());
    }
}

}  // namespace

void Node::ensure_grad() {
    if (grad.empty() && !value.empty()) {
        grad = Tensor(value.shape());
    }
}

void Node::zero_grad() {
    if (!grad.empty()) {
        grad.fill(0.0);
    }
}

NodePtr make_node(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

NodePtr conv1d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias,
               long stride, long padding) {
    const Tensor& x = input->value;
    const Tensor& w = weight->value;
    const Tensor& b = bias->value;
    check_rank(x, 3, "conv1d", "input");
    check_rank(w, 3, "conv1d", "weight");
    check_rank(b, 1, "conv1d", "bias");
    if (x.dim(1) != w.dim(1)) {
        throw std::invalid_argument("conv1d: input has " + std::to_string(x.dim(1)) +
                                    " channels but weight expects " + std::to_string(w.dim(1)));
    }
    if (b.dim(0) != w.dim(0)) {
        throw std::invalid_argument("conv1d: bias has " + std::to_string(b.dim(0)) +
                                    " entries but weight produces " + std::to_string(w.dim(0)) +
                                    " channels");
    }
    if (stride < 1 || padding < 0) {
        throw std::invalid_argument("conv1d: stride must be >= 1 and padding >= 0");
    }
    const long batch = x.dim(0), cin = x.dim(1), t_in = x.dim(2);
    const long cout = w.dim(0), k = w.dim(2);
    const long span = t_in + 2 * padding - k;
    if (span < 0) {
        throw std::invalid_argument("conv1d: kernel " + std::to_string(k) +
                                    " longer than padded input " +
                                    std::to_string(t_in + 2 * padding));
    }
    const long t_out = span / stride + 1;

    Tensor y({batch, cout, t_out});
    const double* xd = x.data();
    const double* wd = w.data();
    const double* bd = b.data();
    double* yd = y.data();
    for (long n = 0; n < batch; ++n) {
        for (long co = 0; co < cout; ++co) {
            for (long to = 0; to < t_out; ++to) {
                double acc = bd[co];
                const long t0 = to * stride - padding;
                for (long ci = 0; ci < cin; ++ci) {
                    const double* xrow = xd + (n * cin + ci) * t_in;
                    const double* wrow = wd + (co * cin + ci) * k;
                    for (long kk = 0; kk < k; ++kk) {
                        const long ti = t0 + kk;
                        if (ti >= 0 && ti < t_in) {
                            acc += xrow[ti] * wrow[kk];
                        }
                    }
                }
                yd[(n * cout + co) * t_out + to] = acc;
            }
        }
    }

    auto out = make_node(std::move(y));
    out->parents = {input, weight, bias};
    out->backprop = [stride, padding, batch, cin, cout, k, t_in, t_out](Node& self) {
        Node& in = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        in.ensure_grad();
        wn.ensure_grad();
        bn.ensure_grad();
        const double* gy = self.grad.data();
        const double* xd = in.value.data();
        const double* wd = wn.value.data();
        double* gx = in.grad.data();
        double* gw = wn.grad.data();
        double* gb = bn.grad.data();
        for (long n = 0; n < batch; ++n) {
            for (long co = 0; co < cout; ++co) {
                const double* gyrow = gy + (n * cout + co) * t_out;
                for (long to = 0; to < t_out; ++to) {
                    const double g = gyrow[to];
                    if (g == 0.0) continue;
                    gb[co] += g;
                    const long t0 = to * stride - padding;
                    for (long ci = 0; ci < cin; ++ci) {
                        const double* xrow = xd + (n * cin + ci) * t_in;
                        double* gxrow = gx + (n * cin + ci) * t_in;
                        const double* wrow = wd + (co * cin + ci) * k;
                        double* gwrow = gw + (co * cin + ci) * k;
                        for (long kk = 0; kk < k; ++kk) {
                            const long ti = t0 + kk;
                            if (ti >= 0 && ti < t_in) {
                                gxrow[ti] += g * wrow[kk];
                                gwrow[kk] += g * xrow[ti];
                            }
                        }
                    }
                }
            }
        }
    };
    return out;
}

NodePtr maxpool1d(const NodePtr& input, long kernel, long stride) {
    const Tensor& x = input->value;
    check_rank(x, 3, "maxpool1d", "input");
    if (kernel < 1 || stride < 1) {
        throw std::invalid_argument("maxpool1d: kernel and stride must be >= 1");
    }
    const long batch = x.dim(0), ch = x.dim(1), t_in = x.dim(2);
    if (t_in < kernel) {
        throw std::invalid_argument("maxpool1d: window " + std::to_string(kernel) +
                                    " longer than input " + std::to_string(t_in));
    }
    const long t_out = (t_in - kernel) / stride + 1;

    Tensor y({batch, ch, t_out});
    auto argmax = std::make_shared<std::vector<long>>(static_cast<std::size_t>(y.numel()));
    const double* xd = x.data();
    double* yd = y.data();
    long flat = 0;
    for (long n = 0; n < batch; ++n) {
        for (long c = 0; c < ch; ++c) {
            const double* xrow = xd + (n * ch + c) * t_in;
            for (long to = 0; to < t_out; ++to, ++flat) {
                const long t0 = to * stride;
                long best = t0;
                double bv = xrow[t0];
                for (long kk = 1; kk < kernel; ++kk) {
                    if (xrow[t0 + kk] > bv) {
                        bv = xrow[t0 + kk];
                        best = t0 + kk;
                    }
                }
                yd[flat] = bv;
                (*argmax)[static_cast<std::size_t>(flat)] = (n * ch + c) * t_in + best;
            }
        }
    }

    auto out = make_node(std::move(y));
    out->parents = {input};
    out->backprop = [argmax](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) {
            gx[(*argmax)[static_cast<std::size_t>(i)]] += gy[i];
        }
    };
    return out;
}

NodePtr relu(const NodePtr& x) {
    Tensor y(x->value.shape());
    const double* xd = x->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) {
        yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        const double* xd = in.value.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) {
            if (xd[i] > 0.0) gx[i] += gy[i];
        }
    };
    return out;
}

NodePtr exp(const NodePtr& x) {
    Tensor y(x->value.shape());
    const double* xd = x->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) {
        yd[i] = std::exp(std::min(xd[i], kExpClamp));
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        const double* yd = self.value.data();
        const double* xd = in.value.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) {
            if (xd[i] <= kExpClamp) gx[i] += gy[i] * yd[i];
        }
    };
    return out;
}

NodePtr sigmoid(const NodePtr& x) {
    Tensor y(x->value.shape());
    const double* xd = x->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) {
        // Branch on sign so neither exp() argument can overflow.
        if (xd[i] >= 0.0) {
            yd[i] = 1.0 / (1.0 + std::exp(-xd[i]));
        } else {
            const double e = std::exp(xd[i]);
            yd[i] = e / (1.0 + e);
        }
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        const double* yd = self.value.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) {
            gx[i] += gy[i] * yd[i] * (1.0 - yd[i]);
        }
    };
    return out;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor y(a->value.shape());
    const double* ad = a->value.data();
    const double* bd = b->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) yd[i] = ad[i] + bd[i];
    auto out = make_node(std::move(y));
    out->parents = {a, b};
    out->backprop = [](Node& self) {
        for (auto& p : self.parents) {
            p->ensure_grad();
            const double* gy = self.grad.data();
            double* gp = p->grad.data();
            const long n = self.grad.numel();
            for (long i = 0; i < n; ++i) gp[i] += gy[i];
        }
    };
    return out;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor y(a->value.shape());
    const double* ad = a->value.data();
    const double* bd = b->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) yd[i] = ad[i] * bd[i];
    auto out = make_node(std::move(y));
    out->parents = {a, b};
    out->backprop = [](Node& self) {
        Node& an = *self.parents[0];
        Node& bn = *self.parents[1];
        an.ensure_grad();
        bn.ensure_grad();
        const double* gy = self.grad.data();
        const double* ad = an.value.data();
        const double* bd = bn.value.data();
        double* ga = an.grad.data();
        double* gb = bn.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) {
            ga[i] += gy[i] * bd[i];
            gb[i] += gy[i] * ad[i];
        }
    };
    return out;
}

NodePtr scale(const NodePtr& x, double k) {
    Tensor y(x->value.shape());
    const double* xd = x->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) yd[i] = xd[i] * k;
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [k](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) gx[i] += gy[i] * k;
    };
    return out;
}

NodePtr add_scalar(const NodePtr& x, double k) {
    Tensor y(x->value.shape());
    const double* xd = x->value.data();
    double* yd = y.data();
    const long n = y.numel();
    for (long i = 0; i < n; ++i) yd[i] = xd[i] + k;
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) gx[i] += gy[i];
    };
    return out;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    check_rank(a->value, 2, "matmul", "lhs");
    check_rank(b->value, 2, "matmul", "rhs");
    if (a->value.dim(1) != b->value.dim(0)) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                    a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const long m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor y({m, n});
    const double* ad = a->value.data();
    const double* bd = b->value.data();
    double* yd = y.data();
    for (long i = 0; i < m; ++i) {
        for (long kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            if (av == 0.0) continue;
            for (long j = 0; j < n; ++j) {
                yd[i * n + j] += av * bd[kk * n + j];
            }
        }
    }
    auto out = make_node(std::move(y));
    out->parents = {a, b};
    out->backprop = [m, k, n](Node& self) {
        Node& an = *self.parents[0];
        Node& bn = *self.parents[1];
        an.ensure_grad();
        bn.ensure_grad();
        const double* gy = self.grad.data();
        const double* ad = an.value.data();
        const double* bd = bn.value.data();
        double* ga = an.grad.data();
        double* gb = bn.grad.data();
        for (long i = 0; i < m; ++i) {
            for (long j = 0; j < n; ++j) {
                const double g = gy[i * n + j];
                if (g == 0.0) continue;
                for (long kk = 0; kk < k; ++kk) {
                    ga[i * k + kk] += g * bd[kk * n + j];
                    gb[kk * n + j] += g * ad[i * k + kk];
                }
            }
        }
    };
    return out;
}

NodePtr reshape(const NodePtr& x, std::vector<long> shape) {
    const long want = shape_numel(shape);
    if (want != x->value.numel()) {
        throw std::invalid_argument("reshape: target holds " + std::to_string(want) +
                                    " elements but input " + x->value.shape_str() + " holds " +
                                    std::to_string(x->value.numel()));
    }
    Tensor y(std::move(shape), x->value.values());
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = self.grad.numel();
        for (long i = 0; i < n; ++i) gx[i] += gy[i];
    };
    return out;
}

NodePtr concat_channels(const NodePtr& a, const NodePtr& b) {
    check_rank(a->value, 3, "concat_channels", "lhs");
    check_rank(b->value, 3, "concat_channels", "rhs");
    if (a->value.dim(0) != b->value.dim(0) || a->value.dim(2) != b->value.dim(2)) {
        throw std::invalid_argument("concat_channels: batch/time mismatch " +
                                    a->value.shape_str() + " vs " + b->value.shape_str());
    }
    const long batch = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1),
               t = a->value.dim(2);
    Tensor y({batch, ca + cb, t});
    const double* ad = a->value.data();
    const double* bd = b->value.data();
    double* yd = y.data();
    for (long n = 0; n < batch; ++n) {
        std::copy(ad + n * ca * t, ad + (n + 1) * ca * t, yd + n * (ca + cb) * t);
        std::copy(bd + n * cb * t, bd + (n + 1) * cb * t, yd + n * (ca + cb) * t + ca * t);
    }
    auto out = make_node(std::move(y));
    out->parents = {a, b};
    out->backprop = [batch, ca, cb, t](Node& self) {
        Node& an = *self.parents[0];
        Node& bn = *self.parents[1];
        an.ensure_grad();
        bn.ensure_grad();
        const double* gy = self.grad.data();
        double* ga = an.grad.data();
        double* gb = bn.grad.data();
        for (long n = 0; n < batch; ++n) {
            const double* src = gy + n * (ca + cb) * t;
            for (long i = 0; i < ca * t; ++i) ga[n * ca * t + i] += src[i];
            for (long i = 0; i < cb * t; ++i) gb[n * cb * t + i] += src[ca * t + i];
        }
    };
    return out;
}

NodePtr slice_channels(const NodePtr& x, long begin, long end) {
    check_rank(x->value, 3, "slice_channels", "input");
    const long batch = x->value.dim(0), ch = x->value.dim(1), t = x->value.dim(2);
    if (begin < 0 || end > ch || begin >= end) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + ", " +
                                    std::to_string(end) + ") invalid for " +
                                    std::to_string(ch) + " channels");
    }
    const long cs = end - begin;
    Tensor y({batch, cs, t});
    const double* xd = x->value.data();
    double* yd = y.data();
    for (long n = 0; n < batch; ++n) {
        std::copy(xd + (n * ch + begin) * t, xd + (n * ch + end) * t, yd + n * cs * t);
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    out->backprop = [batch, ch, t, begin, cs](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        for (long n = 0; n < batch; ++n) {
            for (long i = 0; i < cs * t; ++i) {
                gx[(n * ch + begin) * t + i] += gy[n * cs * t + i];
            }
        }
    };
    return out;
}

NodePtr sum(const NodePtr& x) {
    double acc = 0.0;
    const double* xd = x->value.data();
    const long n = x->value.numel();
    for (long i = 0; i < n; ++i) acc += xd[i];
    auto out = make_node(Tensor::scalar(acc));
    out->parents = {x};
    out->backprop = [](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double g = self.grad.data()[0];
        double* gx = in.grad.data();
        const long n = in.grad.numel();
        for (long i = 0; i < n; ++i) gx[i] += g;
    };
    return out;
}

NodePtr gather_rows(const NodePtr& x, const std::vector<std::pair<long, long>>& where) {
    check_rank(x->value, 3, "gather_rows", "input");
    const long batch = x->value.dim(0), ch = x->value.dim(1), t = x->value.dim(2);
    const long n = static_cast<long>(where.size());
    if (n == 0) {
        throw std::invalid_argument("gather_rows: empty index list");
    }
    for (const auto& [b, tt] : where) {
        if (b < 0 || b >= batch || tt < 0 || tt >= t) {
            throw std::invalid_argument("gather_rows: index (" + std::to_string(b) + ", " +
                                        std::to_string(tt) + ") outside " +
                                        x->value.shape_str());
        }
    }
    Tensor y({n, ch});
    const double* xd = x->value.data();
    double* yd = y.data();
    for (long i = 0; i < n; ++i) {
        const auto& [b, tt] = where[static_cast<std::size_t>(i)];
        for (long c = 0; c < ch; ++c) {
            yd[i * ch + c] = xd[(b * ch + c) * t + tt];
        }
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    auto idx = std::make_shared<std::vector<std::pair<long, long>>>(where);
    out->backprop = [idx, ch, t](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = static_cast<long>(idx->size());
        for (long i = 0; i < n; ++i) {
            const auto& [b, tt] = (*idx)[static_cast<std::size_t>(i)];
            for (long c = 0; c < ch; ++c) {
                gx[(b * ch + c) * t + tt] += gy[i * ch + c];
            }
        }
    };
    return out;
}

NodePtr gather_channel(const NodePtr& x, long channel,
                       const std::vector<std::pair<long, long>>& where) {
    check_rank(x->value, 3, "gather_channel", "input");
    const long batch = x->value.dim(0), ch = x->value.dim(1), t = x->value.dim(2);
    if (channel < 0 || channel >= ch) {
        throw std::invalid_argument("gather_channel: channel " + std::to_string(channel) +
                                    " outside " + x->value.shape_str());
    }
    const long n = static_cast<long>(where.size());
    if (n == 0) {
        throw std::invalid_argument("gather_channel: empty index list");
    }
    Tensor y({n});
    const double* xd = x->value.data();
    double* yd = y.data();
    for (long i = 0; i < n; ++i) {
        const auto& [b, tt] = where[static_cast<std::size_t>(i)];
        if (b < 0 || b >= batch || tt < 0 || tt >= t) {
            throw std::invalid_argument("gather_channel: index (" + std::to_string(b) + ", " +
                                        std::to_string(tt) + ") outside " +
                                        x->value.shape_str());
        }
        yd[i] = xd[(b * ch + channel) * t + tt];
    }
    auto out = make_node(std::move(y));
    out->parents = {x};
    auto idx = std::make_shared<std::vector<std::pair<long, long>>>(where);
    out->backprop = [idx, channel, ch, t](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double* gy = self.grad.data();
        double* gx = in.grad.data();
        const long n = static_cast<long>(idx->size());
        for (long i = 0; i < n; ++i) {
            const auto& [b, tt] = (*idx)[static_cast<std::size_t>(i)];
            gx[(b * ch + channel) * t + tt] += gy[i];
        }
    };
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw std::invalid_argument("softmax_rows: want [N, C], got " + logits.shape_str());
    }
    const long n = logits.dim(0), c = logits.dim(1);
    Tensor out(logits.shape());
    const double* xd = logits.data();
    double* yd = out.data();
    for (long i = 0; i < n; ++i) {
        const double* row = xd + i * c;
        double* orow = yd + i * c;
        double mx = row[0];
        for (long j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (long j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (long j = 0; j < c; ++j) orow[j] /= z;
    }
    return out;
}

NodePtr softmax_cross_entropy(const NodePtr& logits, const std::vector<long>& labels) {
    check_rank(logits->value, 2, "softmax_cross_entropy", "logits");
    const long n = logits->value.dim(0), c = logits->value.dim(1);
    if (static_cast<long>(labels.size()) != n) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    }
    for (long lbl : labels) {
        if (lbl < 0 || lbl >= c) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(lbl) +
                                        " outside [0, " + std::to_string(c) + ")");
        }
    }
    const double* xd = logits->value.data();
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double* row = xd + i * c;
        double mx = row[0];
        for (long j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (long j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        loss += std::log(z) + mx - row[labels[static_cast<std::size_t>(i)]];
    }
    auto out = make_node(Tensor::scalar(loss / static_cast<double>(n)));
    out->parents = {logits};
    auto lbl = std::make_shared<std::vector<long>>(labels);
    out->backprop = [lbl, n, c](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double g = self.grad.data()[0] / static_cast<double>(n);
        Tensor probs = softmax_rows(in.value);
        const double* pd = probs.data();
        double* gx = in.grad.data();
        for (long i = 0; i < n; ++i) {
            for (long j = 0; j < c; ++j) {
                double delta = pd[i * c + j];
                if (j == (*lbl)[static_cast<std::size_t>(i)]) delta -= 1.0;
                gx[i * c + j] += g * delta;
            }
        }
    };
    return out;
}

NodePtr smooth_l1(const NodePtr& pred, const Tensor& target) {
    check_same_shape(pred->value, target, "smooth_l1");
    const long n = pred->value.numel();
    const double* pd = pred->value.data();
    const double* td = target.data();
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double d = pd[i] - td[i];
        const double a = std::abs(d);
        loss += a < 1.0 ? 0.5 * d * d : a - 0.5;
    }
    auto out = make_node(Tensor::scalar(loss / static_cast<double>(n)));
    out->parents = {pred};
    auto tgt = std::make_shared<Tensor>(target);
    out->backprop = [tgt, n](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double g = self.grad.data()[0] / static_cast<double>(n);
        const double* pd = in.value.data();
        const double* td = tgt->data();
        double* gx = in.grad.data();
        for (long i = 0; i < n; ++i) {
            const double d = pd[i] - td[i];
            gx[i] += g * (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0));
        }
    };
    return out;
}

NodePtr mse(const NodePtr& pred, const Tensor& target) {
    check_same_shape(pred->value, target, "mse");
    const long n = pred->value.numel();
    const double* pd = pred->value.data();
    const double* td = target.data();
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double d = pd[i] - td[i];
        loss += d * d;
    }
    auto out = make_node(Tensor::scalar(loss / static_cast<double>(n)));
    out->parents = {pred};
    auto tgt = std::make_shared<Tensor>(target);
    out->backprop = [tgt, n](Node& self) {
        Node& in = *self.parents[0];
        in.ensure_grad();
        const double g = self.grad.data()[0] * 2.0 / static_cast<double>(n);
        const double* pd = in.value.data();
        const double* td = tgt->data();
        double* gx = in.grad.data();
        for (long i = 0; i < n; ++i) {
            gx[i] += g * (pd[i] - td[i]);
        }
    };
    return out;
}

void backward(const NodePtr& loss) {
    if (!loss) {
        throw std::invalid_argument("backward: null root");
    }
    if (loss->value.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    loss->value.shape_str());
    }

    // Iterative postorder so graph depth is bounded by heap, not stack.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.data()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && !node->grad.empty()) {
            node->backprop(*node);
        }
        // Interior gradients are fully consumed once scattered; dropping
        // them keeps a second backward over the same graph from replaying
        // stale contributions. Leaves accumulate across calls.
        if (!node->is_leaf()) {
            node->grad = Tensor{};
        }
    }
}

}  // namespace a2net
