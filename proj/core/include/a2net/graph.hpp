#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "a2net/tensor.hpp"

namespace a2net {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of a reverse-mode differentiation graph.
///
/// Every operation below produces a fresh Node whose `backprop` closure
/// scatters the node's gradient into its parents. Values are treated as
/// immutable once produced; gradients accumulate until zero_grad() so a
/// missing reset shows up as a doubled gradient rather than silence.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use, same shape as value
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad();
    void zero_grad();
    bool is_leaf() const { return parents.empty(); }
};

NodePtr make_node(Tensor value);
inline NodePtr constant(Tensor value) { return make_node(std::move(value)); }
inline NodePtr leaf(Tensor value) { return make_node(std::move(value)); }

// 1-D network primitives. Temporal convolution is cross-correlation
// (no kernel flip); max-pool breaks ties toward the lowest index.
NodePtr conv1d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias,
               long stride, long padding);
NodePtr maxpool1d(const NodePtr& input, long kernel, long stride);

// Elementwise and structural glue.
NodePtr relu(const NodePtr& x);
NodePtr exp(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, double k);
NodePtr add_scalar(const NodePtr& x, double k);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr reshape(const NodePtr& x, std::vector<long> shape);
NodePtr concat_channels(const NodePtr& a, const NodePtr& b);
NodePtr slice_channels(const NodePtr& x, long begin, long end);
NodePtr sum(const NodePtr& x);

/// Rows of a [B, C, T] map selected as an [N, C] matrix; `where` holds
/// (batch, time) pairs. Backward scatter-adds into the map.
NodePtr gather_rows(const NodePtr& x, const std::vector<std::pair<long, long>>& where);

/// Single channel of a [B, C, T] map selected as an [N] vector.
NodePtr gather_channel(const NodePtr& x, long channel,
                       const std::vector<std::pair<long, long>>& where);

// Losses. Reductions are means over the leading dimension.
NodePtr softmax_cross_entropy(const NodePtr& logits, const std::vector<long>& labels);
NodePtr smooth_l1(const NodePtr& pred, const Tensor& target);
NodePtr mse(const NodePtr& pred, const Tensor& target);

/// Populates gradients of every node reachable from `loss`.
/// Rejects non-scalar roots. Repeated calls accumulate.
void backward(const NodePtr& loss);

/// Row-wise stable softmax of an [N, C] tensor (value-level helper used by
/// the loss backward pass and by inference decoding).
Tensor softmax_rows(const Tensor& logits);

}  // namespace a2net
