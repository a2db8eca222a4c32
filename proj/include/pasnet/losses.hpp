#pragma once

#include <span>

#include "pasnet/tensor.hpp"

namespace pasnet {

struct LossConfig {
  float lambda = 1.0f;  // weight of the segmentation term, >= 0
};

/// Mean over the batch of -log softmax(logits)[label]. logits [N,C], labels
/// in [0,C).
Tensor cross_entropy_logits(Graph& g, const Tensor& logits, std::span<const int> labels);

/// Mean over every element of the fused, numerically stable binary
/// cross-entropy max(x,0) - x*p + log(1 + exp(-|x|)). Targets must be 0 or 1.
Tensor bce_with_logits(Graph& g, const Tensor& logits, const Tensor& target);

/// l_cls + lambda * l_seg.
Tensor total_loss(Graph& g, const Tensor& l_cls, const Tensor& l_seg, const LossConfig& cfg);

}  // namespace pasnet
