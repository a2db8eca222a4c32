#include "pasnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pasnet/errors.hpp"

namespace pasnet {

Tensor cross_entropy_logits(Graph& g, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy_logits: logits must be [N,C], got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw std::out_of_range("cross_entropy_logits: label " + std::to_string(l) + " outside [0," +
                              std::to_string(c) + ")");
    }
  }
  const float* x = logits.data().data();
  std::vector<float> softmax(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = x + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) softmax[i * c + j] = static_cast<float>(std::exp(row[j] - mx) / z);
    total += std::log(z) - (row[labels[i]] - mx);
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
  if (!std::isfinite(out.item())) throw NumericError("cross_entropy_logits: non-finite loss");

  std::vector<int> lab(labels.begin(), labels.end());
  g.record(out, {logits}, [logits, out, softmax = std::move(softmax), lab = std::move(lab), n, c]() mutable {
    const float scale = out.grad()[0] / static_cast<float>(n);
    auto d = logits.grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const float onehot = static_cast<std::size_t>(lab[i]) == j ? 1.0f : 0.0f;
        d[i * c + j] += scale * (softmax[i * c + j] - onehot);
      }
    }
  });
  return out;
}

Tensor bce_with_logits(Graph& g, const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape()) {
    throw ShapeError("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  auto x = logits.data();
  auto p = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (p[i] != 0.0f && p[i] != 1.0f) {
      throw std::invalid_argument("bce_with_logits: target value " + std::to_string(p[i]) + " is not binary");
    }
    const double xi = x[i];
    total += std::max(xi, 0.0) - xi * p[i] + std::log1p(std::exp(-std::abs(xi)));
  }
  const std::size_t m = x.size();
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(m)));
  if (!std::isfinite(out.item())) throw NumericError("bce_with_logits: non-finite loss");

  g.record(out, {logits}, [logits, target, out, m]() mutable {
    const float scale = out.grad()[0] / static_cast<float>(m);
    auto x = logits.data();
    auto p = target.data();
    auto d = logits.grad();
    for (std::size_t i = 0; i < m; ++i) {
      const float sig = 1.0f / (1.0f + std::exp(-x[i]));
      d[i] += scale * (sig - p[i]);
    }
  });
  return out;
}

Tensor total_loss(Graph& g, const Tensor& l_cls, const Tensor& l_seg, const LossConfig& cfg) {
  if (!(cfg.lambda >= 0.0f) || !std::isfinite(cfg.lambda)) {
    throw std::invalid_argument("total_loss: lambda must be a finite non-negative value");
  }
  if (l_cls.numel() != 1 || l_seg.numel() != 1) throw ShapeError("total_loss: both terms must be scalars");
  if (!std::isfinite(l_cls.item()) || !std::isfinite(l_seg.item())) {
    throw NumericError("total_loss: non-finite loss term");
  }
  Tensor out = Tensor::scalar(l_cls.item() + cfg.lambda * l_seg.item());
  const float lambda = cfg.lambda;
  g.record(out, {l_cls, l_seg}, [l_cls, l_seg, out, lambda]() mutable {
    const float dy = out.grad()[0];
    if (l_cls.requires_grad()) l_cls.grad()[0] += dy;
    if (l_seg.requires_grad()) l_seg.grad()[0] += lambda * dy;
  });
  return out;
}

}  // namespace pasnet
