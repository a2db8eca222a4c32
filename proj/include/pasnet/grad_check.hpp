#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "pasnet/tensor.hpp"

namespace pasnet {

/// Scalar-valued function of tensors it closes over.
using ScalarFn = std::function<Tensor(Graph&)>;

struct GradCheckOptions {
  float eps = 1e-3f;
  /// Coordinates probed per tensor; 0 probes every coordinate. When
  /// sampling, coordinates are drawn without replacement from `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// When the two one-sided differences disagree by more than
  /// `kink_threshold` (relative), the coordinate sits on a relu kink within
  /// the probe step; score it against the nearer one-sided difference.
  bool kink_aware = false;
  double kink_threshold = 1e-2;
};

/// Compares the recorded backward pass of `f` against central differences
/// (f(x+eps) - f(x-eps)) / 2eps at every probed coordinate of every tensor in
/// `wrt`. Returns max |analytic - numeric| / max(1, |numeric|).
///
/// `f` must be deterministic; tensors in `wrt` must require grad. Their data
/// is perturbed in place and restored before returning.
double grad_check(const ScalarFn& f, std::vector<Tensor> wrt, const GradCheckOptions& opts = {});

inline double grad_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& opts = {}) {
  return grad_check(f, std::vector<Tensor>{x}, opts);
}

}  // namespace pasnet
