#pragma once

#include <cstddef>

#include "pasnet/tensor.hpp"

namespace pasnet::ops {

/// Output shape of conv2d without running it. Throws ShapeError on invalid
/// geometry.
Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad);

/// 2D cross-correlation. x [N,Cin,H,W], w [Cout,Cin,k,k], bias [Cout] or an
/// undefined tensor for no bias. k in {1,3} for network use; any k >= 1 is
/// accepted. stride in {1,2}.
Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

/// 2x2 max pooling with stride 2. Gradient goes to the first maximum in
/// row-major window order.
Tensor maxpool2d(Graph& g, const Tensor& x);

Tensor relu(Graph& g, const Tensor& x);

/// Batch-norm running statistics. Not trainable.
struct RunningStats {
  Tensor mean;
  Tensor var;
  static RunningStats init(std::size_t channels);
};

inline constexpr float kBatchNormMomentum = 0.1f;
inline constexpr float kBatchNormEps = 1e-5f;

/// Per-channel batch normalization over N*H*W. In training mode normalizes
/// with batch moments (biased variance) and updates `stats` with momentum
/// 0.1 (unbiased variance); in eval mode normalizes with `stats`.
Tensor batchnorm2d(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                   bool training);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, float factor);
/// Sum of all elements as a [1] tensor.
Tensor sum(Graph& g, const Tensor& x);

/// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W], a's channels first.
Tensor concat_channels(Graph& g, const Tensor& a, const Tensor& b);

Tensor upsample_nearest2x(Graph& g, const Tensor& x);

/// [N,C,H,W] -> [N,C], spatial mean.
Tensor global_avg_pool(Graph& g, const Tensor& x);

/// x [N,Din], w [Dout,Din], bias [Dout] -> x * w^T + bias.
Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias);

/// Throws NumericError naming `op` if any value is NaN or infinite.
void ensure_finite(const Tensor& t, const char* op);

}  // namespace pasnet::ops
