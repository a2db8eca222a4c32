#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pasnet/ops.hpp"
#include "pasnet/tensor.hpp"

namespace pasnet {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Fan-in scaled uniform weights, bound sqrt(6 / fan_in). The stream is
/// seeded from (seed, name) so a tensor's initial values do not depend on
/// which other tensors were built.
Tensor kaiming_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed);

/// Bias-free convolution followed by batch norm.
struct ConvBn {
  Tensor weight;  // [Cout,Cin,k,k]
  Tensor gamma;
  Tensor beta;
  ops::RunningStats stats;
  int stride = 1;
  int pad = 0;

  static ConvBn make(const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k, int stride,
                     std::uint64_t seed);
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Tensor forward(Graph& g, const Tensor& x, bool training);
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// 3x3 conv (n_in -> out) + BN + relu, then 2x2 max pool.
struct StemParams {
  ConvBn conv;

  static StemParams make(const std::string& prefix, std::size_t n_in, std::size_t out_channels, std::uint64_t seed);
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Basic residual block: two 3x3 conv+BN, relu between, projection shortcut
/// (1x1 conv + BN) when channels change or stride is 2.
struct ResidualBlockParams {
  ConvBn conv1;
  ConvBn conv2;
  std::optional<ConvBn> shortcut;
  int stride = 1;

  static ResidualBlockParams make(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                                  int stride, std::uint64_t seed);
  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv2.out_channels(); }
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Decoder stage: nearest x2 upsample, concat with the encoder skip, then two
/// 3x3 conv+BN+relu down to `out_channels`.
struct UpBlockParams {
  ConvBn conv1;
  ConvBn conv2;
  std::size_t in_channels = 0;
  std::size_t skip_channels = 0;

  static UpBlockParams make(const std::string& prefix, std::size_t in_channels, std::size_t skip_channels,
                            std::size_t out_channels, std::uint64_t seed);
  std::size_t out_channels() const { return conv2.out_channels(); }
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LinearParams {
  Tensor weight;  // [Dout,Din]
  Tensor bias;    // [Dout]

  static LinearParams make(const std::string& prefix, std::size_t in, std::size_t out, std::uint64_t seed);
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Nearest x2 upsample followed by a 1x1 conv with bias; restores input
/// resolution and maps decoder features to one logit map per slice.
struct MaskHeadParams {
  Tensor weight;  // [n_in,C,1,1]
  Tensor bias;

  static MaskHeadParams make(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                             std::uint64_t seed);
  void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor stem_forward(Graph& g, const Tensor& x, StemParams& p, bool training);
Tensor residual_block_forward(Graph& g, const Tensor& x, ResidualBlockParams& p, bool training);
Tensor up_block_forward(Graph& g, const Tensor& x, const Tensor& skip, UpBlockParams& p, bool training);
Tensor classifier_forward(Graph& g, const Tensor& features, const LinearParams& p);
Tensor mask_head_forward(Graph& g, const Tensor& x, const MaskHeadParams& p);

}  // namespace pasnet
