#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pasnet/layers.hpp"
#include "pasnet/tensor.hpp"

namespace pasnet {

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kEncoderBlocks = 4;

struct ModelConfig {
  std::size_t n_in = 10;
  std::size_t n_f = 16;
  std::size_t n_classes = kNumClasses;
  std::size_t input_hw = 448;
  bool with_decoder = true;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Channel counts at the five encoder resolutions: stem output, then
  /// blocks 1..4. Stage s has 2 * n_f * 2^s channels.
  std::array<std::size_t, kEncoderBlocks + 1> encoder_channels() const;
  std::size_t feature_dim() const { return encoder_channels().back(); }

  bool operator==(const ModelConfig&) const = default;
};

struct ForwardOutput {
  Tensor class_logits;               // [N, 4], pre-softmax
  std::optional<Tensor> mask_logits;  // [N, n_in, H, W], pre-sigmoid
  Tensor features;                   // [N, feature_dim], GAP output
};

/// Shapes produced by forward() for a batch of `batch` inputs, computed
/// without running the network.
struct OutputShapes {
  Shape features;
  Shape class_logits;
  std::optional<Shape> mask_logits;
};

/// Two-branch network: residual encoder with GAP + linear classifier, and an
/// optional U-Net style decoder producing one mask logit map per input slice.
///
/// Skips are taken after the stem and after encoder blocks 1-3; block 4 is
/// the bottleneck feeding the first up-block.
class PasNet {
 public:
  static PasNet build(const ModelConfig& config, std::uint64_t seed);

  ForwardOutput forward(Graph& g, const Tensor& x, bool training);
  OutputShapes output_shapes(std::size_t batch) const;

  /// Trainable tensors in a stable order, encoder first, then classifier,
  /// then decoder.
  std::vector<NamedTensor> parameters() const;
  /// Batch-norm running statistics.
  std::vector<NamedTensor> buffers() const;
  /// parameters() followed by buffers(); what a checkpoint stores.
  std::vector<NamedTensor> state() const;
  /// Copies values from `named` into this network's state. Names and shapes
  /// must match state() exactly.
  void load_state(const std::vector<NamedTensor>& named);

  std::size_t parameter_count() const;
  /// Deep copy. Plain copies of a PasNet share tensor storage.
  PasNet clone() const;
  const ModelConfig& config() const { return config_; }

 private:
  PasNet() = default;

  ModelConfig config_;
  StemParams stem_;
  std::array<ResidualBlockParams, kEncoderBlocks> blocks_;
  LinearParams classifier_;
  std::vector<UpBlockParams> up_blocks_;  // empty without decoder
  std::optional<MaskHeadParams> mask_head_;
};

/// Recovers the model configuration from checkpoint state: n_in and n_f from
/// the stem weight, the decoder flag from the presence of decoder tensors.
ModelConfig infer_config(const std::vector<NamedTensor>& state, std::size_t input_hw);

}  // namespace pasnet
