#include "pasnet/model.hpp"

#include <algorithm>
#include <string>

#include "pasnet/errors.hpp"

namespace pasnet {
namespace {

std::string block_name(const char* kind, std::size_t i) { return std::string(kind) + std::to_string(i + 1); }

}  // namespace

void ModelConfig::validate() const {
  if (n_in < 1) throw ConfigError("n_in: must be at least 1");
  if (n_f < 1) throw ConfigError("n_f: must be at least 1");
  if (n_classes != kNumClasses) throw ConfigError("n_classes: must be 4");
  if (input_hw == 0 || input_hw % 32 != 0) {
    throw ConfigError("input_hw: must be a positive multiple of 32, got " + std::to_string(input_hw));
  }
}

std::array<std::size_t, kEncoderBlocks + 1> ModelConfig::encoder_channels() const {
  std::array<std::size_t, kEncoderBlocks + 1> ch{};
  for (std::size_t s = 0; s < ch.size(); ++s) ch[s] = 2 * n_f << s;
  return ch;
}

PasNet PasNet::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  PasNet net;
  net.config_ = config;
  const auto ch = config.encoder_channels();
  net.stem_ = StemParams::make("encoder.stem", config.n_in, ch[0], seed);
  for (std::size_t i = 0; i < kEncoderBlocks; ++i) {
    net.blocks_[i] = ResidualBlockParams::make("encoder." + block_name("block", i), ch[i], ch[i + 1], 2, seed);
  }
  net.classifier_ = LinearParams::make("classifier", ch.back(), config.n_classes, seed);
  if (config.with_decoder) {
    // up1 consumes the bottleneck; up_s joins the skip at encoder stage 4-s.
    for (std::size_t s = 0; s < kEncoderBlocks; ++s) {
      const std::size_t in = ch[kEncoderBlocks - s];
      const std::size_t skip = ch[kEncoderBlocks - s - 1];
      net.up_blocks_.push_back(UpBlockParams::make("decoder." + block_name("up", s), in, skip, skip, seed));
    }
    net.mask_head_ = MaskHeadParams::make("decoder.head", ch[0], config.n_in, seed);
  }
  return net;
}

ForwardOutput PasNet::forward(Graph& g, const Tensor& x, bool training) {
  const Shape expected_tail{config_.n_in, config_.input_hw, config_.input_hw};
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != expected_tail) {
    throw ShapeError("PasNet::forward: expected [N," + std::to_string(config_.n_in) + "," +
                     std::to_string(config_.input_hw) + "," + std::to_string(config_.input_hw) + "], got " +
                     shape_str(x.shape()));
  }
  std::array<Tensor, kEncoderBlocks + 1> stages;
  stages[0] = stem_forward(g, x, stem_, training);
  for (std::size_t i = 0; i < kEncoderBlocks; ++i) {
    stages[i + 1] = residual_block_forward(g, stages[i], blocks_[i], training);
  }
  ForwardOutput out;
  out.features = ops::global_avg_pool(g, stages.back());
  out.class_logits = classifier_forward(g, out.features, classifier_);
  if (config_.with_decoder) {
    Tensor h = stages.back();
    for (std::size_t s = 0; s < kEncoderBlocks; ++s) {
      h = up_block_forward(g, h, stages[kEncoderBlocks - s - 1], up_blocks_[s], training);
    }
    out.mask_logits = mask_head_forward(g, h, *mask_head_);
  }
  return out;
}

OutputShapes PasNet::output_shapes(std::size_t batch) const {
  OutputShapes s;
  s.features = {batch, config_.feature_dim()};
  s.class_logits = {batch, config_.n_classes};
  if (config_.with_decoder) s.mask_logits = Shape{batch, config_.n_in, config_.input_hw, config_.input_hw};
  return s;
}

std::vector<NamedTensor> PasNet::parameters() const {
  std::vector<NamedTensor> out;
  stem_.append_parameters("encoder.stem", out);
  for (std::size_t i = 0; i < kEncoderBlocks; ++i) blocks_[i].append_parameters("encoder." + block_name("block", i), out);
  classifier_.append_parameters("classifier", out);
  for (std::size_t s = 0; s < up_blocks_.size(); ++s) {
    up_blocks_[s].append_parameters("decoder." + block_name("up", s), out);
  }
  if (mask_head_) mask_head_->append_parameters("decoder.head", out);
  return out;
}

std::vector<NamedTensor> PasNet::buffers() const {
  std::vector<NamedTensor> out;
  stem_.append_buffers("encoder.stem", out);
  for (std::size_t i = 0; i < kEncoderBlocks; ++i) blocks_[i].append_buffers("encoder." + block_name("block", i), out);
  for (std::size_t s = 0; s < up_blocks_.size(); ++s) {
    up_blocks_[s].append_buffers("decoder." + block_name("up", s), out);
  }
  return out;
}

std::vector<NamedTensor> PasNet::state() const {
  auto out = parameters();
  auto bufs = buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

void PasNet::load_state(const std::vector<NamedTensor>& named) {
  auto mine = state();
  if (mine.size() != named.size()) {
    throw ConfigError("state: expected " + std::to_string(mine.size()) + " tensors, got " +
                      std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != named[i].name) {
      throw ConfigError("state: tensor " + std::to_string(i) + " is '" + named[i].name + "', expected '" +
                        mine[i].name + "'");
    }
    if (mine[i].tensor.shape() != named[i].tensor.shape()) {
      throw ShapeError("state: " + mine[i].name + " has shape " + shape_str(named[i].tensor.shape()) +
                       ", expected " + shape_str(mine[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    auto src = named[i].tensor.data();
    std::copy(src.begin(), src.end(), mine[i].tensor.data().begin());
  }
}

std::size_t PasNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

PasNet PasNet::clone() const {
  PasNet copy = build(config_, 0);
  copy.load_state(state());
  return copy;
}

ModelConfig infer_config(const std::vector<NamedTensor>& state, std::size_t input_hw) {
  const auto stem = std::find_if(state.begin(), state.end(),
                                 [](const NamedTensor& t) { return t.name == "encoder.stem.conv.weight"; });
  if (stem == state.end()) throw ConfigError("state: missing encoder.stem.conv.weight");
  const auto& s = stem->tensor.shape();
  if (s.size() != 4 || s[0] % 2 != 0) throw ShapeError("state: unexpected stem weight shape " + shape_str(s));
  ModelConfig cfg;
  cfg.n_in = s[1];
  cfg.n_f = s[0] / 2;
  cfg.input_hw = input_hw;
  cfg.with_decoder = std::any_of(state.begin(), state.end(),
                                 [](const NamedTensor& t) { return t.name.rfind("decoder.", 0) == 0; });
  cfg.validate();
  return cfg;
}

}  // namespace pasnet
