#include "pasnet/layers.hpp"

#include <cmath>

#include "pasnet/errors.hpp"
#include "pasnet/rng.hpp"

namespace pasnet {
namespace {

std::string join(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

void require_channels(const Tensor& x, std::size_t expected, const char* where) {
  if (x.rank() != 4 || x.dim(1) != expected) {
    throw ShapeError(std::string(where) + ": expected " + std::to_string(expected) + " input channels, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

Tensor kaiming_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(derive_seed(seed, hash_name(name)));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(shape), std::move(values), true);
}

ConvBn ConvBn::make(const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k, int stride,
                    std::uint64_t seed) {
  ConvBn c;
  c.weight = kaiming_uniform(join(prefix, "weight"), {cout, cin, k, k}, cin * k * k, seed);
  c.gamma = Tensor::full({cout}, 1.0f, true);
  c.beta = Tensor::zeros({cout}, true);
  c.stats = ops::RunningStats::init(cout);
  c.stride = stride;
  c.pad = static_cast<int>(k / 2);
  return c;
}

Tensor ConvBn::forward(Graph& g, const Tensor& x, bool training) {
  Tensor y = ops::conv2d(g, x, weight, Tensor{}, stride, pad);
  return ops::batchnorm2d(g, y, gamma, beta, stats, training);
}

// Parameter names: "<prefix>.weight" for the conv, "<prefix>_bn.{gamma,beta}"
// for its batch norm.
void ConvBn::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + "_bn.gamma", gamma});
  out.push_back({prefix + "_bn.beta", beta});
}

void ConvBn::append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "_bn.running_mean", stats.mean});
  out.push_back({prefix + "_bn.running_var", stats.var});
}

StemParams StemParams::make(const std::string& prefix, std::size_t n_in, std::size_t out_channels,
                            std::uint64_t seed) {
  return StemParams{ConvBn::make(join(prefix, "conv"), n_in, out_channels, 3, 1, seed)};
}

void StemParams::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv.append_parameters(join(prefix, "conv"), out);
}

void StemParams::append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv.append_buffers(join(prefix, "conv"), out);
}

ResidualBlockParams ResidualBlockParams::make(const std::string& prefix, std::size_t in_channels,
                                              std::size_t out_channels, int stride, std::uint64_t seed) {
  if (stride != 1 && stride != 2) throw ConfigError("stride: residual block stride must be 1 or 2");
  ResidualBlockParams p;
  p.conv1 = ConvBn::make(join(prefix, "conv1"), in_channels, out_channels, 3, stride, seed);
  p.conv2 = ConvBn::make(join(prefix, "conv2"), out_channels, out_channels, 3, 1, seed);
  if (in_channels != out_channels || stride == 2) {
    p.shortcut = ConvBn::make(join(prefix, "shortcut"), in_channels, out_channels, 1, stride, seed);
  }
  p.stride = stride;
  return p;
}

void ResidualBlockParams::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1.append_parameters(join(prefix, "conv1"), out);
  conv2.append_parameters(join(prefix, "conv2"), out);
  if (shortcut) shortcut->append_parameters(join(prefix, "shortcut"), out);
}

void ResidualBlockParams::append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1.append_buffers(join(prefix, "conv1"), out);
  conv2.append_buffers(join(prefix, "conv2"), out);
  if (shortcut) shortcut->append_buffers(join(prefix, "shortcut"), out);
}

UpBlockParams UpBlockParams::make(const std::string& prefix, std::size_t in_channels, std::size_t skip_channels,
                                  std::size_t out_channels, std::uint64_t seed) {
  UpBlockParams p;
  p.conv1 = ConvBn::make(join(prefix, "conv1"), in_channels + skip_channels, out_channels, 3, 1, seed);
  p.conv2 = ConvBn::make(join(prefix, "conv2"), out_channels, out_channels, 3, 1, seed);
  p.in_channels = in_channels;
  p.skip_channels = skip_channels;
  return p;
}

void UpBlockParams::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1.append_parameters(join(prefix, "conv1"), out);
  conv2.append_parameters(join(prefix, "conv2"), out);
}

void UpBlockParams::append_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1.append_buffers(join(prefix, "conv1"), out);
  conv2.append_buffers(join(prefix, "conv2"), out);
}

LinearParams LinearParams::make(const std::string& prefix, std::size_t in, std::size_t out, std::uint64_t seed) {
  return LinearParams{kaiming_uniform(join(prefix, "weight"), {out, in}, in, seed), Tensor::zeros({out}, true)};
}

void LinearParams::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({join(prefix, "weight"), weight});
  out.push_back({join(prefix, "bias"), bias});
}

MaskHeadParams MaskHeadParams::make(const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                                    std::uint64_t seed) {
  return MaskHeadParams{kaiming_uniform(join(prefix, "weight"), {out_channels, in_channels, 1, 1}, in_channels, seed),
                        Tensor::zeros({out_channels}, true)};
}

void MaskHeadParams::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({join(prefix, "weight"), weight});
  out.push_back({join(prefix, "bias"), bias});
}

Tensor stem_forward(Graph& g, const Tensor& x, StemParams& p, bool training) {
  require_channels(x, p.conv.in_channels(), "stem");
  Tensor y = ops::relu(g, p.conv.forward(g, x, training));
  return ops::maxpool2d(g, y);
}

Tensor residual_block_forward(Graph& g, const Tensor& x, ResidualBlockParams& p, bool training) {
  require_channels(x, p.in_channels(), "residual block");
  Tensor h = ops::relu(g, p.conv1.forward(g, x, training));
  h = p.conv2.forward(g, h, training);
  Tensor identity = p.shortcut ? p.shortcut->forward(g, x, training) : x;
  return ops::relu(g, ops::add(g, h, identity));
}

Tensor up_block_forward(Graph& g, const Tensor& x, const Tensor& skip, UpBlockParams& p, bool training) {
  require_channels(x, p.in_channels, "up block input");
  require_channels(skip, p.skip_channels, "up block skip");
  if (skip.dim(0) != x.dim(0) || skip.dim(2) != 2 * x.dim(2) || skip.dim(3) != 2 * x.dim(3)) {
    throw ShapeError("up block: skip " + shape_str(skip.shape()) + " is not twice the spatial size of " +
                     shape_str(x.shape()));
  }
  Tensor h = ops::concat_channels(g, ops::upsample_nearest2x(g, x), skip);
  h = ops::relu(g, p.conv1.forward(g, h, training));
  return ops::relu(g, p.conv2.forward(g, h, training));
}

Tensor classifier_forward(Graph& g, const Tensor& features, const LinearParams& p) {
  return ops::linear(g, features, p.weight, p.bias);
}

Tensor mask_head_forward(Graph& g, const Tensor& x, const MaskHeadParams& p) {
  return ops::conv2d(g, ops::upsample_nearest2x(g, x), p.weight, p.bias, 1, 0);
}

}  // namespace pasnet
