#include "pasnet/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "pasnet/errors.hpp"
#include "pasnet/grad_check.hpp"
#include "pasnet/layers.hpp"
#include "pasnet/losses.hpp"
#include "pasnet/model.hpp"
#include "pasnet/ops.hpp"
#include "pasnet/rng.hpp"

namespace pasnet {
namespace {

// Values bounded away from zero so relu kinks sit outside the probe step.
Tensor away_from_zero(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Distinct values spaced 0.01 apart so max-pool winners never swap.
Tensor distinct(Shape shape, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01f * static_cast<float>(i) - 0.5f;
  rng.shuffle(v.begin(), v.end());
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// sum(y * r) with a fixed random r, so every output coordinate matters.
Tensor project(Graph& g, const Tensor& y, const Tensor& r) { return ops::sum(g, ops::mul(g, y, r)); }

using Case = std::function<double(Rng&)>;

double conv_case(Rng& rng, int stride, std::size_t k) {
  const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 3, 6), w = pick(rng, 3, 6);
  const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
  Tensor x = uniform({n, cin, h, w}, rng, -1, 1);
  Tensor wt = uniform({cout, cin, k, k}, rng, -1, 1);
  Tensor b = uniform({cout}, rng, -1, 1);
  Tensor r = uniform(ops::conv2d_output_shape(x.shape(), wt.shape(), stride, pad), rng, -1, 1, false);
  return grad_check([&](Graph& g) { return project(g, ops::conv2d(g, x, wt, b, stride, pad), r); }, {x, wt, b});
}

const std::map<std::string, Case>& cases() {
  static const std::map<std::string, Case> table = {
      {"conv2d", [](Rng& rng) { return conv_case(rng, 1, 3); }},
      {"conv2d_stride2", [](Rng& rng) { return conv_case(rng, 2, 3); }},
      {"conv2d_1x1", [](Rng& rng) { return conv_case(rng, static_cast<int>(pick(rng, 1, 2)), 1); }},
      {"maxpool2d",
       [](Rng& rng) {
         Tensor x = distinct({pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3)}, rng);
         Shape os = x.shape();
         os[2] /= 2;
         os[3] /= 2;
         Tensor r = uniform(os, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::maxpool2d(g, x), r); }, x);
       }},
      {"relu",
       [](Rng& rng) {
         Tensor x = away_from_zero({pick(rng, 1, 3), pick(rng, 1, 8)}, rng);
         Tensor r = uniform(x.shape(), rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::relu(g, x), r); }, x);
       }},
      {"batchnorm2d_train",
       [](Rng& rng) {
         const std::size_t c = pick(rng, 1, 3);
         Tensor x = uniform({pick(rng, 1, 3), c, pick(rng, 2, 4), pick(rng, 2, 4)}, rng, -2, 2);
         Tensor gamma = uniform({c}, rng, 0.5, 1.5), beta = uniform({c}, rng, -1, 1);
         Tensor r = uniform(x.shape(), rng, -1, 1, false);
         auto stats = ops::RunningStats::init(c);
         return grad_check(
             [&](Graph& g) { return project(g, ops::batchnorm2d(g, x, gamma, beta, stats, true), r); },
             {x, gamma, beta});
       }},
      {"batchnorm2d_eval",
       [](Rng& rng) {
         const std::size_t c = pick(rng, 1, 3);
         Tensor x = uniform({pick(rng, 1, 3), c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng, -2, 2);
         Tensor gamma = uniform({c}, rng, 0.5, 1.5), beta = uniform({c}, rng, -1, 1);
         Tensor r = uniform(x.shape(), rng, -1, 1, false);
         ops::RunningStats stats{uniform({c}, rng, -0.5, 0.5, false), uniform({c}, rng, 0.5, 2.0, false)};
         return grad_check(
             [&](Graph& g) { return project(g, ops::batchnorm2d(g, x, gamma, beta, stats, false), r); },
             {x, gamma, beta});
       }},
      {"add",
       [](Rng& rng) {
         const Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
         Tensor a = uniform(s, rng, -1, 1), b = uniform(s, rng, -1, 1), r = uniform(s, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::add(g, a, b), r); }, {a, b});
       }},
      {"concat_channels",
       [](Rng& rng) {
         const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
         Tensor a = uniform({n, pick(rng, 1, 3), h, w}, rng, -1, 1);
         Tensor b = uniform({n, pick(rng, 1, 3), h, w}, rng, -1, 1);
         Tensor r = uniform({n, a.dim(1) + b.dim(1), h, w}, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::concat_channels(g, a, b), r); }, {a, b});
       }},
      {"upsample_nearest2x",
       [](Rng& rng) {
         Tensor x = uniform({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng, -1, 1);
         Shape os = x.shape();
         os[2] *= 2;
         os[3] *= 2;
         Tensor r = uniform(os, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::upsample_nearest2x(g, x), r); }, x);
       }},
      {"global_avg_pool",
       [](Rng& rng) {
         Tensor x = uniform({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)}, rng, -1, 1);
         Tensor r = uniform({x.dim(0), x.dim(1)}, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::global_avg_pool(g, x), r); }, x);
       }},
      {"linear",
       [](Rng& rng) {
         const std::size_t n = pick(rng, 1, 4), din = pick(rng, 1, 6), dout = pick(rng, 1, 5);
         Tensor x = uniform({n, din}, rng, -1, 1), w = uniform({dout, din}, rng, -1, 1);
         Tensor b = uniform({dout}, rng, -1, 1), r = uniform({n, dout}, rng, -1, 1, false);
         return grad_check([&](Graph& g) { return project(g, ops::linear(g, x, w, b), r); }, {x, w, b});
       }},
      {"cross_entropy_logits",
       [](Rng& rng) {
         const std::size_t n = pick(rng, 1, 6);
         Tensor logits = uniform({n, 4}, rng, -3, 3);
         std::vector<int> labels(n);
         for (auto& l : labels) l = static_cast<int>(rng.below(4));
         return grad_check([&](Graph& g) { return cross_entropy_logits(g, logits, labels); }, logits);
       }},
      {"bce_with_logits",
       [](Rng& rng) {
         const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
         Tensor logits = uniform(s, rng, -4, 4);
         Tensor target = Tensor::zeros(s);
         for (auto& t : target.data()) t = rng.uniform() < 0.5 ? 1.0f : 0.0f;
         return grad_check([&](Graph& g) { return bce_with_logits(g, logits, target); }, logits);
       }},
      {"total_loss",
       [](Rng& rng) {
         Tensor a = uniform({1}, rng, 0, 3), b = uniform({1}, rng, 0, 3);
         const LossConfig cfg{static_cast<float>(rng.uniform(0, 2))};
         return grad_check([&](Graph& g) { return total_loss(g, a, b, cfg); }, {a, b});
       }},
      {"residual_block",
       [](Rng& rng) {
         auto p = ResidualBlockParams::make("block", 4, 8, 2, rng.next());
         Tensor x = uniform({1, 4, 8, 8}, rng, -1, 1);
         Tensor r = uniform({1, 8, 4, 4}, rng, -1, 1, false);
         std::vector<Tensor> wrt{x};
         std::vector<NamedTensor> named;
         p.append_parameters("block", named);
         for (auto& t : named) wrt.push_back(t.tensor);
         return grad_check([&](Graph& g) { return project(g, residual_block_forward(g, x, p, true), r); }, wrt,
                           {1e-3f, 24, rng.next(), true});
       }},
      {"up_block",
       [](Rng& rng) {
         auto p = UpBlockParams::make("up", 4, 2, 2, rng.next());
         Tensor x = uniform({1, 4, 4, 4}, rng, -1, 1);
         Tensor skip = uniform({1, 2, 8, 8}, rng, -1, 1);
         Tensor r = uniform({1, 2, 8, 8}, rng, -1, 1, false);
         std::vector<Tensor> wrt{x, skip};
         std::vector<NamedTensor> named;
         p.append_parameters("up", named);
         for (auto& t : named) wrt.push_back(t.tensor);
         return grad_check([&](Graph& g) { return project(g, up_block_forward(g, x, skip, p, true), r); }, wrt,
                           {1e-3f, 24, rng.next(), true});
       }},
      {"composite",
       [](Rng& rng) {
         // conv -> relu -> GAP -> linear -> cross-entropy
         Tensor x = uniform({2, 2, 5, 5}, rng, -1, 1);
         Tensor w = uniform({3, 2, 3, 3}, rng, -0.5, 0.5), b = uniform({3}, rng, -0.1, 0.1);
         Tensor lw = uniform({4, 3}, rng, -1, 1), lb = uniform({4}, rng, -1, 1);
         const std::vector<int> labels{static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4))};
         return grad_check(
             [&](Graph& g) {
               Tensor h = ops::relu(g, ops::conv2d(g, x, w, b, 1, 1));
               return cross_entropy_logits(g, ops::linear(g, ops::global_avg_pool(g, h), lw, lb), labels);
             },
             {x, w, b, lw, lb}, {1e-3f, 0, 0, true});
       }},
  };
  return table;
}

double pasnet_case(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.n_f = 4;
  cfg.input_hw = 32;
  PasNet net = PasNet::build(cfg, rng.next());
  Tensor x = uniform({1, 10, 32, 32}, rng, 0, 1);
  Tensor target = Tensor::zeros({1, 10, 32, 32});
  for (auto& t : target.data()) t = rng.uniform() < 0.3 ? 1.0f : 0.0f;
  const std::vector<int> label{static_cast<int>(rng.below(4))};
  std::vector<Tensor> wrt{x};
  for (auto& p : net.parameters()) wrt.push_back(p.tensor);
  return grad_check(
      [&](Graph& g) {
        auto out = net.forward(g, x, true);
        return total_loss(g, cross_entropy_logits(g, out.class_logits, label),
                          bce_with_logits(g, *out.mask_logits, target), LossConfig{1.0f});
      },
      wrt, {1e-3f, 6, rng.next(), true});
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : cases()) names.push_back(name);
  names.push_back("pasnet");
  return names;
}

std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::string>& ops, std::uint64_t seed,
                                               std::size_t instances) {
  std::vector<std::string> selected = ops;
  if (selected.empty() || (selected.size() == 1 && selected[0] == "all")) selected = gradcheck_op_names();
  std::vector<GradCheckCase> out;
  for (const auto& op : selected) {
    GradCheckCase c{op, 0, 0.0};
    if (op == "pasnet") {
      c.instances = 1;
      c.max_error = pasnet_case(derive_seed(seed, hash_name(op)));
    } else {
      const auto it = cases().find(op);
      if (it == cases().end()) throw ConfigError("ops: unknown op '" + op + "'");
      Rng rng(derive_seed(seed, hash_name(op)));
      for (std::size_t i = 0; i < instances; ++i) c.max_error = std::max(c.max_error, it->second(rng));
      c.instances = instances;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace pasnet
