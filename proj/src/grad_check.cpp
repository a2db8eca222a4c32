#include "pasnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pasnet/rng.hpp"

namespace pasnet {
namespace {

double evaluate(const ScalarFn& f) {
  Graph g(false);
  return static_cast<double>(f(g).item());
}

}  // namespace

double grad_check(const ScalarFn& f, std::vector<Tensor> wrt, const GradCheckOptions& opts) {
  for (auto& t : wrt) {
    if (!t.requires_grad()) throw std::invalid_argument("grad_check: tensor does not require grad");
    t.zero_grad();
  }
  std::vector<std::vector<float>> analytic;
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
    for (auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  Rng rng(opts.seed);
  const double centre = opts.kink_aware ? evaluate(f) : 0.0;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1.0, std::abs(n)); };
  double worst = 0.0;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto data = wrt[ti].data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(opts.max_coords);
    }
    for (auto i : coords) {
      const float orig = data[i];
      const float plus = orig + opts.eps;
      const float minus = orig - opts.eps;
      data[i] = plus;
      const double up = evaluate(f);
      data[i] = minus;
      const double down = evaluate(f);
      data[i] = orig;
      // Divide by the step actually taken after float rounding.
      const double numeric = (up - down) / (static_cast<double>(plus) - static_cast<double>(minus));
      const double a = analytic[ti][i];
      double err = rel(a, numeric);
      if (opts.kink_aware) {
        const double right = (up - centre) / (static_cast<double>(plus) - static_cast<double>(orig));
        const double left = (centre - down) / (static_cast<double>(orig) - static_cast<double>(minus));
        if (rel(right, left) > opts.kink_threshold) {
          err = std::min(rel(a, right), rel(a, left));
          // Two kinks can straddle the point; a shorter one-sided step may
          // clear the nearer one.
          const float q_plus = orig + 0.25f * opts.eps, q_minus = orig - 0.25f * opts.eps;
          data[i] = q_plus;
          const double q_up = evaluate(f);
          data[i] = q_minus;
          const double q_down = evaluate(f);
          data[i] = orig;
          err = std::min({err, rel(a, (q_up - centre) / (static_cast<double>(q_plus) - static_cast<double>(orig))),
                          rel(a, (centre - q_down) / (static_cast<double>(orig) - static_cast<double>(q_minus)))});
        }
      }
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace pasnet
