#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pasnet {

inline constexpr double kGradCheckTolerance = 1e-2;

struct GradCheckCase {
  std::string op;
  std::size_t instances = 0;
  double max_error = 0.0;
  bool passed() const { return max_error < kGradCheckTolerance; }
};

/// Names accepted by run_gradcheck_suite, in execution order.
std::vector<std::string> gradcheck_op_names();

/// Central-difference checks of every differentiable op on `instances`
/// random small inputs each (the end-to-end network case runs once, on a
/// [1,10,32,32] input with n_f = 4). Unknown names throw ConfigError.
std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::string>& ops, std::uint64_t seed,
                                               std::size_t instances = 20);

}  // namespace pasnet
