#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vcfl::cli {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 10;
  double step = 1e-5;
  /// Test hook: adds `perturbation` to the first analytic gradient entry of the
  /// named component.
  std::string perturb_component;
  double perturbation = 1e-3;
};

struct GradCheckComponent {
  std::string name;
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;

  bool passed() const { return max_rel_error < kGradCheckTolerance; }
};

/// Analytic vs central-difference gradients for every loss head and both
/// networks on small random instances.
std::vector<GradCheckComponent> run_grad_check(const GradCheckOptions& options);

std::vector<std::string> grad_check_component_names();

}  // namespace vcfl::cli
