#pragma once

#include <cstdint>
#include <span>

#include "vcfl/model.hpp"

namespace vcfl {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 2e-4;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// v ← momentum·v + (g + wd·p);  p ← p − lr·v
void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              const SgdConfig& config, std::span<double> velocity);

/// Bias-corrected adaptive-moment update at timestep `step` (1-based).
void adam_step(std::span<double> params, std::span<const double> grads, double lr,
               const AdamConfig& config, std::span<double> first_moment,
               std::span<double> second_moment, std::uint64_t step);

struct SgdState {
  Mlp velocity;
  bool operator==(const SgdState&) const = default;
};

struct AdamState {
  Mlp first_moment;
  Mlp second_moment;
  std::uint64_t step = 0;
  bool operator==(const AdamState&) const = default;
};

/// Momentum buffers for the extractor and moment buffers for the classifier.
struct OptState {
  SgdState extractor;
  AdamState classifier;
  bool operator==(const OptState&) const = default;
};

OptState make_opt_state(const Mlp& extractor, const Mlp& classifier);

void sgd_step(Mlp& params, const Mlp& grads, double lr, const SgdConfig& config,
              SgdState& state);
void adam_step(Mlp& params, const Mlp& grads, double lr, const AdamConfig& config,
               AdamState& state);

/// μ₀ / (1 + α p)^β for progress p ∈ [0, 1].
double lr_schedule(double progress, double base_lr, double alpha, double beta);

}  // namespace vcfl
