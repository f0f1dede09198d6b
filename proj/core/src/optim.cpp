#include "vcfl/optim.hpp"

#include <cmath>
#include <sstream>

#include "vcfl/error.hpp"

namespace vcfl {

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": shape mismatch (" << a << " vs " << b << " elements)";
    throw ValidationError(os.str());
  }
}

void check_same_shape(const Mlp& a, const Mlp& b, const char* what) {
  check_same_size(a.layers.size(), b.layers.size(), what);
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) check_same_size(ta[i].size(), tb[i].size(), what);
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads, double lr,
              const SgdConfig& config, std::span<double> velocity) {
  check_same_size(params.size(), grads.size(), "sgd_step");
  check_same_size(params.size(), velocity.size(), "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = config.momentum * velocity[i] + (grads[i] + config.weight_decay * params[i]);
    params[i] -= lr * velocity[i];
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, double lr,
               const AdamConfig& config, std::span<double> first_moment,
               std::span<double> second_moment, std::uint64_t step) {
  check_same_size(params.size(), grads.size(), "adam_step");
  check_same_size(params.size(), first_moment.size(), "adam_step");
  check_same_size(params.size(), second_moment.size(), "adam_step");
  if (step == 0) throw ValidationError("adam_step: timestep is 1-based");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_moment[i] = config.beta1 * first_moment[i] + (1.0 - config.beta1) * grads[i];
    second_moment[i] =
        config.beta2 * second_moment[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = first_moment[i] / correction1;
    const double v_hat = second_moment[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

OptState make_opt_state(const Mlp& extractor, const Mlp& classifier) {
  OptState s;
  s.extractor.velocity = extractor.zeros_like();
  s.classifier.first_moment = classifier.zeros_like();
  s.classifier.second_moment = classifier.zeros_like();
  return s;
}

void sgd_step(Mlp& params, const Mlp& grads, double lr, const SgdConfig& config,
              SgdState& state) {
  check_same_shape(params, grads, "sgd_step");
  check_same_shape(params, state.velocity, "sgd_step");
  auto p = params.tensors();
  auto g = grads.tensors();
  auto v = state.velocity.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) sgd_step(p[i], g[i], lr, config, v[i]);
}

void adam_step(Mlp& params, const Mlp& grads, double lr, const AdamConfig& config,
               AdamState& state) {
  check_same_shape(params, grads, "adam_step");
  check_same_shape(params, state.first_moment, "adam_step");
  check_same_shape(params, state.second_moment, "adam_step");
  ++state.step;
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) adam_step(p[i], g[i], lr, config, m[i], v[i], state.step);
}

double lr_schedule(double progress, double base_lr, double alpha, double beta) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    std::ostringstream os;
    os << "lr_schedule: progress " << progress << " outside [0, 1]";
    throw ValidationError(os.str());
  }
  return base_lr / std::pow(1.0 + alpha * progress, beta);
}

}  // namespace vcfl
