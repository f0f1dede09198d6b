#include "grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "vcfl/dataset.hpp"
#include "vcfl/error.hpp"
#include "vcfl/losses.hpp"
#include "vcfl/model.hpp"
#include "vcfl/numcore.hpp"
#include "vcfl/rng.hpp"

namespace vcfl::cli {

namespace {

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

std::vector<double> flatten(const Mlp& net) {
  std::vector<double> out;
  for (auto t : net.tensors()) out.insert(out.end(), t.begin(), t.end());
  return out;
}

void unflatten(Mlp& net, std::span<const double> flat) {
  std::size_t offset = 0;
  for (auto t : net.tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  }
}

Matrix with_values(const Matrix& shape, std::span<const double> values) {
  Matrix m(shape.rows(), shape.cols());
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

std::vector<int> random_views(RngStream& rng, std::size_t n) {
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(rng.below(kNumViews));
  return out;
}

class Checker {
 public:
  explicit Checker(const GradCheckOptions& options) : options_(options) {}

  void compare(GradCheckComponent& component, std::vector<double> analytic,
               const ScalarFunction& f, std::span<const double> x) {
    if (component.name == options_.perturb_component && !analytic.empty())
      analytic.front() += options_.perturbation;
    const auto numeric = finite_diff_grad(f, x, options_.step);
    component.coordinates += x.size();
    component.max_rel_error =
        std::max(component.max_rel_error, max_relative_error(analytic, numeric));
  }

 private:
  const GradCheckOptions& options_;
};

constexpr std::size_t kIds = 4;
constexpr std::size_t kPerId = 2;
constexpr std::size_t kBatch = kIds * kPerId;
constexpr std::size_t kFeatureDim = 6;

}  // namespace

std::vector<std::string> grad_check_component_names() {
  return {"triplet",          "center",           "sift_guided",       "view_d_plus",
          "view_d_minus",     "extractor_layers", "classifier_layers", "combined_feature"};
}

std::vector<GradCheckComponent> run_grad_check(const GradCheckOptions& options) {
  if (options.instances == 0) throw ValidationError("grad-check needs at least one instance");
  std::vector<GradCheckComponent> report;
  for (const auto& name : grad_check_component_names()) report.push_back({name});
  auto component = [&report](const std::string& name) -> GradCheckComponent& {
    return *std::find_if(report.begin(), report.end(),
                         [&](const GradCheckComponent& c) { return c.name == name; });
  };
  Checker check(options);

  const RngStream root(options.seed, streams::kGradCheck);
  for (std::size_t inst = 0; inst < options.instances; ++inst) {
    RngStream rng = root.split(inst);
    std::vector<std::uint32_t> ids;
    for (std::uint32_t y = 0; y < kIds; ++y)
      for (std::size_t j = 0; j < kPerId; ++j) ids.push_back(y * 3 + 1);

    const Matrix features = random_matrix(rng, kBatch, kFeatureDim, 1.0);
    const double margin = 0.5 + rng.uniform();

    {
      auto loss = [&](std::span<const double> x) {
        const Matrix f = with_values(features, x);
        return triplet_loss(f, batch_hard_select(f, ids), margin).loss;
      };
      const auto analytic = triplet_loss(features, batch_hard_select(features, ids), margin);
      check.compare(component("triplet"),
                    {analytic.feature_grad.values().begin(), analytic.feature_grad.values().end()},
                    loss, features.values());
    }

    CenterTable centers;
    centers.centers = random_matrix(rng, kIds, kFeatureDim, 1.0);
    for (std::uint32_t y = 0; y < kIds; ++y) centers.identities.push_back(y * 3 + 1);
    {
      auto loss = [&](std::span<const double> x) {
        return center_loss(with_values(features, x), ids, centers).loss;
      };
      const auto analytic = center_loss(features, ids, centers);
      check.compare(component("center"),
                    {analytic.feature_grad.values().begin(), analytic.feature_grad.values().end()},
                    loss, features.values());
    }

    Matrix bow(kBatch, kFeatureDim);
    for (std::size_t i = 0; i < kBatch; ++i) {
      auto row = bow.row(i);
      for (double& v : row) v = std::abs(rng.normal());
      const double norm = std::sqrt(squared_norm(row));
      for (double& v : row) v /= norm;
    }
    {
      auto loss = [&](std::span<const double> x) {
        return sift_guided_loss(with_values(features, x), bow).loss;
      };
      const auto analytic = sift_guided_loss(features, bow);
      check.compare(component("sift_guided"),
                    {analytic.feature_grad.values().begin(), analytic.feature_grad.values().end()},
                    loss, features.values());
    }

    const ClassifierParams classifier =
        init_classifier(MlpShape::classifier(kFeatureDim, 5), options.seed * 1000 + inst);
    const std::vector<int> views = random_views(rng, kBatch);
    for (const ViewMode mode : {ViewMode::kPlus, ViewMode::kMinus}) {
      const std::vector<int> targets =
          mode == ViewMode::kPlus ? views : std::vector<int>(kBatch, kCommonViewClass);
      auto& comp = component(mode == ViewMode::kPlus ? "view_d_plus" : "view_d_minus");
      const auto forward = classifier_forward(classifier, features);
      const auto back = classifier_backward(classifier, forward, targets, mode);

      auto wrt_features = [&](std::span<const double> x) {
        return view_ce(classifier_forward(classifier, with_values(features, x)).probs, targets,
                       mode);
      };
      check.compare(comp, {back.feature_grad.values().begin(), back.feature_grad.values().end()},
                    wrt_features, features.values());

      const auto theta = flatten(classifier.net);
      auto wrt_params = [&](std::span<const double> x) {
        ClassifierParams moved = classifier;
        unflatten(moved.net, x);
        return view_ce(classifier_forward(moved, features).probs, targets, mode);
      };
      check.compare(comp, flatten(back.grads), wrt_params, theta);
    }

    {
      const ExtractorParams extractor =
          init_extractor(MlpShape::extractor(12, kFeatureDim, {10, 8}), options.seed * 1000 + inst);
      Matrix images(4, 12);
      for (double& v : images.values()) v = rng.uniform();
      const Matrix probe = random_matrix(rng, 4, kFeatureDim, 1.0);
      auto objective = [&](const ExtractorParams& params) {
        const Matrix f = extractor_forward(params, images).features;
        return dot(f.values(), probe.values());
      };
      const auto forward = extractor_forward(extractor, images);
      const Mlp grads = extractor_backward(extractor, forward.cache, probe);
      auto wrt_params = [&](std::span<const double> x) {
        ExtractorParams moved = extractor;
        unflatten(moved.net, x);
        return objective(moved);
      };
      check.compare(component("extractor_layers"), flatten(grads), wrt_params,
                    flatten(extractor.net));
    }

    {
      const Matrix probe = random_matrix(rng, kBatch, kViewClasses, 1.0);
      const auto cache = mlp_forward(classifier.net, features);
      const auto back = mlp_backward(classifier.net, cache, probe);
      auto wrt_params = [&](std::span<const double> x) {
        Mlp moved = classifier.net;
        unflatten(moved, x);
        return dot(mlp_forward(moved, features).output().values(), probe.values());
      };
      auto& comp = component("classifier_layers");
      check.compare(comp, flatten(back.grads), wrt_params, flatten(classifier.net));
      auto wrt_input = [&](std::span<const double> x) {
        return dot(mlp_forward(classifier.net, with_values(features, x)).output().values(),
                   probe.values());
      };
      check.compare(comp, {back.input_grad.values().begin(), back.input_grad.values().end()},
                    wrt_input, features.values());
    }

    {
      LossWeights weights;
      weights.center = 0.7;
      weights.sift = 0.4;
      weights.adversarial = 0.5;
      weights.margin = margin;
      auto evaluate = [&](const Matrix& f) {
        const LossResult trip = triplet_loss(f, batch_hard_select(f, ids), weights.margin);
        const LossResult cen = center_loss(f, ids, centers);
        const SiftGuidedResult sg = sift_guided_loss(f, bow);
        const auto forward = classifier_forward(classifier, f);
        const auto back = classifier_backward(classifier, forward, {}, ViewMode::kMinus);
        const LossResult minus{view_ce(forward.probs, {}, ViewMode::kMinus), back.feature_grad};
        return combined_feature_loss({&trip, &cen, &sg, &minus}, weights, f.rows(), f.cols());
      };
      const LossResult analytic = evaluate(features);
      auto loss = [&](std::span<const double> x) { return evaluate(with_values(features, x)).loss; };
      check.compare(component("combined_feature"),
                    {analytic.feature_grad.values().begin(), analytic.feature_grad.values().end()},
                    loss, features.values());
    }

    for (auto& c : report) ++c.instances;
  }
  return report;
}

}  // namespace vcfl::cli
