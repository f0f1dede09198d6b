#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vcfl/numcore.hpp"

namespace vcfl {

inline constexpr std::size_t kViewClasses = 5;
inline constexpr int kCommonViewClass = 4;
inline constexpr std::size_t kNumTrueViews = 4;
/// Subtracted from [0, 1] pixel intensities before the first extractor layer.
inline constexpr double kInputOffset = 0.5;

/// Fully connected layer computing x·W + b; W is fan_in × fan_out.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// Rectified-linear MLP with a linear output layer.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }
  std::size_t parameter_count() const;

  /// Every weight and bias buffer, in layer order (weight before bias).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  /// Zero-filled copy with the same shapes.
  Mlp zeros_like() const;

  bool operator==(const Mlp&) const = default;
};

/// Layer widths from input to output, e.g. {1024, 256, 128, 64}.
struct MlpShape {
  std::vector<std::size_t> widths;

  static MlpShape extractor(std::size_t input_dim, std::size_t feature_dim = 64,
                            std::vector<std::size_t> hidden = {256, 128});
  static MlpShape classifier(std::size_t feature_dim = 64, std::size_t hidden = 32);
};

struct ExtractorParams {
  Mlp net;
  std::size_t feature_dim() const { return net.output_dim(); }
  bool operator==(const ExtractorParams&) const = default;
};

struct ClassifierParams {
  Mlp net;
  bool operator==(const ClassifierParams&) const = default;
};

/// Weights ~ N(0, 2/fan_in), biases zero.
Mlp init_mlp(const MlpShape& shape, std::uint64_t seed, std::uint64_t stream_id);
ExtractorParams init_extractor(const MlpShape& shape, std::uint64_t seed);
/// The classifier shape must end in 5 outputs.
ClassifierParams init_classifier(const MlpShape& shape, std::uint64_t seed);

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // x·W + b per layer
  std::vector<Matrix> post;  // activation per layer; last entry is the output

  const Matrix& output() const { return post.back(); }
};

struct MlpBackward {
  Mlp grads;
  Matrix input_grad;
};

ForwardCache mlp_forward(const Mlp& net, const Matrix& input);
MlpBackward mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad);

struct ExtractorForward {
  Matrix features;
  ForwardCache cache;
};

/// Images are rows of [0, 1] intensities; the cache holds the centered input.
ExtractorForward extractor_forward(const ExtractorParams& params, const Matrix& images);
Mlp extractor_backward(const ExtractorParams& params, const ForwardCache& cache,
                       const Matrix& feature_grad);

struct ClassifierForward {
  Matrix logits;
  Matrix probs;
  ForwardCache cache;
};

ClassifierForward classifier_forward(const ClassifierParams& params, const Matrix& features);

/// d+ trains the classifier on true views (0..3); d- targets the common view
/// class 4. kUniform is the soft-target alternative for d-: probability 1/4 on
/// each of the four views.
enum class ViewMode { kPlus, kMinus, kUniform };

struct ClassifierBackward {
  Mlp grads;
  Matrix feature_grad;
};

/// Gradients of the mean view cross-entropy. In d- mode every target must be
/// the common-view class; targets may be empty to mean "all common view".
ClassifierBackward classifier_backward(const ClassifierParams& params,
                                       const ClassifierForward& forward,
                                       std::span<const int> targets, ViewMode mode);

/// Validates targets for the mode and expands an empty d- target list. In
/// kUniform mode targets must be empty and the result is empty.
std::vector<int> resolve_view_targets(std::span<const int> targets, ViewMode mode,
                                      std::size_t rows);

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t checksum(const Mlp& net);

}  // namespace vcfl
