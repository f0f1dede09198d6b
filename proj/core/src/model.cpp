#include "vcfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "vcfl/error.hpp"
#include "vcfl/rng.hpp"

namespace vcfl {

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> Mlp::tensors() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.push_back(l.weight.values());
    out.push_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> Mlp::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.push_back(l.weight.values());
    out.push_back(l.bias);
  }
  return out;
}

Mlp Mlp::zeros_like() const {
  Mlp z;
  for (const auto& l : layers)
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  return z;
}

MlpShape MlpShape::extractor(std::size_t input_dim, std::size_t feature_dim,
                             std::vector<std::size_t> hidden) {
  MlpShape s;
  s.widths.push_back(input_dim);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(feature_dim);
  return s;
}

MlpShape MlpShape::classifier(std::size_t feature_dim, std::size_t hidden) {
  return {{feature_dim, hidden, kViewClasses}};
}

Mlp init_mlp(const MlpShape& shape, std::uint64_t seed, std::uint64_t stream_id) {
  if (shape.widths.size() < 2) throw ValidationError("init_mlp: need at least input and output widths");
  for (std::size_t i = 0; i < shape.widths.size(); ++i) {
    if (shape.widths[i] == 0) {
      std::ostringstream os;
      os << "init_mlp: layer width " << i << " is zero";
      throw ValidationError(os.str());
    }
  }
  RngStream rng(seed, stream_id);
  Mlp net;
  for (std::size_t i = 0; i + 1 < shape.widths.size(); ++i) {
    const std::size_t fan_in = shape.widths[i];
    const std::size_t fan_out = shape.widths[i + 1];
    DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : layer.weight.values()) w = stddev * rng.normal();
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ExtractorParams init_extractor(const MlpShape& shape, std::uint64_t seed) {
  return {init_mlp(shape, seed, streams::kExtractorInit)};
}

ClassifierParams init_classifier(const MlpShape& shape, std::uint64_t seed) {
  if (shape.widths.empty() || shape.widths.back() != kViewClasses)
    throw ValidationError("init_classifier: output width must be 5 (4 views + common view)");
  return {init_mlp(shape, seed, streams::kClassifierInit)};
}

ForwardCache mlp_forward(const Mlp& net, const Matrix& input) {
  if (net.layers.empty()) throw ValidationError("mlp_forward: network has no layers");
  if (input.cols() != net.input_dim()) {
    std::ostringstream os;
    os << "mlp_forward: input " << input.shape_string() << " does not match first layer "
       << net.layers.front().weight.shape_string();
    throw ValidationError(os.str());
  }
  ForwardCache cache;
  cache.input = input;
  const Matrix* x = &cache.input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    Matrix z = matmul(*x, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    Matrix a = z;
    if (l + 1 < net.layers.size())
      for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    cache.pre.push_back(std::move(z));
    cache.post.push_back(std::move(a));
    x = &cache.post.back();
  }
  return cache;
}

MlpBackward mlp_backward(const Mlp& net, const ForwardCache& cache, const Matrix& output_grad) {
  if (cache.pre.size() != net.layers.size())
    throw ValidationError("mlp_backward: cache does not match network depth");
  if (output_grad.rows() != cache.output().rows() || output_grad.cols() != cache.output().cols()) {
    throw ValidationError("mlp_backward: upstream gradient " + output_grad.shape_string() +
                          " does not match output " + cache.output().shape_string());
  }
  MlpBackward out;
  out.grads = net.zeros_like();
  Matrix delta = output_grad;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (l + 1 < net.layers.size()) {
      const Matrix& z = cache.pre[l];
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (!(z.values()[i] > 0.0)) delta.values()[i] = 0.0;
    }
    const Matrix& x = l == 0 ? cache.input : cache.post[l - 1];
    DenseLayer& g = out.grads.layers[l];
    g.weight = matmul_at_b(x, delta);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
    }
    delta = matmul_a_bt(delta, net.layers[l].weight);
  }
  out.input_grad = std::move(delta);
  return out;
}

ExtractorForward extractor_forward(const ExtractorParams& params, const Matrix& images) {
  require_finite(images.values(), "extractor_forward input");
  Matrix centered = images;
  for (double& v : centered.values()) v -= kInputOffset;
  ForwardCache cache = mlp_forward(params.net, centered);
  Matrix features = cache.output();
  return {std::move(features), std::move(cache)};
}

Mlp extractor_backward(const ExtractorParams& params, const ForwardCache& cache,
                       const Matrix& feature_grad) {
  return mlp_backward(params.net, cache, feature_grad).grads;
}

ClassifierForward classifier_forward(const ClassifierParams& params, const Matrix& features) {
  if (params.net.output_dim() != kViewClasses)
    throw ValidationError("classifier_forward: classifier must have 5 outputs");
  ForwardCache cache = mlp_forward(params.net, features);
  Matrix logits = cache.output();
  Matrix probs = softmax_rows(logits);
  return {std::move(logits), std::move(probs), std::move(cache)};
}

std::vector<int> resolve_view_targets(std::span<const int> targets, ViewMode mode,
                                      std::size_t rows) {
  if (mode == ViewMode::kUniform) {
    if (!targets.empty()) throw ValidationError("view targets: uniform mode takes no class targets");
    return {};
  }
  if (mode == ViewMode::kMinus && targets.empty()) return std::vector<int>(rows, kCommonViewClass);
  if (targets.size() != rows) {
    std::ostringstream os;
    os << "view targets: got " << targets.size() << " targets for " << rows << " rows";
    throw ValidationError(os.str());
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    const bool ok = mode == ViewMode::kPlus ? (t >= 0 && t < kCommonViewClass)
                                            : t == kCommonViewClass;
    if (!ok) {
      std::ostringstream os;
      os << "view targets: class " << t << " at row " << i << " is invalid for mode "
         << (mode == ViewMode::kPlus ? "d+ (expects 0..3)" : "d- (expects 4)");
      throw ValidationError(os.str());
    }
  }
  return {targets.begin(), targets.end()};
}

ClassifierBackward classifier_backward(const ClassifierParams& params,
                                       const ClassifierForward& forward,
                                       std::span<const int> targets, ViewMode mode) {
  const std::size_t n = forward.probs.rows();
  const auto resolved = resolve_view_targets(targets, mode, n);
  Matrix logit_grad = forward.probs;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logit_grad.row(i);
    if (mode == ViewMode::kUniform) {
      for (std::size_t c = 0; c < kNumTrueViews; ++c) row[c] -= 1.0 / kNumTrueViews;
    } else {
      row[static_cast<std::size_t>(resolved[i])] -= 1.0;
    }
    for (double& v : row) v *= inv_n;
  }
  MlpBackward back = mlp_backward(params.net, forward.cache, logit_grad);
  return {std::move(back.grads), std::move(back.input_grad)};
}

std::uint64_t checksum(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto t : net.tensors()) {
    for (double v : t) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

}  // namespace vcfl
