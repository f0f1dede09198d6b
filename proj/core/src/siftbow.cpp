#include "vcfl/siftbow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vcfl/binary_io.hpp"
#include "vcfl/error.hpp"
#include "vcfl/parallel.hpp"
#include "vcfl/rng.hpp"

namespace vcfl {

namespace {

constexpr std::string_view kVocabMagic = "VCFLVOC1";
constexpr std::string_view kBowMagic = "VCFLVEC1";

void normalize(std::span<double> v) {
  const double n = std::sqrt(squared_norm(v));
  if (n > 0.0)
    for (double& x : v) x /= n;
}

}  // namespace

std::vector<Descriptor> extract_descriptors(std::span<const double> image, std::size_t height,
                                            std::size_t width) {
  if (image.size() != height * width)
    throw ValidationError("extract_descriptors: image length does not match H*W");
  if (height < kWindowSize || width < kWindowSize) {
    std::ostringstream os;
    os << "extract_descriptors: image " << height << "x" << width
       << " is smaller than one " << kWindowSize << "x" << kWindowSize << " window";
    throw ValidationError(os.str());
  }

  auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(height) - 1);
    c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(width) - 1);
    return image[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)];
  };

  // Gradient magnitude and orientation bin for every pixel.
  std::vector<double> magnitude(image.size());
  std::vector<std::size_t> bin(image.size());
  const double bin_width = 2.0 * std::numbers::pi / kOrientationBins;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const auto ri = static_cast<std::ptrdiff_t>(r);
      const auto ci = static_cast<std::ptrdiff_t>(c);
      const double gx = 0.5 * (px(ri, ci + 1) - px(ri, ci - 1));
      const double gy = 0.5 * (px(ri + 1, ci) - px(ri - 1, ci));
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += 2.0 * std::numbers::pi;
      const std::size_t i = r * width + c;
      magnitude[i] = std::sqrt(gx * gx + gy * gy);
      bin[i] = std::min(kOrientationBins - 1, static_cast<std::size_t>(theta / bin_width));
    }
  }

  const double sigma = kWindowSize / 2.0;
  const double center = (kWindowSize - 1) / 2.0;
  std::vector<Descriptor> out;
  for (std::size_t r0 = 0; r0 + kWindowSize <= height; r0 += kGridStride) {
    for (std::size_t c0 = 0; c0 + kWindowSize <= width; c0 += kGridStride) {
      Descriptor d;
      d.row = r0;
      d.col = c0;
      double energy = 0.0;
      for (std::size_t dr = 0; dr < kWindowSize; ++dr) {
        for (std::size_t dc = 0; dc < kWindowSize; ++dc) {
          const std::size_t i = (r0 + dr) * width + (c0 + dc);
          const double m = magnitude[i];
          energy += m * m;
          const double yr = dr - center, xc = dc - center;
          const double weight = std::exp(-(yr * yr + xc * xc) / (2.0 * sigma * sigma));
          const std::size_t cell = (dr / kCellSize) * (kWindowSize / kCellSize) + dc / kCellSize;
          d.values[cell * kOrientationBins + bin[i]] += weight * m;
        }
      }
      if (energy < kMinWindowEnergy) continue;
      normalize(d.values);
      for (double& v : d.values) v = std::min(v, kDescriptorClip);
      normalize(d.values);
      out.push_back(d);
    }
  }
  return out;
}

Matrix descriptor_matrix(std::span<const Descriptor> descriptors) {
  Matrix m(descriptors.size(), kDescriptorDim);
  for (std::size_t i = 0; i < descriptors.size(); ++i)
    std::copy(descriptors[i].values.begin(), descriptors[i].values.end(), m.row(i).begin());
  return m;
}

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    auto cr = centroids.row(c);
    double d = 0.0;
    for (std::size_t j = 0; j < point.size(); ++j) {
      const double diff = point[j] - cr[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    d += diff * diff;
  }
  return d;
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::size_t first = rng.below(n);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = sq_distance(points.row(i), centroids.row(0));

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : closest) total += d;
    if (!(total > 0.0)) {
      std::ostringstream os;
      os << "train_vocabulary: only " << c << " distinct points available for k=" << k;
      throw ValidationError(os.str());
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (closest[i] <= 0.0) continue;
      acc += closest[i];
      pick = i;
      if (acc > target) break;
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      closest[i] = std::min(closest[i], sq_distance(points.row(i), centroids.row(c)));
  }
  return centroids;
}

}  // namespace

BowVocabulary train_vocabulary(const Matrix& points, std::size_t k, std::uint64_t seed,
                               std::size_t max_iters) {
  if (k < 2) throw ValidationError("train_vocabulary: k must be >= 2");
  if (points.rows() < k) {
    std::ostringstream os;
    os << "train_vocabulary: " << points.rows() << " descriptors are fewer than k=" << k;
    throw ValidationError(os.str());
  }
  require_finite(points.values(), "train_vocabulary input");

  RngStream rng(seed, streams::kVocabulary);
  BowVocabulary vocab;
  vocab.seed = seed;
  vocab.centroids = kmeans_plus_plus(points, k, rng);

  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  std::vector<std::size_t> assignment(n, k);
  std::vector<double> dist(n);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iters); ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest_centroid(vocab.centroids, points.row(i));
      dist[i] = sq_distance(points.row(i), vocab.centroids.row(a));
      inertia += dist[i];
      if (a != assignment[i]) changed = true;
      assignment[i] = a;
    }
    vocab.inertia = inertia;
    vocab.inertia_history.push_back(inertia);
    vocab.iterations = iter + 1;
    if (!changed || iter + 1 == max_iters) break;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assignment[i]);
      auto p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      ++counts[assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      auto centroid = vocab.centroids.row(c);
      if (counts[c] > 0) {
        auto s = sums.row(c);
        for (std::size_t j = 0; j < dim; ++j) centroid[j] = s[j] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-fit point not already used.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
      taken[far] = true;
      dist[far] = 0.0;
      std::copy(points.row(far).begin(), points.row(far).end(), centroid.begin());
    }
  }
  return vocab;
}

std::vector<double> bow_histogram(std::span<const Descriptor> descriptors,
                                  const BowVocabulary& vocab) {
  if (descriptors.empty()) throw ValidationError("flat image, no BoW encoding");
  std::vector<double> hist(vocab.k(), 0.0);
  for (const auto& d : descriptors) hist[nearest_centroid(vocab.centroids, d.values)] += 1.0;
  normalize(hist);
  return hist;
}

std::vector<double> bow_encode(std::span<const double> image, std::size_t height,
                               std::size_t width, const BowVocabulary& vocab) {
  return bow_histogram(extract_descriptors(image, height, width), vocab);
}

Matrix training_descriptors(const SynthDataset& dataset) {
  std::vector<Descriptor> all;
  for (const auto& s : dataset.samples) {
    if (s.split != SplitTag::kTrain) continue;
    auto d = extract_descriptors(s.image, dataset.height, dataset.width);
    all.insert(all.end(), d.begin(), d.end());
  }
  return descriptor_matrix(all);
}

Matrix bow_encode_dataset(const SynthDataset& dataset, const BowVocabulary& vocab) {
  Matrix bow(dataset.samples.size(), vocab.k());
  parallel_for(dataset.samples.size(), 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = dataset.samples[i];
      const auto row = bow_encode(s.image, dataset.height, dataset.width, vocab);
      std::copy(row.begin(), row.end(), bow.row(i).begin());
    }
  });
  return bow;
}

void save_vocabulary(const BowVocabulary& vocab, const std::filesystem::path& path) {
  if (vocab.centroids.cols() != kDescriptorDim)
    throw ValidationError("save_vocabulary: centroid dimension must be 128");
  ByteWriter w;
  w.put_magic(kVocabMagic);
  w.put_u32(static_cast<std::uint32_t>(vocab.k()));
  w.put_u32(static_cast<std::uint32_t>(kDescriptorDim));
  for (double v : vocab.centroids.values()) w.put_f64(v);
  write_file_bytes(path, w.bytes());
}

BowVocabulary load_vocabulary(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  try {
    r.expect_magic(kVocabMagic);
    const std::uint32_t k = r.get_u32("k");
    const std::uint32_t dim = r.get_u32("dim");
    if (dim != kDescriptorDim) {
      std::ostringstream os;
      os << "vocabulary dim " << dim << " at byte offset 12, expected " << kDescriptorDim;
      throw FormatError(os.str());
    }
    BowVocabulary vocab;
    vocab.centroids = Matrix(k, dim);
    for (double& v : vocab.centroids.values()) v = r.get_f64("centroid");
    r.expect_end();
    return vocab;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_bow_cache(const Matrix& bow, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kBowMagic);
  w.put_u32(static_cast<std::uint32_t>(bow.rows()));
  w.put_u32(static_cast<std::uint32_t>(bow.cols()));
  for (double v : bow.values()) w.put_f64(v);
  write_file_bytes(path, w.bytes());
}

Matrix load_bow_cache(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  try {
    r.expect_magic(kBowMagic);
    const std::uint32_t n = r.get_u32("n");
    const std::uint32_t k = r.get_u32("k");
    Matrix bow(n, k);
    for (double& v : bow.values()) v = r.get_f64("bow entry");
    r.expect_end();
    return bow;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vcfl
