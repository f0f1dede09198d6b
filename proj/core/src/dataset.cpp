#include "vcfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "vcfl/binary_io.hpp"
#include "vcfl/error.hpp"

namespace vcfl {

namespace {

constexpr std::string_view kDatasetMagic = "VCFLDS01";
constexpr std::uint32_t kMinImageSide = 8;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gabor-like blob parameters for one identity.
struct Blob {
  double cx, cy, theta, freq, sigma, amplitude;
};

// Continuous canonical appearance of one identity.
class Canonical {
 public:
  Canonical(std::vector<Blob> blobs, const GenConfig& cfg) : blobs_(std::move(blobs)) {
    double peak = 0.0;
    for (std::uint32_t r = 0; r < cfg.height; ++r)
      for (std::uint32_t c = 0; c < cfg.width; ++c)
        peak = std::max(peak, std::abs(raw(static_cast<double>(c), static_cast<double>(r))));
    scale_ = peak > 0.0 ? 0.45 / peak : 0.0;
  }

  double operator()(double x, double y) const { return 0.5 + scale_ * raw(x, y); }

 private:
  double raw(double x, double y) const {
    double s = 0.0;
    for (const Blob& b : blobs_) {
      const double dx = x - b.cx;
      const double dy = y - b.cy;
      const double envelope = std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      const double along = dx * std::cos(b.theta) + dy * std::sin(b.theta);
      s += b.amplitude * envelope * std::cos(2.0 * std::numbers::pi * b.freq * along);
    }
    return s;
  }

  std::vector<Blob> blobs_;
  double scale_ = 0.0;
};

std::vector<Blob> identity_blobs(const GenConfig& cfg, const Matrix& projection,
                                 std::span<const double> z) {
  const double w = cfg.width;
  const double h = cfg.height;
  std::vector<Blob> blobs(cfg.blob_count);
  for (std::uint32_t g = 0; g < cfg.blob_count; ++g) {
    auto coord = [&](std::size_t slot) { return dot(projection.row(g * 6 + slot), z); };
    Blob& b = blobs[g];
    b.cx = (w - 1.0) / 2.0 + 0.32 * w * std::tanh(coord(0));
    b.cy = (h - 1.0) / 2.0 + 0.32 * h * std::tanh(coord(1));
    b.theta = std::numbers::pi * std::tanh(coord(2));
    b.freq = 0.06 + 0.14 * sigmoid(coord(3));
    b.sigma = std::min(w, h) * (0.10 + 0.10 * sigmoid(coord(4)));
    b.amplitude = std::tanh(coord(5) + 0.5);
  }
  return blobs;
}

std::vector<double> render(const Canonical& canonical, const GenConfig& cfg,
                           const ViewDistortion& view, RngStream& rng) {
  const double cx0 = (cfg.width - 1.0) / 2.0;
  const double cy0 = (cfg.height - 1.0) / 2.0;
  const double jx = cfg.jitter_px > 0.0 ? rng.uniform(-cfg.jitter_px, cfg.jitter_px) : 0.0;
  const double jy = cfg.jitter_px > 0.0 ? rng.uniform(-cfg.jitter_px, cfg.jitter_px) : 0.0;

  // Forward warp A = R(theta) * [[1, shear], [0, 1]]; sample through its inverse.
  const double t = view.rotation_deg * std::numbers::pi / 180.0;
  const double a00 = std::cos(t), a01 = std::cos(t) * view.shear - std::sin(t);
  const double a10 = std::sin(t), a11 = std::sin(t) * view.shear + std::cos(t);
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  std::vector<double> image(std::size_t{cfg.height} * cfg.width);
  for (std::uint32_t r = 0; r < cfg.height; ++r) {
    for (std::uint32_t c = 0; c < cfg.width; ++c) {
      const double ox = c - cx0 - view.translate_x - jx;
      const double oy = r - cy0 - view.translate_y - jy;
      const double u = i00 * ox + i01 * oy + cx0;
      const double v = i10 * ox + i11 * oy + cy0;
      double value = view.gain * canonical(u, v);
      if (cfg.pixel_noise > 0.0) value += cfg.pixel_noise * rng.normal();
      image[std::size_t{r} * cfg.width + c] = quantize(value);
    }
  }
  return image;
}

}  // namespace

const char* view_name(std::uint8_t view) {
  static constexpr const char* kNames[] = {"front", "right", "left", "back"};
  return view < kNumViews ? kNames[view] : "invalid";
}

std::array<ViewDistortion, kNumViews> GenConfig::default_views() {
  return {{
      {0.0, 0.0, 0.0, 0.0, 1.00},    // front
      {12.0, 0.12, 2.0, 0.0, 0.80},  // right
      {-12.0, -0.12, -2.0, 0.0, 0.62},  // left
      {0.0, 0.18, 0.0, 2.0, 1.15},   // back
  }};
}

void GenConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("GenConfig: " + msg); };
  if (num_identities < 1) fail("num_identities must be >= 1");
  if (samples_per_view < 1) fail("samples_per_view must be >= 1");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (blob_count < 1) fail("blob_count must be >= 1");
  if (height < kMinImageSide || width < kMinImageSide) {
    std::ostringstream os;
    os << "image size " << height << "x" << width << " is below the minimum of "
       << kMinImageSide << " pixels per side";
    fail(os.str());
  }
  if (!(view_label_noise >= 0.0 && view_label_noise <= 1.0))
    fail("view_label_noise must lie in [0, 1]");
  if (!(pixel_noise >= 0.0)) fail("pixel_noise must be >= 0");
  if (!(jitter_px >= 0.0)) fail("jitter_px must be >= 0");
  for (const auto& v : views) {
    if (!(v.gain > 0.0)) fail("view gain must be positive");
  }
}

std::vector<std::size_t> SynthDataset::indices_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == tag) out.push_back(i);
  return out;
}

Matrix SynthDataset::images(std::span<const std::size_t> indices) const {
  Matrix m(indices.size(), pixels());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = samples.at(indices[i]).image;
    std::copy(img.begin(), img.end(), m.row(i).begin());
  }
  return m;
}

Matrix SynthDataset::all_images() const {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return images(all);
}

std::vector<std::uint32_t> SynthDataset::train_identities() const {
  std::set<std::uint32_t> ids;
  for (const auto& s : samples)
    if (s.split == SplitTag::kTrain) ids.insert(s.identity);
  return {ids.begin(), ids.end()};
}

bool operator==(const Sample& a, const Sample& b) {
  return a.identity == b.identity && a.view == b.view && a.split == b.split &&
         a.image == b.image;
}

bool operator==(const SynthDataset& a, const SynthDataset& b) {
  return a.height == b.height && a.width == b.width && a.samples == b.samples;
}

SynthDataset generate(const GenConfig& config) {
  config.validate();

  RngStream proj_rng(config.seed, streams::kGenProjection);
  Matrix projection(std::size_t{config.blob_count} * 6, config.latent_dim);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  for (double& v : projection.values()) v = proj_scale * proj_rng.normal();

  SynthDataset ds;
  ds.height = config.height;
  ds.width = config.width;
  ds.num_identities = config.num_identities;
  ds.samples.resize(std::size_t{config.num_identities} * kNumViews * config.samples_per_view);

  for (std::uint32_t id = 0; id < config.num_identities; ++id) {
    RngStream latent_rng(config.seed, streams::kGenLatentBase + id);
    std::vector<double> z(config.latent_dim);
    for (double& v : z) v = latent_rng.normal();
    const Canonical canonical(identity_blobs(config, projection, z), config);

    for (std::uint8_t view = 0; view < kNumViews; ++view) {
      for (std::uint32_t s = 0; s < config.samples_per_view; ++s) {
        const std::size_t index =
            (std::size_t{id} * kNumViews + view) * config.samples_per_view + s;
        RngStream rng(config.seed, streams::kGenSampleBase + index);
        Sample& sample = ds.samples[index];
        sample.identity = id;
        sample.camera = view;
        sample.view = view;
        sample.image = render(canonical, config, config.views[view], rng);
        if (config.view_label_noise > 0.0 && rng.uniform() < config.view_label_noise)
          sample.view = static_cast<std::uint8_t>((view + 1 + rng.below(kNumViews - 1)) %
                                                  kNumViews);
      }
    }
  }
  return ds;
}

SynthDataset split(SynthDataset ds, RngStream& rng) {
  // identity -> camera -> sample indices
  std::map<std::uint32_t, std::map<std::uint8_t, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    groups[ds.samples[i].identity][ds.samples[i].camera].push_back(i);

  std::vector<std::uint32_t> single_view;
  for (const auto& [id, by_view] : groups)
    if (by_view.size() < 2) single_view.push_back(id);
  if (!single_view.empty()) {
    std::ostringstream os;
    os << "split: identities present in a single view cannot form cross-view queries:";
    for (auto id : single_view) os << ' ' << id;
    throw ValidationError(os.str());
  }

  for (auto& s : ds.samples) s.split = SplitTag::kTrain;
  for (const auto& [id, by_view] : groups) {
    const std::size_t query_slot = rng.below(by_view.size());
    std::size_t slot = 0;
    for (const auto& [view, members] : by_view) {
      const std::size_t held = members[rng.below(members.size())];
      ds.samples[held].split = slot == query_slot ? SplitTag::kQuery : SplitTag::kGallery;
      ++slot;
    }
  }
  return ds;
}

PkBatch sample_pk_batch(const SynthDataset& ds, std::size_t p, std::size_t k, RngStream& rng) {
  if (p == 0 || k == 0) throw ValidationError("sample_pk_batch: P and K must be >= 1");
  std::map<std::uint32_t, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].split == SplitTag::kTrain) by_identity[ds.samples[i].identity].push_back(i);
  if (p > by_identity.size()) {
    std::ostringstream os;
    os << "sample_pk_batch: P=" << p << " exceeds the " << by_identity.size()
       << " identities with training samples";
    throw ValidationError(os.str());
  }

  std::vector<std::uint32_t> ids;
  for (const auto& entry : by_identity) ids.push_back(entry.first);
  // Partial Fisher-Yates: the first p entries become the chosen identities.
  for (std::size_t i = 0; i < p; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);

  PkBatch batch;
  batch.p = p;
  batch.k = k;
  batch.indices.reserve(p * k);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<std::size_t> pool = by_identity[ids[i]];
    if (pool.size() >= k) {
      for (std::size_t j = 0; j < k; ++j) {
        std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
        batch.indices.push_back(pool[j]);
      }
    } else {
      for (std::size_t j = 0; j < k; ++j) batch.indices.push_back(pool[rng.below(pool.size())]);
    }
    batch.identities.insert(batch.identities.end(), k, ids[i]);
  }
  return batch;
}

std::vector<std::uint8_t> encode_dataset(const SynthDataset& ds) {
  ByteWriter w;
  w.put_magic(kDatasetMagic);
  w.put_u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.put_u32(ds.height);
  w.put_u32(ds.width);
  std::vector<std::uint8_t> pixels(ds.pixels());
  for (const auto& s : ds.samples) {
    if (s.image.size() != ds.pixels())
      throw ValidationError("save_dataset: sample image size does not match H*W");
    w.put_u32(s.identity);
    w.put_u8(s.view);
    w.put_u8(static_cast<std::uint8_t>(s.split));
    for (std::size_t i = 0; i < pixels.size(); ++i)
      pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0, 1.0) * 255.0));
    w.put_bytes(pixels);
  }
  return w.bytes();
}

SynthDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  const std::uint32_t count = r.get_u32("num-samples");
  SynthDataset ds;
  ds.height = r.get_u32("H");
  ds.width = r.get_u32("W");
  if (ds.height < kMinImageSide || ds.width < kMinImageSide) {
    std::ostringstream os;
    os << "dataset header at byte offset 12 declares image size " << ds.height << "x"
       << ds.width << ", below the minimum " << kMinImageSide;
    throw FormatError(os.str());
  }
  std::set<std::uint32_t> ids;
  ds.samples.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample& s = ds.samples[i];
    const std::string label = "sample " + std::to_string(i) + " of " + std::to_string(count);
    s.identity = r.get_u32(label);
    s.view = r.get_u8(label);
    const std::uint8_t tag = r.get_u8(label);
    if (s.view >= kNumViews || tag > 2) {
      std::ostringstream os;
      os << "invalid view/split byte in " << label << " before byte offset " << r.offset();
      throw FormatError(os.str());
    }
    s.camera = s.view;
    s.split = static_cast<SplitTag>(tag);
    auto px = r.get_bytes(ds.pixels(), label);
    s.image.resize(px.size());
    for (std::size_t j = 0; j < px.size(); ++j) s.image[j] = px[j] / 255.0;
    ids.insert(s.identity);
  }
  r.expect_end();
  ds.num_identities = static_cast<std::uint32_t>(ids.size());
  return ds;
}

void save_dataset(const SynthDataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

SynthDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vcfl
