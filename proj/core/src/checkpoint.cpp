#include "vcfl/checkpoint.hpp"

#include <map>
#include <sstream>
#include <string>

#include "vcfl/binary_io.hpp"
#include "vcfl/error.hpp"

namespace vcfl {

namespace {

constexpr std::string_view kCheckpointMagic = "VCFLCKP1";

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

void put_tensor(ByteWriter& w, const std::string& name, std::vector<std::uint32_t> dims,
                std::span<const double> values) {
  w.put_u32(static_cast<std::uint32_t>(name.size()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
  w.put_u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put_u32(d);
  for (double v : values) w.put_f64(v);
}

void put_mlp(ByteWriter& w, const std::string& prefix, const Mlp& net) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const std::string base = prefix + ".layer" + std::to_string(l);
    put_tensor(w, base + ".weight",
               {static_cast<std::uint32_t>(layer.weight.rows()),
                static_cast<std::uint32_t>(layer.weight.cols())},
               layer.weight.values());
    put_tensor(w, base + ".bias", {static_cast<std::uint32_t>(layer.bias.size())}, layer.bias);
  }
}

const Tensor& find(const std::map<std::string, Tensor>& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("checkpoint is missing tensor \"" + name + "\"");
  return it->second;
}

Mlp take_mlp(const std::map<std::string, Tensor>& tensors, const std::string& prefix) {
  Mlp net;
  for (std::size_t l = 0;; ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    if (!tensors.contains(base + ".weight")) break;
    const Tensor& w = find(tensors, base + ".weight");
    const Tensor& b = find(tensors, base + ".bias");
    if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[1])
      throw FormatError("checkpoint tensor " + base + " has inconsistent shape");
    if (l > 0 && net.layers.back().weight.cols() != w.dims[0])
      throw FormatError("checkpoint layers of " + prefix + " do not chain at " + base);
    net.layers.push_back({Matrix::from_data(w.dims[0], w.dims[1], w.values), b.values});
  }
  if (net.layers.empty()) throw FormatError("checkpoint has no layers for " + prefix);
  return net;
}

double take_scalar(const std::map<std::string, Tensor>& tensors, const std::string& name) {
  const Tensor& t = find(tensors, name);
  if (t.values.size() != 1) throw FormatError("checkpoint tensor " + name + " is not a scalar");
  return t.values[0];
}

std::string widths_string(const std::vector<std::size_t>& widths) {
  std::ostringstream os;
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "->" : "") << widths[i];
  return os.str();
}

std::vector<std::size_t> widths_of(const Mlp& net) {
  std::vector<std::size_t> w;
  if (net.layers.empty()) return w;
  w.push_back(net.input_dim());
  for (const auto& l : net.layers) w.push_back(l.weight.cols());
  return w;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u64(ckpt.step);
  put_mlp(w, "extractor", ckpt.extractor.net);
  put_mlp(w, "classifier", ckpt.classifier.net);

  const auto& c = ckpt.centers;
  put_tensor(w, "centers.values",
             {static_cast<std::uint32_t>(c.centers.rows()),
              static_cast<std::uint32_t>(c.centers.cols())},
             c.centers.values());
  std::vector<double> ids(c.identities.begin(), c.identities.end());
  put_tensor(w, "centers.identities", {static_cast<std::uint32_t>(ids.size())}, ids);
  const double alpha = c.alpha;
  put_tensor(w, "centers.alpha", {1}, {&alpha, 1});

  put_mlp(w, "opt.sgd.velocity", ckpt.opt.extractor.velocity);
  put_mlp(w, "opt.adam.m", ckpt.opt.classifier.first_moment);
  put_mlp(w, "opt.adam.v", ckpt.opt.classifier.second_moment);
  const double adam_step = static_cast<double>(ckpt.opt.classifier.step);
  put_tensor(w, "opt.adam.step", {1}, {&adam_step, 1});
  return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  const std::uint32_t version = r.get_u32("format-version");
  if (version != kCheckpointVersion) {
    std::ostringstream os;
    os << "checkpoint format version " << version << " at byte offset 8 is not supported (expected "
       << kCheckpointVersion << ")";
    throw FormatError(os.str());
  }
  Checkpoint ckpt;
  ckpt.step = r.get_u64("step");

  std::map<std::string, Tensor> tensors;
  while (r.remaining() > 0) {
    const std::uint32_t name_len = r.get_u32("tensor name length");
    auto name_bytes = r.get_bytes(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    Tensor t;
    const std::uint32_t rank = r.get_u32("rank of " + name);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims.push_back(r.get_u32("dims of " + name));
      count *= t.dims.back();
    }
    if (count > r.remaining() / 8) {
      std::ostringstream os;
      os << "truncated file: tensor \"" << name << "\" needs " << count * 8
         << " bytes at byte offset " << r.offset() << " but only " << r.remaining() << " remain";
      throw FormatError(os.str());
    }
    t.values.resize(count);
    for (double& v : t.values) v = r.get_f64(name);
    tensors.emplace(std::move(name), std::move(t));
  }

  ckpt.extractor.net = take_mlp(tensors, "extractor");
  ckpt.classifier.net = take_mlp(tensors, "classifier");

  const Tensor& cv = find(tensors, "centers.values");
  const Tensor& ci = find(tensors, "centers.identities");
  if (cv.dims.size() != 2 || ci.values.size() != cv.dims[0])
    throw FormatError("checkpoint center table is inconsistent");
  ckpt.centers.centers = Matrix::from_data(cv.dims[0], cv.dims[1], cv.values);
  for (double id : ci.values) ckpt.centers.identities.push_back(static_cast<std::uint32_t>(id));
  ckpt.centers.alpha = take_scalar(tensors, "centers.alpha");

  ckpt.opt.extractor.velocity = take_mlp(tensors, "opt.sgd.velocity");
  ckpt.opt.classifier.first_moment = take_mlp(tensors, "opt.adam.m");
  ckpt.opt.classifier.second_moment = take_mlp(tensors, "opt.adam.v");
  ckpt.opt.classifier.step = static_cast<std::uint64_t>(take_scalar(tensors, "opt.adam.step"));
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw FormatError("checkpoint " + path.string() + " does not exist");
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void expect_shapes(const Checkpoint& ckpt, const MlpShape& extractor, const MlpShape& classifier) {
  const auto got_f = widths_of(ckpt.extractor.net);
  const auto got_d = widths_of(ckpt.classifier.net);
  if (!got_f.empty() && !extractor.widths.empty() && got_f.back() != extractor.widths.back()) {
    std::ostringstream os;
    os << "checkpoint feature dimension D=" << got_f.back() << " does not match configured D="
       << extractor.widths.back();
    throw ValidationError(os.str());
  }
  if (got_f != extractor.widths) {
    throw ValidationError("checkpoint extractor " + widths_string(got_f) +
                          " does not match configured " + widths_string(extractor.widths));
  }
  if (got_d != classifier.widths) {
    throw ValidationError("checkpoint classifier " + widths_string(got_d) +
                          " does not match configured " + widths_string(classifier.widths));
  }
  if (ckpt.centers.centers.cols() != extractor.widths.back() && ckpt.centers.centers.rows() > 0) {
    std::ostringstream os;
    os << "checkpoint centers have dimension " << ckpt.centers.centers.cols()
       << " but configured D=" << extractor.widths.back();
    throw ValidationError(os.str());
  }
}

}  // namespace vcfl
