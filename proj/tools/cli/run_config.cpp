#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "vcfl/error.hpp"

namespace vcfl::cli {

using nlohmann::json;

namespace {

struct Field {
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const json& value, const char* expected) {
  throw ValidationError("config key \"" + key + "\": expected " + expected + ", got " + value.dump());
}

template <typename T>
T as(const std::string& key, const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad_value(key, v, "a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad_value(key, v, "a number");
    return v.get<double>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad_value(key, v, "a non-negative integer");
    return static_cast<T>(v.get<unsigned long long>());
  } else {
    static_assert(sizeof(T) == 0, "unsupported config type");
  }
}

template <typename T>
std::vector<T> as_list(const std::string& key, const json& v) {
  if (!v.is_array()) bad_value(key, v, "an array");
  std::vector<T> out;
  for (const auto& e : v) out.push_back(as<T>(key, e));
  return out;
}

// Member accessor → Field for scalar and list members.
template <typename T, typename Access>
Field scalar(const std::string& key, Access access) {
  return {[key, access](RunConfig& c, const json& v) { access(c) = as<T>(key, v); },
          [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); }};
}

template <typename T, typename Access>
Field list(const std::string& key, Access access) {
  return {[key, access](RunConfig& c, const json& v) { access(c) = as_list<T>(key, v); },
          [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); }};
}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    auto add = [&f](const std::string& key, Field field) { f.emplace(key, std::move(field)); };
#define VCFL_SCALAR(key, type, expr) add(key, scalar<type>(key, [](RunConfig& c) -> type& { return expr; }))
#define VCFL_LIST(key, type, expr) \
  add(key, list<type>(key, [](RunConfig& c) -> std::vector<type>& { return expr; }))
    VCFL_SCALAR("seed", std::uint64_t, c.seed);
    VCFL_SCALAR("workers", std::size_t, c.workers);

    VCFL_SCALAR("gen.num_identities", std::uint32_t, c.gen.num_identities);
    VCFL_SCALAR("gen.samples_per_view", std::uint32_t, c.gen.samples_per_view);
    VCFL_SCALAR("gen.height", std::uint32_t, c.gen.height);
    VCFL_SCALAR("gen.width", std::uint32_t, c.gen.width);
    VCFL_SCALAR("gen.latent_dim", std::uint32_t, c.gen.latent_dim);
    VCFL_SCALAR("gen.blob_count", std::uint32_t, c.gen.blob_count);
    VCFL_SCALAR("gen.pixel_noise", double, c.gen.pixel_noise);
    VCFL_SCALAR("gen.jitter_px", double, c.gen.jitter_px);
    VCFL_SCALAR("gen.view_label_noise", double, c.gen.view_label_noise);
    for (std::uint8_t v = 0; v < kNumViews; ++v) {
      const std::string base = std::string("gen.views.") + view_name(v) + ".";
      auto view = [v](RunConfig& c) -> ViewDistortion& { return c.gen.views[v]; };
      add(base + "rotation_deg", scalar<double>(base + "rotation_deg", [view](RunConfig& c) -> double& { return view(c).rotation_deg; }));
      add(base + "shear", scalar<double>(base + "shear", [view](RunConfig& c) -> double& { return view(c).shear; }));
      add(base + "translate_x", scalar<double>(base + "translate_x", [view](RunConfig& c) -> double& { return view(c).translate_x; }));
      add(base + "translate_y", scalar<double>(base + "translate_y", [view](RunConfig& c) -> double& { return view(c).translate_y; }));
      add(base + "gain", scalar<double>(base + "gain", [view](RunConfig& c) -> double& { return view(c).gain; }));
    }

    VCFL_SCALAR("vocab.k", std::size_t, c.vocab_k);
    VCFL_SCALAR("vocab.max_iters", std::size_t, c.vocab_max_iters);

    VCFL_SCALAR("train.p", std::size_t, c.train.p);
    VCFL_SCALAR("train.k", std::size_t, c.train.k);
    VCFL_SCALAR("train.steps", std::size_t, c.train.steps);
    VCFL_SCALAR("train.extractor_lr", double, c.train.extractor_lr);
    VCFL_LIST("train.lr_milestones", double, c.train.lr_milestones);
    VCFL_SCALAR("train.lr_decay", double, c.train.lr_decay);
    VCFL_SCALAR("train.classifier_lr", double, c.train.classifier_lr);
    VCFL_SCALAR("train.schedule_alpha", double, c.train.schedule_alpha);
    VCFL_SCALAR("train.schedule_beta", double, c.train.schedule_beta);
    VCFL_SCALAR("train.momentum", double, c.train.sgd.momentum);
    VCFL_SCALAR("train.weight_decay", double, c.train.sgd.weight_decay);
    VCFL_SCALAR("train.adam_beta1", double, c.train.adam.beta1);
    VCFL_SCALAR("train.adam_beta2", double, c.train.adam.beta2);
    VCFL_SCALAR("train.adam_epsilon", double, c.train.adam.epsilon);
    VCFL_SCALAR("train.lambda", double, c.train.weights.adversarial);
    VCFL_SCALAR("train.lambda_fc", double, c.train.weights.center);
    VCFL_SCALAR("train.lambda_sg", double, c.train.weights.sift);
    VCFL_SCALAR("train.lambda_trip", double, c.train.weights.triplet);
    VCFL_SCALAR("train.margin", double, c.train.weights.margin);
    VCFL_SCALAR("train.center_alpha", double, c.train.center_alpha);
    VCFL_SCALAR("train.warmup_fraction", double, c.train.warmup_fraction);
    VCFL_SCALAR("train.classifier_steps", std::size_t, c.train.classifier_steps);
    VCFL_SCALAR("train.checkpoint_interval", std::size_t, c.train.checkpoint_interval);
    VCFL_SCALAR("train.feature_dim", std::size_t, c.train.feature_dim);
    VCFL_LIST("train.extractor_hidden", std::size_t, c.train.extractor_hidden);
    VCFL_SCALAR("train.classifier_hidden", std::size_t, c.train.classifier_hidden);
    VCFL_SCALAR("train.classifier_confusion", bool, c.train.flags.classifier_confusion);
    VCFL_SCALAR("train.feature_confusion", bool, c.train.flags.feature_confusion);
    VCFL_SCALAR("train.sift_confusion", bool, c.train.flags.sift_confusion);

    VCFL_SCALAR("eval.exclude_same_view", bool, c.eval.exclude_same_view);
    VCFL_SCALAR("eval.normalize_features", bool, c.eval.normalize_features);

    VCFL_LIST("ablate.seeds", std::uint64_t, c.ablate_seeds);
#undef VCFL_SCALAR
#undef VCFL_LIST

    add("train.extractor_policy",
        {[](RunConfig& c, const json& v) {
           if (v == "step") c.train.extractor_policy = ExtractorLrPolicy::kStepDecay;
           else if (v == "constant") c.train.extractor_policy = ExtractorLrPolicy::kConstant;
           else bad_value("train.extractor_policy", v, "\"step\" or \"constant\"");
         },
         [](const RunConfig& c) {
           return json(c.train.extractor_policy == ExtractorLrPolicy::kStepDecay ? "step" : "constant");
         }});
    add("train.confusion_target",
        {[](RunConfig& c, const json& v) {
           if (v == "common_view") c.train.confusion_target = ViewMode::kMinus;
           else if (v == "uniform") c.train.confusion_target = ViewMode::kUniform;
           else bad_value("train.confusion_target", v, "\"common_view\" or \"uniform\"");
         },
         [](const RunConfig& c) {
           return json(c.train.confusion_target == ViewMode::kUniform ? "uniform" : "common_view");
         }});
    return f;
  }();
  return fields;
}

void flatten(const json& doc, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [key, value] : doc.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) flatten(value, full, out);
    else out.emplace_back(full, value);
  }
}

void set_nested(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1)
    node = &(*node)[dotted.substr(start, dot - start)];
  (*node)[dotted.substr(start)] = value;
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

std::vector<std::string> schema_keys() {
  std::vector<std::string> keys;
  for (const auto& entry : schema()) keys.push_back(entry.first);
  return keys;
}

void apply_json(RunConfig& config, const json& doc) {
  if (!doc.is_object()) throw ValidationError("config document must be a JSON object");
  std::vector<std::pair<std::string, json>> entries;
  flatten(doc, "", entries);
  for (const auto& [key, value] : entries) {
    if (key == "preset") {
      if (!value.is_string()) bad_value(key, value, "a preset name");
      apply_preset(config, value.get<std::string>());
      continue;
    }
    auto it = schema().find(key);
    if (it == schema().end()) throw ValidationError("unknown config key \"" + key + "\"");
    it->second.set(config, value);
  }
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override \"" + assignment + "\" must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json doc;
  set_nested(doc, key, value);
  apply_json(config, doc);
}

void apply_preset(RunConfig& config, const std::string& name) {
  if (name == "paper") {
    const TrainConfig paper = TrainConfig::paper_preset();
    config.train.p = paper.p;
    config.train.k = paper.k;
  } else if (name == "desk") {
    config.train.p = TrainConfig{}.p;
    config.train.k = TrainConfig{}.k;
  } else if (name == "vcfl-desk") {
    // Desk-scale settings under which the confusion terms visibly act on a
    // 32-identity set; the paper weights stay the defaults.
    config.train.steps = 1000;
    config.train.extractor_lr = 0.01;
    config.train.classifier_lr = 0.001;
    config.train.weights.adversarial = 0.1;
    config.train.weights.center = 3.0;
  } else {
    throw ValidationError("unknown preset \"" + name + "\" (known: paper, desk, vcfl-desk)");
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("config file " + path.string() + " is not valid JSON");
  apply_json(config, doc);
}

json to_json(const RunConfig& config) {
  json doc = json::object();
  for (const auto& [key, field] : schema()) set_nested(doc, key, field.get(config));
  return doc;
}

void write_effective_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "config.json").string());
  out << to_json(config).dump(2) << '\n';
}

}  // namespace vcfl::cli
