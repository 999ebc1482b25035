#include "univcd/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace univcd {
namespace {

using Json = nlohmann::ordered_json;

// Reads one JSON object, remembering which keys were consumed so leftovers can be rejected.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    convert(*it, out, path_ + key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, path_ + key + ".");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path_ + it.key() + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config '" + path_.substr(0, path_.size() - 1) + "': "; }

  static void convert(const Json& v, bool& out, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config '" + key + "': expected a boolean");
    out = v.get<bool>();
  }
  static void convert(const Json& v, int& out, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config '" + key + "': expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("config '" + key + "': integer out of range");
    out = static_cast<int>(x);
  }
  static void convert(const Json& v, std::uint64_t& out, const std::string& key) {
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else {
      throw ConfigError("config '" + key + "': expected a non-negative integer");
    }
  }
  static void convert(const Json& v, double& out, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config '" + key + "': expected a number");
    out = v.get<double>();
  }
  static void convert(const Json& v, std::string& out, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config '" + key + "': expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  static void convert(const Json& v, std::vector<T>& out, const std::string& key) {
    if (!v.is_array()) throw ConfigError("config '" + key + "': expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      convert(v[i], x, key + "[" + std::to_string(i) + "]");
      out.push_back(std::move(x));
    }
  }
  template <typename T>
  static void convert(const Json& v, std::map<std::string, T>& out, const std::string& key) {
    if (!v.is_object()) throw ConfigError("config '" + key + "': expected an object");
    out.clear();
    for (auto it = v.begin(); it != v.end(); ++it) {
      T x{};
      convert(it.value(), x, key + "." + it.key());
      out.emplace(it.key(), std::move(x));
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Parse>
auto as_config_error(const char* what, Parse&& parse) {
  try {
    return parse();
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

Json to_json(const RunConfig& c) {
  Json j;
  const auto& e = c.encoder;
  j["encoder"] = {{"backend", e.backend},
                  {"seed", e.seed},
                  {"spatial_checkpoint", e.spatial_checkpoint},
                  {"semantic_checkpoint", e.semantic_checkpoint},
                  {"text_checkpoint", e.text_checkpoint},
                  {"input_size", e.spatial.input_size},
                  {"strides", e.spatial.strides},
                  {"channels", e.spatial.channels},
                  {"d_sem", e.d_sem},
                  {"patch", e.patch},
                  {"text_buckets", e.text_buckets},
                  {"context_leak", e.context_leak},
                  {"window", e.window},
                  {"overlap", e.overlap},
                  {"cache_dir", e.cache_dir}};
  const auto& s = c.scfam;
  j["scfam"] = {{"width", s.width},   {"blocks_per_level", s.blocks_per_level}, {"head_hidden", s.head_hidden},
                {"expand", s.expand}, {"dw_kernel", s.dw_kernel},               {"seed", s.seed}};
  const auto& t = c.train.config;
  j["train"] = {{"dataset", c.train.dataset},
                {"checkpoint", c.train.checkpoint},
                {"log", c.train.log},
                {"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"seed", t.seed},
                {"lambda_recon", t.weights.lambda_recon},
                {"lambda_cos", t.weights.lambda_cos},
                {"lambda_mse", t.weights.lambda_mse},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon}};
  const auto& d = c.detect;
  j["detect"] = {{"categories", d.categories},
                 {"target", d.target},
                 {"templates", d.templates},
                 {"scoring", to_string(d.config.mode)},
                 {"temperature", d.config.temperature},
                 {"tile", d.config.tile},
                 {"overlap", d.config.overlap},
                 {"checkpoint", d.checkpoint}};
  const auto& p = c.postproc;
  j["postproc"] = {{"opening_radius", p.cleanup.opening_radius},
                   {"min_area_fraction", p.cleanup.min_area_fraction},
                   {"min_area_floor", p.cleanup.min_area_floor},
                   {"refiner", p.refiner},
                   {"iou_min", p.refine.iou_min},
                   {"strict", p.refine.strict},
                   {"box_dilation", p.refine.box_dilation},
                   {"refine_categories", Json(p.refine_categories)},
                   {"concept_stage", p.concept_stage}};
  const auto& l = c.eval.layout;
  j["eval"] = {{"root", l.root.string()},
               {"epoch_a", l.epoch_a},
               {"epoch_b", l.epoch_b},
               {"labels", l.labels},
               {"labels_a", l.labels_a},
               {"labels_b", l.labels_b},
               {"semantics", to_string(l.semantics)},
               {"label_values", Json(l.label_values)},
               {"mode", to_string(c.eval.mode)}};
  j["baseline"] = {{"confidence", c.baseline.confidence}, {"theta", c.baseline.theta}};
  j["ablations"] = {{"no_scfam", c.ablations.no_scfam}, {"no_recon", c.ablations.no_recon}};
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig from_json(const Json& j) {
  RunConfig c;
  Section root(j, "");
  {
    auto s = root.sub("encoder");
    auto& e = c.encoder;
    s.read("backend", e.backend);
    s.read("seed", e.seed);
    s.read("spatial_checkpoint", e.spatial_checkpoint);
    s.read("semantic_checkpoint", e.semantic_checkpoint);
    s.read("text_checkpoint", e.text_checkpoint);
    s.read("input_size", e.spatial.input_size);
    s.read("strides", e.spatial.strides);
    s.read("channels", e.spatial.channels);
    s.read("d_sem", e.d_sem);
    s.read("patch", e.patch);
    s.read("text_buckets", e.text_buckets);
    s.read("context_leak", e.context_leak);
    s.read("window", e.window);
    s.read("overlap", e.overlap);
    s.read("cache_dir", e.cache_dir);
    s.finish();
  }
  {
    auto s = root.sub("scfam");
    s.read("width", c.scfam.width);
    s.read("blocks_per_level", c.scfam.blocks_per_level);
    s.read("head_hidden", c.scfam.head_hidden);
    s.read("expand", c.scfam.expand);
    s.read("dw_kernel", c.scfam.dw_kernel);
    s.read("seed", c.scfam.seed);
    s.finish();
  }
  {
    auto s = root.sub("train");
    auto& t = c.train.config;
    s.read("dataset", c.train.dataset);
    s.read("checkpoint", c.train.checkpoint);
    s.read("log", c.train.log);
    s.read("learning_rate", t.learning_rate);
    s.read("weight_decay", t.weight_decay);
    s.read("batch_size", t.batch_size);
    s.read("epochs", t.epochs);
    s.read("seed", t.seed);
    s.read("lambda_recon", t.weights.lambda_recon);
    s.read("lambda_cos", t.weights.lambda_cos);
    s.read("lambda_mse", t.weights.lambda_mse);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("epsilon", t.epsilon);
    s.finish();
  }
  {
    auto s = root.sub("detect");
    auto& d = c.detect;
    std::string mode = to_string(d.config.mode);
    s.read("categories", d.categories);
    s.read("target", d.target);
    s.read("templates", d.templates);
    s.read("scoring", mode);
    s.read("temperature", d.config.temperature);
    s.read("tile", d.config.tile);
    s.read("overlap", d.config.overlap);
    s.read("checkpoint", d.checkpoint);
    s.finish();
    d.config.mode = as_config_error("detect.scoring", [&] { return parse_score_mode(mode); });
  }
  {
    auto s = root.sub("postproc");
    auto& p = c.postproc;
    s.read("opening_radius", p.cleanup.opening_radius);
    s.read("min_area_fraction", p.cleanup.min_area_fraction);
    s.read("min_area_floor", p.cleanup.min_area_floor);
    s.read("refiner", p.refiner);
    s.read("iou_min", p.refine.iou_min);
    s.read("strict", p.refine.strict);
    s.read("box_dilation", p.refine.box_dilation);
    s.read("refine_categories", p.refine_categories);
    s.read("concept_stage", p.concept_stage);
    s.finish();
  }
  {
    auto s = root.sub("eval");
    auto& l = c.eval.layout;
    std::string root_dir, semantics = to_string(l.semantics), mode = to_string(c.eval.mode);
    s.read("root", root_dir);
    s.read("epoch_a", l.epoch_a);
    s.read("epoch_b", l.epoch_b);
    s.read("labels", l.labels);
    s.read("labels_a", l.labels_a);
    s.read("labels_b", l.labels_b);
    s.read("semantics", semantics);
    s.read("label_values", l.label_values);
    s.read("mode", mode);
    s.finish();
    l.root = root_dir;
    l.semantics = as_config_error("eval.semantics", [&] { return parse_label_semantics(semantics); });
    c.eval.mode = as_config_error("eval.mode", [&] { return parse_eval_mode(mode); });
  }
  {
    auto s = root.sub("baseline");
    s.read("confidence", c.baseline.confidence);
    s.read("theta", c.baseline.theta);
    s.finish();
  }
  {
    auto s = root.sub("ablations");
    s.read("no_scfam", c.ablations.no_scfam);
    s.read("no_recon", c.ablations.no_recon);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

}  // namespace

bool PostprocSection::refine_enabled(const std::string& category) const {
  auto it = refine_categories.find(category);
  return it == refine_categories.end() || it->second;
}

void RunConfig::validate() const {
  as_config_error("encoder", [&] {
    encoder.spatial.validate();
    if (encoder.d_sem < 1) throw InvalidArgumentError("d_sem must be positive");
    if (encoder.patch < 1) throw InvalidArgumentError("patch must be positive");
    if (encoder.text_buckets < 1) throw InvalidArgumentError("text_buckets must be positive");
    if (!(encoder.context_leak >= 0.0)) throw InvalidArgumentError("context_leak must be >= 0");
    if (encoder.window < encoder.patch || encoder.window % encoder.patch != 0) {
      throw InvalidArgumentError("window must be a positive multiple of patch");
    }
    if (!(encoder.overlap >= 0.0 && encoder.overlap < 1.0)) throw InvalidArgumentError("overlap outside [0, 1)");
    return 0;
  });
  if (encoder.backend != "toy" && encoder.backend != "checkpoint") {
    throw ConfigError("encoder.backend must be 'toy' or 'checkpoint'");
  }
  as_config_error("scfam", [&] {
    scfam_config().validate();
    return 0;
  });
  as_config_error("train", [&] {
    train_config().validate();
    return 0;
  });
  as_config_error("detect", [&] {
    detect_config().validate();
    return 0;
  });
  if (detect.categories.empty()) throw ConfigError("detect.categories must not be empty");
  if (std::set<std::string>(detect.categories.begin(), detect.categories.end()).size() != detect.categories.size()) {
    throw ConfigError("detect.categories contains duplicates");
  }
  if (std::find(detect.categories.begin(), detect.categories.end(), detect.target) == detect.categories.end()) {
    throw ConfigError("detect.target '" + detect.target + "' is not one of detect.categories");
  }
  if (detect.templates.empty()) throw ConfigError("detect.templates must not be empty");
  as_config_error("postproc", [&] {
    postproc.cleanup.validate();
    postproc.refine.validate();
    return 0;
  });
  if (postproc.refiner.empty()) throw ConfigError("postproc.refiner must not be empty (use \"none\")");
  for (const auto& [name, value] : eval.layout.label_values) {
    if (value < 0 || value > 255) throw ConfigError("eval.label_values." + name + " outside [0, 255]");
  }
  as_config_error("baseline", [&] {
    baseline.validate();
    return 0;
  });
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ScfamConfig RunConfig::scfam_config() const {
  ScfamConfig s = ScfamConfig::from_encoder(encoder.spatial, encoder.d_sem);
  s.width = scfam.width;
  s.blocks_per_level = scfam.blocks_per_level;
  s.head_hidden = scfam.head_hidden;
  s.expand = scfam.expand;
  s.dw_kernel = scfam.dw_kernel;
  s.seed = scfam.seed;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train.config;
  t.ablation_no_recon = ablations.no_recon;
  t.window = encoder.window;
  t.overlap = encoder.overlap;
  return t;
}

DetectConfig RunConfig::detect_config() const {
  DetectConfig d = detect.config;
  d.no_scfam = ablations.no_scfam;
  d.window = encoder.window;
  d.window_overlap = encoder.overlap;
  return d;
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : std::filesystem::path(output_dir) / p;
}

std::filesystem::path RunConfig::cache_dir() const {
  if (const char* env = std::getenv(kCacheDirEnv); env && *env) return env;
  return encoder.cache_dir.empty() ? std::filesystem::path() : resolve(encoder.cache_dir);
}

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  Json j = to_json(config);
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("bad config key '" + key + "'");
    const bool last = dot == std::string::npos;
    // Map-valued fields accept new entries.
    const bool open_map = last && node->is_object() &&
                          (key.starts_with("postproc.refine_categories.") || key.starts_with("eval.label_values."));
    if (!node->is_object() || (!node->contains(part) && !open_map)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (last) break;
    start = dot + 1;
  }
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : parsed;
  config = from_json(j);
}

EncoderSet build_encoders(const EncoderSection& section) {
  if (section.backend != "toy") {
    throw UnsupportedError("encoder backend '" + section.backend +
                           "' is not compiled in; only the toy encoders are available");
  }
  ToyEncoderOptions options;
  options.patch = section.patch;
  options.text_buckets = section.text_buckets;
  options.context_leak = section.context_leak;
  return make_toy_encoders(section.seed, section.spatial, section.d_sem, options);
}

}  // namespace univcd
