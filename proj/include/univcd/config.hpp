#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "univcd/baseline.hpp"
#include "univcd/encoders.hpp"
#include "univcd/eval.hpp"
#include "univcd/inference.hpp"
#include "univcd/postproc.hpp"
#include "univcd/scfam.hpp"
#include "univcd/training.hpp"

namespace univcd {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kCacheDirEnv = "UNIVCD_CACHE_DIR";

struct EncoderSection {
  /// "toy" is the only backend compiled in; checkpoint paths are accepted but rejected at use.
  std::string backend = "toy";
  std::uint64_t seed = 0;
  std::string spatial_checkpoint;
  std::string semantic_checkpoint;
  std::string text_checkpoint;
  SpatialEncoderConfig spatial;
  int d_sem = 32;
  int patch = 16;
  int text_buckets = 1 << 16;
  double context_leak = 1.0;
  /// Sliding-window geometry of the semantic encoder.
  int window = 128;
  double overlap = 0.5;
  std::string cache_dir;

  friend bool operator==(const EncoderSection&, const EncoderSection&) = default;
};

/// Geometry (strides, channel widths, input size, d_sem) follows the encoder section.
struct ScfamSection {
  int width = 0;
  int blocks_per_level = 1;
  int head_hidden = 0;
  int expand = 4;
  int dw_kernel = 7;
  std::uint64_t seed = 0;

  friend bool operator==(const ScfamSection&, const ScfamSection&) = default;
};

struct TrainSection {
  TrainConfig config;
  std::string dataset;
  /// Relative paths resolve against output_dir.
  std::string checkpoint = "train/scfam.ckpt";
  std::string log = "train/train.log";

  friend bool operator==(const TrainSection&, const TrainSection&) = default;
};

struct DetectSection {
  std::vector<std::string> categories = default_bcd_categories();
  std::string target = "architecture";
  std::vector<std::string> templates = default_prompt_templates();
  DetectConfig config;
  /// Model to score with; empty means train.checkpoint.
  std::string checkpoint;

  friend bool operator==(const DetectSection&, const DetectSection&) = default;
};

struct PostprocSection {
  CleanupConfig cleanup;
  RefineConfig refine;
  /// "none" or "echo" (the deterministic mask-echo stand-in).
  std::string refiner = "none";
  /// Per-category stage-2 switch; categories not listed are enabled.
  std::map<std::string, bool> refine_categories;
  bool concept_stage = false;

  bool refine_enabled(const std::string& category) const;
  friend bool operator==(const PostprocSection&, const PostprocSection&) = default;
};

struct EvalSection {
  DatasetLayout layout;
  EvalMode mode = EvalMode::kAggregate;

  friend bool operator==(const EvalSection&, const EvalSection&) = default;
};

struct Ablations {
  bool no_scfam = false;
  bool no_recon = false;

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct RunConfig {
  EncoderSection encoder;
  ScfamSection scfam;
  TrainSection train;
  DetectSection detect;
  PostprocSection postproc;
  EvalSection eval;
  BaselineConfig baseline;
  Ablations ablations;
  std::string output_dir = "univcd-out";

  /// Every section's own validation; failures surface as ConfigError.
  void validate() const;

  ScfamConfig scfam_config() const;
  TrainConfig train_config() const;
  DetectConfig detect_config() const;
  std::filesystem::path resolve(const std::string& path) const;
  /// Cache directory with the environment override applied; empty disables caching.
  std::filesystem::path cache_dir() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a JSON document. Unknown keys and type mismatches raise ConfigError; missing keys keep
/// their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Full JSON with every field, keys in declaration order.
std::string serialize_config(const RunConfig& config);

/// Overrides one field by dotted path ("train.epochs", "detect.categories"). `value` is JSON;
/// text that is not valid JSON is taken as a string.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

EncoderSet build_encoders(const EncoderSection& section);

}  // namespace univcd
