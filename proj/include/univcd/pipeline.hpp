#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "univcd/config.hpp"
#include "univcd/eval.hpp"

namespace univcd {

/// One manifest per stage under <output_dir>/manifests/<stage>.json: config snapshot, input
/// fingerprints, tool version, output paths and wall time. Written atomically once the stage
/// has finished.
struct RunManifest {
  std::string stage;
  std::string tool_version;
  std::string config_json;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
  std::vector<std::string> outputs;
  double seconds = 0.0;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

struct StageResult {
  RunManifest manifest;
  /// True when --resume found a matching manifest and the stage was not rerun.
  bool skipped = false;
};

std::filesystem::path manifest_path(const RunConfig& config, const std::string& stage);

/// Pairs of the configured dataset layout (eval section).
std::vector<DatasetPair> configured_pairs(const RunConfig& config);

/// Model used by detect; nullptr under the no_scfam ablation. Missing or mismatched
/// checkpoints raise ModelError.
std::optional<ScfamModel> load_detection_model(const RunConfig& config, const EncoderSet& encoders);

StageResult cmd_train(const RunConfig& config, bool resume = false);

/// Writes detect/<stem>.likelihood.uvcd, detect/<stem>.scores{1,2}.uvcd and
/// detect/heatmaps/<stem>/<category>.png for every pair.
StageResult cmd_detect(const RunConfig& config, const std::vector<DatasetPair>& pairs, bool resume = false);

/// Reads the detect outputs and writes masks/<category>/<stem>.png, tables/<category>/<stem>.json
/// and overlays/<category>/<stem>.png.
StageResult cmd_postprocess(const RunConfig& config, const std::vector<DatasetPair>& pairs, bool resume = false);

/// Writes eval/report.json and eval/report.txt. Empty `pred_dir` means masks/<target> (binary)
/// or masks/ (semantic pair); non-empty `label_root` replaces eval.root. Missing predictions are
/// listed in the report; the command front ends turn a non-empty list into a data error.
MetricReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& pred_dir = {},
                          const std::filesystem::path& label_root = {}, StageResult* stage = nullptr);

/// Mask-matching baseline for one pair of mask directories; writes baseline/<target>/<name>.png and
/// baseline/tables/<name>.json.
StageResult cmd_baseline(const RunConfig& config, const std::filesystem::path& masks_a,
                         const std::filesystem::path& masks_b, const std::string& name);

/// TP/TN/FP/FN overlays (white/black/red/cyan) of binary predictions against labels into viz/.
StageResult cmd_export_viz(const RunConfig& config, const std::filesystem::path& pred_dir = {});

/// Synthetic bi-temporal dataset (see write_synthetic_dataset) built with the configured encoders.
StageResult cmd_synth(const RunConfig& config, const std::filesystem::path& dir, int pairs, int train_scenes,
                      std::uint64_t seed);

}  // namespace univcd
