#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

/// Change-class scores plus the two-class mean IoU. Every 0/0 ratio is 0.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  double no_change_iou = 0.0;
  double miou = 0.0;
};

ClassMetrics metrics(const ConfusionCounts& counts);

enum class EvalMode { kAggregate, kPerImageMean };
enum class LabelSemantics { kBinary, kSemanticPair };

const char* to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& text);
const char* to_string(LabelSemantics semantics);
LabelSemantics parse_label_semantics(const std::string& text);

/// Pairs are matched by file name across the epoch directories.
struct DatasetLayout {
  std::filesystem::path root;
  std::string epoch_a = "A";
  std::string epoch_b = "B";
  /// Binary change labels (nonzero = changed).
  std::string labels = "label";
  /// Per-epoch semantic label maps for semantic-pair datasets.
  std::string labels_a = "label1";
  std::string labels_b = "label2";
  LabelSemantics semantics = LabelSemantics::kBinary;
  /// Category name -> label value in the semantic maps.
  std::map<std::string, int> label_values;

  friend bool operator==(const DatasetLayout&, const DatasetLayout&) = default;
};

struct DatasetPair {
  std::string name;  // file name shared by both epochs
  std::filesystem::path image_a;
  std::filesystem::path image_b;
};

/// Epoch-A files (.png / .uvcd) with a same-named epoch-B file, sorted. A file without its twin
/// raises DataError.
std::vector<DatasetPair> list_pairs(const DatasetLayout& layout);

/// Per category c: changed iff exactly one epoch's label equals c.
BinaryMask semantic_change(const std::vector<std::uint8_t>& labels_a, const std::vector<std::uint8_t>& labels_b,
                           int height, int width, int value);

struct ClassReport {
  std::string name;
  ConfusionCounts counts;
  ClassMetrics metrics;
};

struct MetricReport {
  EvalMode mode = EvalMode::kAggregate;
  std::vector<ClassReport> classes;
  /// Binary: the change class's two-class mIoU. Semantic: mean of the per-category values.
  double miou = 0.0;
  std::size_t images = 0;
  std::vector<std::string> missing;

  std::string to_json() const;
  /// Columns P, R, F1, IoU, mIoU in percent.
  std::string to_table() const;
};

/// Binary layouts read `<pred_dir>/<stem>.png`; semantic-pair layouts read
/// `<pred_dir>/<category>/<stem>.png` for every category in layout.label_values.
/// `binary_name` labels the single class of binary reports.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const DatasetLayout& layout, EvalMode mode,
                              const std::string& binary_name = "change");

}  // namespace univcd
