#include "univcd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "univcd/io.hpp"

namespace univcd {
namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

bool is_image(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".uvcd";
}

BinaryMask load_prediction(const std::filesystem::path& path) {
  if (path.extension() == ".uvcd") {
    const Raster r = load_raster(path);
    BinaryMask m(r.height(), r.width());
    for (int y = 0; y < r.height(); ++y) {
      for (int x = 0; x < r.width(); ++x) m.set(y, x, r.at(y, x, 0) != 0.0);
    }
    return m;
  }
  return load_mask_png(path);
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_extent(gt)) throw InvalidArgumentError("confusion: prediction and label differ in shape");
  ConfusionCounts c;
  auto p = pred.values();
  auto g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) {
      ++c.tp;
    } else if (p[i]) {
      ++c.fp;
    } else if (g[i]) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

ClassMetrics metrics(const ConfusionCounts& k) {
  const auto tp = static_cast<double>(k.tp);
  const auto fp = static_cast<double>(k.fp);
  const auto fn = static_cast<double>(k.fn);
  const auto tn = static_cast<double>(k.tn);
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.iou = ratio(tp, tp + fp + fn);
  m.no_change_iou = ratio(tn, tn + fp + fn);
  m.miou = 0.5 * (m.iou + m.no_change_iou);
  return m;
}

const char* to_string(EvalMode mode) { return mode == EvalMode::kAggregate ? "aggregate" : "per_image_mean"; }

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "aggregate") return EvalMode::kAggregate;
  if (text == "per_image_mean" || text == "per-image-mean") return EvalMode::kPerImageMean;
  throw InvalidArgumentError("unknown evaluation mode '" + text + "'");
}

const char* to_string(LabelSemantics s) { return s == LabelSemantics::kBinary ? "binary" : "semantic_pair"; }

LabelSemantics parse_label_semantics(const std::string& text) {
  if (text == "binary") return LabelSemantics::kBinary;
  if (text == "semantic_pair" || text == "semantic-pair") return LabelSemantics::kSemanticPair;
  throw InvalidArgumentError("unknown label semantics '" + text + "'");
}

std::vector<DatasetPair> list_pairs(const DatasetLayout& layout) {
  const auto dir_a = layout.root / layout.epoch_a;
  const auto dir_b = layout.root / layout.epoch_b;
  if (!std::filesystem::is_directory(dir_a)) throw DataError("missing epoch directory " + dir_a.string());
  if (!std::filesystem::is_directory(dir_b)) throw DataError("missing epoch directory " + dir_b.string());
  std::vector<DatasetPair> pairs;
  for (const auto& entry : std::filesystem::directory_iterator(dir_a)) {
    if (!entry.is_regular_file() || !is_image(entry.path())) continue;
    const auto name = entry.path().filename();
    if (!std::filesystem::exists(dir_b / name)) throw DataError("no epoch-B image for " + name.string());
    pairs.push_back({name.string(), entry.path(), dir_b / name});
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return pairs;
}

BinaryMask semantic_change(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, int height,
                           int width, int value) {
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (a.size() != n || b.size() != n) throw InvalidArgumentError("semantic_change: label maps differ in shape");
  BinaryMask m(height, width);
  auto out = m.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = ((a[i] == value) != (b[i] == value)) ? 1 : 0;
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = to_string(mode);
  j["images"] = images;
  j["miou"] = miou;
  auto& cls = j["classes"];
  cls = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    cls.push_back({{"name", c.name},
                   {"precision", c.metrics.precision},
                   {"recall", c.metrics.recall},
                   {"f1", c.metrics.f1},
                   {"iou", c.metrics.iou},
                   {"no_change_iou", c.metrics.no_change_iou},
                   {"miou", c.metrics.miou},
                   {"counts", {{"tp", c.counts.tp}, {"fp", c.counts.fp}, {"fn", c.counts.fn}, {"tn", c.counts.tn}}}});
  }
  j["missing"] = missing;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %8s\n", "class", "P", "R", "F1", "IoU", "mIoU");
  out << line;
  for (const auto& c : classes) {
    std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f %8.2f %8.2f %8.2f\n", c.name.c_str(),
                  100.0 * c.metrics.precision, 100.0 * c.metrics.recall, 100.0 * c.metrics.f1, 100.0 * c.metrics.iou,
                  100.0 * c.metrics.miou);
    out << line;
  }
  if (classes.size() > 1) {
    std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %8.2f\n", "mean", "", "", "", "", 100.0 * miou);
    out << line;
  }
  for (const auto& m : missing) out << "missing prediction: " << m << '\n';
  return out.str();
}

MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const DatasetLayout& layout, EvalMode mode,
                              const std::string& binary_name) {
  const auto pairs = list_pairs(layout);
  const bool semantic = layout.semantics == LabelSemantics::kSemanticPair;
  if (semantic && layout.label_values.empty()) throw ConfigError("semantic-pair evaluation needs label_values");

  std::vector<std::string> names;
  if (semantic) {
    for (const auto& [name, value] : layout.label_values) names.push_back(name);
  } else {
    names.push_back(binary_name);
  }
  std::vector<ConfusionCounts> totals(names.size());
  std::vector<ClassMetrics> sums(names.size());

  MetricReport report;
  report.mode = mode;
  for (const auto& pair : pairs) {
    const std::string stem = std::filesystem::path(pair.name).stem().string();
    std::vector<BinaryMask> gts;
    if (semantic) {
      int ha = 0, wa = 0, hb = 0, wb = 0;
      const auto la = load_png_labels(layout.root / layout.labels_a / (stem + ".png"), ha, wa);
      const auto lb = load_png_labels(layout.root / layout.labels_b / (stem + ".png"), hb, wb);
      if (ha != hb || wa != wb) throw DataError("semantic label maps differ in shape for " + stem);
      for (const auto& [name, value] : layout.label_values) gts.push_back(semantic_change(la, lb, ha, wa, value));
    } else {
      gts.push_back(load_mask_png(layout.root / layout.labels / (stem + ".png")));
    }

    std::vector<BinaryMask> preds;
    bool complete = true;
    for (std::size_t c = 0; c < names.size(); ++c) {
      const auto dir = semantic ? pred_dir / names[c] : pred_dir;
      std::filesystem::path path = dir / (stem + ".png");
      if (!std::filesystem::exists(path)) path = dir / (stem + ".uvcd");
      if (!std::filesystem::exists(path)) {
        report.missing.push_back(semantic ? names[c] + "/" + stem : stem);
        complete = false;
        continue;
      }
      preds.push_back(load_prediction(path));
    }
    if (!complete) continue;

    ++report.images;
    for (std::size_t c = 0; c < names.size(); ++c) {
      const auto k = confusion(preds[c], gts[c]);
      totals[c] += k;
      const auto m = metrics(k);
      sums[c].precision += m.precision;
      sums[c].recall += m.recall;
      sums[c].f1 += m.f1;
      sums[c].iou += m.iou;
      sums[c].no_change_iou += m.no_change_iou;
      sums[c].miou += m.miou;
    }
  }

  for (std::size_t c = 0; c < names.size(); ++c) {
    ClassReport cr{names[c], totals[c], metrics(totals[c])};
    if (mode == EvalMode::kPerImageMean) {
      const double n = report.images > 0 ? static_cast<double>(report.images) : 1.0;
      cr.metrics = {sums[c].precision / n, sums[c].recall / n, sums[c].f1 / n,
                    sums[c].iou / n,       sums[c].no_change_iou / n, sums[c].miou / n};
      if (report.images == 0) cr.metrics = {};
    }
    report.miou += cr.metrics.miou;
    report.classes.push_back(std::move(cr));
  }
  report.miou /= static_cast<double>(names.size());
  return report;
}

}  // namespace univcd
