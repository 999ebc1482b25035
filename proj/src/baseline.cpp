#include "univcd/baseline.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "univcd/io.hpp"

namespace univcd {

void MaskSet::validate() const {
  if (masks.size() != confidences.size()) throw InvalidArgumentError("mask set: masks and confidences differ in count");
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (!masks[i].same_extent(masks[0])) throw InvalidArgumentError("mask set: masks differ in shape");
  }
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgumentError("mask set: confidence outside [0, 1]");
  }
}

MaskSet filter_by_confidence(const MaskSet& s, double c) {
  s.validate();
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgumentError("filter_by_confidence: threshold outside [0, 1]");
  MaskSet out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.confidences[i] >= c) {
      out.masks.push_back(s.masks[i]);
      out.confidences.push_back(s.confidences[i]);
    }
  }
  return out;
}

std::vector<std::vector<double>> iou_table(const MaskSet& m1, const MaskSet& m2) {
  m1.validate();
  m2.validate();
  if (m1.size() > 0 && m2.size() > 0 && !m1.masks[0].same_extent(m2.masks[0])) {
    throw InvalidArgumentError("match_masks: epochs differ in mask shape");
  }
  std::vector<std::vector<double>> t(m1.size(), std::vector<double>(m2.size(), 0.0));
  for (std::size_t i = 0; i < m1.size(); ++i) {
    for (std::size_t j = 0; j < m2.size(); ++j) t[i][j] = mask_iou(m1.masks[i], m2.masks[j]);
  }
  return t;
}

MatchResult match_from_table(const std::vector<std::vector<double>>& iou, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgumentError("match_masks: theta must lie in (0, 1]");
  const int n1 = static_cast<int>(iou.size());
  const int n2 = n1 > 0 ? static_cast<int>(iou[0].size()) : 0;
  std::vector<MatchPair> cands;
  for (int i = 0; i < n1; ++i) {
    if (static_cast<int>(iou[i].size()) != n2) throw InvalidArgumentError("match_masks: ragged IoU table");
    for (int j = 0; j < n2; ++j) {
      if (iou[i][j] >= theta) cands.push_back({i, j, iou[i][j]});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.index1, a.index2) < std::tie(b.index1, b.index2);
  });
  std::vector<bool> used1(n1, false), used2(n2, false);
  MatchResult out;
  for (const auto& c : cands) {
    if (used1[c.index1] || used2[c.index2]) continue;
    used1[c.index1] = used2[c.index2] = true;
    out.pairs.push_back(c);
  }
  for (int i = 0; i < n1; ++i) {
    if (!used1[i]) out.unmatched1.push_back(i);
  }
  for (int j = 0; j < n2; ++j) {
    if (!used2[j]) out.unmatched2.push_back(j);
  }
  return out;
}

MatchResult match_masks(const MaskSet& m1, const MaskSet& m2, double theta) {
  MatchResult r = match_from_table(iou_table(m1, m2), theta);
  // A table without rows cannot tell how many epoch-2 masks there were.
  if (m1.masks.empty()) {
    for (int j = 0; j < static_cast<int>(m2.size()); ++j) r.unmatched2.push_back(j);
  }
  return r;
}

BinaryMask change_map(const MaskSet& m1, const MaskSet& m2, const MatchResult& result, int height, int width) {
  if (!m1.masks.empty()) {
    height = m1.masks[0].height();
    width = m1.masks[0].width();
  } else if (!m2.masks.empty()) {
    height = m2.masks[0].height();
    width = m2.masks[0].width();
  }
  BinaryMask out(std::max(height, 1), std::max(width, 1));
  for (int i : result.unmatched1) out |= m1.masks.at(static_cast<std::size_t>(i));
  for (int j : result.unmatched2) out |= m2.masks.at(static_cast<std::size_t>(j));
  return out;
}

void BaselineConfig::validate() const {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgumentError("baseline: confidence outside [0, 1]");
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgumentError("baseline: theta must lie in (0, 1]");
}

MaskSet load_mask_set(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("mask directory not found: " + dir.string());
  nlohmann::json manifest = nlohmann::json::object();
  const auto manifest_path = dir / "confidences.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad confidence manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  MaskSet out;
  for (const auto& f : files) {
    out.masks.push_back(load_mask_png(f));
    const auto key = f.filename().string();
    out.confidences.push_back(manifest.contains(key) ? manifest[key].get<double>() : 1.0);
  }
  out.validate();
  return out;
}

}  // namespace univcd
