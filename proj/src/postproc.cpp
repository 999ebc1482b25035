#include "univcd/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace univcd {

BinaryMask Component::to_mask(int height, int width) const {
  BinaryMask m(height, width);
  for (const auto& [r, c] : pixels) m.set(r, c);
  return m;
}

BinaryMask ComponentSet::to_mask() const {
  BinaryMask m(height, width);
  for (const auto& comp : components) {
    for (const auto& [r, c] : comp.pixels) m.set(r, c);
  }
  return m;
}

std::vector<BinaryMask> Refiner::concept_segment(const Raster&, const std::string&) {
  throw UnsupportedError("refiner does not support concept segmentation");
}

void MaskEchoRefiner::set_reference(BinaryMask reference) {
  reference_ = std::move(reference);
  index_reference();
}

void MaskEchoRefiner::index_reference() {
  const int h = reference_.height();
  const int w = reference_.width();
  slot_.assign(reference_.pixel_count(), -1);
  components_.clear();
  for (const auto& comp : connected_components(reference_).components) {
    for (const auto& [r, c] : comp.pixels) slot_[static_cast<std::size_t>(r) * w + c] = static_cast<int>(components_.size());
    components_.push_back(comp.to_mask(h, w));
  }
}

BinaryMask MaskEchoRefiner::segment(const Raster& image, const BBox&, std::span<const PointPrompt> points) {
  if (image.height() != reference_.height() || image.width() != reference_.width()) {
    throw RefinerError("echo refiner: image and reference mask differ in extent");
  }
  for (const auto& p : points) {
    if (p.polarity != Polarity::kPositive) continue;
    if (p.row < 0 || p.row >= reference_.height() || p.col < 0 || p.col >= reference_.width()) break;
    const int s = slot_[static_cast<std::size_t>(p.row) * reference_.width() + p.col];
    if (s >= 0) return components_[s];
    break;
  }
  return BinaryMask(reference_.height(), reference_.width());
}

std::vector<BinaryMask> MaskEchoRefiner::concept_segment(const Raster& image, const std::string& prompt) {
  if (!concepts_enabled_) return Refiner::concept_segment(image, prompt);
  return concepts_;
}

namespace {

int histogram_bin(double v) {
  return std::clamp(static_cast<int>(std::floor(256.0 * v)), 0, 255);
}

}  // namespace

int otsu_cut(const std::array<std::uint64_t, 256>& histogram) {
  std::int64_t total = 0;
  std::int64_t weighted = 0;
  int occupied = 0;
  for (int b = 0; b < 256; ++b) {
    const auto n = static_cast<std::int64_t>(histogram[b]);
    total += n;
    weighted += n * b;
    occupied += n > 0 ? 1 : 0;
  }
  if (occupied < 2) throw DegenerateInputError("otsu: histogram occupies a single bin");

  // Between-class variance times total^2 is (total*s0 - n0*weighted)^2 / (n0*n1); the integer
  // numerator keeps equal cuts exactly equal so ties resolve deterministically.
  int best = -1;
  long double best_score = -1.0L;
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  for (int k = 0; k < 255; ++k) {
    n0 += static_cast<std::int64_t>(histogram[k]);
    s0 += static_cast<std::int64_t>(histogram[k]) * k;
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const long double diff = static_cast<long double>(total * s0 - n0 * weighted);
    const long double score = diff * diff / (static_cast<long double>(n0) * static_cast<long double>(n1));
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

double otsu_threshold(const Raster& likelihood) {
  if (likelihood.channels() != 1) throw InvalidArgumentError("otsu_threshold expects a single-channel raster");
  std::array<std::uint64_t, 256> hist{};
  for (double v : likelihood.values()) {
    if (!std::isfinite(v)) throw InvalidArgumentError("otsu_threshold: non-finite value");
    ++hist[histogram_bin(v)];
  }
  return (otsu_cut(hist) + 1) / 256.0;
}

namespace {

// Separable min/max filter over a clipped (2r+1) window.
BinaryMask square_filter(const BinaryMask& mask, int radius, bool take_max) {
  if (radius < 0) throw InvalidArgumentError("morphology radius must be non-negative");
  if (radius == 0) return mask;
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v = !take_max;
      for (int dx = std::max(0, x - radius); dx <= std::min(w - 1, x + radius); ++dx) {
        v = take_max ? (v || mask.at(y, dx)) : (v && mask.at(y, dx));
      }
      rows.set(y, x, v);
    }
  }
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v = !take_max;
      for (int dy = std::max(0, y - radius); dy <= std::min(h - 1, y + radius); ++dy) {
        v = take_max ? (v || rows.at(dy, x)) : (v && rows.at(dy, x));
      }
      out.set(y, x, v);
    }
  }
  return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) { return square_filter(mask, radius, false); }
BinaryMask dilate(const BinaryMask& mask, int radius) { return square_filter(mask, radius, true); }
BinaryMask morphological_open(const BinaryMask& mask, int radius) { return dilate(erode(mask, radius), radius); }

ComponentSet connected_components(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  std::vector<int> parent;
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  const auto find = [&](int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  const auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      int mine = -1;
      // Already visited 8-neighbours: W, NW, N, NE.
      const int nbrs[4][2] = {{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
      for (const auto& d : nbrs) {
        const int ny = y + d[0];
        const int nx = x + d[1];
        if (ny < 0 || nx < 0 || nx >= w) continue;
        const int l = label[static_cast<std::size_t>(ny) * w + nx];
        if (l < 0) continue;
        if (mine < 0) {
          mine = l;
        } else {
          unite(mine, l);
        }
      }
      if (mine < 0) {
        mine = static_cast<int>(parent.size());
        parent.push_back(mine);
      }
      label[static_cast<std::size_t>(y) * w + x] = mine;
    }
  }

  ComponentSet out;
  out.height = h;
  out.width = w;
  std::vector<int> slot(parent.size(), -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = label[static_cast<std::size_t>(y) * w + x];
      if (l < 0) continue;
      const int root = find(l);
      if (slot[root] < 0) {
        slot[root] = static_cast<int>(out.components.size());
        Component c;
        c.label = slot[root] + 1;
        c.bbox = {y, x, y, x};
        out.components.push_back(std::move(c));
      }
      Component& c = out.components[slot[root]];
      c.pixels.emplace_back(y, x);
      c.bbox.row_min = std::min(c.bbox.row_min, y);
      c.bbox.row_max = std::max(c.bbox.row_max, y);
      c.bbox.col_min = std::min(c.bbox.col_min, x);
      c.bbox.col_max = std::max(c.bbox.col_max, x);
      c.centroid_row += y;
      c.centroid_col += x;
    }
  }
  for (auto& c : out.components) {
    c.area = c.pixels.size();
    c.centroid_row /= static_cast<double>(c.area);
    c.centroid_col /= static_cast<double>(c.area);
  }
  return out;
}

void CleanupConfig::validate() const {
  if (opening_radius < 0) throw InvalidArgumentError("postproc: opening radius must be non-negative");
  if (!(min_area_fraction >= 0.0 && min_area_fraction <= 1.0)) {
    throw InvalidArgumentError("postproc: min_area_fraction must lie in [0, 1]");
  }
  if (min_area_floor < 0) throw InvalidArgumentError("postproc: min_area_floor must be non-negative");
}

std::size_t CleanupConfig::min_area(int height, int width) const {
  const double frac = min_area_fraction * static_cast<double>(height) * static_cast<double>(width);
  return std::max(static_cast<std::size_t>(min_area_floor), static_cast<std::size_t>(std::ceil(frac)));
}

ComponentSet binarize_and_clean(const Raster& likelihood, const CleanupConfig& cfg) {
  cfg.validate();
  if (likelihood.channels() != 1) throw InvalidArgumentError("binarize_and_clean expects a single-channel raster");
  const Raster norm = minmax_normalize(likelihood);
  double threshold = 0.0;
  try {
    threshold = otsu_threshold(norm);
  } catch (const DegenerateInputError&) {
    return {{}, likelihood.height(), likelihood.width()};
  }
  BinaryMask fg(likelihood.height(), likelihood.width());
  auto v = norm.values();
  auto m = fg.values();
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] >= threshold ? 1 : 0;

  ComponentSet all = connected_components(morphological_open(fg, cfg.opening_radius));
  const std::size_t min_area = cfg.min_area(likelihood.height(), likelihood.width());
  ComponentSet out{{}, all.height, all.width};
  for (auto& c : all.components) {
    if (c.area < min_area) continue;
    c.label = static_cast<int>(out.components.size()) + 1;
    out.components.push_back(std::move(c));
  }
  return out;
}

const char* to_string(RefineOutcome outcome) {
  switch (outcome) {
    case RefineOutcome::kAccepted: return "accepted";
    case RefineOutcome::kKept: return "kept";
    case RefineOutcome::kDeleted: return "deleted";
  }
  return "kept";
}

BBox dilate_box(const BBox& box, double dilation, int height, int width) {
  const int dy = static_cast<int>(std::ceil(dilation / 2.0 * box.height()));
  const int dx = static_cast<int>(std::ceil(dilation / 2.0 * box.width()));
  return {std::max(0, box.row_min - dy), std::max(0, box.col_min - dx), std::min(height - 1, box.row_max + dy),
          std::min(width - 1, box.col_max + dx)};
}

void RefineConfig::validate() const {
  if (!(iou_min >= 0.0 && iou_min <= 1.0)) throw InvalidArgumentError("refine: iou_min outside [0, 1]");
  if (!(box_dilation >= 0.0)) throw InvalidArgumentError("refine: box_dilation must be non-negative");
}

PointPrompt centroid_prompt(const Component& c) {
  if (c.pixels.empty()) throw InvalidArgumentError("centroid_prompt: empty component");
  const int r = static_cast<int>(std::lround(c.centroid_row));
  const int col = static_cast<int>(std::lround(c.centroid_col));
  std::pair<int, int> best = c.pixels.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& p : c.pixels) {
    if (p.first == r && p.second == col) return {r, col, Polarity::kPositive};
    const double d = std::hypot(p.first - c.centroid_row, p.second - c.centroid_col);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return {best.first, best.second, Polarity::kPositive};
}

RefineResult refine_components(const ComponentSet& candidates, const Raster& image1, const Raster& image2,
                               const ClassScoreMap& scores1, const ClassScoreMap& scores2, int category,
                               Refiner& refiner, const RefineConfig& cfg) {
  const int h = candidates.height;
  const int w = candidates.width;
  RefineResult out{BinaryMask(h, w), {}};
  if (candidates.empty()) return out;
  if (image1.height() != h || image1.width() != w || !image1.same_shape(image2)) {
    throw InvalidArgumentError("refine_components: images do not match the candidate extent");
  }
  if (scores1.scores.height() != h || scores1.scores.width() != w || !scores1.scores.same_shape(scores2.scores)) {
    throw InvalidArgumentError("refine_components: score maps do not match the candidate extent");
  }
  if (category < 0 || category >= scores1.scores.channels()) {
    throw InvalidArgumentError("refine_components: category index out of range");
  }

  for (const auto& comp : candidates.components) {
    ComponentRefinement rec;
    rec.label = comp.label;
    double m1 = 0.0;
    double m2 = 0.0;
    for (const auto& [r, c] : comp.pixels) {
      m1 += scores1.scores.at(r, c, category);
      m2 += scores2.scores.at(r, c, category);
    }
    rec.epoch = m2 > m1 ? 1 : 0;
    rec.prompt_box = dilate_box(comp.bbox, cfg.box_dilation, h, w);
    rec.prompt_point = centroid_prompt(comp);
    const BinaryMask candidate = comp.to_mask(h, w);

    bool accepted = false;
    BinaryMask refined;
    try {
      const PointPrompt points[1] = {rec.prompt_point};
      refined = refiner.segment(rec.epoch == 0 ? image1 : image2, rec.prompt_box, points);
      if (refined.height() != h || refined.width() != w) throw RefinerError("refined mask has the wrong extent");
      rec.iou = mask_iou(refined, candidate);
      accepted = rec.iou >= cfg.iou_min;
    } catch (const std::exception& e) {
      rec.warning = e.what();
    }

    if (accepted) {
      rec.outcome = RefineOutcome::kAccepted;
      out.mask |= refined;
    } else if (cfg.strict && rec.warning.empty()) {
      rec.outcome = RefineOutcome::kDeleted;
    } else {
      rec.outcome = RefineOutcome::kKept;
      out.mask |= candidate;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

BinaryMask concept_refine(const BinaryMask& mask, const Raster& image, const std::string& prompt, Refiner& refiner,
                          double iou_min) {
  if (!refiner.supports_concepts()) throw UnsupportedError("refiner does not support concept segmentation");
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw InvalidArgumentError("concept_refine: image and mask differ in extent");
  }
  const auto concepts = refiner.concept_segment(image, prompt);
  for (const auto& c : concepts) {
    if (!c.same_extent(mask)) throw RefinerError("concept mask has the wrong extent");
  }
  BinaryMask out(mask.height(), mask.width());
  for (const auto& comp : connected_components(mask).components) {
    const BinaryMask candidate = comp.to_mask(mask.height(), mask.width());
    bool replaced = false;
    for (const auto& c : concepts) {
      if (mask_iou(c, candidate) >= iou_min) {
        out |= c;
        replaced = true;
      }
    }
    if (!replaced) out |= candidate;
  }
  return out;
}

}  // namespace univcd
