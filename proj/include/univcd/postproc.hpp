#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "univcd/core.hpp"
#include "univcd/inference.hpp"

namespace univcd {

struct Component {
  int label = 0;
  std::vector<std::pair<int, int>> pixels;  // (row, col), raster order
  std::size_t area = 0;
  BBox bbox;
  double centroid_row = 0.0;
  double centroid_col = 0.0;

  BinaryMask to_mask(int height, int width) const;
};

struct ComponentSet {
  std::vector<Component> components;
  int height = 0;
  int width = 0;

  bool empty() const noexcept { return components.empty(); }
  BinaryMask to_mask() const;
};

/// Promptable segmenter. concept_segment is optional (supports_concepts()).
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual BinaryMask segment(const Raster& image, const BBox& box, std::span<const PointPrompt> points) = 0;
  virtual bool supports_concepts() const { return false; }
  virtual std::vector<BinaryMask> concept_segment(const Raster& image, const std::string& prompt);
};

/// Deterministic stand-in: answers a prompt with the 8-connected component of a reference mask
/// that contains the first positive point (empty when the point misses the mask). With the
/// stage-1 mask as reference it echoes each candidate exactly.
class MaskEchoRefiner final : public Refiner {
 public:
  explicit MaskEchoRefiner(BinaryMask reference, std::vector<BinaryMask> concepts = {}, bool concepts_enabled = false)
      : reference_(std::move(reference)), concepts_(std::move(concepts)), concepts_enabled_(concepts_enabled) {
    index_reference();
  }

  void set_reference(BinaryMask reference);
  BinaryMask segment(const Raster& image, const BBox& box, std::span<const PointPrompt> points) override;
  bool supports_concepts() const override { return concepts_enabled_; }
  std::vector<BinaryMask> concept_segment(const Raster& image, const std::string& prompt) override;

 private:
  void index_reference();

  BinaryMask reference_;
  std::vector<int> slot_;  // component index per pixel, -1 off the mask
  std::vector<BinaryMask> components_;
  std::vector<BinaryMask> concepts_;
  bool concepts_enabled_ = false;
};

/// 256-bin Otsu on values in [0, 1] (bin = min(255, floor(256 v))). Returns (k + 1) / 256 for
/// the cut k maximizing between-class variance (lowest k on ties); foreground is v >= threshold.
/// Throws DegenerateInputError when every value falls in one bin.
double otsu_threshold(const Raster& likelihood);
/// Best cut index over a 256-bin histogram, same tie rule.
int otsu_cut(const std::array<std::uint64_t, 256>& histogram);

/// Erosion then dilation with a (2r+1)^2 square clipped at the image border.
BinaryMask morphological_open(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);

/// 8-connected components, labeled 1.. in raster order of their first pixel.
ComponentSet connected_components(const BinaryMask& mask);

struct CleanupConfig {
  int opening_radius = 1;
  double min_area_fraction = 0.0005;
  int min_area_floor = 8;

  void validate() const;
  std::size_t min_area(int height, int width) const;
  friend bool operator==(const CleanupConfig&, const CleanupConfig&) = default;
};

/// Stage 1: normalize, Otsu, open, label, drop small components. A constant likelihood yields
/// an empty set.
ComponentSet binarize_and_clean(const Raster& likelihood, const CleanupConfig& cfg = {});

enum class RefineOutcome { kAccepted, kKept, kDeleted };
const char* to_string(RefineOutcome outcome);

struct ComponentRefinement {
  int label = 0;
  int epoch = 0;  // 0 or 1
  BBox prompt_box;
  PointPrompt prompt_point;
  double iou = 0.0;
  RefineOutcome outcome = RefineOutcome::kKept;
  std::string warning;
};

struct RefineResult {
  BinaryMask mask;
  std::vector<ComponentRefinement> records;
};

struct RefineConfig {
  double iou_min = 0.3;
  /// Delete rejected components instead of keeping the candidate pixels.
  bool strict = false;
  double box_dilation = 0.1;

  void validate() const;
  friend bool operator==(const RefineConfig&, const RefineConfig&) = default;
};

/// Prompt box: bbox grown by ceil(dilation / 2 * extent) on every side, clipped to the image.
BBox dilate_box(const BBox& box, double dilation, int height, int width);
/// Component pixel closest to the centroid (the centroid pixel itself when it belongs).
PointPrompt centroid_prompt(const Component& c);

/// Stage 2.
RefineResult refine_components(const ComponentSet& candidates, const Raster& image1, const Raster& image2,
                               const ClassScoreMap& scores1, const ClassScoreMap& scores2, int category,
                               Refiner& refiner, const RefineConfig& cfg = {});

/// Stage 3: concept masks matching a candidate component (IoU >= iou_min) replace it; other
/// candidates are kept.
BinaryMask concept_refine(const BinaryMask& mask, const Raster& image, const std::string& prompt, Refiner& refiner,
                          double iou_min = 0.3);

}  // namespace univcd
