#pragma once

#include <string>
#include <vector>

#include "univcd/core.hpp"
#include "univcd/encoders.hpp"
#include "univcd/scfam.hpp"

namespace univcd {

enum class ScoreMode { kLogit, kSoftmax };

const char* to_string(ScoreMode mode);
ScoreMode parse_score_mode(const std::string& text);

struct ClassScoreMap {
  Raster scores;  // H x W x K
  std::vector<std::string> categories;
  ScoreMode mode = ScoreMode::kSoftmax;
};

struct ChangeLikelihoodMap {
  Raster likelihood;  // H x W x K
  std::vector<std::string> categories;
};

/// Cosine similarity of each pixel embedding to each text embedding; softmax mode applies a
/// per-pixel softmax to temperature * cosine. Zero embeddings score 0 against every class.
ClassScoreMap class_scores(const Raster& embedding, const TextEmbeddingSet& text, ScoreMode mode,
                           double temperature);

/// Per-category squared score difference.
ChangeLikelihoodMap change_likelihood(const ClassScoreMap& s1, const ClassScoreMap& s2);

struct DetectConfig {
  ScoreMode mode = ScoreMode::kSoftmax;
  double temperature = 100.0;
  int tile = 256;
  double overlap = 0.5;
  /// Score raw sliding-window semantic features instead of the alignment module output.
  bool no_scfam = false;
  int window = 128;
  double window_overlap = 0.5;

  void validate() const;
  friend bool operator==(const DetectConfig&, const DetectConfig&) = default;
};

/// Full-resolution pixel embeddings of one image (any size; resampled through the encoder
/// input size). `model` may be null only with cfg.no_scfam.
Raster pixel_embedding(const Raster& image, const ScfamModel* model, const EncoderSet& encoders,
                       const DetectConfig& cfg);

ClassScoreMap score_image(const Raster& image, const ScfamModel* model, const EncoderSet& encoders,
                          const TextEmbeddingSet& text, const DetectConfig& cfg);

struct PairDetection {
  ChangeLikelihoodMap likelihood;
  /// Stitched per-epoch class scores (used to pick the epoch for refinement prompts).
  ClassScoreMap scores1;
  ClassScoreMap scores2;
};

PairDetection detect_pair_with_scores(const Raster& image1, const Raster& image2, const ScfamModel* model,
                                      const EncoderSet& encoders, const TextEmbeddingSet& text,
                                      const DetectConfig& cfg);

ChangeLikelihoodMap detect_pair(const Raster& image1, const Raster& image2, const ScfamModel* model,
                                const EncoderSet& encoders, const TextEmbeddingSet& text, const DetectConfig& cfg);

}  // namespace univcd
