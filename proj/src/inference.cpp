#include "univcd/inference.hpp"

#include <algorithm>
#include <cmath>

#include "univcd/tiling.hpp"

namespace univcd {

const char* to_string(ScoreMode mode) { return mode == ScoreMode::kLogit ? "logit" : "softmax"; }

ScoreMode parse_score_mode(const std::string& text) {
  if (text == "logit") return ScoreMode::kLogit;
  if (text == "softmax") return ScoreMode::kSoftmax;
  throw InvalidArgumentError("unknown scoring mode '" + text + "' (expected logit or softmax)");
}

ClassScoreMap class_scores(const Raster& embedding, const TextEmbeddingSet& text, ScoreMode mode,
                           double temperature) {
  if (text.size() == 0) throw InvalidArgumentError("class_scores: empty text embedding set");
  if (embedding.channels() != text.dim()) {
    throw InvalidArgumentError("class_scores: embedding width " + std::to_string(embedding.channels()) +
                               " != text width " + std::to_string(text.dim()));
  }
  if (!(temperature > 0.0)) throw InvalidArgumentError("class_scores: temperature must be positive");
  const int k = static_cast<int>(text.size());
  const int d = text.dim();
  std::vector<std::vector<double>> unit = text.vectors;
  for (auto& t : unit) {
    double sq = 0.0;
    for (double v : t) sq += v * v;
    if (sq > 0.0) {
      for (double& v : t) v /= std::sqrt(sq);
    }
  }

  ClassScoreMap out{Raster(embedding.height(), embedding.width(), k), text.categories, mode};
  std::vector<double> logits(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < embedding.pixel_count(); ++p) {
    const double* e = embedding.data() + p * d;
    double sq = 0.0;
    for (int i = 0; i < d; ++i) sq += e[i] * e[i];
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (int c = 0; c < k; ++c) {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += e[i] * unit[c][i];
      logits[c] = std::clamp(dot * inv, -1.0, 1.0);
    }
    double* s = out.scores.data() + p * k;
    if (mode == ScoreMode::kLogit) {
      std::copy(logits.begin(), logits.end(), s);
      continue;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      s[c] = std::exp(temperature * (logits[c] - top));
      total += s[c];
    }
    for (int c = 0; c < k; ++c) s[c] /= total;
  }
  return out;
}

ChangeLikelihoodMap change_likelihood(const ClassScoreMap& s1, const ClassScoreMap& s2) {
  if (!s1.scores.same_shape(s2.scores)) throw InvalidArgumentError("change_likelihood: score shapes differ");
  if (s1.categories != s2.categories) throw InvalidArgumentError("change_likelihood: category lists differ");
  if (s1.mode != s2.mode) throw InvalidArgumentError("change_likelihood: scoring modes differ");
  ChangeLikelihoodMap out{Raster(s1.scores.height(), s1.scores.width(), s1.scores.channels()), s1.categories};
  auto a = s1.scores.values();
  auto b = s2.scores.values();
  auto d = out.likelihood.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return out;
}

void DetectConfig::validate() const {
  if (!(temperature > 0.0)) throw InvalidArgumentError("detect: temperature must be positive");
  if (tile < 1) throw InvalidArgumentError("detect: tile must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgumentError("detect: overlap must lie in [0, 1)");
  if (window < 1) throw InvalidArgumentError("detect: window must be positive");
  if (!(window_overlap >= 0.0 && window_overlap < 1.0)) {
    throw InvalidArgumentError("detect: window overlap must lie in [0, 1)");
  }
}

Raster pixel_embedding(const Raster& image, const ScfamModel* model, const EncoderSet& encoders,
                       const DetectConfig& cfg) {
  const int side = encoders.spatial->config().input_size;
  const Raster input =
      (image.height() == side && image.width() == side) ? image : bilinear_resize(image, side, side);
  Raster emb;
  if (cfg.no_scfam) {
    emb = sliding_window_encode(*encoders.semantic, input, std::min(cfg.window, side), cfg.window_overlap).features;
    normalize_pixels(emb);
    emb = bilinear_resize(emb, side, side);
    normalize_pixels(emb);
  } else {
    if (!model) throw ModelError("detect: no alignment model loaded");
    emb = inference_embedding(*model, encode_spatial(*encoders.spatial, input));
  }
  if (emb.height() != image.height() || emb.width() != image.width()) {
    emb = bilinear_resize(emb, image.height(), image.width());
    normalize_pixels(emb);
  }
  return emb;
}

ClassScoreMap score_image(const Raster& image, const ScfamModel* model, const EncoderSet& encoders,
                          const TextEmbeddingSet& text, const DetectConfig& cfg) {
  return class_scores(pixel_embedding(image, model, encoders, cfg), text, cfg.mode, cfg.temperature);
}

PairDetection detect_pair_with_scores(const Raster& image1, const Raster& image2, const ScfamModel* model,
                                      const EncoderSet& encoders, const TextEmbeddingSet& text,
                                      const DetectConfig& cfg) {
  cfg.validate();
  if (!image1.same_shape(image2)) throw InvalidArgumentError("detect_pair: temporal images differ in shape");
  if (image1.channels() != 3) throw InvalidArgumentError("detect_pair: images must have 3 channels");
  if (!cfg.no_scfam && !model) throw ModelError("detect: no alignment model loaded");
  const int k = static_cast<int>(text.size());

  // Both epochs travel through one tile pass so every placement sees the same geometry.
  // Per tile: K likelihood channels, then K scores of each epoch.
  const auto per_tile = [&](const Raster& stacked) {
    Raster a(stacked.height(), stacked.width(), 3);
    Raster b(stacked.height(), stacked.width(), 3);
    for (std::size_t p = 0; p < stacked.pixel_count(); ++p) {
      for (int c = 0; c < 3; ++c) {
        a.data()[p * 3 + c] = stacked.data()[p * 6 + c];
        b.data()[p * 3 + c] = stacked.data()[p * 6 + 3 + c];
      }
    }
    const auto s1 = score_image(a, model, encoders, text, cfg);
    const auto s2 = score_image(b, model, encoders, text, cfg);
    const auto d = change_likelihood(s1, s2);
    Raster out(stacked.height(), stacked.width(), 3 * k);
    for (std::size_t p = 0; p < stacked.pixel_count(); ++p) {
      double* o = out.data() + p * 3 * k;
      for (int c = 0; c < k; ++c) {
        o[c] = d.likelihood.data()[p * k + c];
        o[k + c] = s1.scores.data()[p * k + c];
        o[2 * k + c] = s2.scores.data()[p * k + c];
      }
    }
    return out;
  };

  Raster stacked(image1.height(), image1.width(), 6);
  for (std::size_t p = 0; p < image1.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      stacked.data()[p * 6 + c] = image1.data()[p * 3 + c];
      stacked.data()[p * 6 + 3 + c] = image2.data()[p * 3 + c];
    }
  }
  const bool tiled = image1.height() >= cfg.tile && image1.width() >= cfg.tile;
  const Raster joint = tiled ? tile_and_stitch(stacked, cfg.tile, cfg.overlap, per_tile) : per_tile(stacked);

  PairDetection out{{Raster(joint.height(), joint.width(), k), text.categories},
                    {Raster(joint.height(), joint.width(), k), text.categories, cfg.mode},
                    {Raster(joint.height(), joint.width(), k), text.categories, cfg.mode}};
  for (std::size_t p = 0; p < joint.pixel_count(); ++p) {
    const double* j = joint.data() + p * 3 * k;
    for (int c = 0; c < k; ++c) {
      out.likelihood.likelihood.data()[p * k + c] = j[c];
      out.scores1.scores.data()[p * k + c] = j[k + c];
      out.scores2.scores.data()[p * k + c] = j[2 * k + c];
    }
  }
  return out;
}

ChangeLikelihoodMap detect_pair(const Raster& image1, const Raster& image2, const ScfamModel* model,
                                const EncoderSet& encoders, const TextEmbeddingSet& text, const DetectConfig& cfg) {
  return detect_pair_with_scores(image1, image2, model, encoders, text, cfg).likelihood;
}

}  // namespace univcd
