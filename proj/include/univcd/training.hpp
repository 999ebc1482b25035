#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "univcd/encoders.hpp"
#include "univcd/losses.hpp"
#include "univcd/nn.hpp"
#include "univcd/scfam.hpp"

namespace univcd {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  int batch_size = 3;
  int epochs = 30;
  std::uint64_t seed = 0;
  LossWeights weights;
  bool ablation_no_recon = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Sliding-window geometry for the frozen semantic targets.
  int window = 128;
  double overlap = 0.5;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainState {
  long step = 0;
  ScfamModel model;
  /// First and second moments, aligned with model.params() and nothing else.
  nn::Gradients first_moment;
  nn::Gradients second_moment;
  std::vector<LossBreakdown> log;

  static TrainState start(ScfamModel model);
};

/// Frozen outputs for one image, rounded to float32 so cached and fresh paths agree bit for bit.
CachedFeatures encode_sample(const EncoderSet& encoders, const Raster& image, int window, double overlap,
                             FeatureCache* cache = nullptr);

/// Recon weights zeroed when the no-reconstruction ablation is on.
LossWeights effective_weights(const TrainConfig& cfg);

/// Forward + backward for one sample. Gradients are accumulated into `grads` when non-null.
LossBreakdown loss_and_gradients(const ScfamModel& model, const CachedFeatures& sample, const LossWeights& weights,
                                 nn::Gradients* grads);

/// One AdamW update from batch-averaged gradients of already encoded samples.
void train_step(TrainState& state, std::span<const CachedFeatures* const> batch, const TrainConfig& cfg);
/// Encodes `batch` with the frozen encoders, then updates as above.
void train_step(TrainState& state, std::span<const Raster> batch, const EncoderSet& encoders,
                const TrainConfig& cfg, FeatureCache* cache = nullptr);

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual Raster load(std::size_t index) const = 0;
  virtual std::string name(std::size_t index) const = 0;
};

class MemoryImageSource final : public ImageSource {
 public:
  explicit MemoryImageSource(std::vector<Raster> images) : images_(std::move(images)) {}
  std::size_t size() const override { return images_.size(); }
  Raster load(std::size_t i) const override { return images_.at(i); }
  std::string name(std::size_t i) const override { return "image" + std::to_string(i); }

 private:
  std::vector<Raster> images_;
};

/// Every .png / .uvcd file in a directory, sorted by file name.
class DirectoryImageSource final : public ImageSource {
 public:
  explicit DirectoryImageSource(const std::filesystem::path& dir);
  std::size_t size() const override { return files_.size(); }
  Raster load(std::size_t i) const override;
  std::string name(std::size_t i) const override { return files_.at(i).filename().string(); }

 private:
  std::vector<std::filesystem::path> files_;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> log;
  std::optional<std::filesystem::path> cache_dir;
};

struct TrainResult {
  ScfamModel model;
  std::vector<LossBreakdown> log;
  long steps = 0;
};

/// epochs x ceil(N / batch) steps over single unpaired images, shuffled per epoch with cfg.seed.
TrainResult train(const ImageSource& dataset, const EncoderSet& encoders, const ScfamModel& initial,
                  const TrainConfig& cfg, const TrainOutputs& outputs = {});

}  // namespace univcd
