#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "univcd/core.hpp"
#include "univcd/encoders.hpp"
#include "univcd/nn.hpp"

namespace univcd {

struct ScfamConfig {
  int input_size = 256;
  std::vector<int> strides{4, 8, 16};
  std::vector<int> in_channels{32, 64, 128};
  int d_sem = 32;
  /// Unified post-adapter width; 0 means d_sem.
  int width = 0;
  int blocks_per_level = 1;
  /// Projection-head hidden width; 0 means the unified width.
  int head_hidden = 0;
  int expand = 4;
  int dw_kernel = 7;
  std::uint64_t seed = 0;

  static ScfamConfig from_encoder(const SpatialEncoderConfig& spatial, int d_sem);
  int unified_width() const noexcept { return width > 0 ? width : d_sem; }
  int hidden_width() const noexcept { return head_hidden > 0 ? head_hidden : unified_width(); }
  int levels() const noexcept { return static_cast<int>(strides.size()); }
  void validate() const;
  friend bool operator==(const ScfamConfig&, const ScfamConfig&) = default;
};

// Parameter ids into ScfamModel::params.
struct AdapterParams {
  int pointwise_kernel, pointwise_bias;
  int norm_scale, norm_shift;
  int local_kernel, local_bias;
  bool residual;
};

struct BlockParams {
  int dw_kernel, dw_bias;
  int norm_scale, norm_shift;
  int expand_kernel, expand_bias;
  int contract_kernel, contract_bias;
};

struct UpsampleConvParams {
  int kernel, bias;
};

struct FusionParams {
  /// blocks[level] applies after that level joins the accumulator.
  std::vector<std::vector<BlockParams>> blocks;
  /// upsample_convs[level] follows the upsampling from level + 1 into level.
  std::vector<UpsampleConvParams> upsample_convs;
};

struct ProjectionHeadParams {
  int hidden_kernel, hidden_bias;
  int out_kernel, out_bias;
  int target_width;
};

class ScfamModel {
 public:
  /// Truncated-normal (sigma 0.02) weights, zero biases, unit norm scale.
  static ScfamModel create(const ScfamConfig& config);

  const ScfamConfig& config() const noexcept { return config_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.parameter_count(); }

  std::vector<AdapterParams> adapters;
  FusionParams fusion;
  std::vector<ProjectionHeadParams> recon_heads;
  /// [0] trained under the cosine objective (used at inference), [1] under squared error.
  std::vector<ProjectionHeadParams> semantic_heads;

 private:
  ScfamConfig config_;
  nn::ParamStore params_;
};

struct ScfamOutputs {
  std::vector<Raster> recon;
  Raster sem_cos;
  Raster sem_mse;
  Raster fused;
};

/// Graph handles produced when building the forward pass on a tape.
struct ScfamGraph {
  std::vector<nn::Var> inputs;
  std::vector<nn::Var> adapted;
  nn::Var fused = -1;
  std::vector<nn::Var> recon;
  nn::Var sem_cos = -1;
  nn::Var sem_mse = -1;
};

/// Checks that `spatial` matches the model geometry; throws InvalidArgumentError otherwise.
void check_geometry(const ScfamModel& model, const MultiScaleFeatures& spatial);

nn::Var build_adapter(nn::Tape& tape, const AdapterParams& p, nn::Var x);
nn::Var build_fusion(nn::Tape& tape, const ScfamModel& model, const std::vector<nn::Var>& adapted);
nn::Var build_head(nn::Tape& tape, const ProjectionHeadParams& p, nn::Var x);
ScfamGraph build_scfam(nn::Tape& tape, const ScfamModel& model, const MultiScaleFeatures& spatial);

/// Conv1x1 -> LayerNorm -> GELU -> Conv3x3, plus identity skip when widths agree.
Raster adapter_forward(const ScfamModel& model, int level, const Raster& x);
/// Coarse-to-fine fusion of already adapted levels (finest first).
Raster fuse(const ScfamModel& model, const std::vector<Raster>& adapted);
ScfamOutputs scfam_forward(const ScfamModel& model, const MultiScaleFeatures& spatial);
/// Cosine-head output, unit-normalized per pixel and upsampled to input_size x input_size
/// (renormalized after resampling).
Raster inference_embedding(const ScfamModel& model, const MultiScaleFeatures& spatial);

/// Single-file checkpoint: "UVCDCKPT" line, one JSON manifest line (geometry, d_sem, seed,
/// step, tensor names and shapes), then each tensor as a raster container.
void save_checkpoint(const std::filesystem::path& path, const ScfamModel& model, long step);
ScfamModel load_checkpoint(const std::filesystem::path& path, long* step = nullptr);

}  // namespace univcd
