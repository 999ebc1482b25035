#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "univcd/core.hpp"

namespace univcd {

struct LossWeights {
  std::vector<double> lambda_recon{0.01, 0.01, 0.01};
  double lambda_cos = 1.0;
  double lambda_mse = 1.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  std::vector<double> recon;
  double align_cos = 0.0;
  double align_mse = 0.0;
  double total = 0.0;

  /// One structured-text record: step, each component, total.
  std::string to_log_line(long step) const;
};

/// Mean of squared element differences over every element.
double mse_loss(const Raster& a, const Raster& b);
/// d mse / d a.
Raster mse_loss_grad(const Raster& a, const Raster& b);

/// 1 - mean cosine between per-position channel vectors. Positions where either vector is
/// zero are excluded; all-zero input raises DegenerateInputError.
double mcs_loss(const Raster& a, const Raster& b);
/// d mcs / d a (zero at excluded positions).
Raster mcs_loss_grad(const Raster& a, const Raster& b);

/// Predictions paired with their frozen targets.
struct LossInputs {
  std::span<const Raster> recon_pred;
  std::span<const Raster> recon_target;
  const Raster* sem_cos = nullptr;
  const Raster* sem_mse = nullptr;
  const Raster* sem_target = nullptr;
};

LossBreakdown total_loss(const LossInputs& inputs, const LossWeights& weights);

}  // namespace univcd
