#include "univcd/losses.hpp"

#include <cmath>
#include <sstream>

namespace univcd {
namespace {

void require_same_shape(const Raster& a, const Raster& b, const char* what) {
  if (!a.same_shape(b) || a.empty()) throw InvalidArgumentError(std::string(what) + ": shape mismatch");
}

struct PositionTerms {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
};

PositionTerms position_terms(const double* a, const double* b, int c) {
  PositionTerms t;
  for (int i = 0; i < c; ++i) {
    t.dot += a[i] * b[i];
    t.na += a[i] * a[i];
    t.nb += b[i] * b[i];
  }
  t.na = std::sqrt(t.na);
  t.nb = std::sqrt(t.nb);
  return t;
}

std::size_t valid_positions(const Raster& a, const Raster& b) {
  std::size_t n = 0;
  const int c = a.channels();
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    const auto t = position_terms(a.data() + p * c, b.data() + p * c, c);
    if (t.na > 0.0 && t.nb > 0.0) ++n;
  }
  if (n == 0) throw DegenerateInputError("mcs_loss: every position has a zero vector");
  return n;
}

}  // namespace

void LossWeights::validate() const {
  bool any = lambda_cos > 0.0 || lambda_mse > 0.0;
  if (lambda_cos < 0.0 || lambda_mse < 0.0) throw InvalidArgumentError("loss weights must be non-negative");
  for (double w : lambda_recon) {
    if (w < 0.0) throw InvalidArgumentError("loss weights must be non-negative");
    any = any || w > 0.0;
  }
  if (!any) throw InvalidArgumentError("at least one loss weight must be positive");
}

std::string LossBreakdown::to_log_line(long step) const {
  std::ostringstream out;
  out.precision(10);
  out << "step=" << step;
  for (std::size_t i = 0; i < recon.size(); ++i) out << " recon" << i << '=' << recon[i];
  out << " align_cos=" << align_cos << " align_mse=" << align_mse << " total=" << total;
  return out.str();
}

double mse_loss(const Raster& a, const Raster& b) {
  require_same_shape(a, b, "mse_loss");
  auto va = a.values();
  auto vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) sum += (va[i] - vb[i]) * (va[i] - vb[i]);
  return sum / static_cast<double>(va.size());
}

Raster mse_loss_grad(const Raster& a, const Raster& b) {
  require_same_shape(a, b, "mse_loss");
  Raster g(a.height(), a.width(), a.channels());
  auto va = a.values();
  auto vb = b.values();
  auto vg = g.values();
  const double scale = 2.0 / static_cast<double>(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) vg[i] = scale * (va[i] - vb[i]);
  return g;
}

double mcs_loss(const Raster& a, const Raster& b) {
  require_same_shape(a, b, "mcs_loss");
  const std::size_t n = valid_positions(a, b);
  const int c = a.channels();
  double sum = 0.0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    const auto t = position_terms(a.data() + p * c, b.data() + p * c, c);
    if (t.na > 0.0 && t.nb > 0.0) sum += t.dot / (t.na * t.nb);
  }
  return 1.0 - sum / static_cast<double>(n);
}

Raster mcs_loss_grad(const Raster& a, const Raster& b) {
  require_same_shape(a, b, "mcs_loss");
  const double scale = -1.0 / static_cast<double>(valid_positions(a, b));
  const int c = a.channels();
  Raster g(a.height(), a.width(), c);
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    const double* pa = a.data() + p * c;
    const double* pb = b.data() + p * c;
    const auto t = position_terms(pa, pb, c);
    if (!(t.na > 0.0 && t.nb > 0.0)) continue;
    const double cosv = t.dot / (t.na * t.nb);
    double* pg = g.data() + p * c;
    // d cos / d a = b / (|a||b|) - cos * a / |a|^2
    for (int i = 0; i < c; ++i) {
      pg[i] = scale * (pb[i] / (t.na * t.nb) - cosv * pa[i] / (t.na * t.na));
    }
  }
  return g;
}

LossBreakdown total_loss(const LossInputs& in, const LossWeights& w) {
  if (in.recon_pred.size() != in.recon_target.size() || in.recon_pred.size() != w.lambda_recon.size()) {
    throw InvalidArgumentError("total_loss: reconstruction pairs and weights disagree in count");
  }
  if (!in.sem_cos || !in.sem_mse || !in.sem_target) throw InvalidArgumentError("total_loss: missing alignment inputs");
  LossBreakdown out;
  for (std::size_t i = 0; i < in.recon_pred.size(); ++i) {
    out.recon.push_back(mse_loss(in.recon_pred[i], in.recon_target[i]));
    out.total += w.lambda_recon[i] * out.recon.back();
  }
  out.align_cos = mcs_loss(*in.sem_cos, *in.sem_target);
  out.align_mse = mse_loss(*in.sem_mse, *in.sem_target);
  out.total += w.lambda_cos * out.align_cos + w.lambda_mse * out.align_mse;
  return out;
}

}  // namespace univcd
