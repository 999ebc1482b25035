#include "univcd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "univcd/io.hpp"

namespace univcd {
namespace {

void round_to_float(Raster& r) {
  for (double& v : r.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgumentError("train: learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw InvalidArgumentError("train: weight_decay must be non-negative");
  if (batch_size < 1) throw InvalidArgumentError("train: batch_size must be >= 1");
  if (epochs < 1) throw InvalidArgumentError("train: epochs must be >= 1");
  weights.validate();
}

TrainState TrainState::start(ScfamModel model) {
  TrainState s{0, std::move(model), {}, {}, {}};
  s.first_moment = nn::Gradients::zeros_like(s.model.params());
  s.second_moment = nn::Gradients::zeros_like(s.model.params());
  return s;
}

CachedFeatures encode_sample(const EncoderSet& encoders, const Raster& image, int window, double overlap,
                             FeatureCache* cache) {
  const int side = encoders.spatial->config().input_size;
  const Raster input =
      (image.height() == side && image.width() == side) ? image : bilinear_resize(image, side, side);
  const std::string id = hex64(content_hash(input));
  const std::string fingerprint = encoders.fingerprint();
  if (cache) {
    if (auto hit = cache->lookup(id, fingerprint, window, overlap)) {
      hit->spatial.strides = encoders.spatial->config().strides;
      hit->semantic.grid_stride = encoders.semantic->stride();
      return std::move(*hit);
    }
  }
  CachedFeatures f{encode_spatial(*encoders.spatial, input),
                   sliding_window_encode(*encoders.semantic, input, window, overlap)};
  for (auto& level : f.spatial.levels) round_to_float(level);
  round_to_float(f.semantic.features);
  if (cache) cache->store(id, fingerprint, window, overlap, f);
  return f;
}

LossWeights effective_weights(const TrainConfig& cfg) {
  LossWeights w = cfg.weights;
  if (cfg.ablation_no_recon) std::fill(w.lambda_recon.begin(), w.lambda_recon.end(), 0.0);
  return w;
}

LossBreakdown loss_and_gradients(const ScfamModel& model, const CachedFeatures& sample, const LossWeights& weights,
                                 nn::Gradients* grads) {
  nn::Tape tape(model.params(), grads);
  const auto g = build_scfam(tape, model, sample.spatial);
  const Raster& fused = tape.value(g.fused);
  const Raster target = bilinear_resize(sample.semantic.features, fused.height(), fused.width());

  std::vector<Raster> recon_pred;
  for (nn::Var v : g.recon) recon_pred.push_back(tape.value(v));
  LossInputs inputs{recon_pred, sample.spatial.levels, &tape.value(g.sem_cos), &tape.value(g.sem_mse), &target};
  const LossBreakdown out = total_loss(inputs, weights);

  if (grads) {
    for (std::size_t l = 0; l < g.recon.size(); ++l) {
      if (weights.lambda_recon[l] == 0.0) continue;
      Raster seed = mse_loss_grad(recon_pred[l], sample.spatial.levels[l]);
      for (double& v : seed.values()) v *= weights.lambda_recon[l];
      tape.seed(g.recon[l], seed);
    }
    if (weights.lambda_cos != 0.0) {
      Raster seed = mcs_loss_grad(tape.value(g.sem_cos), target);
      for (double& v : seed.values()) v *= weights.lambda_cos;
      tape.seed(g.sem_cos, seed);
    }
    if (weights.lambda_mse != 0.0) {
      Raster seed = mse_loss_grad(tape.value(g.sem_mse), target);
      for (double& v : seed.values()) v *= weights.lambda_mse;
      tape.seed(g.sem_mse, seed);
    }
    tape.backward();
  }
  return out;
}

void train_step(TrainState& state, std::span<const CachedFeatures* const> batch, const TrainConfig& cfg) {
  if (batch.empty()) throw InvalidArgumentError("train_step: empty batch");
  const LossWeights weights = effective_weights(cfg);
  auto grads = nn::Gradients::zeros_like(state.model.params());
  LossBreakdown mean;
  mean.recon.assign(weights.lambda_recon.size(), 0.0);
  for (const CachedFeatures* sample : batch) {
    const auto b = loss_and_gradients(state.model, *sample, weights, &grads);
    for (std::size_t i = 0; i < b.recon.size(); ++i) mean.recon[i] += b.recon[i];
    mean.align_cos += b.align_cos;
    mean.align_mse += b.align_mse;
    mean.total += b.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  for (double& r : mean.recon) r *= inv;
  mean.align_cos *= inv;
  mean.align_mse *= inv;
  mean.total *= inv;

  // AdamW with decoupled weight decay.
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  auto& params = state.model.params();
  for (int i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    auto& m = state.first_moment.values[static_cast<std::size_t>(i)];
    auto& v = state.second_moment.values[static_cast<std::size_t>(i)];
    const auto& g = grads.values[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= cfg.learning_rate * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  state.log.push_back(std::move(mean));
}

void train_step(TrainState& state, std::span<const Raster> batch, const EncoderSet& encoders, const TrainConfig& cfg,
                FeatureCache* cache) {
  if (batch.empty()) throw InvalidArgumentError("train_step: empty batch");
  std::vector<CachedFeatures> features;
  for (const auto& image : batch) features.push_back(encode_sample(encoders, image, cfg.window, cfg.overlap, cache));
  std::vector<const CachedFeatures*> ptrs;
  for (const auto& f : features) ptrs.push_back(&f);
  train_step(state, ptrs, cfg);
}

DirectoryImageSource::DirectoryImageSource(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".png" || ext == ".uvcd")) files_.push_back(entry.path());
  }
  std::sort(files_.begin(), files_.end());
}

Raster DirectoryImageSource::load(std::size_t i) const {
  Raster r = load_image(files_.at(i));
  if (r.channels() == 1) {
    Raster rgb(r.height(), r.width(), 3);
    for (std::size_t p = 0; p < r.pixel_count(); ++p) {
      for (int c = 0; c < 3; ++c) rgb.values()[p * 3 + c] = r.values()[p];
    }
    return rgb;
  }
  return r;
}

TrainResult train(const ImageSource& dataset, const EncoderSet& encoders, const ScfamModel& initial,
                  const TrainConfig& cfg, const TrainOutputs& outputs) {
  cfg.validate();
  if (dataset.size() == 0) throw InvalidArgumentError("train: empty dataset");
  const std::uint64_t encoder_hash = encoders.parameter_hash();

  std::optional<FeatureCache> cache;
  if (outputs.cache_dir) cache.emplace(*outputs.cache_dir);
  // TODO: stream features from the cache per step instead of holding the whole dataset in memory.
  std::vector<CachedFeatures> features;
  features.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    features.push_back(encode_sample(encoders, dataset.load(i), cfg.window, cfg.overlap, cache ? &*cache : nullptr));
  }

  TrainState state = TrainState::start(initial);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<const CachedFeatures*> ptrs;
      for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) ptrs.push_back(&features[order[k]]);
      train_step(state, ptrs, cfg);
    }
  }

  if (encoders.parameter_hash() != encoder_hash) throw ModelError("frozen encoder parameters changed during training");
  if (outputs.checkpoint) save_checkpoint(*outputs.checkpoint, state.model, state.step);
  if (outputs.log) {
    std::ostringstream out;
    for (std::size_t i = 0; i < state.log.size(); ++i) out << state.log[i].to_log_line(static_cast<long>(i + 1)) << '\n';
    write_file_atomic(*outputs.log, out.str());
  }
  return {std::move(state.model), std::move(state.log), state.step};
}

}  // namespace univcd
