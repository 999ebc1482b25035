#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "univcd/io.hpp"
#include "univcd/training.hpp"

using namespace univcd;
using testing_util::random_raster;
using testing_util::small_encoders;
using testing_util::small_spatial;
using testing_util::TempDir;

namespace {

ScfamModel small_model(std::uint64_t seed = 0) {
  auto c = ScfamConfig::from_encoder(small_spatial(), testing_util::kSmallDsem);
  c.seed = seed;
  return ScfamModel::create(c);
}

TrainConfig small_train() {
  TrainConfig c;
  c.window = 32;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<Raster> images(int n, std::uint64_t seed) {
  std::vector<Raster> out;
  for (int i = 0; i < n; ++i) out.push_back(random_raster(64, 64, 3, seed + i));
  return out;
}

}  // namespace

TEST(TrainConfig, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgumentError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), InvalidArgumentError);
  c = {};
  c.weight_decay = -1;
  EXPECT_THROW(c.validate(), InvalidArgumentError);
}

TEST(AdamW, TwoStepsMatchScalarRecurrence) {
  const auto enc = small_encoders();
  const auto sample = encode_sample(enc, random_raster(64, 64, 3, 1), 32, 0.5);
  TrainConfig cfg = small_train();
  cfg.weight_decay = 0.1;  // large enough to be visible
  const LossWeights w = effective_weights(cfg);

  TrainState state = TrainState::start(small_model());
  // Oracle state: every parameter updated independently with the textbook recurrence.
  auto& ps = state.model.params();
  std::vector<std::vector<double>> p, m, v;
  for (int i = 0; i < ps.size(); ++i) {
    p.push_back(ps[i].data);
    m.emplace_back(ps[i].numel(), 0.0);
    v.emplace_back(ps[i].numel(), 0.0);
  }
  const CachedFeatures* batch[] = {&sample};
  for (int t = 1; t <= 2; ++t) {
    auto g = nn::Gradients::zeros_like(ps);
    loss_and_gradients(state.model, sample, w, &g);
    for (int i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < p[i].size(); ++j) {
        const double gj = g.values[i][j];
        p[i][j] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
        m[i][j] = 0.9 * m[i][j] + 0.1 * gj;
        v[i][j] = 0.999 * v[i][j] + 0.001 * gj * gj;
        const double mh = m[i][j] / (1.0 - std::pow(0.9, t));
        const double vh = v[i][j] / (1.0 - std::pow(0.999, t));
        p[i][j] -= cfg.learning_rate * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    train_step(state, batch, cfg);
    for (int i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < p[i].size(); ++j) ASSERT_NEAR(ps[i].data[j], p[i][j], 1e-15) << ps.name(i);
    }
  }
  EXPECT_EQ(state.step, 2);
  EXPECT_EQ(state.log.size(), 2u);
}

TEST(AdamW, MomentsCoverExactlyTheModuleParameters) {
  TrainState state = TrainState::start(small_model());
  const auto& ps = state.model.params();
  ASSERT_EQ(state.first_moment.values.size(), static_cast<std::size_t>(ps.size()));
  ASSERT_EQ(state.second_moment.values.size(), static_cast<std::size_t>(ps.size()));
  std::size_t total = 0;
  for (int i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(state.first_moment.values[i].size(), ps[i].numel());
    EXPECT_EQ(state.second_moment.values[i].size(), ps[i].numel());
    total += ps[i].numel();
  }
  EXPECT_EQ(total, state.model.parameter_count());
}

TEST(Training, NoReconZeroesOnlyReconWeights) {
  TrainConfig c;
  c.ablation_no_recon = true;
  const auto w = effective_weights(c);
  for (double l : w.lambda_recon) EXPECT_EQ(l, 0.0);
  EXPECT_EQ(w.lambda_cos, c.weights.lambda_cos);
  EXPECT_EQ(w.lambda_mse, c.weights.lambda_mse);
  EXPECT_EQ(effective_weights(TrainConfig{}), TrainConfig{}.weights);
}

TEST(Training, StepCountAndLog) {
  TempDir dir;
  const auto enc = small_encoders();
  MemoryImageSource data(images(7, 10));
  TrainOutputs out{dir / "m.ckpt", dir / "train.log", std::nullopt};
  const auto r = train(data, enc, small_model(), small_train(), out);
  EXPECT_EQ(r.steps, 2 * 3);  // epochs * ceil(7 / 3)
  EXPECT_EQ(r.log.size(), 6u);
  std::ifstream log(dir / "train.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    EXPECT_EQ(line.rfind("step=" + std::to_string(lines) + " ", 0), 0u);
    EXPECT_NE(line.find(" total="), std::string::npos);
  }
  EXPECT_EQ(lines, 6);
  long step = 0;
  // The checkpoint stores float32.
  const auto back = load_checkpoint(dir / "m.ckpt", &step);
  for (int i = 0; i < back.params().size(); ++i) {
    for (std::size_t j = 0; j < back.params()[i].numel(); ++j) {
      ASSERT_EQ(back.params()[i].data[j], static_cast<float>(r.model.params()[i].data[j]));
    }
  }
  EXPECT_EQ(step, 6);
}

TEST(Training, DeterministicAndEncodersStayFrozen) {
  const auto enc = small_encoders();
  const auto before = enc.parameter_hash();
  MemoryImageSource data(images(4, 20));
  const auto a = train(data, enc, small_model(), small_train());
  const auto b = train(data, enc, small_model(), small_train());
  EXPECT_EQ(a.model.params().hash(), b.model.params().hash());
  EXPECT_NE(a.model.params().hash(), small_model().params().hash());
  EXPECT_EQ(enc.parameter_hash(), before);
  auto other = small_train();
  other.seed = 1;
  EXPECT_NE(train(data, enc, small_model(), other).model.params().hash(), a.model.params().hash());
}

TEST(Training, CachedFeaturesAreBitIdentical) {
  TempDir dir;
  const auto enc = small_encoders();
  const Raster img = random_raster(64, 64, 3, 30);
  FeatureCache cache(dir.path());
  const auto fresh = encode_sample(enc, img, 32, 0.5);
  const auto stored = encode_sample(enc, img, 32, 0.5, &cache);
  const auto hit = encode_sample(enc, img, 32, 0.5, &cache);
  EXPECT_EQ(fresh.spatial.levels, hit.spatial.levels);
  EXPECT_EQ(fresh.semantic.features, hit.semantic.features);
  EXPECT_EQ(stored.semantic.features, hit.semantic.features);
  EXPECT_EQ(hit.spatial.strides, small_spatial().strides);

  MemoryImageSource data(images(4, 40));
  const auto plain = train(data, enc, small_model(), small_train());
  const auto cached = train(data, enc, small_model(), small_train(), {std::nullopt, std::nullopt, dir / "cache"});
  const auto again = train(data, enc, small_model(), small_train(), {std::nullopt, std::nullopt, dir / "cache"});
  EXPECT_EQ(plain.model.params().hash(), cached.model.params().hash());
  EXPECT_EQ(plain.model.params().hash(), again.model.params().hash());
}

TEST(Training, NoReconStillLogsReconTerms) {
  const auto enc = small_encoders();
  MemoryImageSource data(images(3, 50));
  auto cfg = small_train();
  cfg.epochs = 1;
  cfg.ablation_no_recon = true;
  const auto r = train(data, enc, small_model(), cfg);
  ASSERT_EQ(r.log.size(), 1u);
  const auto& b = r.log[0];
  ASSERT_EQ(b.recon.size(), 3u);
  EXPECT_GT(b.recon[0], 0.0);
  EXPECT_NEAR(b.total, b.align_cos + b.align_mse, 1e-12);
}

TEST(Training, DirectorySourceSortsAndRejectsEmpty) {
  TempDir dir;
  save_png(dir / "b.png", random_raster(8, 8, 3, 1));
  save_png(dir / "a.png", random_raster(8, 8, 3, 2));
  write_file_atomic(dir / "notes.txt", "x");
  DirectoryImageSource src(dir.path());
  ASSERT_EQ(src.size(), 2u);
  EXPECT_EQ(src.name(0), "a.png");
  EXPECT_EQ(src.load(1).height(), 8);
  MemoryImageSource empty({});
  EXPECT_THROW(train(empty, small_encoders(), small_model(), small_train()), InvalidArgumentError);
}
