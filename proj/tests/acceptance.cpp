// Acceptance runner: one PASS/FAIL line per criterion with the measured values and wall time.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "univcd/baseline.hpp"
#include "univcd/eval.hpp"
#include "univcd/io.hpp"
#include "univcd/losses.hpp"
#include "univcd/pipeline.hpp"
#include "univcd/postproc.hpp"
#include "univcd/synthetic.hpp"
#include "univcd/tiling.hpp"
#include "univcd/training.hpp"

using namespace univcd;
using testing_util::random_mask;
using testing_util::random_raster;
using testing_util::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1 ----

Outcome loss_oracles() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  double worst_oracle = 0.0, worst_scale = 0.0, worst_sym = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Raster a = random_raster(3, 3, 4, s, -2, 2);
    const Raster b = random_raster(3, 3, 4, s + 5000, -2, 2);
    worst_oracle = std::max(worst_oracle, std::abs(mse_loss(a, b) - oracle::mse(a, b)));
    worst_oracle = std::max(worst_oracle, std::abs(mcs_loss(a, b) - oracle::mcs(a, b)));
    Raster sa = a, sb = b;
    const double ka = scale(rng), kb = scale(rng);
    for (double& v : sa.values()) v *= ka;
    for (double& v : sb.values()) v *= kb;
    worst_scale = std::max(worst_scale, std::abs(mcs_loss(sa, sb) - mcs_loss(a, b)));
    worst_sym = std::max(worst_sym, std::abs(mcs_loss(a, b) - mcs_loss(b, a)));
  }
  return {worst_oracle <= 1e-9 && worst_scale <= 1e-9 && worst_sym <= 1e-9,
          fmt("max |loss - oracle| %.2e, scale drift %.2e, asymmetry %.2e (tol 1e-9)", worst_oracle, worst_scale,
              worst_sym)};
}

// ---- 2 ----

ScfamConfig tiny_config() {
  ScfamConfig c;
  c.input_size = 32;
  c.strides = {4, 8};
  c.in_channels = {3, 5};
  c.d_sem = 4;
  c.width = 4;
  c.head_hidden = 6;
  c.expand = 2;
  c.dw_kernel = 3;
  c.seed = 11;
  return c;
}

Outcome gradients() {
  auto model = ScfamModel::create(tiny_config());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.4);
  auto& ps = model.params();
  for (int i = 0; i < ps.size(); ++i) {
    for (double& v : ps[i].data) v += n(rng);
  }
  CachedFeatures sample;
  sample.spatial.levels = {random_raster(8, 8, 3, 5, -1, 1), random_raster(4, 4, 5, 6, -1, 1)};
  sample.spatial.strides = {4, 8};
  sample.semantic.features = random_raster(2, 2, 4, 7, -1, 1);
  sample.semantic.grid_stride = 16;
  LossWeights w;
  w.lambda_recon = {0.5, 0.25};

  auto grads = nn::Gradients::zeros_like(ps);
  loss_and_gradients(model, sample, w, &grads);
  auto f = [&] { return loss_and_gradients(model, sample, w, nullptr).total; };

  double worst = 0.0;
  std::string worst_name;
  int zero_groups = 0;
  const double h = 1e-6;
  for (int p = 0; p < ps.size(); ++p) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ps[p].numel(); ++i) {
      double& slot = ps[p].data[i];
      const double keep = slot;
      slot = keep + h;
      const double up = f();
      slot = keep - h;
      const double down = f();
      slot = keep;
      const double num = (up - down) / (2 * h);
      const double ana = grads.values[p][i];
      diff += (num - ana) * (num - ana);
      na += ana * ana;
      nb += num * num;
    }
    if (na == 0.0) ++zero_groups;
    const double rel = std::sqrt(diff) / std::max(std::sqrt(std::max(na, nb)), 1e-12);
    if (rel > worst) {
      worst = rel;
      worst_name = ps.name(p);
    }
  }
  return {worst <= 1e-4 && zero_groups == 0,
          fmt("%d tensors, worst relative error %.2e (%s), %d without gradient (tol 1e-4)", ps.size(), worst,
              worst_name.c_str(), zero_groups)};
}

// ---- 3 ----

Outcome frozen_encoders() {
  const EncoderSet enc = testing_util::small_encoders(3);
  const std::uint64_t before = enc.parameter_hash();
  auto model = ScfamModel::create(ScfamConfig::from_encoder(testing_util::small_spatial(), testing_util::kSmallDsem));
  TrainConfig cfg;
  cfg.window = 32;
  std::vector<Raster> images;
  for (int i = 0; i < 6; ++i) images.push_back(random_raster(64, 64, 3, 300 + i));
  auto state = TrainState::start(std::move(model));
  for (int s = 0; s < 50; ++s) {
    const std::vector<Raster> batch{images[(3 * s) % 6], images[(3 * s + 1) % 6], images[(3 * s + 2) % 6]};
    train_step(state, batch, enc, cfg);
  }
  const auto& ps = state.model.params();
  bool aligned = static_cast<int>(state.first_moment.values.size()) == ps.size() &&
                 static_cast<int>(state.second_moment.values.size()) == ps.size();
  std::size_t moment_entries = 0;
  for (int i = 0; aligned && i < ps.size(); ++i) {
    aligned = state.first_moment.values[i].size() == ps[i].numel() &&
              state.second_moment.values[i].size() == ps[i].numel();
    moment_entries += state.first_moment.values[i].size();
  }
  const std::uint64_t after = enc.parameter_hash();
  return {before == after && aligned && moment_entries == ps.parameter_count() && state.step == 50,
          fmt("encoder hash %s -> %s; moments over %zu of %zu alignment parameters in %d tensors", hex64(before).c_str(),
              hex64(after).c_str(), moment_entries, ps.parameter_count(), ps.size())};
}

// ---- 4 ----

Outcome descent() {
  const RunConfig defaults;
  const EncoderSet enc = build_encoders(defaults.encoder);
  const SyntheticWorld world(enc);
  std::vector<Raster> scenes;
  for (int i = 0; i < 12; ++i) scenes.push_back(world.make_scene(4000 + i));
  TrainConfig cfg = defaults.train_config();
  cfg.epochs = 25;  // 12 patches in batches of 3: 100 steps
  const auto r = train(MemoryImageSource(scenes), enc, ScfamModel::create(defaults.scfam_config()), cfg);
  if (r.log.size() != 100) return {false, fmt("expected 100 steps, ran %zu", r.log.size())};
  const auto& first = r.log.front();
  const auto& last = r.log.back();
  const double drop = 1.0 - last.total / first.total;
  return {drop >= 0.5 && last.align_cos < first.align_cos,
          fmt("total %.4f -> %.4f (%.1f%% drop, need 50%%); align_cos %.4f -> %.4f", first.total, last.total,
              100 * drop, first.align_cos, last.align_cos)};
}

// ---- 5, 6, 7, 8 ----

Outcome otsu() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> bins(2, 256), pick(0, 255), count(1, 1000);
  int agree = 0;
  for (int t = 0; t < 200; ++t) {
    oracle::Hist h{};
    const int used = bins(rng);
    for (int i = 0; i < used; ++i) h[pick(rng)] += count(rng);
    if (std::count_if(h.begin(), h.end(), [](auto v) { return v > 0; }) < 2) {
      h[0] += 1;
      h[255] += 1;
    }
    agree += otsu_cut(h) == oracle::otsu(h);
  }
  return {agree == 200, fmt("%d/200 histograms pick the oracle's bin", agree)};
}

Outcome components() {
  int agree = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto m = random_mask(32, 32, 0.25 + 0.005 * s, 600 + s);
    const auto got = connected_components(m);
    const auto want = oracle::flood_fill(m);
    bool same = got.components.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) {
      const auto& px = got.components[i].pixels;
      same = std::set<std::pair<int, int>>(px.begin(), px.end()) == want[i] && px.size() == want[i].size();
    }
    agree += same;
  }
  return {agree == 100, fmt("%d/100 masks give the flood-fill pixel sets", agree)};
}

Outcome tiling() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const Raster img = random_raster(1024, 1024, 3, 700 + s);
    const Raster out = tile_and_stitch(img, 256, 0.5, [](const Raster& t) { return t; });
    if (!out.same_shape(img)) return {false, "stitched raster has the wrong shape"};
    for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(out.values()[i] - img.values()[i]));
  }
  return {worst <= 1e-6, fmt("max abs error %.2e over two 1024x1024x3 inputs (tol 1e-6)", worst)};
}

Outcome metric_arithmetic() {
  const auto m = metrics({3, 1, 1, 0});
  const bool hand = std::abs(m.precision - 0.75) <= 1e-12 && std::abs(m.recall - 0.75) <= 1e-12 &&
                    std::abs(m.f1 - 0.75) <= 1e-12 && std::abs(m.iou - 0.6) <= 1e-12;
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::uint64_t> c(0, 100000);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const ConfusionCounts k{c(rng) + 1, c(rng), c(rng), c(rng)};
    const auto r = metrics(k);
    worst = std::max(worst, std::abs(r.f1 - 2 * r.iou / (1 + r.iou)));
  }
  return {hand && worst <= 1e-12, fmt("(P,R,F1,IoU)=(%.4f,%.4f,%.4f,%.4f); identity error %.2e (tol 1e-12)",
                                      m.precision, m.recall, m.f1, m.iou, worst)};
}

// ---- 9 ----

Outcome symmetry() {
  const RunConfig defaults;
  const EncoderSet enc = build_encoders(defaults.encoder);
  auto model = ScfamModel::create(defaults.scfam_config());
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.05);
  for (int i = 0; i < model.params().size(); ++i) {
    for (double& v : model.params()[i].data) v += n(rng);
  }
  const auto text = embed_text(*enc.text, defaults.detect.categories, defaults.detect.templates);
  const DetectConfig cfg = defaults.detect_config();
  double null_max = 0.0, asym = 0.0;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const Raster a = random_raster(256, 256, 3, 900 + s);
    const Raster b = random_raster(256, 256, 3, 950 + s);
    for (double v : detect_pair(a, a, &model, enc, text, cfg).likelihood.values()) null_max = std::max(null_max, std::abs(v));
    const auto ab = detect_pair(a, b, &model, enc, text, cfg).likelihood;
    const auto ba = detect_pair(b, a, &model, enc, text, cfg).likelihood;
    for (std::size_t i = 0; i < ab.size(); ++i) asym = std::max(asym, std::abs(ab.values()[i] - ba.values()[i]));
  }
  return {null_max == 0.0 && asym <= 1e-9, fmt("max |L(A,A)| = %.1e (need 0), max |L(A,B) - L(B,A)| = %.2e (tol 1e-9)",
                                               null_max, asym)};
}

// ---- 11 ----

Outcome baseline() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(0, 5), pos(0, 5), size(1, 4);
  auto random_set = [&](int n) {
    MaskSet s;
    for (int k = 0; k < n; ++k) {
      BinaryMask m(8, 8);
      const int r = pos(rng), c = pos(rng), h = size(rng), w = size(rng);
      for (int y = r; y < std::min(8, r + h); ++y) {
        for (int x = c; x < std::min(8, c + w); ++x) m.set(y, x);
      }
      s.masks.push_back(std::move(m));
      s.confidences.push_back(1.0);
    }
    return s;
  };
  int agree = 0, null_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const auto a = random_set(count(rng));
    const auto b = random_set(count(rng));
    const auto table = iou_table(a, b);
    bool same = true;
    for (double theta : {0.1, 0.3, 0.5}) same = same && match_masks(a, b, theta).pairs == oracle::greedy(table, theta);
    agree += same;
    const auto self = match_masks(a, a, 0.5);
    null_ok += change_map(a, a, self, 8, 8).count() == 0;
  }
  return {agree == 100 && null_ok == 100,
          fmt("%d/100 sets match the oracle at theta 0.1/0.3/0.5; change_map(m,m) empty on %d/100", agree, null_ok)};
}

// ---- 10, 12: the synthetic suite through the pipeline stages ----

struct Variant {
  std::string name;
  double f1 = 0.0;
  double precision = 0.0;
  double raw_precision = 0.0;
  double raw_f1 = 0.0;
  double seconds = 0.0;
};

class SyntheticSuite {
 public:
  SyntheticSuite() {
    base_.train.dataset = (data_ / "train").string();
    base_.eval.layout.root = data_.path();
    base_.postproc.refiner = "echo";
    base_.output_dir = (out_ / "synth").string();
    cmd_synth(base_, data_.path(), 20, 24, 2024);
  }

  Variant run(const std::string& name, bool no_recon, bool no_scfam) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = base_;
    c.output_dir = (out_ / name).string();
    c.ablations.no_recon = no_recon;
    c.ablations.no_scfam = no_scfam;
    if (!no_scfam) cmd_train(c);
    const auto pairs = configured_pairs(c);
    cmd_detect(c, pairs);
    cmd_postprocess(c, pairs);
    const auto report = cmd_evaluate(c);

    // Raw thresholding of the target channel at 0.5, no post-processing.
    const auto& cats = c.detect.categories;
    const auto k = std::find(cats.begin(), cats.end(), c.detect.target) - cats.begin();
    ConfusionCounts raw;
    for (const auto& p : pairs) {
      const std::string stem = fs::path(p.name).stem().string();
      const Raster lk = load_raster(fs::path(c.output_dir) / "detect" / (stem + ".likelihood.uvcd"));
      const BinaryMask label = load_mask_png(data_ / "label" / p.name);
      BinaryMask m(lk.height(), lk.width());
      for (int y = 0; y < lk.height(); ++y) {
        for (int x = 0; x < lk.width(); ++x) m.set(y, x, lk.at(y, x, static_cast<int>(k)) >= 0.5);
      }
      raw += confusion(m, label);
    }
    Variant v;
    v.name = name;
    v.f1 = report.classes.at(0).metrics.f1;
    v.precision = report.classes.at(0).metrics.precision;
    v.raw_precision = metrics(raw).precision;
    v.raw_f1 = metrics(raw).f1;
    v.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  [%s] post P=%.4f F1=%.4f | raw@0.5 P=%.4f F1=%.4f (%.1f s)\n", name.c_str(), v.precision, v.f1,
                v.raw_precision, v.raw_f1, v.seconds);
    std::fflush(stdout);
    return v;
  }

 private:
  TempDir data_;
  TempDir out_;
  RunConfig base_;
};

}  // namespace

int main() {
  std::unique_ptr<SyntheticSuite> suite;
  Variant full;
  std::vector<Criterion> criteria{
      {1, "loss oracles", 5, loss_oracles},
      {2, "gradients through the alignment module", 60, gradients},
      {3, "frozen encoders, optimizer state", 30, frozen_encoders},
      {4, "training descent at defaults", 300, descent},
      {5, "Otsu oracle", 5, otsu},
      {6, "connected components oracle", 5, components},
      {7, "tiling identity", 10, tiling},
      {8, "metric arithmetic", 5, metric_arithmetic},
      {9, "detection null and symmetry", 30, symmetry},
      {10, "synthetic end to end", 600,
       [&] {
         suite = std::make_unique<SyntheticSuite>();
         full = suite->run("full", false, false);
         return Outcome{full.f1 >= 0.80 && full.precision > full.raw_precision,
                        fmt("F1 %.4f (need 0.80); precision %.4f post-processed vs %.4f raw", full.f1, full.precision,
                            full.raw_precision)};
       }},
      {11, "baseline matching oracle", 10, baseline},
      {12, "ablation ordering", 900,
       [&] {
         if (!suite) return Outcome{false, "synthetic suite unavailable"};
         const auto no_recon = suite->run("no_recon", true, false);
         const auto no_scfam = suite->run("no_scfam", false, true);
         return Outcome{full.f1 > no_recon.f1 && no_recon.f1 > no_scfam.f1,
                        fmt("F1 full %.4f > no_recon %.4f > no_scfam %.4f", full.f1, no_recon.f1, no_scfam.f1)};
       }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %2d %-40s %s; %.2f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
