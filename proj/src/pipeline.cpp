#include "univcd/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "univcd/baseline.hpp"
#include "univcd/io.hpp"
#include "univcd/synthetic.hpp"

namespace univcd {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

std::string stem_of(const DatasetPair& p) { return fs::path(p.name).stem().string(); }

class StageRun {
 public:
  StageRun(const RunConfig& config, std::string stage) : config_(config), start_(std::chrono::steady_clock::now()) {
    manifest_.stage = std::move(stage);
    manifest_.tool_version = kToolVersion;
    manifest_.config_json = serialize_config(config);
  }

  void input(const fs::path& path) { manifest_.inputs.emplace_back(path.string(), file_hash(path)); }
  void output(const fs::path& path) { manifest_.outputs.push_back(path.string()); }

  /// A previous manifest with the same config, inputs and surviving outputs.
  std::optional<StageResult> resumable() const {
    const auto path = manifest_path(config_, manifest_.stage);
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path);
    std::ostringstream text;
    text << in.rdbuf();
    RunManifest old;
    try {
      old = RunManifest::from_json(text.str());
    } catch (const Error&) {
      return std::nullopt;
    }
    if (old.config_json != manifest_.config_json || old.inputs != manifest_.inputs ||
        old.tool_version != manifest_.tool_version) {
      return std::nullopt;
    }
    for (const auto& out : old.outputs) {
      if (!fs::exists(out)) return std::nullopt;
    }
    return StageResult{std::move(old), true};
  }

  StageResult finish() {
    manifest_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const auto path = manifest_path(config_, manifest_.stage);
    fs::create_directories(path.parent_path());
    write_file_atomic(path, manifest_.to_json());
    return {manifest_, false};
  }

 private:
  const RunConfig& config_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Raster as_rgb(const Raster& r) {
  if (r.channels() == 3) return r;
  if (r.channels() != 1) throw DataError("expected a gray or RGB image");
  Raster rgb(r.height(), r.width(), 3);
  for (std::size_t p = 0; p < r.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) rgb.values()[p * 3 + c] = r.values()[p];
  }
  return rgb;
}

Raster load_rgb(const fs::path& path) { return as_rgb(load_image(path)); }

ClassScoreMap load_scores(const fs::path& path, const RunConfig& config) {
  ClassScoreMap s{load_raster(path), config.detect.categories, config.detect.config.mode};
  if (s.scores.channels() != static_cast<int>(config.detect.categories.size())) {
    throw DataError(path.string() + " does not match the configured category count");
  }
  return s;
}

Json component_json(const Component& c) {
  return {{"label", c.label},
          {"area", c.area},
          {"bbox", {c.bbox.row_min, c.bbox.col_min, c.bbox.row_max, c.bbox.col_max}},
          {"centroid", {c.centroid_row, c.centroid_col}}};
}

void paint_box(Raster& rgb, const BBox& b, const std::array<double, 3>& color) {
  auto put = [&](int r, int c) {
    for (int k = 0; k < 3; ++k) rgb.at(r, c, k) = color[static_cast<std::size_t>(k)];
  };
  for (int c = b.col_min; c <= b.col_max; ++c) {
    put(b.row_min, c);
    put(b.row_max, c);
  }
  for (int r = b.row_min; r <= b.row_max; ++r) {
    put(r, b.col_min);
    put(r, b.col_max);
  }
}

std::unique_ptr<Refiner> make_refiner(const RunConfig& config, const BinaryMask& stage1) {
  if (config.postproc.refiner == "echo") return std::make_unique<MaskEchoRefiner>(stage1);
  throw RefinerError("refiner '" + config.postproc.refiner + "' is configured but not available (built-in: echo)");
}

fs::path default_pred_dir(const RunConfig& config) {
  const fs::path masks = fs::path(config.output_dir) / "masks";
  return config.eval.layout.semantics == LabelSemantics::kSemanticPair ? masks : masks / config.detect.target;
}

}  // namespace

std::string RunManifest::to_json() const {
  Json j;
  j["stage"] = stage;
  j["tool_version"] = tool_version;
  j["config"] = Json::parse(config_json);
  Json in = Json::array();
  for (const auto& [path, hash] : inputs) in.push_back({{"path", path}, {"hash", hash}});
  j["inputs"] = in;
  j["outputs"] = outputs;
  j["seconds"] = seconds;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    RunManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_json = j.at("config").dump(2) + "\n";
    for (const auto& e : j.at("inputs")) m.inputs.emplace_back(e.at("path").get<std::string>(), e.at("hash").get<std::string>());
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.seconds = j.at("seconds").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad run manifest: ") + e.what());
  }
}

fs::path manifest_path(const RunConfig& config, const std::string& stage) {
  return fs::path(config.output_dir) / "manifests" / (stage + ".json");
}

std::vector<DatasetPair> configured_pairs(const RunConfig& config) {
  if (config.eval.layout.root.empty()) throw ConfigError("eval.root is not set and no image pair was given");
  return list_pairs(config.eval.layout);
}

std::optional<ScfamModel> load_detection_model(const RunConfig& config, const EncoderSet& encoders) {
  if (config.ablations.no_scfam) return std::nullopt;
  const fs::path path = config.resolve(config.detect.checkpoint.empty() ? config.train.checkpoint : config.detect.checkpoint);
  if (!fs::exists(path)) throw ModelError("checkpoint not found: " + path.string());
  ScfamModel model = load_checkpoint(path);
  const auto& g = model.config();
  const auto& e = encoders.spatial->config();
  if (g.input_size != e.input_size || g.strides != e.strides || g.in_channels != e.channels ||
      g.d_sem != encoders.semantic->dim()) {
    throw ModelError("checkpoint geometry does not match the configured encoders: " + path.string());
  }
  return model;
}

StageResult cmd_train(const RunConfig& config, bool resume) {
  config.validate();
  if (config.train.dataset.empty()) throw ConfigError("train.dataset is not set");
  StageRun run(config, "train");
  DirectoryImageSource source(config.train.dataset);
  if (source.size() == 0) throw DataError("training dataset is empty: " + config.train.dataset);
  for (std::size_t i = 0; i < source.size(); ++i) run.input(fs::path(config.train.dataset) / source.name(i));
  const fs::path ckpt = config.resolve(config.train.checkpoint);
  const fs::path log = config.resolve(config.train.log);
  run.output(ckpt);
  run.output(log);
  if (resume) {
    if (auto done = run.resumable()) return *done;
  }

  const EncoderSet encoders = build_encoders(config.encoder);
  ensure_parent(ckpt);
  ensure_parent(log);
  TrainOutputs outputs{ckpt, log, std::nullopt};
  if (auto cache = config.cache_dir(); !cache.empty()) outputs.cache_dir = cache;
  train(source, encoders, ScfamModel::create(config.scfam_config()), config.train_config(), outputs);
  return run.finish();
}

StageResult cmd_detect(const RunConfig& config, const std::vector<DatasetPair>& pairs, bool resume) {
  config.validate();
  if (pairs.empty()) throw DataError("detect: no image pairs");
  StageRun run(config, "detect");
  for (const auto& p : pairs) {
    run.input(p.image_a);
    run.input(p.image_b);
  }
  if (!config.ablations.no_scfam) {
    const fs::path ckpt =
        config.resolve(config.detect.checkpoint.empty() ? config.train.checkpoint : config.detect.checkpoint);
    if (!fs::exists(ckpt)) throw ModelError("checkpoint not found: " + ckpt.string());
    run.input(ckpt);
  }
  const fs::path dir = fs::path(config.output_dir) / "detect";
  for (const auto& p : pairs) {
    const auto stem = stem_of(p);
    run.output(dir / (stem + ".likelihood.uvcd"));
    run.output(dir / (stem + ".scores1.uvcd"));
    run.output(dir / (stem + ".scores2.uvcd"));
    for (const auto& c : config.detect.categories) run.output(dir / "heatmaps" / stem / (c + ".png"));
  }
  if (resume) {
    if (auto done = run.resumable()) return *done;
  }

  const EncoderSet encoders = build_encoders(config.encoder);
  const auto model = load_detection_model(config, encoders);
  const auto text = embed_text(*encoders.text, config.detect.categories, config.detect.templates);
  const DetectConfig dc = config.detect_config();
  for (const auto& p : pairs) {
    const auto stem = stem_of(p);
    const Raster a = load_rgb(p.image_a);
    const Raster b = load_rgb(p.image_b);
    if (!a.same_shape(b)) throw DataError("epoch images differ in size for " + p.name);
    const auto det = detect_pair_with_scores(a, b, model ? &*model : nullptr, encoders, text, dc);
    fs::create_directories(dir / "heatmaps" / stem);
    save_raster(dir / (stem + ".likelihood.uvcd"), det.likelihood.likelihood);
    save_raster(dir / (stem + ".scores1.uvcd"), det.scores1.scores);
    save_raster(dir / (stem + ".scores2.uvcd"), det.scores2.scores);
    for (std::size_t k = 0; k < config.detect.categories.size(); ++k) {
      save_png(dir / "heatmaps" / stem / (config.detect.categories[k] + ".png"),
               minmax_normalize(det.likelihood.likelihood.channel(static_cast<int>(k))));
    }
  }
  return run.finish();
}

StageResult cmd_postprocess(const RunConfig& config, const std::vector<DatasetPair>& pairs, bool resume) {
  config.validate();
  if (pairs.empty()) throw DataError("postprocess: no image pairs");
  const bool refine = config.postproc.refiner != "none";
  if (refine && config.postproc.refiner != "echo") {
    throw RefinerError("refiner '" + config.postproc.refiner + "' is configured but not available (built-in: echo)");
  }
  StageRun run(config, "postprocess");
  const fs::path det = fs::path(config.output_dir) / "detect";
  const fs::path out = config.output_dir;
  for (const auto& p : pairs) {
    const auto stem = stem_of(p);
    const fs::path lk = det / (stem + ".likelihood.uvcd");
    if (!fs::exists(lk)) throw DataError("likelihood container not found: " + lk.string());
    run.input(lk);
    if (refine) {
      run.input(p.image_a);
      run.input(p.image_b);
      run.input(det / (stem + ".scores1.uvcd"));
      run.input(det / (stem + ".scores2.uvcd"));
    }
    for (const auto& c : config.detect.categories) {
      run.output(out / "masks" / c / (stem + ".png"));
      run.output(out / "tables" / c / (stem + ".json"));
      run.output(out / "overlays" / c / (stem + ".png"));
    }
  }
  if (resume) {
    if (auto done = run.resumable()) return *done;
  }

  const auto& cats = config.detect.categories;
  for (const auto& c : cats) {
    for (const char* sub : {"masks", "tables", "overlays"}) fs::create_directories(out / sub / c);
  }
  for (const auto& p : pairs) {
    const auto stem = stem_of(p);
    const Raster lk = load_raster(det / (stem + ".likelihood.uvcd"));
    if (lk.channels() != static_cast<int>(cats.size())) {
      throw DataError("likelihood for " + stem + " has " + std::to_string(lk.channels()) + " channels, config lists " +
                      std::to_string(cats.size()) + " categories");
    }
    Raster a, b;
    std::optional<ClassScoreMap> s1, s2;
    if (refine) {
      a = load_rgb(p.image_a);
      b = load_rgb(p.image_b);
      s1 = load_scores(det / (stem + ".scores1.uvcd"), config);
      s2 = load_scores(det / (stem + ".scores2.uvcd"), config);
      if (a.height() != lk.height() || a.width() != lk.width()) throw DataError("image and likelihood differ in size");
    }
    const Raster base = fs::exists(p.image_a) ? load_rgb(p.image_a) : Raster(lk.height(), lk.width(), 3);

    for (std::size_t k = 0; k < cats.size(); ++k) {
      const auto comps = binarize_and_clean(lk.channel(static_cast<int>(k)), config.postproc.cleanup);
      BinaryMask mask = comps.to_mask();
      Json table;
      table["pair"] = stem;
      table["category"] = cats[k];
      Json rows = Json::array();
      if (refine && config.postproc.refine_enabled(cats[k])) {
        auto refiner = make_refiner(config, mask);
        const auto result = refine_components(comps, a, b, *s1, *s2, static_cast<int>(k), *refiner, config.postproc.refine);
        mask = result.mask;
        for (std::size_t i = 0; i < comps.components.size(); ++i) {
          Json row = component_json(comps.components[i]);
          const auto& r = result.records[i];
          row["outcome"] = to_string(r.outcome);
          row["epoch"] = r.epoch;
          row["iou"] = r.iou;
          row["prompt_box"] = {r.prompt_box.row_min, r.prompt_box.col_min, r.prompt_box.row_max, r.prompt_box.col_max};
          row["prompt_point"] = {r.prompt_point.row, r.prompt_point.col};
          if (!r.warning.empty()) row["warning"] = r.warning;
          rows.push_back(row);
        }
        if (config.postproc.concept_stage) {
          std::vector<BinaryMask> concepts;
          for (const auto& c : connected_components(mask).components) concepts.push_back(c.to_mask(mask.height(), mask.width()));
          MaskEchoRefiner concept_refiner(mask, std::move(concepts), true);
          mask = concept_refine(mask, a, cats[k], concept_refiner, config.postproc.refine.iou_min);
        }
      } else {
        for (const auto& c : comps.components) {
          Json row = component_json(c);
          row["outcome"] = "unrefined";
          rows.push_back(row);
        }
      }
      table["components"] = rows;

      save_mask_png(out / "masks" / cats[k] / (stem + ".png"), mask);
      write_file_atomic(out / "tables" / cats[k] / (stem + ".json"), table.dump(2) + "\n");

      Raster overlay = base;
      if (!overlay.same_extent(lk)) overlay = Raster(lk.height(), lk.width(), 3);
      for (int r = 0; r < overlay.height(); ++r) {
        for (int c = 0; c < overlay.width(); ++c) {
          if (!mask.at(r, c)) continue;
          overlay.at(r, c, 0) = 0.5 * overlay.at(r, c, 0) + 0.5;
          overlay.at(r, c, 1) *= 0.5;
          overlay.at(r, c, 2) *= 0.5;
        }
      }
      for (const auto& c : comps.components) paint_box(overlay, c.bbox, {1.0, 1.0, 0.0});
      save_png(out / "overlays" / cats[k] / (stem + ".png"), overlay);
    }
  }
  return run.finish();
}

MetricReport cmd_evaluate(const RunConfig& config, const fs::path& pred_dir, const fs::path& label_root,
                          StageResult* stage) {
  config.validate();
  DatasetLayout layout = config.eval.layout;
  if (!label_root.empty()) layout.root = label_root;
  if (layout.root.empty()) throw ConfigError("eval.root is not set");
  const fs::path preds = pred_dir.empty() ? default_pred_dir(config) : pred_dir;
  if (!fs::is_directory(preds)) throw DataError("prediction directory not found: " + preds.string());

  StageRun run(config, "evaluate");
  const auto report = evaluate_dataset(preds, layout, config.eval.mode, config.detect.target);
  const fs::path dir = fs::path(config.output_dir) / "eval";
  fs::create_directories(dir);
  write_file_atomic(dir / "report.json", report.to_json());
  write_file_atomic(dir / "report.txt", report.to_table());
  run.output(dir / "report.json");
  run.output(dir / "report.txt");
  auto result = run.finish();
  if (stage) *stage = result;
  return report;
}

StageResult cmd_baseline(const RunConfig& config, const fs::path& masks_a, const fs::path& masks_b,
                         const std::string& name) {
  config.validate();
  if (name.empty()) throw InvalidArgumentError("baseline: empty output name");
  StageRun run(config, "baseline");
  const MaskSet all1 = load_mask_set(masks_a);
  const MaskSet all2 = load_mask_set(masks_b);
  const MaskSet m1 = filter_by_confidence(all1, config.baseline.confidence);
  const MaskSet m2 = filter_by_confidence(all2, config.baseline.confidence);
  int h = 0, w = 0;
  for (const auto* s : {&all1, &all2}) {
    if (h == 0 && s->size() > 0) {
      h = s->masks[0].height();
      w = s->masks[0].width();
    }
  }
  if (h == 0) throw DataError("baseline: both mask directories are empty");
  if (all1.size() > 0 && all2.size() > 0 && !all1.masks[0].same_extent(all2.masks[0])) {
    throw DataError("baseline: epochs differ in mask shape");
  }
  const auto match = match_masks(m1, m2, config.baseline.theta);
  const BinaryMask change = change_map(m1, m2, match, h, w);

  const fs::path dir = fs::path(config.output_dir) / "baseline";
  fs::create_directories(dir / config.detect.target);
  fs::create_directories(dir / "tables");
  const fs::path mask_path = dir / config.detect.target / (name + ".png");
  save_mask_png(mask_path, change);
  Json table;
  table["theta"] = config.baseline.theta;
  table["confidence"] = config.baseline.confidence;
  table["masks_a"] = m1.size();
  table["masks_b"] = m2.size();
  Json pairs = Json::array();
  for (const auto& p : match.pairs) pairs.push_back({{"a", p.index1}, {"b", p.index2}, {"iou", p.iou}});
  table["pairs"] = pairs;
  table["unmatched_a"] = match.unmatched1;
  table["unmatched_b"] = match.unmatched2;
  write_file_atomic(dir / "tables" / (name + ".json"), table.dump(2) + "\n");
  run.output(mask_path);
  run.output(dir / "tables" / (name + ".json"));
  return run.finish();
}

StageResult cmd_export_viz(const RunConfig& config, const fs::path& pred_dir) {
  config.validate();
  if (config.eval.layout.root.empty()) throw ConfigError("eval.root is not set");
  if (config.eval.layout.semantics != LabelSemantics::kBinary) {
    throw UnsupportedError("export-viz draws binary change maps; set eval.semantics to binary");
  }
  const fs::path preds = pred_dir.empty() ? default_pred_dir(config) : pred_dir;
  StageRun run(config, "export-viz");
  const fs::path dir = fs::path(config.output_dir) / "viz";
  fs::create_directories(dir);
  for (const auto& p : list_pairs(config.eval.layout)) {
    const auto stem = stem_of(p);
    const fs::path pred_path = preds / (stem + ".png");
    if (!fs::exists(pred_path)) throw DataError("prediction not found: " + pred_path.string());
    const BinaryMask pred = load_mask_png(pred_path);
    const BinaryMask gt = load_mask_png(config.eval.layout.root / config.eval.layout.labels / (stem + ".png"));
    if (!pred.same_extent(gt)) throw DataError("prediction and label differ in size for " + stem);
    Raster viz(gt.height(), gt.width(), 3);
    for (int r = 0; r < gt.height(); ++r) {
      for (int c = 0; c < gt.width(); ++c) {
        // Red follows the prediction, green and blue the label: TP white, TN black, FP red, FN cyan.
        const double predicted = pred.at(r, c) ? 1.0 : 0.0;
        const double labelled = gt.at(r, c) ? 1.0 : 0.0;
        viz.at(r, c, 0) = predicted;
        viz.at(r, c, 1) = labelled;
        viz.at(r, c, 2) = labelled;
      }
    }
    save_png(dir / (stem + ".png"), viz);
    run.output(dir / (stem + ".png"));
  }
  return run.finish();
}

StageResult cmd_synth(const RunConfig& config, const fs::path& dir, int pairs, int train_scenes, std::uint64_t seed) {
  config.validate();
  StageRun run(config, "synth");
  const EncoderSet encoders = build_encoders(config.encoder);
  SyntheticWorldOptions options;
  options.size = config.encoder.spatial.input_size;
  if (std::find(options.categories.begin(), options.categories.end(), config.detect.target) == options.categories.end()) {
    throw ConfigError("synthetic scenes only contain architecture, road, vegetation and water; detect.target is '" +
                      config.detect.target + "'");
  }
  options.target = config.detect.target;
  write_synthetic_dataset(dir, SyntheticWorld(encoders, options), pairs, train_scenes, seed);
  run.output(dir);
  return run.finish();
}

}  // namespace univcd
