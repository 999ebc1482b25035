// univcd command-line front end. Talks to the library only through univcd.h.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "univcd/univcd.h"

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> named;  // key, JSON value
  bool resume = false;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string list_json(const std::string& csv) {
  std::string out = "[";
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto comma = csv.find(',', start);
    if (comma == std::string::npos) comma = csv.size();
    if (out.size() > 1) out += ",";
    out += quote(csv.substr(start, comma - start));
    start = comma + 1;
  }
  return out + "]";
}

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int report(univcd_status s) {
  if (s != UNIVCD_OK) std::fprintf(stderr, "univcd: %s: %s\n", univcd_status_name(s), univcd_last_error());
  return static_cast<int>(s);
}

class Session {
 public:
  ~Session() { univcd_config_free(config_); }

  univcd_status open(const Overrides& o) {
    univcd_status s = o.config_path.empty() ? univcd_config_default(&config_)
                                            : univcd_config_load(o.config_path.c_str(), &config_);
    if (s != UNIVCD_OK) return s;
    // Named flags first, then the generic --set list, so an explicit --set wins.
    for (const auto& [key, value] : o.named) {
      if ((s = univcd_config_set(config_, key.c_str(), value.c_str())) != UNIVCD_OK) return s;
    }
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "univcd: --set expects key=value, got '%s'\n", kv.c_str());
        return UNIVCD_ERR_CONFIG;
      }
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      if ((s = univcd_config_set(config_, key.c_str(), value.c_str())) != UNIVCD_OK) return s;
    }
    return UNIVCD_OK;
  }

  const univcd_config* get() const { return config_; }

 private:
  univcd_config* config_ = nullptr;
};

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary change detection with frozen encoders and a trained alignment module"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(univcd_version()));

  Overrides o;
  std::string output_dir, dataset, data_root, categories, target, scoring, checkpoint, refiner, eval_mode;
  std::optional<double> lr, temperature, overlap, theta, confidence;
  std::optional<int> epochs, batch, tile;
  std::optional<long long> seed;
  bool no_scfam = false, no_recon = false, strict = false;

  app.add_option("-c,--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--set", o.sets, "Override a config field: section.key=value (JSON value)")->take_all();
  app.add_option("-o,--output-dir", output_dir, "Output directory (output_dir)");
  app.add_flag("--resume", o.resume, "Skip stages whose manifest matches config and inputs");
  app.add_flag("--no-scfam", no_scfam, "Ablation: score raw semantic features");
  app.add_flag("--no-recon", no_recon, "Ablation: drop the reconstruction losses");
  app.add_option("--dataset", dataset, "Directory of unpaired training images (train.dataset)");
  app.add_option("--data-root", data_root, "Bi-temporal dataset root (eval.root)");
  app.add_option("--epochs", epochs, "train.epochs");
  app.add_option("--lr", lr, "train.learning_rate");
  app.add_option("--batch", batch, "train.batch_size");
  app.add_option("--seed", seed, "train.seed");
  app.add_option("--categories", categories, "Comma-separated category list (detect.categories)");
  app.add_option("--target", target, "Target category (detect.target)");
  app.add_option("--scoring", scoring, "logit or softmax (detect.scoring)");
  app.add_option("--temperature", temperature, "detect.temperature");
  app.add_option("--tile", tile, "detect.tile");
  app.add_option("--overlap", overlap, "detect.overlap");
  app.add_option("--checkpoint", checkpoint, "Model checkpoint for detection (detect.checkpoint)");
  app.add_option("--refiner", refiner, "none or echo (postproc.refiner)");
  app.add_flag("--strict", strict, "Delete rejected candidates instead of keeping them");
  app.add_option("--theta", theta, "Baseline match threshold");
  app.add_option("--confidence", confidence, "Baseline confidence threshold");
  app.add_option("--eval-mode", eval_mode, "aggregate or per_image_mean (eval.mode)");
  app.fallthrough();

  auto* train = app.add_subcommand("train", "Train the alignment module on unpaired images");

  std::string image_a, image_b;
  auto* detect = app.add_subcommand("detect", "Change likelihoods for one pair or the whole dataset");
  detect->add_option("image_a", image_a, "Epoch-A image")->check(CLI::ExistingFile);
  detect->add_option("image_b", image_b, "Epoch-B image")->check(CLI::ExistingFile);

  auto* post = app.add_subcommand("postprocess", "Binarize, clean and refine detected likelihoods");
  post->add_option("image_a", image_a, "Epoch-A image")->check(CLI::ExistingFile);
  post->add_option("image_b", image_b, "Epoch-B image")->check(CLI::ExistingFile);

  std::string pred_dir, label_root;
  auto* evaluate = app.add_subcommand("evaluate", "Score predicted masks against labels");
  evaluate->add_option("--pred-dir", pred_dir, "Prediction directory (default: <output>/masks[/<target>])");
  evaluate->add_option("--labels", label_root, "Dataset root holding the labels (default: eval.root)");

  std::string masks_a, masks_b, name = "change";
  auto* baseline = app.add_subcommand("baseline", "Mask-matching baseline between two mask directories");
  baseline->add_option("masks_a", masks_a, "Epoch-A masks")->required()->check(CLI::ExistingDirectory);
  baseline->add_option("masks_b", masks_b, "Epoch-B masks")->required()->check(CLI::ExistingDirectory);
  baseline->add_option("--name", name, "Output mask name");

  auto* viz = app.add_subcommand("export-viz", "TP/TN/FP/FN overlays of binary predictions");
  viz->add_option("--pred-dir", pred_dir, "Prediction directory");

  std::string synth_dir;
  int synth_pairs = 20, synth_scenes = 24;
  long long synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic bi-temporal dataset for the toy encoders");
  synth->add_option("dir", synth_dir, "Destination directory")->required();
  synth->add_option("--pairs", synth_pairs, "Bi-temporal pairs")->check(CLI::NonNegativeNumber);
  synth->add_option("--train-scenes", synth_scenes, "Unpaired training scenes")->check(CLI::NonNegativeNumber);
  synth->add_option("--data-seed", synth_seed, "Scene seed")->check(CLI::NonNegativeNumber);

  auto* show = app.add_subcommand("config", "Print the effective config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : UNIVCD_ERR_CONFIG;
  }

  auto set = [&](const char* key, std::string json) { o.named.emplace_back(key, std::move(json)); };
  if (!output_dir.empty()) set("output_dir", quote(output_dir));
  if (no_scfam) set("ablations.no_scfam", "true");
  if (no_recon) set("ablations.no_recon", "true");
  if (!dataset.empty()) set("train.dataset", quote(dataset));
  if (!data_root.empty()) set("eval.root", quote(data_root));
  if (epochs) set("train.epochs", std::to_string(*epochs));
  if (lr) set("train.learning_rate", number(*lr));
  if (batch) set("train.batch_size", std::to_string(*batch));
  if (seed) set("train.seed", std::to_string(*seed));
  if (!categories.empty()) set("detect.categories", list_json(categories));
  if (!target.empty()) set("detect.target", quote(target));
  if (!scoring.empty()) set("detect.scoring", quote(scoring));
  if (temperature) set("detect.temperature", number(*temperature));
  if (tile) set("detect.tile", std::to_string(*tile));
  if (overlap) set("detect.overlap", number(*overlap));
  if (!checkpoint.empty()) set("detect.checkpoint", quote(checkpoint));
  if (!refiner.empty()) set("postproc.refiner", quote(refiner));
  if (strict) set("postproc.strict", "true");
  if (theta) set("baseline.theta", number(*theta));
  if (confidence) set("baseline.confidence", number(*confidence));
  if (!eval_mode.empty()) set("eval.mode", quote(eval_mode));

  Session session;
  if (const auto s = session.open(o); s != UNIVCD_OK) return report(s);
  const univcd_config* cfg = session.get();
  const int resume = o.resume ? 1 : 0;
  int skipped = 0;

  if (*train) {
    const auto s = univcd_cmd_train(cfg, resume, &skipped);
    if (s == UNIVCD_OK && skipped) std::puts("train: up to date, skipped");
    return report(s);
  }
  if (*detect || *post) {
    if (image_a.empty() != image_b.empty()) {
      std::fprintf(stderr, "univcd: give both images of a pair or neither\n");
      return UNIVCD_ERR_CONFIG;
    }
    const auto s = *detect ? univcd_cmd_detect(cfg, opt(image_a), opt(image_b), resume, &skipped)
                           : univcd_cmd_postprocess(cfg, opt(image_a), opt(image_b), resume, &skipped);
    if (s == UNIVCD_OK && skipped) std::printf("%s: up to date, skipped\n", *detect ? "detect" : "postprocess");
    return report(s);
  }
  if (*evaluate) {
    char* table = nullptr;
    const auto s = univcd_cmd_evaluate(cfg, opt(pred_dir), opt(label_root), &table);
    if (table) std::fputs(table, stdout);
    univcd_string_free(table);
    return report(s);
  }
  if (*baseline) return report(univcd_cmd_baseline(cfg, masks_a.c_str(), masks_b.c_str(), name.c_str()));
  if (*viz) return report(univcd_cmd_export_viz(cfg, opt(pred_dir)));
  if (*synth) {
    return report(univcd_cmd_synth(cfg, synth_dir.c_str(), synth_pairs, synth_scenes,
                                   static_cast<std::uint64_t>(synth_seed)));
  }
  if (*show) {
    char* json = nullptr;
    const auto s = univcd_config_serialize(cfg, &json);
    if (json) std::fputs(json, stdout);
    univcd_string_free(json);
    return report(s);
  }
  return 0;
}
