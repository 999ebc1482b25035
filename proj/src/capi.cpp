#include "univcd/univcd.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>

#include "univcd/config.hpp"
#include "univcd/io.hpp"
#include "univcd/pipeline.hpp"

struct univcd_config {
  univcd::RunConfig c;
};
struct univcd_raster {
  univcd::Raster r;
};
struct univcd_encoders {
  univcd::EncoderSet e;
};
struct univcd_model {
  univcd::ScfamModel m;
};

namespace {

thread_local std::string g_last_error;

univcd_status fail(univcd_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <typename F>
univcd_status guard(F&& f) {
  try {
    f();
    return UNIVCD_OK;
  } catch (const univcd::Error& e) {
    return fail(static_cast<univcd_status>(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(UNIVCD_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(UNIVCD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(UNIVCD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(UNIVCD_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* name) {
  if (!p) throw univcd::InvalidArgumentError(std::string(name) + " is NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<univcd::DatasetPair> pairs_for(const univcd::RunConfig& c, const char* a, const char* b) {
  if (!a && !b) return univcd::configured_pairs(c);
  if (!a || !b) throw univcd::InvalidArgumentError("give both images of a pair or neither");
  return {{std::filesystem::path(a).filename().string(), a, b}};
}

class CallbackRefiner final : public univcd::Refiner {
 public:
  CallbackRefiner(univcd_segment_fn fn, void* user) : fn_(fn), user_(user) {}

  univcd::BinaryMask segment(const univcd::Raster& image, const univcd::BBox& box,
                             std::span<const univcd::PointPrompt> points) override {
    const univcd_raster wrapped{image};
    const int b[4] = {box.row_min, box.col_min, box.row_max, box.col_max};
    const int pr = points.empty() ? -1 : points[0].row;
    const int pc = points.empty() ? -1 : points[0].col;
    univcd::BinaryMask mask(image.height(), image.width());
    if (fn_(user_, &wrapped, b, pr, pc, mask.values().data(), image.height(), image.width()) != 0) {
      throw univcd::RefinerError("segment callback reported failure");
    }
    for (auto& v : mask.values()) v = v ? 1 : 0;
    return mask;
  }

 private:
  univcd_segment_fn fn_;
  void* user_;
};

}  // namespace

extern "C" {

const char* univcd_version(void) { return univcd::kToolVersion; }

const char* univcd_status_name(univcd_status s) {
  switch (s) {
    case UNIVCD_OK: return "ok";
    case UNIVCD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case UNIVCD_ERR_CONFIG: return "config error";
    case UNIVCD_ERR_DATA: return "data error";
    case UNIVCD_ERR_MODEL: return "model error";
    case UNIVCD_ERR_REFINER: return "refiner error";
    case UNIVCD_ERR_IO: return "i/o error";
    case UNIVCD_ERR_DEGENERATE: return "degenerate input";
    case UNIVCD_ERR_UNSUPPORTED: return "unsupported";
    case UNIVCD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* univcd_last_error(void) { return g_last_error.c_str(); }

void univcd_string_free(char* s) { std::free(s); }

univcd_status univcd_config_default(univcd_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new univcd_config{};
  });
}

univcd_status univcd_config_load(const char* path, univcd_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new univcd_config{univcd::load_config(path)};
  });
}

univcd_status univcd_config_parse(const char* json, univcd_config** out) {
  return guard([&] {
    need(json, "json");
    need(out, "out");
    *out = new univcd_config{univcd::parse_config(json)};
  });
}

univcd_status univcd_config_set(univcd_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    univcd::set_config_value(config->c, key, value);
  });
}

univcd_status univcd_config_serialize(const univcd_config* config, char** out_json) {
  return guard([&] {
    need(config, "config");
    need(out_json, "out_json");
    *out_json = dup(univcd::serialize_config(config->c));
  });
}

univcd_status univcd_config_equal(const univcd_config* a, const univcd_config* b, int* out_equal) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    need(out_equal, "out_equal");
    *out_equal = a->c == b->c ? 1 : 0;
  });
}

void univcd_config_free(univcd_config* config) { delete config; }

univcd_status univcd_cmd_train(const univcd_config* config, int resume, int* skipped) {
  return guard([&] {
    need(config, "config");
    const auto r = univcd::cmd_train(config->c, resume != 0);
    if (skipped) *skipped = r.skipped ? 1 : 0;
  });
}

univcd_status univcd_cmd_detect(const univcd_config* config, const char* image_a, const char* image_b, int resume,
                                int* skipped) {
  return guard([&] {
    need(config, "config");
    const auto r = univcd::cmd_detect(config->c, pairs_for(config->c, image_a, image_b), resume != 0);
    if (skipped) *skipped = r.skipped ? 1 : 0;
  });
}

univcd_status univcd_cmd_postprocess(const univcd_config* config, const char* image_a, const char* image_b,
                                     int resume, int* skipped) {
  return guard([&] {
    need(config, "config");
    const auto r = univcd::cmd_postprocess(config->c, pairs_for(config->c, image_a, image_b), resume != 0);
    if (skipped) *skipped = r.skipped ? 1 : 0;
  });
}

univcd_status univcd_cmd_evaluate(const univcd_config* config, const char* pred_dir, const char* label_root,
                                  char** report_table) {
  if (report_table) *report_table = nullptr;
  return guard([&] {
    need(config, "config");
    const auto report = univcd::cmd_evaluate(config->c, pred_dir ? pred_dir : "", label_root ? label_root : "");
    if (report_table) *report_table = dup(report.to_table());
    if (!report.missing.empty()) {
      throw univcd::DataError(std::to_string(report.missing.size()) +
                              " prediction(s) missing, first: " + report.missing.front());
    }
  });
}

univcd_status univcd_cmd_baseline(const univcd_config* config, const char* masks_a, const char* masks_b,
                                  const char* name) {
  return guard([&] {
    need(config, "config");
    need(masks_a, "masks_a");
    need(masks_b, "masks_b");
    need(name, "name");
    univcd::cmd_baseline(config->c, masks_a, masks_b, name);
  });
}

univcd_status univcd_cmd_export_viz(const univcd_config* config, const char* pred_dir) {
  return guard([&] {
    need(config, "config");
    univcd::cmd_export_viz(config->c, pred_dir ? pred_dir : "");
  });
}

univcd_status univcd_cmd_synth(const univcd_config* config, const char* dir, int pairs, int train_scenes,
                               uint64_t seed) {
  return guard([&] {
    need(config, "config");
    need(dir, "dir");
    univcd::cmd_synth(config->c, dir, pairs, train_scenes, seed);
  });
}

univcd_status univcd_raster_create(int height, int width, int channels, const double* values, univcd_raster** out) {
  return guard([&] {
    need(out, "out");
    if (height < 1 || width < 1 || channels < 1) throw univcd::InvalidArgumentError("raster dimensions must be positive");
    auto* r = new univcd_raster{univcd::Raster(height, width, channels)};
    if (values) std::memcpy(r->r.data(), values, r->r.size() * sizeof(double));
    *out = r;
  });
}

univcd_status univcd_raster_load(const char* path, univcd_raster** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new univcd_raster{univcd::load_image(path)};
  });
}

univcd_status univcd_raster_save(const univcd_raster* raster, const char* path) {
  return guard([&] {
    need(raster, "raster");
    need(path, "path");
    if (std::filesystem::path(path).extension() == ".png") {
      univcd::save_png(path, raster->r);
    } else {
      univcd::save_raster(path, raster->r);
    }
  });
}

univcd_status univcd_raster_shape(const univcd_raster* raster, int* height, int* width, int* channels) {
  return guard([&] {
    need(raster, "raster");
    if (height) *height = raster->r.height();
    if (width) *width = raster->r.width();
    if (channels) *channels = raster->r.channels();
  });
}

const double* univcd_raster_data(const univcd_raster* raster) { return raster ? raster->r.data() : nullptr; }

void univcd_raster_free(univcd_raster* raster) { delete raster; }

univcd_status univcd_encoders_create(const univcd_config* config, univcd_encoders** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = new univcd_encoders{univcd::build_encoders(config->c.encoder)};
  });
}

univcd_status univcd_encoders_fingerprint(const univcd_encoders* encoders, char** out) {
  return guard([&] {
    need(encoders, "encoders");
    need(out, "out");
    *out = dup(encoders->e.fingerprint());
  });
}

void univcd_encoders_free(univcd_encoders* encoders) { delete encoders; }

univcd_status univcd_model_load(const char* checkpoint, univcd_model** out) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    if (!std::filesystem::exists(checkpoint)) throw univcd::ModelError(std::string("checkpoint not found: ") + checkpoint);
    *out = new univcd_model{univcd::load_checkpoint(checkpoint)};
  });
}

void univcd_model_free(univcd_model* model) { delete model; }

univcd_status univcd_detect_pair(const univcd_config* config, const univcd_encoders* encoders,
                                 const univcd_model* model, const univcd_raster* image_a, const univcd_raster* image_b,
                                 univcd_raster** likelihood, univcd_raster** scores_a, univcd_raster** scores_b) {
  return guard([&] {
    need(config, "config");
    need(encoders, "encoders");
    need(image_a, "image_a");
    need(image_b, "image_b");
    need(likelihood, "likelihood");
    const auto& c = config->c;
    const univcd::DetectConfig dc = c.detect_config();
    if (!model && !dc.no_scfam) throw univcd::ModelError("no model given and the no_scfam ablation is off");
    const auto text = univcd::embed_text(*encoders->e.text, c.detect.categories, c.detect.templates);
    auto det = univcd::detect_pair_with_scores(image_a->r, image_b->r, dc.no_scfam ? nullptr : &model->m, encoders->e,
                                               text, dc);
    *likelihood = new univcd_raster{std::move(det.likelihood.likelihood)};
    if (scores_a) *scores_a = new univcd_raster{std::move(det.scores1.scores)};
    if (scores_b) *scores_b = new univcd_raster{std::move(det.scores2.scores)};
  });
}

univcd_status univcd_otsu_threshold(const univcd_raster* likelihood, double* threshold) {
  return guard([&] {
    need(likelihood, "likelihood");
    need(threshold, "threshold");
    *threshold = univcd::otsu_threshold(likelihood->r);
  });
}

univcd_status univcd_postprocess(const univcd_config* config, const univcd_raster* likelihood, int category,
                                 const univcd_raster* image_a, const univcd_raster* image_b,
                                 const univcd_raster* scores_a, const univcd_raster* scores_b,
                                 univcd_segment_fn segment, void* user, uint8_t* mask_out, size_t mask_len) {
  return guard([&] {
    need(config, "config");
    need(likelihood, "likelihood");
    need(mask_out, "mask_out");
    const auto& lk = likelihood->r;
    if (category < 0 || category >= lk.channels()) throw univcd::InvalidArgumentError("category out of range");
    if (mask_len != lk.pixel_count()) throw univcd::InvalidArgumentError("mask_len must equal height * width");
    const auto comps = univcd::binarize_and_clean(lk.channel(category), config->c.postproc.cleanup);
    univcd::BinaryMask mask = comps.to_mask();
    if (segment) {
      need(image_a, "image_a");
      need(image_b, "image_b");
      need(scores_a, "scores_a");
      need(scores_b, "scores_b");
      const auto& cats = config->c.detect.categories;
      const univcd::ClassScoreMap s1{scores_a->r, cats, config->c.detect.config.mode};
      const univcd::ClassScoreMap s2{scores_b->r, cats, config->c.detect.config.mode};
      CallbackRefiner refiner(segment, user);
      mask = univcd::refine_components(comps, image_a->r, image_b->r, s1, s2, category, refiner,
                                       config->c.postproc.refine)
                 .mask;
    }
    std::memcpy(mask_out, mask.values().data(), mask_len);
  });
}

univcd_status univcd_metrics(uint64_t tp, uint64_t fp, uint64_t fn, uint64_t tn, double out[6]) {
  return guard([&] {
    need(out, "out");
    const auto m = univcd::metrics({tp, fp, fn, tn});
    const double v[6] = {m.precision, m.recall, m.f1, m.iou, m.no_change_iou, m.miou};
    std::memcpy(out, v, sizeof v);
  });
}

}  // extern "C"
