#include "univcd/encoders.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "univcd/io.hpp"
#include "univcd/tiling.hpp"

namespace univcd {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::uint64_t hash_doubles(const std::vector<double>& v, std::uint64_t seed) {
  return fnv1a({reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(double)}, seed);
}

// Non-overlapping k x k patches flattened in (dy, dx, channel) order, one row per patch.
RowMatrix patchify(const Raster& r, int k) {
  const int gh = r.height() / k;
  const int gw = r.width() / k;
  const int nc = r.channels();
  RowMatrix m(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(k) * k * nc);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      double* row = m.row(static_cast<Eigen::Index>(gy) * gw + gx).data();
      for (int dy = 0; dy < k; ++dy) {
        std::copy_n(r.pixel(gy * k + dy, gx * k), static_cast<std::size_t>(k) * nc, row + dy * k * nc);
      }
    }
  }
  return m;
}

Raster to_raster(const RowMatrix& m, int h, int w) {
  Raster out(h, w, static_cast<int>(m.cols()));
  std::copy_n(m.data(), m.size(), out.data());
  return out;
}

class ToySpatialEncoder final : public SpatialEncoder {
 public:
  ToySpatialEncoder(std::uint64_t seed, SpatialEncoderConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed ^ 0x5a17a1ULL);
    int cin = 3;
    int prev_stride = 1;
    for (int l = 0; l < config_.levels(); ++l) {
      const int k = config_.strides[l] / prev_stride;
      const int cout = config_.channels[l];
      const int fan_in = k * k * cin;
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
      RowMatrix w(fan_in, cout);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
      kernels_.push_back(std::move(w));
      biases_.push_back(Eigen::RowVectorXd::Zero(cout));
      cin = cout;
      prev_stride = config_.strides[l];
    }
    fingerprint_ = "toy-spatial-" + hex64(parameter_hash());
  }

  const SpatialEncoderConfig& config() const override { return config_; }

  MultiScaleFeatures encode(const Raster& image) const override {
    if (image.height() != config_.input_size || image.width() != config_.input_size ||
        image.channels() != 3) {
      throw InvalidArgumentError("spatial encoder expects a " + std::to_string(config_.input_size) +
                                 "x" + std::to_string(config_.input_size) + "x3 image");
    }
    MultiScaleFeatures out;
    const Raster* current = &image;
    int prev_stride = 1;
    for (int l = 0; l < config_.levels(); ++l) {
      const int k = config_.strides[l] / prev_stride;
      RowMatrix act = patchify(*current, k) * kernels_[l];
      act.rowwise() += biases_[l];
      act = act.array().tanh().matrix();
      const int side = config_.input_size / config_.strides[l];
      out.levels.push_back(to_raster(act, side, side));
      out.strides.push_back(config_.strides[l]);
      current = &out.levels.back();
      prev_stride = config_.strides[l];
    }
    return out;
  }

  // Computed once: parameters never change after construction.
  std::string fingerprint() const override { return fingerprint_; }

  std::size_t parameter_count() const override {
    std::size_t n = 0;
    for (std::size_t l = 0; l < kernels_.size(); ++l) n += kernels_[l].size() + biases_[l].size();
    return n;
  }

  std::uint64_t parameter_hash() const override {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t l = 0; l < kernels_.size(); ++l) {
      h = fnv1a({reinterpret_cast<const std::uint8_t*>(kernels_[l].data()),
                 static_cast<std::size_t>(kernels_[l].size()) * sizeof(double)},
                h);
      h = fnv1a({reinterpret_cast<const std::uint8_t*>(biases_[l].data()),
                 static_cast<std::size_t>(biases_[l].size()) * sizeof(double)},
                h);
    }
    return h;
  }

 private:
  std::string fingerprint_;
  SpatialEncoderConfig config_;
  std::vector<RowMatrix> kernels_;
  std::vector<Eigen::RowVectorXd> biases_;
};

class ToySemanticEncoder final : public SemanticImageEncoder {
 public:
  ToySemanticEncoder(std::uint64_t seed, int patch, int dim, double context_leak)
      : patch_(patch), dim_(dim), context_leak_(context_leak) {
    if (patch < 1 || dim < 1) throw InvalidArgumentError("toy semantic encoder: bad geometry");
    if (!(context_leak >= 0.0)) throw InvalidArgumentError("toy semantic encoder: context_leak must be >= 0");
    std::mt19937_64 rng(seed ^ 0xc11bULL);
    const int fan_in = patch * patch * 3;
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    projection_.resize(fan_in, dim);
    for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = dist(rng);
    // Remove each filter's per-channel mean so flat regions map to zero.
    for (int d = 0; d < dim; ++d) {
      for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int p = 0; p < patch * patch; ++p) mean += projection_(p * 3 + c, d);
        mean /= patch * patch;
        for (int p = 0; p < patch * patch; ++p) projection_(p * 3 + c, d) -= mean;
      }
    }
    bias_ = Eigen::RowVectorXd::Zero(dim);
    fingerprint_ = "toy-semantic-" + hex64(parameter_hash()) + "-leak" + std::to_string(context_leak_);
  }

  int dim() const override { return dim_; }
  int stride() const override { return patch_; }

  Raster encode_dense(const Raster& window) const override {
    if (window.channels() != 3 || window.height() % patch_ != 0 || window.width() % patch_ != 0) {
      throw InvalidArgumentError("semantic encoder: window must be 3-channel with sides divisible by " +
                                 std::to_string(patch_));
    }
    RowMatrix patches = patchify(window, patch_);
    // The projection ignores per-channel offsets, so shifting each patch by its first pixel is
    // free and makes flat patches exactly zero instead of rounding noise.
    for (Eigen::Index r = 0; r < patches.rows(); ++r) {
      double* row = patches.row(r).data();
      const double origin[3] = {row[0], row[1], row[2]};
      for (Eigen::Index i = 0; i < patches.cols(); ++i) row[i] -= origin[i % 3];
    }
    RowMatrix f = patches * projection_;
    if (context_leak_ > 0.0) add_context_leak(window, f);
    f.rowwise() += bias_;
    return to_raster(f, window.height() / patch_, window.width() / patch_);
  }

  /// Inverts the content projection only (the context term depends on the whole window).
  Raster preimage(const std::vector<double>& target) const {
    if (static_cast<int>(target.size()) != dim_) throw InvalidArgumentError("preimage: width mismatch");
    const Eigen::Map<const Eigen::VectorXd> t(target.data(), dim_);
    const Eigen::MatrixXd gram = projection_.transpose() * projection_;
    const Eigen::VectorXd coeff = gram.ldlt().solve(t - bias_.transpose());
    const Eigen::VectorXd flat = projection_ * coeff;
    Raster out(patch_, patch_, 3);
    std::copy_n(flat.data(), flat.size(), out.data());
    return out;
  }

  // Every cell of a window receives one shared pseudo-random direction keyed on the window's
  // pixels, scaled by the window's RMS feature norm: a stand-in for the global-context mixing
  // that makes dense features of contrastive encoders unreliable at the patch level.
  void add_context_leak(const Raster& window, RowMatrix& f) const {
    const double energy = f.squaredNorm() / static_cast<double>(f.rows());
    if (!(energy > 0.0)) return;
    const auto bytes = window.values();
    std::mt19937_64 rng(fnv1a({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size() * sizeof(double)}));
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::RowVectorXd dir(dim_);
    for (int i = 0; i < dim_; ++i) dir[i] = dist(rng);
    dir *= context_leak_ * std::sqrt(energy) / dir.norm();
    f.rowwise() += dir;
  }

  std::string fingerprint() const override { return fingerprint_; }
  std::size_t parameter_count() const override {
    return static_cast<std::size_t>(projection_.size() + bias_.size());
  }
  std::uint64_t parameter_hash() const override {
    std::uint64_t h = fnv1a({reinterpret_cast<const std::uint8_t*>(projection_.data()),
                             static_cast<std::size_t>(projection_.size()) * sizeof(double)});
    return fnv1a({reinterpret_cast<const std::uint8_t*>(bias_.data()),
                  static_cast<std::size_t>(bias_.size()) * sizeof(double)},
                 h);
  }

 private:
  std::string fingerprint_;
  int patch_;
  int dim_;
  double context_leak_;
  RowMatrix projection_;
  Eigen::RowVectorXd bias_;
};

class ToyTextEncoder final : public TextEncoder {
 public:
  ToyTextEncoder(std::uint64_t seed, int dim, int buckets) : seed_(seed), dim_(dim), buckets_(buckets) {
    if (dim < 1 || buckets < 1) throw InvalidArgumentError("toy text encoder: bad geometry");
    std::mt19937_64 rng(seed ^ 0x7e47ULL);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    table_.resize(static_cast<std::size_t>(dim) * buckets);
    for (double& v : table_) v = dist(rng);
    fingerprint_ = "toy-text-" + hex64(parameter_hash());
  }

  int dim() const override { return dim_; }

  std::vector<double> encode(const std::string& text) const override {
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const auto h = fnv1a({reinterpret_cast<const std::uint8_t*>(token.data()), token.size()},
                           0xcbf29ce484222325ULL ^ seed_);
      const double* row = table_.data() + (h % static_cast<std::uint64_t>(buckets_)) * dim_;
      for (int i = 0; i < dim_; ++i) out[i] += row[i];
      token.clear();
    };
    for (char ch : text) {
      if (std::isalnum(static_cast<unsigned char>(ch))) {
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      } else {
        flush();
      }
    }
    flush();
    return out;
  }

  std::string fingerprint() const override { return fingerprint_; }
  std::size_t parameter_count() const override { return table_.size(); }
  std::uint64_t parameter_hash() const override { return hash_doubles(table_, seed_); }

 private:
  std::string fingerprint_;
  std::uint64_t seed_;
  int dim_;
  int buckets_;
  std::vector<double> table_;
};

}  // namespace

void SpatialEncoderConfig::validate() const {
  if (input_size < 1) throw InvalidArgumentError("spatial config: input_size must be positive");
  if (strides.empty() || strides.size() != channels.size()) {
    throw InvalidArgumentError("spatial config: need matching, non-empty stride and channel lists");
  }
  int prev = 1;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] <= prev && !(i == 0 && strides[i] == 1)) {
      throw InvalidArgumentError("spatial config: strides must strictly increase");
    }
    if (strides[i] % prev != 0 || input_size % strides[i] != 0) {
      throw InvalidArgumentError("spatial config: each stride must divide the next and the input size");
    }
    if (channels[i] < 1) throw InvalidArgumentError("spatial config: channel counts must be positive");
    prev = strides[i];
  }
}

int TextEmbeddingSet::index_of(const std::string& category) const {
  const auto it = std::find(categories.begin(), categories.end(), category);
  if (it == categories.end()) throw InvalidArgumentError("unknown category: " + category);
  return static_cast<int>(it - categories.begin());
}

std::string EncoderSet::fingerprint() const {
  const std::string joined = spatial->fingerprint() + "|" + semantic->fingerprint() + "|" + text->fingerprint();
  return hex64(fnv1a({reinterpret_cast<const std::uint8_t*>(joined.data()), joined.size()}));
}

std::size_t EncoderSet::parameter_count() const {
  return spatial->parameter_count() + semantic->parameter_count() + text->parameter_count();
}

std::uint64_t EncoderSet::parameter_hash() const {
  const std::uint64_t parts[3] = {spatial->parameter_hash(), semantic->parameter_hash(),
                                  text->parameter_hash()};
  return fnv1a({reinterpret_cast<const std::uint8_t*>(parts), sizeof(parts)});
}

EncoderSet make_toy_encoders(std::uint64_t seed, const SpatialEncoderConfig& config, int d_sem,
                             const ToyEncoderOptions& options) {
  EncoderSet set;
  set.spatial = std::make_shared<ToySpatialEncoder>(seed, config);
  set.semantic = std::make_shared<ToySemanticEncoder>(seed, options.patch, d_sem, options.context_leak);
  set.text = std::make_shared<ToyTextEncoder>(seed, d_sem, options.text_buckets);
  return set;
}

Raster semantic_preimage(const SemanticImageEncoder& encoder, const std::vector<double>& target) {
  const auto* toy = dynamic_cast<const ToySemanticEncoder*>(&encoder);
  if (!toy) throw UnsupportedError("semantic_preimage requires the toy semantic encoder");
  return toy->preimage(target);
}

MultiScaleFeatures encode_spatial(const SpatialEncoder& encoder, const Raster& image) {
  return encoder.encode(image);
}

SemanticFeatureMap sliding_window_encode(const SemanticImageEncoder& encoder, const Raster& image,
                                         int window, double overlap_ratio) {
  const int stride = encoder.stride();
  if (window > image.height() || window > image.width()) {
    throw InvalidArgumentError("sliding_window_encode: window larger than image");
  }
  const auto plan = make_tiling_plan(image.height(), image.width(), window, overlap_ratio, stride);
  const BlendWeights blend(plan, stride);
  const int n = blend.cells_per_tile();
  Raster out(blend.grid_height(), blend.grid_width(), encoder.dim());
  for (std::size_t p = 0; p < plan.placements.size(); ++p) {
    const auto& box = plan.placements[p];
    const Raster f = encoder.encode_dense(crop(image, box));
    const int gy0 = box.row_min / stride;
    const int gx0 = box.col_min / stride;
    for (int ty = 0; ty < n; ++ty) {
      for (int tx = 0; tx < n; ++tx) {
        const double w = blend.weight(p, ty, tx);
        const double* src = f.pixel(ty, tx);
        double* dst = out.pixel(gy0 + ty, gx0 + tx);
        for (int c = 0; c < out.channels(); ++c) dst[c] += w * src[c];
      }
    }
  }
  return {std::move(out), stride};
}

std::vector<std::string> default_prompt_templates() {
  return {"a satellite photo of a {}.", "an aerial image of a {}.", "a remote sensing image of a {}."};
}

std::vector<std::string> default_bcd_categories() {
  return {"architecture", "road", "vegetation", "water", "bare ground"};
}

TextEmbeddingSet embed_text(const TextEncoder& encoder, const std::vector<std::string>& categories,
                            const std::vector<std::string>& templates) {
  if (categories.empty() || templates.empty()) {
    throw InvalidArgumentError("embed_text: need at least one category and one template");
  }
  TextEmbeddingSet set;
  const int d = encoder.dim();
  for (const auto& category : categories) {
    if (category.empty()) throw InvalidArgumentError("embed_text: empty category name");
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (const auto& tmpl : templates) {
      std::string prompt = tmpl;
      const auto pos = prompt.find("{}");
      if (pos == std::string::npos) {
        prompt += " " + category;
      } else {
        prompt.replace(pos, 2, category);
      }
      auto v = encoder.encode(prompt);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) throw DegenerateInputError("embed_text: zero embedding for '" + prompt + "'");
      for (int i = 0; i < d; ++i) mean[i] += v[i] / norm;
    }
    double norm = 0.0;
    for (double x : mean) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 1e-12)) {
      throw DegenerateInputError("embed_text: template embeddings cancel for '" + category + "'");
    }
    for (double& x : mean) x /= norm;
    set.categories.push_back(category);
    set.vectors.push_back(std::move(mean));
  }
  return set;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::ifstream in(dir_ / "manifest.txt");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string id;
    Entry e;
    if (std::getline(fields, id, '\t') && std::getline(fields, e.fingerprint, '\t') &&
        (fields >> e.window >> e.overlap)) {
      entries_.emplace_back(id, e);
    }
  }
}

std::optional<CachedFeatures> FeatureCache::lookup(const std::string& image_id, const std::string& fingerprint,
                                                   int window, double overlap) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& kv) {
    return kv.first == image_id && kv.second.fingerprint == fingerprint && kv.second.window == window &&
           kv.second.overlap == overlap;
  });
  if (it == entries_.end()) return std::nullopt;
  CachedFeatures out;
  for (int level = 0;; ++level) {
    const auto path = dir_ / (image_id + ".spatial." + std::to_string(level) + ".uvcd");
    if (!std::filesystem::exists(path)) break;
    out.spatial.levels.push_back(load_raster(path));
  }
  const auto sem_path = dir_ / (image_id + ".semantic.uvcd");
  if (out.spatial.levels.empty() || !std::filesystem::exists(sem_path)) return std::nullopt;
  out.semantic.features = load_raster(sem_path);
  return out;
}

void FeatureCache::store(const std::string& image_id, const std::string& fingerprint, int window,
                         double overlap, const CachedFeatures& features) {
  for (std::size_t l = 0; l < features.spatial.levels.size(); ++l) {
    save_raster(dir_ / (image_id + ".spatial." + std::to_string(l) + ".uvcd"), features.spatial.levels[l]);
  }
  save_raster(dir_ / (image_id + ".semantic.uvcd"), features.semantic.features);
  std::erase_if(entries_, [&](const auto& kv) { return kv.first == image_id; });
  entries_.emplace_back(image_id, Entry{fingerprint, window, overlap});
  write_manifest();
}

void FeatureCache::write_manifest() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [id, e] : entries_) {
    out << id << '\t' << e.fingerprint << '\t' << e.window << '\t' << e.overlap << '\n';
  }
  write_file_atomic(dir_ / "manifest.txt", out.str());
}

}  // namespace univcd
