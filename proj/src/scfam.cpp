#include "univcd/scfam.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "univcd/io.hpp"

namespace univcd {
namespace {

using nlohmann::json;

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed ^ 0x5cfa3ULL) {}

  void truncated_normal(nn::Tensor& t, double sigma) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : t.data) {
      double z;
      do {
        z = dist(rng_);
      } while (std::abs(z) > 2.0);
      v = sigma * z;
    }
  }

 private:
  std::mt19937_64 rng_;
};

constexpr double kInitSigma = 0.02;

struct Builder {
  nn::ParamStore& params;
  Initializer& init;

  int weight(const std::string& name, std::vector<int> shape) {
    const int id = params.add(name, std::move(shape));
    init.truncated_normal(params[id], kInitSigma);
    return id;
  }
  int zeros(const std::string& name, int n) { return params.add(name, {n}); }
  int ones(const std::string& name, int n) {
    const int id = params.add(name, {n});
    std::fill(params[id].data.begin(), params[id].data.end(), 1.0);
    return id;
  }
  ProjectionHeadParams head(const std::string& prefix, int in, int hidden, int out) {
    return {weight(prefix + ".hidden.weight", {1, 1, in, hidden}), zeros(prefix + ".hidden.bias", hidden),
            weight(prefix + ".out.weight", {1, 1, hidden, out}), zeros(prefix + ".out.bias", out), out};
  }
};

}  // namespace

ScfamConfig ScfamConfig::from_encoder(const SpatialEncoderConfig& spatial, int d_sem) {
  ScfamConfig c;
  c.input_size = spatial.input_size;
  c.strides = spatial.strides;
  c.in_channels = spatial.channels;
  c.d_sem = d_sem;
  return c;
}

void ScfamConfig::validate() const {
  SpatialEncoderConfig spatial{input_size, strides, in_channels};
  spatial.validate();
  if (d_sem < 1 || width < 0 || head_hidden < 0 || blocks_per_level < 0 || expand < 1 || dw_kernel < 1 ||
      dw_kernel % 2 == 0) {
    throw InvalidArgumentError("scfam config: invalid widths or kernel sizes");
  }
  for (std::size_t i = 1; i < strides.size(); ++i) {
    const int ratio = strides[i] / strides[i - 1];
    if ((ratio & (ratio - 1)) != 0) throw InvalidArgumentError("scfam config: stride ratios must be powers of two");
  }
}

ScfamModel ScfamModel::create(const ScfamConfig& config) {
  config.validate();
  ScfamModel m;
  m.config_ = config;
  Initializer init(config.seed);
  Builder b{m.params_, init};
  const int width = config.unified_width();
  const int hidden = config.hidden_width();
  const int levels = config.levels();

  for (int l = 0; l < levels; ++l) {
    const std::string p = "adapter" + std::to_string(l);
    const int cin = config.in_channels[l];
    m.adapters.push_back({b.weight(p + ".pointwise.weight", {1, 1, cin, width}), b.zeros(p + ".pointwise.bias", width),
                          b.ones(p + ".norm.scale", width), b.zeros(p + ".norm.shift", width),
                          b.weight(p + ".local.weight", {3, 3, width, width}), b.zeros(p + ".local.bias", width),
                          cin == width});
  }
  m.fusion.blocks.resize(levels);
  for (int l = 0; l < levels; ++l) {
    for (int k = 0; k < config.blocks_per_level; ++k) {
      const std::string p = "fusion.level" + std::to_string(l) + ".block" + std::to_string(k);
      const int wide = width * config.expand;
      m.fusion.blocks[l].push_back({b.weight(p + ".dw.weight", {config.dw_kernel, config.dw_kernel, width}),
                                    b.zeros(p + ".dw.bias", width), b.ones(p + ".norm.scale", width),
                                    b.zeros(p + ".norm.shift", width),
                                    b.weight(p + ".expand.weight", {1, 1, width, wide}),
                                    b.zeros(p + ".expand.bias", wide),
                                    b.weight(p + ".contract.weight", {1, 1, wide, width}),
                                    b.zeros(p + ".contract.bias", width)});
    }
  }
  for (int l = 0; l + 1 < levels; ++l) {
    const std::string p = "fusion.upsample" + std::to_string(l);
    m.fusion.upsample_convs.push_back({b.weight(p + ".weight", {3, 3, width, width}), b.zeros(p + ".bias", width)});
  }
  for (int l = 0; l < levels; ++l) {
    m.recon_heads.push_back(b.head("recon" + std::to_string(l), width, hidden, config.in_channels[l]));
  }
  m.semantic_heads.push_back(b.head("semantic.cos", width, hidden, config.d_sem));
  m.semantic_heads.push_back(b.head("semantic.mse", width, hidden, config.d_sem));
  return m;
}

void check_geometry(const ScfamModel& model, const MultiScaleFeatures& spatial) {
  const auto& c = model.config();
  if (static_cast<int>(spatial.levels.size()) != c.levels()) {
    throw InvalidArgumentError("scfam: expected " + std::to_string(c.levels()) + " feature levels");
  }
  for (int l = 0; l < c.levels(); ++l) {
    const int side = c.input_size / c.strides[l];
    const Raster& r = spatial.levels[l];
    if (r.height() != side || r.width() != side || r.channels() != c.in_channels[l]) {
      throw InvalidArgumentError("scfam: level " + std::to_string(l) + " has shape " + std::to_string(r.height()) +
                                 "x" + std::to_string(r.width()) + "x" + std::to_string(r.channels()) +
                                 ", expected " + std::to_string(side) + "x" + std::to_string(side) + "x" +
                                 std::to_string(c.in_channels[l]));
    }
  }
}

nn::Var build_adapter(nn::Tape& tape, const AdapterParams& p, nn::Var x) {
  nn::Var h = tape.conv(x, p.pointwise_kernel, p.pointwise_bias);
  h = tape.layer_norm(h, p.norm_scale, p.norm_shift);
  h = tape.gelu(h);
  h = tape.conv(h, p.local_kernel, p.local_bias);
  return p.residual ? tape.add(h, x) : h;
}

namespace {

nn::Var build_block(nn::Tape& tape, const BlockParams& p, nn::Var x) {
  nn::Var h = tape.depthwise_conv(x, p.dw_kernel, p.dw_bias);
  h = tape.layer_norm(h, p.norm_scale, p.norm_shift);
  h = tape.conv(h, p.expand_kernel, p.expand_bias);
  h = tape.gelu(h);
  h = tape.conv(h, p.contract_kernel, p.contract_bias);
  return tape.add(x, h);
}

nn::Var build_stack(nn::Tape& tape, const std::vector<BlockParams>& blocks, nn::Var x) {
  for (const auto& b : blocks) x = build_block(tape, b, x);
  return x;
}

}  // namespace

nn::Var build_fusion(nn::Tape& tape, const ScfamModel& model, const std::vector<nn::Var>& adapted) {
  const int levels = model.config().levels();
  if (static_cast<int>(adapted.size()) != levels) throw InvalidArgumentError("fuse: level count mismatch");
  const int width = model.config().unified_width();
  for (int l = 0; l < levels; ++l) {
    const Raster& r = tape.value(adapted[l]);
    if (r.channels() != width) throw InvalidArgumentError("fuse: adapted levels must share the unified width");
    if (l > 0) {
      const Raster& finer = tape.value(adapted[l - 1]);
      const int ratio = model.config().strides[l] / model.config().strides[l - 1];
      if (finer.height() != r.height() * ratio || finer.width() != r.width() * ratio) {
        throw InvalidArgumentError("fuse: inconsistent level shapes");
      }
    }
  }
  nn::Var acc = build_stack(tape, model.fusion.blocks[levels - 1], adapted[levels - 1]);
  for (int l = levels - 2; l >= 0; --l) {
    const Raster& target = tape.value(adapted[l]);
    // 2x per octave until the finer level's resolution is reached
    while (tape.value(acc).height() < target.height()) {
      const Raster& cur = tape.value(acc);
      acc = tape.resize(acc, cur.height() * 2, cur.width() * 2);
    }
    const auto& up = model.fusion.upsample_convs[l];
    acc = tape.add(acc, tape.conv(acc, up.kernel, up.bias));
    acc = tape.add(acc, adapted[l]);
    acc = build_stack(tape, model.fusion.blocks[l], acc);
  }
  return acc;
}

nn::Var build_head(nn::Tape& tape, const ProjectionHeadParams& p, nn::Var x) {
  nn::Var h = tape.conv(x, p.hidden_kernel, p.hidden_bias);
  h = tape.gelu(h);
  return tape.conv(h, p.out_kernel, p.out_bias);
}

ScfamGraph build_scfam(nn::Tape& tape, const ScfamModel& model, const MultiScaleFeatures& spatial) {
  check_geometry(model, spatial);
  const auto& c = model.config();
  ScfamGraph g;
  for (int l = 0; l < c.levels(); ++l) {
    g.inputs.push_back(tape.constant(spatial.levels[l]));
    g.adapted.push_back(build_adapter(tape, model.adapters[l], g.inputs.back()));
  }
  g.fused = build_fusion(tape, model, g.adapted);
  for (int l = 0; l < c.levels(); ++l) {
    const nn::Var head = build_head(tape, model.recon_heads[l], g.fused);
    g.recon.push_back(tape.avg_pool(head, c.strides[l] / c.strides[0]));
  }
  g.sem_cos = build_head(tape, model.semantic_heads[0], g.fused);
  g.sem_mse = build_head(tape, model.semantic_heads[1], g.fused);
  return g;
}

Raster adapter_forward(const ScfamModel& model, int level, const Raster& x) {
  if (level < 0 || level >= model.config().levels()) throw InvalidArgumentError("adapter_forward: bad level");
  if (x.channels() != model.config().in_channels[level]) {
    throw InvalidArgumentError("adapter_forward: expected " + std::to_string(model.config().in_channels[level]) +
                               " input channels");
  }
  nn::Tape tape(model.params(), nullptr);
  return tape.value(build_adapter(tape, model.adapters[level], tape.constant(x)));
}

Raster fuse(const ScfamModel& model, const std::vector<Raster>& adapted) {
  nn::Tape tape(model.params(), nullptr);
  std::vector<nn::Var> vars;
  for (const auto& r : adapted) vars.push_back(tape.constant(r));
  return tape.value(build_fusion(tape, model, vars));
}

ScfamOutputs scfam_forward(const ScfamModel& model, const MultiScaleFeatures& spatial) {
  nn::Tape tape(model.params(), nullptr);
  const auto g = build_scfam(tape, model, spatial);
  ScfamOutputs out;
  for (nn::Var v : g.recon) out.recon.push_back(tape.value(v));
  out.sem_cos = tape.value(g.sem_cos);
  out.sem_mse = tape.value(g.sem_mse);
  out.fused = tape.value(g.fused);
  return out;
}

Raster inference_embedding(const ScfamModel& model, const MultiScaleFeatures& spatial) {
  nn::Tape tape(model.params(), nullptr);
  check_geometry(model, spatial);
  std::vector<nn::Var> adapted;
  for (int l = 0; l < model.config().levels(); ++l) {
    adapted.push_back(build_adapter(tape, model.adapters[l], tape.constant(spatial.levels[l])));
  }
  const nn::Var fused = build_fusion(tape, model, adapted);
  Raster emb = tape.value(build_head(tape, model.semantic_heads[0], fused));
  normalize_pixels(emb);
  const int side = model.config().input_size;
  emb = bilinear_resize(emb, side, side);
  normalize_pixels(emb);
  return emb;
}

namespace {

constexpr const char* kCheckpointMagic = "UVCDCKPT";

Raster tensor_to_raster(const nn::Tensor& t) {
  int c = t.shape.empty() ? 1 : t.shape.back();
  int w = t.shape.size() >= 2 ? t.shape[t.shape.size() - 2] : 1;
  int h = 1;
  for (std::size_t i = 0; i + 2 < t.shape.size(); ++i) h *= t.shape[i];
  Raster r(h, w, c);
  std::copy(t.data.begin(), t.data.end(), r.values().begin());
  return r;
}

json config_json(const ScfamConfig& c) {
  return {{"input_size", c.input_size}, {"strides", c.strides},       {"in_channels", c.in_channels},
          {"d_sem", c.d_sem},           {"width", c.width},           {"blocks_per_level", c.blocks_per_level},
          {"head_hidden", c.head_hidden}, {"expand", c.expand},       {"dw_kernel", c.dw_kernel},
          {"seed", c.seed}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ScfamModel& model, long step) {
  const auto& params = model.params();
  json manifest;
  manifest["config"] = config_json(model.config());
  manifest["step"] = step;
  json tensors = json::array();
  for (int i = 0; i < params.size(); ++i) tensors.push_back({{"name", params.name(i)}, {"shape", params[i].shape}});
  manifest["tensors"] = tensors;
  std::ostringstream out(std::ios::binary);
  out << kCheckpointMagic << '\n' << manifest.dump() << '\n';
  for (int i = 0; i < params.size(); ++i) write_raster(out, tensor_to_raster(params[i]));
  write_file_atomic(path, out.str());
}

ScfamModel load_checkpoint(const std::filesystem::path& path, long* step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  std::string magic, line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic || !std::getline(in, line)) throw ModelError("not a checkpoint: " + path.string());
  json manifest;
  try {
    manifest = json::parse(line);
    const auto& jc = manifest.at("config");
    ScfamConfig c;
    c.input_size = jc.at("input_size");
    c.strides = jc.at("strides").get<std::vector<int>>();
    c.in_channels = jc.at("in_channels").get<std::vector<int>>();
    c.d_sem = jc.at("d_sem");
    c.width = jc.at("width");
    c.blocks_per_level = jc.at("blocks_per_level");
    c.head_hidden = jc.at("head_hidden");
    c.expand = jc.at("expand");
    c.dw_kernel = jc.at("dw_kernel");
    c.seed = jc.at("seed");
    ScfamModel model = ScfamModel::create(c);
    auto& params = model.params();
    const auto& tensors = manifest.at("tensors");
    if (static_cast<int>(tensors.size()) != params.size()) throw ModelError("checkpoint tensor count mismatch");
    for (int i = 0; i < params.size(); ++i) {
      const auto& jt = tensors.at(static_cast<std::size_t>(i));
      if (jt.at("name").get<std::string>() != params.name(i) ||
          jt.at("shape").get<std::vector<int>>() != params[i].shape) {
        throw ModelError("checkpoint tensor " + params.name(i) + " does not match the configured geometry");
      }
      const Raster r = read_raster(in);
      if (r.size() != params[i].numel()) throw ModelError("checkpoint tensor size mismatch: " + params.name(i));
      std::copy(r.values().begin(), r.values().end(), params[i].data.begin());
    }
    if (step) *step = manifest.at("step").get<long>();
    return model;
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const IoError& e) {
    throw ModelError(std::string("corrupt checkpoint: ") + e.what());
  }
}

}  // namespace univcd
