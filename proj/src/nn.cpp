#include "univcd/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "resample.hpp"

namespace univcd::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Raster& r) {
  return {r.data(), static_cast<Eigen::Index>(r.pixel_count()), r.channels()};
}
MatrixMap as_matrix(Raster& r) { return {r.data(), static_cast<Eigen::Index>(r.pixel_count()), r.channels()}; }

// (H*W) x (k*k*C) patch matrix with zero padding, columns ordered (ky, kx, c).
RowMatrix im2col(const Raster& x, int k) {
  const int h = x.height(), w = x.width(), c = x.channels(), pad = k / 2;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(h) * w, static_cast<Eigen::Index>(k) * k * c);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      double* row = cols.row(static_cast<Eigen::Index>(y) * w + xx).data();
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y + ky - pad;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = xx + kx - pad;
          if (sx < 0 || sx >= w) continue;
          std::copy_n(x.pixel(sy, sx), c, row + (ky * k + kx) * c);
        }
      }
    }
  }
  return cols;
}

void col2im_add(const RowMatrix& cols, int k, Raster& dx) {
  const int h = dx.height(), w = dx.width(), c = dx.channels(), pad = k / 2;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const double* row = cols.row(static_cast<Eigen::Index>(y) * w + xx).data();
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y + ky - pad;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = xx + kx - pad;
          if (sx < 0 || sx >= w) continue;
          double* dst = dx.pixel(sy, sx);
          const double* src = row + (ky * k + kx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5)); }
double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
  const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

}  // namespace

int ParamStore::add(std::string name, std::vector<int> shape) {
  if (find(name) >= 0) throw InvalidArgumentError("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  names_.push_back(std::move(name));
  tensors_.push_back({std::move(shape), std::vector<double>(n, 0.0)});
  return static_cast<int>(tensors_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    h = fnv1a({reinterpret_cast<const std::uint8_t*>(names_[i].data()), names_[i].size()}, h);
    h = fnv1a({reinterpret_cast<const std::uint8_t*>(tensors_[i].data.data()),
               tensors_[i].data.size() * sizeof(double)},
              h);
  }
  return h;
}

Gradients Gradients::zeros_like(const ParamStore& params) {
  Gradients g;
  for (int i = 0; i < params.size(); ++i) g.values.emplace_back(params[i].numel(), 0.0);
  return g;
}

void Gradients::scale(double s) {
  for (auto& v : values) {
    for (double& x : v) x *= s;
  }
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.values.size() != values.size()) throw InvalidArgumentError("gradient layout mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) values[i][j] += other.values[i][j];
  }
  return *this;
}

Tape::Tape(const ParamStore& params, Gradients* grads) : params_(params), grads_(grads) {}

Var Tape::push(Raster value, bool requires_grad, std::function<void(Tape&, Var)> back) {
  nodes_.push_back({std::move(value), Raster{}, requires_grad, std::move(back)});
  return static_cast<Var>(nodes_.size()) - 1;
}

Raster& Tape::grad_buffer(Var v) {
  auto& node = nodes_[static_cast<std::size_t>(v)];
  if (node.grad.empty()) node.grad = Raster(node.value.height(), node.value.width(), node.value.channels());
  return node.grad;
}

std::vector<double>* Tape::param_grad(int id) {
  return grads_ ? &grads_->values.at(static_cast<std::size_t>(id)) : nullptr;
}

Var Tape::constant(Raster value) { return push(std::move(value), false, nullptr); }
Var Tape::variable(Raster value) { return push(std::move(value), true, nullptr); }

void Tape::seed(Var v, const Raster& g) {
  auto& buf = grad_buffer(v);
  if (!buf.same_shape(g)) throw InvalidArgumentError("seed gradient shape mismatch");
  auto dst = buf.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward() {
  for (Var v = static_cast<Var>(nodes_.size()) - 1; v >= 0; --v) {
    auto& node = nodes_[static_cast<std::size_t>(v)];
    if (node.back && !node.grad.empty()) node.back(*this, v);
  }
}

Var Tape::conv(Var x, int weight, int bias) {
  const Raster& in = value(x);
  const Tensor& w = params_[weight];
  if (w.shape.size() != 4 || w.shape[0] != w.shape[1] || w.shape[2] != in.channels()) {
    throw InvalidArgumentError("conv: weight " + params_.name(weight) + " does not match input channels");
  }
  const int k = w.shape[0], cin = w.shape[2], cout = w.shape[3];
  const ConstMatrixMap wm(w.data.data(), static_cast<Eigen::Index>(k) * k * cin, cout);
  const Eigen::Map<const Eigen::RowVectorXd> bm(params_[bias].data.data(), cout);

  Raster out(in.height(), in.width(), cout);
  RowMatrix cols;
  if (k == 1) {
    as_matrix(out).noalias() = as_matrix(in) * wm;
  } else {
    cols = im2col(in, k);
    as_matrix(out).noalias() = cols * wm;
  }
  as_matrix(out).rowwise() += bm;

  const bool rg = needs(x) || grads_ != nullptr;
  return push(std::move(out), rg, [x, weight, bias, k, cin, cout, cols = std::move(cols)](Tape& t, Var self) {
    const Raster& dy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const auto dym = as_matrix(dy);
    const Raster& in = t.value(x);
    if (auto* gw = t.param_grad(weight)) {
      MatrixMap gwm(gw->data(), static_cast<Eigen::Index>(k) * k * cin, cout);
      if (k == 1) {
        gwm.noalias() += as_matrix(in).transpose() * dym;
      } else {
        gwm.noalias() += cols.transpose() * dym;
      }
    }
    if (auto* gb = t.param_grad(bias)) {
      // Plain row-order loop: Eigen's column reduction picks its summation order from the
      // buffer alignment, which made repeated runs differ in the last bits.
      for (Eigen::Index r = 0; r < dym.rows(); ++r) {
        for (int ch = 0; ch < cout; ++ch) (*gb)[static_cast<std::size_t>(ch)] += dym(r, ch);
      }
    }
    if (t.needs(x)) {
      const ConstMatrixMap wm(t.params_[weight].data.data(), static_cast<Eigen::Index>(k) * k * cin, cout);
      Raster& dx = t.grad_buffer(x);
      if (k == 1) {
        as_matrix(dx).noalias() += dym * wm.transpose();
      } else {
        const RowMatrix dcols = dym * wm.transpose();
        col2im_add(dcols, k, dx);
      }
    }
  });
}

Var Tape::depthwise_conv(Var x, int weight, int bias) {
  const Raster& in = value(x);
  const Tensor& w = params_[weight];
  if (w.shape.size() != 3 || w.shape[0] != w.shape[1] || w.shape[2] != in.channels()) {
    throw InvalidArgumentError("depthwise_conv: weight " + params_.name(weight) + " does not match input");
  }
  const int k = w.shape[0], c = w.shape[2], pad = k / 2, h = in.height(), wd = in.width();
  const double* bptr = params_[bias].data.data();
  Raster out(h, wd, c);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < wd; ++xx) {
      double* o = out.pixel(y, xx);
      std::copy_n(bptr, c, o);
      for (int ky = 0; ky < k; ++ky) {
        const int sy = y + ky - pad;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = xx + kx - pad;
          if (sx < 0 || sx >= wd) continue;
          const double* src = in.pixel(sy, sx);
          const double* wt = w.data.data() + (ky * k + kx) * c;
          for (int ch = 0; ch < c; ++ch) o[ch] += src[ch] * wt[ch];
        }
      }
    }
  }
  const bool rg = needs(x) || grads_ != nullptr;
  return push(std::move(out), rg, [x, weight, bias, k, c, pad, h, wd](Tape& t, Var self) {
    const Raster& dy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Raster& in = t.value(x);
    const double* wt_all = t.params_[weight].data.data();
    auto* gw = t.param_grad(weight);
    auto* gb = t.param_grad(bias);
    Raster* dx = t.needs(x) ? &t.grad_buffer(x) : nullptr;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < wd; ++xx) {
        const double* g = dy.pixel(y, xx);
        if (gb) {
          for (int ch = 0; ch < c; ++ch) (*gb)[ch] += g[ch];
        }
        for (int ky = 0; ky < k; ++ky) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= wd) continue;
            const std::size_t tap = static_cast<std::size_t>(ky * k + kx) * c;
            if (gw) {
              const double* src = in.pixel(sy, sx);
              double* gwt = gw->data() + tap;
              for (int ch = 0; ch < c; ++ch) gwt[ch] += src[ch] * g[ch];
            }
            if (dx) {
              double* d = dx->pixel(sy, sx);
              const double* wt = wt_all + tap;
              for (int ch = 0; ch < c; ++ch) d[ch] += wt[ch] * g[ch];
            }
          }
        }
      }
    }
  });
}

Var Tape::layer_norm(Var x, int scale, int shift, double eps) {
  const Raster& in = value(x);
  const int c = in.channels();
  if (static_cast<int>(params_[scale].numel()) != c || static_cast<int>(params_[shift].numel()) != c) {
    throw InvalidArgumentError("layer_norm: affine width mismatch");
  }
  const double* gamma = params_[scale].data.data();
  const double* beta = params_[shift].data.data();
  Raster out(in.height(), in.width(), c);
  Raster xhat(in.height(), in.width(), c);
  std::vector<double> inv_std(in.pixel_count());
  for (std::size_t p = 0; p < in.pixel_count(); ++p) {
    const double* src = in.data() + p * c;
    double mean = 0.0;
    for (int ch = 0; ch < c; ++ch) mean += src[ch];
    mean /= c;
    double var = 0.0;
    for (int ch = 0; ch < c; ++ch) var += (src[ch] - mean) * (src[ch] - mean);
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[p] = is;
    double* xh = xhat.data() + p * c;
    double* o = out.data() + p * c;
    for (int ch = 0; ch < c; ++ch) {
      xh[ch] = (src[ch] - mean) * is;
      o[ch] = gamma[ch] * xh[ch] + beta[ch];
    }
  }
  const bool rg = needs(x) || grads_ != nullptr;
  return push(std::move(out), rg,
              [x, scale, shift, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, Var self) {
                const Raster& dy = t.nodes_[static_cast<std::size_t>(self)].grad;
                const double* gamma = t.params_[scale].data.data();
                auto* gs = t.param_grad(scale);
                auto* gsh = t.param_grad(shift);
                Raster* dx = t.needs(x) ? &t.grad_buffer(x) : nullptr;
                std::vector<double> dxhat(static_cast<std::size_t>(c));
                for (std::size_t p = 0; p < inv_std.size(); ++p) {
                  const double* g = dy.data() + p * c;
                  const double* xh = xhat.data() + p * c;
                  if (gs) {
                    for (int ch = 0; ch < c; ++ch) (*gs)[ch] += g[ch] * xh[ch];
                  }
                  if (gsh) {
                    for (int ch = 0; ch < c; ++ch) (*gsh)[ch] += g[ch];
                  }
                  if (!dx) continue;
                  double mean_d = 0.0, mean_dx = 0.0;
                  for (int ch = 0; ch < c; ++ch) {
                    dxhat[ch] = g[ch] * gamma[ch];
                    mean_d += dxhat[ch];
                    mean_dx += dxhat[ch] * xh[ch];
                  }
                  mean_d /= c;
                  mean_dx /= c;
                  double* d = dx->data() + p * c;
                  for (int ch = 0; ch < c; ++ch) d[ch] += inv_std[p] * (dxhat[ch] - mean_d - xh[ch] * mean_dx);
                }
              });
}

Var Tape::gelu(Var x) {
  const Raster& in = value(x);
  Raster out(in.height(), in.width(), in.channels());
  auto src = in.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = nn::gelu(src[i]);
  return push(std::move(out), needs(x), [x](Tape& t, Var self) {
    const auto g = t.nodes_[static_cast<std::size_t>(self)].grad.values();
    const auto in = t.value(x).values();
    auto d = t.grad_buffer(x).values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * gelu_grad(in[i]);
  });
}

Var Tape::add(Var a, Var b) {
  const Raster& va = value(a);
  const Raster& vb = value(b);
  if (!va.same_shape(vb)) throw InvalidArgumentError("add: shape mismatch");
  Raster out = va;
  auto dst = out.values();
  auto src = vb.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Var self) {
    for (Var in : {a, b}) {
      if (!t.needs(in)) continue;
      const auto g = t.nodes_[static_cast<std::size_t>(self)].grad.values();
      auto d = t.grad_buffer(in).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var Tape::resize(Var x, int height, int width) {
  Raster out = bilinear_resize(value(x), height, width);
  return push(std::move(out), needs(x), [x, height, width](Tape& t, Var self) {
    const Raster& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Raster& d = t.grad_buffer(x);
    const int c = d.channels();
    if (d.height() == height && d.width() == width) {
      auto dv = d.values();
      auto gv = g.values();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += gv[i];
      return;
    }
    const auto rows = detail::linear_taps(d.height(), height);
    const auto cols = detail::linear_taps(d.width(), width);
    for (int y = 0; y < height; ++y) {
      const auto& ty = rows[y];
      for (int xx = 0; xx < width; ++xx) {
        const auto& tx = cols[xx];
        const double* gp = g.pixel(y, xx);
        double* p00 = d.pixel(ty.i0, tx.i0);
        double* p01 = d.pixel(ty.i0, tx.i1);
        double* p10 = d.pixel(ty.i1, tx.i0);
        double* p11 = d.pixel(ty.i1, tx.i1);
        const double w00 = (1.0 - ty.w1) * (1.0 - tx.w1), w01 = (1.0 - ty.w1) * tx.w1;
        const double w10 = ty.w1 * (1.0 - tx.w1), w11 = ty.w1 * tx.w1;
        for (int ch = 0; ch < c; ++ch) {
          p00[ch] += w00 * gp[ch];
          p01[ch] += w01 * gp[ch];
          p10[ch] += w10 * gp[ch];
          p11[ch] += w11 * gp[ch];
        }
      }
    }
  });
}

Var Tape::avg_pool(Var x, int factor) {
  const Raster& in = value(x);
  if (factor < 1 || in.height() % factor != 0 || in.width() % factor != 0) {
    throw InvalidArgumentError("avg_pool: factor must divide the input extent");
  }
  if (factor == 1) return x;
  const int oh = in.height() / factor, ow = in.width() / factor, c = in.channels();
  const double inv = 1.0 / (factor * factor);
  Raster out(oh, ow, c);
  for (int y = 0; y < in.height(); ++y) {
    for (int xx = 0; xx < in.width(); ++xx) {
      const double* src = in.pixel(y, xx);
      double* o = out.pixel(y / factor, xx / factor);
      for (int ch = 0; ch < c; ++ch) o[ch] += src[ch] * inv;
    }
  }
  return push(std::move(out), needs(x), [x, factor, inv, c](Tape& t, Var self) {
    const Raster& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Raster& d = t.grad_buffer(x);
    for (int y = 0; y < d.height(); ++y) {
      for (int xx = 0; xx < d.width(); ++xx) {
        const double* gp = g.pixel(y / factor, xx / factor);
        double* dp = d.pixel(y, xx);
        for (int ch = 0; ch < c; ++ch) dp[ch] += gp[ch] * inv;
      }
    }
  });
}

}  // namespace univcd::nn
