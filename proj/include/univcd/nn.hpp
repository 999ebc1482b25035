#pragma once

// Minimal reverse-mode differentiation over rasters, covering exactly the operations the
// alignment module needs. Parameters live in a ParamStore; activations are Rasters.

#include <functional>
#include <string>
#include <vector>

#include "univcd/core.hpp"

namespace univcd::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  std::size_t numel() const noexcept { return data.size(); }
};

class ParamStore {
 public:
  /// Registers a zero-filled tensor and returns its id.
  int add(std::string name, std::vector<int> shape);

  Tensor& operator[](int id) { return tensors_.at(static_cast<std::size_t>(id)); }
  const Tensor& operator[](int id) const { return tensors_.at(static_cast<std::size_t>(id)); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  int find(const std::string& name) const;

  int size() const noexcept { return static_cast<int>(tensors_.size()); }
  std::size_t parameter_count() const noexcept;
  std::uint64_t hash() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// Gradient buffers aligned with a ParamStore.
struct Gradients {
  std::vector<std::vector<double>> values;

  static Gradients zeros_like(const ParamStore& params);
  void scale(double s);
  Gradients& operator+=(const Gradients& other);
};

using Var = int;

class Tape {
 public:
  /// `grads` may be null for inference-only evaluation.
  Tape(const ParamStore& params, Gradients* grads);

  /// Leaf without gradient (frozen encoder outputs).
  Var constant(Raster value);
  /// Leaf that accumulates a gradient (used by gradient checks).
  Var variable(Raster value);

  /// Stride-1 convolution with zero "same" padding. Weight shape (k, k, c_in, c_out).
  Var conv(Var x, int weight, int bias);
  /// Depthwise convolution with zero "same" padding. Weight shape (k, k, c).
  Var depthwise_conv(Var x, int weight, int bias);
  /// Per-position normalization across channels with affine (scale, shift) of width c.
  Var layer_norm(Var x, int scale, int shift, double eps = 1e-6);
  /// Exact (erf) GELU.
  Var gelu(Var x);
  Var add(Var a, Var b);
  /// Bilinear resize, same sampling convention as univcd::bilinear_resize.
  Var resize(Var x, int height, int width);
  /// Mean over non-overlapping factor x factor blocks.
  Var avg_pool(Var x, int factor);

  const Raster& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v)).value; }
  /// Gradient accumulated at v (empty raster if none reached it).
  const Raster& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v)).grad; }

  /// Adds g to the gradient of v; call before backward().
  void seed(Var v, const Raster& g);
  /// Propagates all seeded gradients to requires-grad inputs and parameters.
  void backward();

 private:
  struct Node {
    Raster value;
    Raster grad;
    bool requires_grad = false;
    std::function<void(Tape&, Var)> back;
  };

  Var push(Raster value, bool requires_grad, std::function<void(Tape&, Var)> back);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v)].requires_grad; }
  Raster& grad_buffer(Var v);
  std::vector<double>* param_grad(int id);

  const ParamStore& params_;
  Gradients* grads_;
  std::vector<Node> nodes_;
};

}  // namespace univcd::nn
