#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semdeblur/rng.hpp"
#include "semdeblur/tensor.hpp"

namespace semdeblur::nn {

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
void zero_grad(const ParamList<T>& params);

// FNV-1a over the raw parameter bytes; used to verify frozen networks.
template <typename T>
std::uint64_t checksum(const ParamList<T>& params);

template <typename T>
std::size_t count_parameters(const ParamList<T>& params);

// Static description of a convolution, for architecture introspection.
struct ConvInfo {
  std::string name;
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
  bool transposed;
};

// 2D convolution (cross-correlation) via im2col + GEMM. Weight layout is
// (out, in, k, k); the last forward input is cached for backward.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel,
         int stride = 1, int pad = -1);

  void init_he(Rng& rng, double gain = 2.0);
  void zero();

  Tensor<T> forward(const Tensor<T>& x);
  // Accumulates weight/bias gradients; returns dL/dx when requested. With
  // grad_channels >= 0 only the first grad_channels input channels of dL/dx
  // are computed.
  Tensor<T> backward(const Tensor<T>& grad_out, bool input_grad = true,
                     int grad_channels = -1);

  void collect(ParamList<T>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  ConvInfo info() const {
    return {name_, in_, out_, k_, stride_, false};
  }
  int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }

 private:
  std::string name_;
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// Transposed convolution; weight layout (in, out, k, k). Output spatial size
// is (n - 1) * stride - 2 * pad + k.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_channels, int out_channels,
                  int kernel, int stride, int pad);

  void init_he(Rng& rng, double gain = 2.0);
  // Bilinear-upsampling weights (identity across matching channels).
  void init_bilinear();

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out, bool input_grad = true);

  void collect(ParamList<T>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  ConvInfo info() const { return {name_, in_, out_, k_, stride_, true}; }

 private:
  std::string name_;
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;

 private:
  Tensor<T> output_;
};

// 2x2 average pooling, stride 2.
template <typename T>
class AvgPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out) const;
};

struct AdamConfig {
  double learning_rate = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter order.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, AdamConfig cfg);

  // grad_scale multiplies gradients before the update (e.g. 1/batch).
  void step(double grad_scale = 1.0);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Moment buffers exposed for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace semdeblur::nn
