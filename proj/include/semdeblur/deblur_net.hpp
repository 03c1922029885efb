#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "semdeblur/nn.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {

struct GeneratorConfig {
  int num_scales = 2;
  int resblocks_per_scale = 6;
  int first_conv_kernel = 11;
  int conv_kernel = 5;
  int channels = 64;
  int scale1_in_channels = 3 + kNumClasses;
  int scale2_in_channels = 3 + 3 + kNumClasses;
  int image_size = 128;

  // Throws ParameterError when an invariant is violated.
  void validate() const;
};

struct DiscriminatorConfig {
  int input_size = 128;
  int strided_layers = 6;
  int base_channels = 32;
  int max_channels = 256;

  void validate() const;
};

// One scale: first conv (large kernel) -> ResBlocks -> output conv to RGB.
// ResBlock = conv -> ReLU -> conv, plus identity skip.
template <typename T>
class ScalePath {
 public:
  ScalePath() = default;
  ScalePath(const std::string& prefix, int in_channels, const GeneratorConfig& cfg);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  // Returns dL/dx for the first input_grad_channels input channels.
  Tensor<T> backward(const Tensor<T>& grad_out, int input_grad_channels);
  void collect(nn::ParamList<T>& out);
  void describe(std::vector<nn::ConvInfo>& out) const;

 private:
  struct ResBlock {
    nn::Conv2d<T> conv1, conv2;
    nn::Relu<T> relu;
  };
  nn::Conv2d<T> first_;
  std::vector<ResBlock> blocks_;
  nn::Conv2d<T> last_;
};

template <typename T>
struct GeneratorOutput {
  Tensor<T> out64;
  Tensor<T> out128;
};

// Two-scale semantic-conditioned deblurring generator. Names "out64" and
// "out128" refer to the coarse and fine scales at the default image size.
template <typename T>
class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg, std::uint64_t seed = 0);

  const GeneratorConfig& config() const { return cfg_; }

  // Raw (unclamped) outputs; caches activations for backward.
  GeneratorOutput<T> forward(const Tensor<T>& blurred, const Tensor<T>& semantics);

  // Accumulates parameter gradients from dL/dout64 and dL/dout128.
  void backward(const Tensor<T>& grad64, const Tensor<T>& grad128);

  nn::ParamList<T> parameters();
  std::vector<nn::ConvInfo> describe() const;
  void set_zero();

 private:
  GeneratorConfig cfg_;
  ScalePath<T> scale1_, scale2_;
  nn::ConvTranspose2d<T> upsample_;
};

// Strided conv + ReLU stages followed by a dense head and a sigmoid.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed = 0);

  const DiscriminatorConfig& config() const { return cfg_; }

  // Probability in (0, 1) that `image` is real; caches for backward.
  T forward(const Tensor<T>& image);
  // Backpropagates dL/dprob; returns dL/dimage. Parameter gradients are
  // accumulated only when accumulate_params is true.
  Tensor<T> backward(T grad_prob, bool accumulate_params = true);

  nn::ParamList<T> parameters();
  std::vector<nn::ConvInfo> describe() const;
  void zero_head();

 private:
  DiscriminatorConfig cfg_;
  std::vector<nn::Conv2d<T>> stages_;
  std::vector<nn::Relu<T>> relus_;
  nn::Conv2d<T> head_;
  T last_prob_ = T(0.5);
};

// Inference on 128x128 inputs: validates the semantic map, runs in float and
// clamps both outputs to [0,1].
std::pair<Image, Image> generator_forward(Generator<float>& gen,
                                          const Image& blurred,
                                          const SemanticMap& semantics);

double discriminator_forward(Discriminator<float>& disc, const Image& image);

}  // namespace semdeblur
