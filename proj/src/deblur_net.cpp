#include "semdeblur/deblur_net.hpp"

#include <cmath>

namespace semdeblur {

void GeneratorConfig::validate() const {
  if (num_scales != 2) throw ParameterError("generator must have 2 scales");
  if (scale1_in_channels != 3 + kNumClasses) {
    throw ParameterError("scale-1 input must have 14 channels");
  }
  if (scale2_in_channels != 3 + 3 + kNumClasses) {
    throw ParameterError("scale-2 input must have 17 channels");
  }
  if (resblocks_per_scale < 0 || channels < 1) {
    throw ParameterError("invalid generator width/depth");
  }
  if (first_conv_kernel < 1 || first_conv_kernel % 2 == 0 || conv_kernel < 1 ||
      conv_kernel % 2 == 0) {
    throw ParameterError("generator kernels must be odd");
  }
  if (image_size < 2 || image_size % 2 != 0) {
    throw ParameterError("generator image size must be even");
  }
}

void DiscriminatorConfig::validate() const {
  if (strided_layers < 1 || base_channels < 1 || max_channels < 1) {
    throw ParameterError("invalid discriminator config");
  }
  if (input_size % (1 << strided_layers) != 0) {
    throw ParameterError("discriminator input size must be divisible by 2^layers");
  }
}

// ---- ScalePath -------------------------------------------------------------

template <typename T>
ScalePath<T>::ScalePath(const std::string& prefix, int in_channels,
                        const GeneratorConfig& cfg)
    : first_(prefix + ".first", in_channels, cfg.channels, cfg.first_conv_kernel),
      last_(prefix + ".out", cfg.channels, 3, cfg.conv_kernel) {
  for (int i = 0; i < cfg.resblocks_per_scale; ++i) {
    const std::string p = prefix + ".res" + std::to_string(i);
    blocks_.push_back({nn::Conv2d<T>(p + ".conv1", cfg.channels, cfg.channels,
                                     cfg.conv_kernel),
                       nn::Conv2d<T>(p + ".conv2", cfg.channels, cfg.channels,
                                     cfg.conv_kernel),
                       {}});
  }
}

template <typename T>
void ScalePath<T>::init(Rng& rng) {
  first_.init_he(rng, 1.0);
  for (auto& b : blocks_) {
    b.conv1.init_he(rng);
    // Small second conv keeps each block close to identity at start.
    b.conv2.init_he(rng, 0.1);
  }
  last_.init_he(rng, 1.0);
}

template <typename T>
Tensor<T> ScalePath<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = first_.forward(x);
  for (auto& b : blocks_) {
    Tensor<T> r = b.conv2.forward(b.relu.forward(b.conv1.forward(h)));
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += r[i];
  }
  return last_.forward(h);
}

template <typename T>
Tensor<T> ScalePath<T>::backward(const Tensor<T>& grad_out, int input_grad_channels) {
  Tensor<T> g = last_.backward(grad_out);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    Tensor<T> gr = it->conv1.backward(it->relu.backward(it->conv2.backward(g)));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gr[i];
  }
  return first_.backward(g, input_grad_channels > 0, input_grad_channels);
}

template <typename T>
void ScalePath<T>::collect(nn::ParamList<T>& out) {
  first_.collect(out);
  for (auto& b : blocks_) {
    b.conv1.collect(out);
    b.conv2.collect(out);
  }
  last_.collect(out);
}

template <typename T>
void ScalePath<T>::describe(std::vector<nn::ConvInfo>& out) const {
  out.push_back(first_.info());
  for (const auto& b : blocks_) {
    out.push_back(b.conv1.info());
    out.push_back(b.conv2.info());
  }
  out.push_back(last_.info());
}

// ---- Generator -------------------------------------------------------------

template <typename T>
Generator<T>::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  scale1_ = ScalePath<T>("scale1", cfg_.scale1_in_channels, cfg_);
  scale2_ = ScalePath<T>("scale2", cfg_.scale2_in_channels, cfg_);
  upsample_ = nn::ConvTranspose2d<T>("upsample", 3, 3, 4, 2, 1);
  Rng rng(seed);
  scale1_.init(rng);
  scale2_.init(rng);
  upsample_.init_bilinear();
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(const Tensor<T>& blurred,
                                         const Tensor<T>& semantics) {
  const int n = cfg_.image_size;
  if (blurred.channels() != 3 || blurred.height() != n || blurred.width() != n) {
    throw InputError("generator expects a 3x" + std::to_string(n) + "x" +
                     std::to_string(n) + " image, got " + blurred.shape_string());
  }
  if (semantics.channels() != kNumClasses || semantics.height() != n ||
      semantics.width() != n) {
    throw InputError("generator expects an 11-channel semantic map at input size");
  }
  const Tensor<T> blurred_half = downsample2x(blurred);
  const Tensor<T> sem_half = tensor_cast<T>(
      resample_semantic(SemanticMap{tensor_cast<double>(semantics)}, n / 2, n / 2)
          .probs);
  const Tensor<T>* s1_parts[] = {&blurred_half, &sem_half};
  const Tensor<T> s1_in = concat_channels<T>(s1_parts);
  if (s1_in.channels() != cfg_.scale1_in_channels) {
    throw InternalError("scale-1 input channel count mismatch");
  }

  GeneratorOutput<T> out;
  out.out64 = scale1_.forward(s1_in);
  const Tensor<T> up = upsample_.forward(out.out64);
  const Tensor<T>* s2_parts[] = {&up, &blurred, &semantics};
  const Tensor<T> s2_in = concat_channels<T>(s2_parts);
  if (s2_in.channels() != cfg_.scale2_in_channels) {
    throw InternalError("scale-2 input channel count mismatch");
  }
  out.out128 = scale2_.forward(s2_in);
  return out;
}

template <typename T>
void Generator<T>::backward(const Tensor<T>& grad64, const Tensor<T>& grad128) {
  // Only the upsampled channels of the scale-2 input need a gradient.
  const Tensor<T> g_up = scale2_.backward(grad128, 3);
  Tensor<T> g64 = upsample_.backward(g_up, true);
  if (!grad64.empty()) {
    for (std::size_t i = 0; i < g64.size(); ++i) g64[i] += grad64[i];
  }
  scale1_.backward(g64, 0);
}

template <typename T>
nn::ParamList<T> Generator<T>::parameters() {
  nn::ParamList<T> out;
  scale1_.collect(out);
  upsample_.collect(out);
  scale2_.collect(out);
  return out;
}

template <typename T>
std::vector<nn::ConvInfo> Generator<T>::describe() const {
  std::vector<nn::ConvInfo> out;
  scale1_.describe(out);
  out.push_back(upsample_.info());
  scale2_.describe(out);
  return out;
}

template <typename T>
void Generator<T>::set_zero() {
  for (auto* p : parameters()) std::fill(p->value.begin(), p->value.end(), T(0));
}

// ---- Discriminator ---------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int in = 3;
  int ch = cfg_.base_channels;
  for (int i = 0; i < cfg_.strided_layers; ++i) {
    stages_.emplace_back("disc.stage" + std::to_string(i), in, ch, 4, 2, 1);
    stages_.back().init_he(rng);
    relus_.emplace_back();
    in = ch;
    ch = std::min(ch * 2, cfg_.max_channels);
  }
  const int final_size = cfg_.input_size >> cfg_.strided_layers;
  head_ = nn::Conv2d<T>("disc.head", in, 1, final_size, 1, 0);
  head_.init_he(rng, 1.0);
}

template <typename T>
T Discriminator<T>::forward(const Tensor<T>& image) {
  if (image.channels() != 3 || image.height() != cfg_.input_size ||
      image.width() != cfg_.input_size) {
    throw InputError("discriminator expects 3x" + std::to_string(cfg_.input_size) +
                     "x" + std::to_string(cfg_.input_size) + ", got " +
                     image.shape_string());
  }
  Tensor<T> h = image;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = relus_[i].forward(stages_[i].forward(h));
  }
  const double z = static_cast<double>(head_.forward(h)[0]);
  const double p = 1.0 / (1.0 + std::exp(-z));
  last_prob_ = static_cast<T>(p);
  constexpr double kEps = 1e-7;
  return static_cast<T>(std::clamp(p, kEps, 1.0 - kEps));
}

template <typename T>
Tensor<T> Discriminator<T>::backward(T grad_prob, bool accumulate_params) {
  const T p = last_prob_;
  Tensor<T> g(1, 1, 1, grad_prob * p * (T(1) - p));
  nn::ParamList<T> params;
  std::vector<std::vector<T>> saved;
  if (!accumulate_params) {
    params = parameters();
    for (auto* q : params) saved.push_back(q->grad);
  }
  g = head_.backward(g);
  for (std::size_t i = stages_.size(); i-- > 0;) {
    g = stages_[i].backward(relus_[i].backward(g));
  }
  if (!accumulate_params) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = std::move(saved[i]);
  }
  return g;
}

template <typename T>
nn::ParamList<T> Discriminator<T>::parameters() {
  nn::ParamList<T> out;
  for (auto& s : stages_) s.collect(out);
  head_.collect(out);
  return out;
}

template <typename T>
std::vector<nn::ConvInfo> Discriminator<T>::describe() const {
  std::vector<nn::ConvInfo> out;
  for (const auto& s : stages_) out.push_back(s.info());
  out.push_back(head_.info());
  return out;
}

template <typename T>
void Discriminator<T>::zero_head() {
  head_.zero();
}

template class ScalePath<float>;
template class ScalePath<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

std::pair<Image, Image> generator_forward(Generator<float>& gen,
                                          const Image& blurred,
                                          const SemanticMap& semantics) {
  semantics.validate();
  const auto out = gen.forward(tensor_cast<float>(blurred),
                               tensor_cast<float>(semantics.probs));
  return {clamp_unit(out.out64), clamp_unit(out.out128)};
}

double discriminator_forward(Discriminator<float>& disc, const Image& image) {
  return disc.forward(tensor_cast<float>(image));
}

}  // namespace semdeblur
