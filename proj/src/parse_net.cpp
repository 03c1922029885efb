#include "semdeblur/parse_net.hpp"

#include <cmath>

namespace semdeblur {

void ParsingModelConfig::validate() const {
  if (num_classes != kNumClasses) throw ParameterError("num_classes must be 11");
  if (encoder_depth < 1) throw ParameterError("encoder_depth must be >= 1");
  if (base_channels < 1) throw ParameterError("base_channels must be >= 1");
  if (!skip_connections) throw ParameterError("skip connections are required");
  if (image_size % (1 << encoder_depth) != 0) {
    throw ParameterError("image size must be divisible by 2^encoder_depth");
  }
}

int ParsingModelConfig::level_channels(int level) const {
  return level == 0 ? base_channels : base_channels << (level - 1);
}

template <typename T>
ParsingModel<T>::ParsingModel(const ParsingModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  for (int l = 0; l <= cfg_.encoder_depth; ++l) {
    const int in = l == 0 ? 3 : cfg_.level_channels(l - 1);
    const int ch = cfg_.level_channels(l);
    const std::string p = "parse.enc" + std::to_string(l);
    encoder_.push_back({nn::Conv2d<T>(p + ".conv", in, ch, 3, l == 0 ? 1 : 2, 1),
                        {},
                        nn::Conv2d<T>(p + ".conv2", ch, ch, 3),
                        {}});
    encoder_.back().conv.init_he(rng);
    encoder_.back().conv2.init_he(rng);
  }
  for (int l = 0; l < cfg_.encoder_depth; ++l) {
    const int ch = cfg_.level_channels(l);
    const int below = cfg_.level_channels(l + 1);
    const std::string p = "parse.dec" + std::to_string(l);
    decoder_.push_back({nn::ConvTranspose2d<T>(p + ".up", below, ch, 4, 2, 1),
                        {},
                        nn::Conv2d<T>(p + ".fuse", 2 * ch, ch, 3),
                        {}});
    decoder_.back().up.init_he(rng);
    decoder_.back().fuse.init_he(rng);
  }
  head_ = nn::Conv2d<T>("parse.head", cfg_.level_channels(0), cfg_.num_classes, 1);
  if (cfg_.zero_head) {
    head_.zero();
  } else {
    head_.init_he(rng, 1.0);
  }
}

template <typename T>
Tensor<T> ParsingModel<T>::forward(const Tensor<T>& image) {
  const int n = cfg_.image_size;
  if (image.channels() != 3 || image.height() != n || image.width() != n) {
    throw InputError("parsing model expects 3x" + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + image.shape_string());
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> h = image;
  for (auto& lv : encoder_) {
    h = lv.relu2.forward(lv.conv2.forward(lv.relu.forward(lv.conv.forward(h))));
    skips.push_back(h);
  }
  for (int l = cfg_.encoder_depth - 1; l >= 0; --l) {
    auto& d = decoder_[l];
    const Tensor<T> up = d.relu.forward(d.up.forward(h));
    const Tensor<T>* parts[] = {&up, &skips[l]};
    h = d.relu2.forward(d.fuse.forward(concat_channels<T>(parts)));
  }
  return head_.forward(h);
}

template <typename T>
void ParsingModel<T>::backward(const Tensor<T>& grad_scores) {
  Tensor<T> g = head_.backward(grad_scores);
  std::vector<Tensor<T>> skip_grads(encoder_.size());
  for (int l = 0; l < cfg_.encoder_depth; ++l) {
    auto& d = decoder_[l];
    const int ch = cfg_.level_channels(l);
    const Tensor<T> g_cat = d.fuse.backward(d.relu2.backward(g));
    skip_grads[l] = slice_channels(g_cat, ch, ch);
    g = d.up.backward(d.relu.backward(slice_channels(g_cat, 0, ch)));
  }
  // g now holds the gradient flowing into the deepest encoder output.
  for (int l = cfg_.encoder_depth; l >= 0; --l) {
    auto& lv = encoder_[l];
    if (!skip_grads[l].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += skip_grads[l][i];
    }
    g = lv.conv.backward(lv.relu.backward(lv.conv2.backward(lv.relu2.backward(g))),
                         l > 0);
  }
}

template <typename T>
nn::ParamList<T> ParsingModel<T>::parameters() {
  nn::ParamList<T> out;
  for (auto& lv : encoder_) {
    lv.conv.collect(out);
    lv.conv2.collect(out);
  }
  for (auto& d : decoder_) {
    d.up.collect(out);
    d.fuse.collect(out);
  }
  head_.collect(out);
  return out;
}

template <typename T>
std::vector<nn::ConvInfo> ParsingModel<T>::describe() const {
  std::vector<nn::ConvInfo> out;
  for (const auto& lv : encoder_) {
    out.push_back(lv.conv.info());
    out.push_back(lv.conv2.info());
  }
  for (const auto& d : decoder_) {
    out.push_back(d.up.info());
    out.push_back(d.fuse.info());
  }
  out.push_back(head_.info());
  return out;
}

template class ParsingModel<float>;
template class ParsingModel<double>;

std::size_t parsing_parameter_count(const ParsingModelConfig& cfg) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) {
    return in * out * k * k + out;
  };
  std::size_t n = 0;
  for (int l = 0; l <= cfg.encoder_depth; ++l) {
    const std::size_t in = l == 0 ? 3 : cfg.level_channels(l - 1);
    const std::size_t ch = cfg.level_channels(l);
    n += conv(in, ch, 3) + conv(ch, ch, 3);
  }
  for (int l = 0; l < cfg.encoder_depth; ++l) {
    const std::size_t ch = cfg.level_channels(l);
    n += conv(cfg.level_channels(l + 1), ch, 4) + conv(2 * ch, ch, 3);
  }
  return n + conv(cfg.level_channels(0), cfg.num_classes, 1);
}

template <typename T>
Tensor<double> softmax_classes(const Tensor<T>& scores) {
  Tensor<double> p(scores.channels(), scores.height(), scores.width());
  const std::size_t plane = scores.plane_size();
  const int c = scores.channels();
  for (std::size_t i = 0; i < plane; ++i) {
    double mx = -INFINITY;
    for (int k = 0; k < c; ++k) mx = std::max(mx, static_cast<double>(scores[k * plane + i]));
    double s = 0.0;
    for (int k = 0; k < c; ++k) {
      p[k * plane + i] = std::exp(static_cast<double>(scores[k * plane + i]) - mx);
      s += p[k * plane + i];
    }
    for (int k = 0; k < c; ++k) p[k * plane + i] /= s;
  }
  return p;
}

template Tensor<double> softmax_classes(const Tensor<float>&);
template Tensor<double> softmax_classes(const Tensor<double>&);

template <typename T>
double cross_entropy(const Tensor<T>& scores, const SemanticMap& target,
                     Tensor<T>* grad) {
  if (!scores.same_shape(target.probs)) {
    throw SizeError("cross_entropy: shape mismatch");
  }
  const Tensor<double> p = softmax_classes(scores);
  const std::size_t plane = scores.plane_size();
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target.probs[i] > 0.0) {
      loss -= target.probs[i] * std::log(std::max(p[i], 1e-300));
    }
  }
  if (grad) {
    *grad = Tensor<T>(scores.channels(), scores.height(), scores.width());
    for (std::size_t i = 0; i < p.size(); ++i) {
      (*grad)[i] = static_cast<T>((p[i] - target.probs[i]) / plane);
    }
  }
  return loss / static_cast<double>(plane);
}

template double cross_entropy(const Tensor<float>&, const SemanticMap&, Tensor<float>*);
template double cross_entropy(const Tensor<double>&, const SemanticMap&, Tensor<double>*);

SemanticMap parse_face(ParsingModel<float>& model, const Image& image) {
  return SemanticMap{softmax_classes(model.forward(tensor_cast<float>(image)))};
}

double fscore(const Tensor<int>& pred, const Tensor<int>& gt, int class_id) {
  if (!pred.same_shape(gt)) throw SizeError("fscore: shape mismatch");
  if (class_id < 0 || class_id >= kNumClasses) throw ParameterError("class_id out of range");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == class_id;
    const bool g = gt[i] == class_id;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  const bool pred_empty = tp + fp == 0;
  const bool gt_empty = tp + fn == 0;
  if (pred_empty && gt_empty) return 1.0;
  if (pred_empty || gt_empty) return 0.0;
  return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace semdeblur
