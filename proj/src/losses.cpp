#include "semdeblur/losses.hpp"

#include <algorithm>
#include <cmath>

namespace semdeblur {

void LossWeights::validate() const {
  if (!(lambda_s >= 0 && lambda_p >= 0 && lambda_adv >= 0)) {
    throw ParameterError("loss weights must be non-negative");
  }
}

namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw SizeError(std::string(what) + ": shape mismatch " + a.shape_string() +
                    " vs " + b.shape_string());
  }
}

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

}  // namespace

template <typename T>
double content_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad) {
  check_same(pred, gt, "content_loss");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
  }
  if (grad) {
    *grad = Tensor<T>(pred.channels(), pred.height(), pred.width());
    const T inv = static_cast<T>(1.0 / n);
    for (std::size_t i = 0; i < pred.size(); ++i) (*grad)[i] = sign(pred[i] - gt[i]) * inv;
  }
  return acc / n;
}

StructuralMaskSet structural_masks(const SemanticMap& sem) {
  sem.validate();
  StructuralMaskSet set;
  for (int c : kStructuralClasses) {
    set.masks.push_back({c, slice_channels(sem.probs, c, 1)});
  }
  return set;
}

template <typename T>
double structural_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                       const SemanticMap& sem, Tensor<T>* grad) {
  check_same(pred, gt, "structural_loss");
  if (sem.height() != pred.height() || sem.width() != pred.width()) {
    throw SizeError("structural_loss: semantic map resolution differs from prediction");
  }
  const StructuralMaskSet set = structural_masks(sem);
  const std::size_t plane = pred.plane_size();
  const double n = static_cast<double>(pred.size());

  // Combined weight per pixel: sum of structural masks.
  std::vector<double> weight(plane, 0.0);
  for (const auto& m : set.masks) {
    for (std::size_t i = 0; i < plane; ++i) weight[i] += m.mask[i];
  }
  double acc = 0.0;
  for (int c = 0; c < pred.channels(); ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t j = c * plane + i;
      acc += weight[i] *
             std::abs(static_cast<double>(pred[j]) - static_cast<double>(gt[j]));
    }
  }
  if (grad) {
    *grad = Tensor<T>(pred.channels(), pred.height(), pred.width());
    for (int c = 0; c < pred.channels(); ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t j = c * plane + i;
        (*grad)[j] = static_cast<T>(weight[i] / n) * sign(pred[j] - gt[j]);
      }
    }
  }
  return acc / n;
}

template <typename T>
std::map<std::string, Tensor<T>> IdentityExtractor<T>::extract(
    const Tensor<T>& image, const std::vector<std::string>& layers) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& l : layers) {
    if (l != "pixels") throw ParameterError("unknown feature layer " + l);
    out[l] = image;
  }
  return out;
}

template <typename T>
Tensor<T> IdentityExtractor<T>::backward(const std::map<std::string, Tensor<T>>& grads) {
  return grads.at("pixels");
}

template <typename T>
RandomConvExtractor<T>::RandomConvExtractor(int num_stages, int channels,
                                            std::uint64_t seed) {
  if (num_stages < 1 || channels < 1) throw ParameterError("invalid extractor shape");
  Rng rng(seed);
  int in = 3;
  for (int i = 0; i < num_stages; ++i) {
    stages_.push_back({nn::Conv2d<T>("feat.conv" + std::to_string(i + 1), in,
                                     channels, 3),
                       {},
                       {}});
    stages_.back().conv.init_he(rng);
    in = channels;
  }
}

template <typename T>
std::vector<std::string> RandomConvExtractor<T>::layer_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    out.push_back("pool" + std::to_string(i + 1));
  }
  return out;
}

template <typename T>
std::map<std::string, Tensor<T>> RandomConvExtractor<T>::extract(
    const Tensor<T>& image, const std::vector<std::string>& layers) {
  const auto names = layer_names();
  int deepest = 0;
  for (const auto& l : layers) {
    const auto it = std::find(names.begin(), names.end(), l);
    if (it == names.end()) throw ParameterError("unknown feature layer " + l);
    deepest = std::max(deepest, static_cast<int>(it - names.begin()) + 1);
  }
  depth_used_ = deepest;
  input_h_ = image.height();
  input_w_ = image.width();
  std::map<std::string, Tensor<T>> out;
  Tensor<T> h = image;
  for (int i = 0; i < deepest; ++i) {
    auto& s = stages_[i];
    h = s.pool.forward(s.relu.forward(s.conv.forward(h)));
    if (std::find(layers.begin(), layers.end(), names[i]) != layers.end()) {
      out[names[i]] = h;
    }
  }
  return out;
}

template <typename T>
Tensor<T> RandomConvExtractor<T>::backward(
    const std::map<std::string, Tensor<T>>& grads) {
  const auto names = layer_names();
  Tensor<T> g;
  for (int i = depth_used_ - 1; i >= 0; --i) {
    if (auto it = grads.find(names[i]); it != grads.end()) {
      if (g.empty()) {
        g = it->second;
      } else {
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += it->second[j];
      }
    }
    if (g.empty()) continue;
    auto& s = stages_[i];
    g = s.conv.backward(s.relu.backward(s.pool.backward(g)));
  }
  if (g.empty()) return Tensor<T>(3, input_h_, input_w_);
  return g;
}

template <typename T>
double perceptual_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                       FeatureExtractor<T>& feat,
                       const std::vector<std::string>& layers, Tensor<T>* grad) {
  check_same(pred, gt, "perceptual_loss");
  if (layers.empty()) throw ParameterError("perceptual_loss needs at least one layer");
  const auto available = feat.layer_names();
  for (const auto& l : layers) {
    if (std::find(available.begin(), available.end(), l) == available.end()) {
      throw ParameterError("feature extractor does not expose layer " + l);
    }
  }
  const auto target = feat.extract(gt, layers);
  const auto current = feat.extract(pred, layers);  // cached for backward
  double total = 0.0;
  std::map<std::string, Tensor<T>> grads;
  for (const auto& l : layers) {
    const Tensor<T>& a = current.at(l);
    const Tensor<T>& b = target.at(l);
    const double n = static_cast<double>(a.size());
    double acc = 0.0;
    Tensor<T> g(a.channels(), a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc += d * d;
      g[i] = static_cast<T>(2.0 * d / n);
    }
    total += acc / n;
    grads[l] = std::move(g);
  }
  if (grad) *grad = feat.backward(grads);
  return total;
}

AdversarialLosses adversarial_losses(double d_real, double d_fake) {
  const double r = std::clamp(d_real, kProbEpsilon, 1.0 - kProbEpsilon);
  const double f = std::clamp(d_fake, kProbEpsilon, 1.0 - kProbEpsilon);
  return {-std::log(f), -std::log(r) - std::log(1.0 - f)};
}

double total_loss(std::span<const ScaleTerms> scales, const LossWeights& weights) {
  weights.validate();
  if (scales.empty()) throw ContractError("total_loss needs at least one scale");
  double total = 0.0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto& s = scales[i];
    const bool finest = i + 1 == scales.size();
    if (!finest && (s.perceptual || s.adversarial)) {
      throw ContractError("perceptual/adversarial terms are only allowed at the finest scale");
    }
    total += s.content + weights.lambda_s * s.structural;
    if (s.perceptual) total += weights.lambda_p * *s.perceptual;
    if (s.adversarial) total += weights.lambda_adv * *s.adversarial;
  }
  return total;
}

template double content_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double content_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);
template double structural_loss(const Tensor<float>&, const Tensor<float>&,
                                const SemanticMap&, Tensor<float>*);
template double structural_loss(const Tensor<double>&, const Tensor<double>&,
                                const SemanticMap&, Tensor<double>*);
template double perceptual_loss(const Tensor<float>&, const Tensor<float>&,
                                FeatureExtractor<float>&,
                                const std::vector<std::string>&, Tensor<float>*);
template double perceptual_loss(const Tensor<double>&, const Tensor<double>&,
                                FeatureExtractor<double>&,
                                const std::vector<std::string>&, Tensor<double>*);
template class IdentityExtractor<float>;
template class IdentityExtractor<double>;
template class RandomConvExtractor<float>;
template class RandomConvExtractor<double>;

}  // namespace semdeblur
