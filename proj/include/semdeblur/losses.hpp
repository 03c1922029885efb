#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semdeblur/nn.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {

struct LossWeights {
  double lambda_s = 50.0;
  double lambda_p = 1e-5;
  double lambda_adv = 5e-5;

  void validate() const;
};

// Classes whose probability maps weight the structural term.
inline constexpr std::array<int, 8> kStructuralClasses = {
    kLeftEyebrow, kRightEyebrow, kLeftEye, kRightEye,
    kNose,        kUpperLip,     kLowerLip, kTeeth};

struct StructuralMaskSet {
  struct Mask {
    int class_id;
    Tensor<double> mask;  // 1 x H x W, values in [0,1]
  };
  std::vector<Mask> masks;
};

// Every loss below returns its value and, when `grad` is non-null, writes
// dL/dpred (shape of pred). Reductions are means over all elements.

// mean |pred - gt|
template <typename T>
double content_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                    Tensor<T>* grad = nullptr);

// Soft probability channel of each structural class, no thresholding.
StructuralMaskSet structural_masks(const SemanticMap& sem);

// sum_k mean(mask_k * |pred - gt|), masks broadcast over color channels.
template <typename T>
double structural_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                       const SemanticMap& sem, Tensor<T>* grad = nullptr);

// Named-layer feature extractor. extract() caches what backward() needs for
// the most recent call.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::string> layer_names() const = 0;
  virtual std::map<std::string, Tensor<T>> extract(const Tensor<T>& image,
                                                   const std::vector<std::string>& layers) = 0;
  // dL/dimage for the most recent extract() given dL/dfeature per layer.
  virtual Tensor<T> backward(const std::map<std::string, Tensor<T>>& grads) = 0;
};

// Raw pixels exposed as the single layer "pixels".
template <typename T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  std::vector<std::string> layer_names() const override { return {"pixels"}; }
  std::map<std::string, Tensor<T>> extract(const Tensor<T>& image,
                                           const std::vector<std::string>& layers) override;
  Tensor<T> backward(const std::map<std::string, Tensor<T>>& grads) override;
};

// Fixed-seed stack of (3x3 conv -> ReLU -> 2x2 average pool) stages. Stage i
// output is exposed as "pool<i+1>". Stands in for a pretrained face network.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit RandomConvExtractor(int num_stages = 5, int channels = 8,
                               std::uint64_t seed = 1234);

  std::vector<std::string> layer_names() const override;
  std::map<std::string, Tensor<T>> extract(const Tensor<T>& image,
                                           const std::vector<std::string>& layers) override;
  Tensor<T> backward(const std::map<std::string, Tensor<T>>& grads) override;

 private:
  struct Stage {
    nn::Conv2d<T> conv;
    nn::Relu<T> relu;
    nn::AvgPool2<T> pool;
  };
  std::vector<Stage> stages_;
  int depth_used_ = 0;
  int input_h_ = 0, input_w_ = 0;
};

inline const std::vector<std::string>& default_perceptual_layers() {
  static const std::vector<std::string> layers = {"pool2", "pool5"};
  return layers;
}

// sum over layers of mean squared feature difference.
template <typename T>
double perceptual_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                       FeatureExtractor<T>& feat,
                       const std::vector<std::string>& layers,
                       Tensor<T>* grad = nullptr);

struct AdversarialLosses {
  double g_loss;  // -log D(G(B))
  double d_loss;  // -log D(I) - log(1 - D(G(B)))
};

inline constexpr double kProbEpsilon = 1e-7;

// Probabilities are clamped to [eps, 1 - eps] first.
AdversarialLosses adversarial_losses(double d_real, double d_fake);

// Per-scale terms. Perceptual and adversarial terms belong only to the finest
// scale.
struct ScaleTerms {
  double content = 0.0;
  double structural = 0.0;
  std::optional<double> perceptual;
  std::optional<double> adversarial;
};

// sum_scales (Lc + ls*Ls) + lp*Lp + ladv*Ladv, scales ordered coarse to fine.
// Throws ContractError if a coarse scale carries perceptual/adversarial terms.
double total_loss(std::span<const ScaleTerms> scales, const LossWeights& weights);

}  // namespace semdeblur
