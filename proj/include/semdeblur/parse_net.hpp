#pragma once

#include <cstdint>
#include <vector>

#include "semdeblur/nn.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {

struct ParsingModelConfig {
  int num_classes = kNumClasses;
  int encoder_depth = 4;
  int base_channels = 32;
  bool skip_connections = true;
  int image_size = 128;
  // Zero-initialize the 1x1 classifier so fresh models predict 1/11.
  bool zero_head = false;

  void validate() const;
  // Channel width of encoder level `level` (0 = full-resolution stem).
  int level_channels(int level) const;
};

// Encoder-decoder with skip concatenations: a full-resolution stem, stride-2
// encoder stages, transposed-conv decoder stages that concatenate the
// matching encoder features, and a 1x1 projection to class scores.
template <typename T>
class ParsingModel {
 public:
  ParsingModel(const ParsingModelConfig& cfg, std::uint64_t seed = 0);

  const ParsingModelConfig& config() const { return cfg_; }

  // Pre-softmax class scores, num_classes x H x W.
  Tensor<T> forward(const Tensor<T>& image);
  void backward(const Tensor<T>& grad_scores);

  nn::ParamList<T> parameters();
  std::vector<nn::ConvInfo> describe() const;

 private:
  struct Level {
    nn::Conv2d<T> conv;  // stem conv or stride-2 encoder conv
    nn::Relu<T> relu;
    nn::Conv2d<T> conv2;
    nn::Relu<T> relu2;
  };
  struct UpLevel {
    nn::ConvTranspose2d<T> up;
    nn::Relu<T> relu;
    nn::Conv2d<T> fuse;
    nn::Relu<T> relu2;
  };

  ParsingModelConfig cfg_;
  std::vector<Level> encoder_;
  std::vector<UpLevel> decoder_;  // decoder_[i] produces level i
  nn::Conv2d<T> head_;
};

// Closed-form parameter count for a config (used to check the built model).
std::size_t parsing_parameter_count(const ParsingModelConfig& cfg);

// Softmax over classes; validates the input shape.
SemanticMap parse_face(ParsingModel<float>& model, const Image& image);

// Row-wise softmax of class scores.
template <typename T>
Tensor<double> softmax_classes(const Tensor<T>& scores);

// Mean per-pixel cross-entropy of softmax(scores) against target
// probabilities; writes dL/dscores into grad when non-null.
template <typename T>
double cross_entropy(const Tensor<T>& scores, const SemanticMap& target,
                     Tensor<T>* grad);

// F1 of the pixel masks {pred == c} and {gt == c}. Both empty -> 1.0; exactly
// one empty -> 0.0.
double fscore(const Tensor<int>& pred, const Tensor<int>& gt, int class_id);

}  // namespace semdeblur
