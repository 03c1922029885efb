#pragma once

#include <array>
#include <string_view>

#include "semdeblur/tensor.hpp"

namespace semdeblur {

inline constexpr int kNumClasses = 11;

enum FaceClass : int {
  kBackground = 0,
  kFaceSkin = 1,
  kLeftEyebrow = 2,
  kRightEyebrow = 3,
  kLeftEye = 4,
  kRightEye = 5,
  kNose = 6,
  kUpperLip = 7,
  kLowerLip = 8,
  kTeeth = 9,
  kHair = 10,
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "background", "face_skin", "left_eyebrow", "right_eyebrow",
    "left_eye",   "right_eye", "nose",         "upper_lip",
    "lower_lip",  "teeth",     "hair"};

// Per-pixel probability distribution over the 11 face classes.
struct SemanticMap {
  Tensor<double> probs;  // kNumClasses x H x W

  int height() const { return probs.height(); }
  int width() const { return probs.width(); }

  // Throws InputError unless channels == 11, probs >= 0 and every pixel
  // sums to 1 within tol.
  void validate(double tol = 1e-5) const;
  bool is_valid(double tol = 1e-5) const;

  static SemanticMap uniform(int height, int width);
};

// One-hot encoding of a single-channel label image; throws LabelError on
// indices outside 0..10.
SemanticMap encode_labels(const Tensor<int>& labels);

// Most probable class per pixel; ties resolve to the lower class index.
Tensor<int> argmax_labels(const SemanticMap& map);

// Area-weighted resampling per channel followed by per-pixel renormalization.
SemanticMap resample_semantic(const SemanticMap& map, int out_height,
                              int out_width);

// Area-weighted resampling of any tensor (box filter with fractional
// coverage). Used for images as well as semantic channels.
Tensor<double> area_resample(const Tensor<double>& t, int out_height,
                             int out_width);

// Divides every pixel's class vector by its sum.
void renormalize(SemanticMap& map);

}  // namespace semdeblur
