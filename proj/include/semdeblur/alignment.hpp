#pragma once

#include <array>
#include <filesystem>

#include "semdeblur/blur_synth.hpp"
#include "semdeblur/tensor.hpp"

namespace semdeblur {

// Order: left eye, right eye, nose tip, left mouth corner, right mouth corner.
using Landmarks = std::array<Point2, 5>;

// Canonical landmark positions for an aligned out_size x out_size face.
Landmarks canonical_template(int out_size = 128);

// Maps output pixel coordinates to source coordinates:
// src = [a -b; b a] * dst + [tx; ty].
struct Similarity {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point2 apply(Point2 p) const {
    return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty};
  }
  Similarity inverse() const;
};

// Least-squares similarity taking `from` onto `to`. Throws AlignmentError
// for coincident or collinear landmark sets.
Similarity fit_similarity(const Landmarks& from, const Landmarks& to);

// Bilinear resampling with replicate border: out(y,x) = t(map(x,y)).
template <typename T>
Tensor<T> warp(const Tensor<T>& t, const Similarity& out_to_src,
               int out_height, int out_width);

// Warps `image` so its landmarks land on the canonical template.
Image align_face(const Image& image, const Landmarks& landmarks,
                 int out_size = 128);

// Nearest-neighbor label warp with the same geometry as align_face.
Tensor<int> align_labels(const Tensor<int>& labels, const Landmarks& landmarks,
                         int out_size = 128);

// Five "x y" rows in the fixed landmark order.
Landmarks read_landmarks(const std::filesystem::path& path);
void write_landmarks(const Landmarks& lm, const std::filesystem::path& path);

}  // namespace semdeblur
