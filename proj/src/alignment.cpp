#include "semdeblur/alignment.hpp"

#include <cmath>
#include <fstream>

namespace semdeblur {

Landmarks canonical_template(int out_size) {
  const double s = out_size / 128.0;
  const Landmarks base = {{{43.5, 51.0},
                           {84.5, 51.0},
                           {64.0, 72.0},
                           {48.5, 92.0},
                           {79.5, 92.0}}};
  Landmarks out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    // Scale about pixel-center coordinates so the template stays centered.
    out[i] = {(base[i].x + 0.5) * s - 0.5, (base[i].y + 0.5) * s - 0.5};
  }
  return out;
}

Similarity Similarity::inverse() const {
  const double n = a * a + b * b;
  Similarity inv{a / n, -b / n, 0.0, 0.0};
  const Point2 t = inv.apply({tx, ty});
  inv.tx = -t.x;
  inv.ty = -t.y;
  return inv;
}

Similarity fit_similarity(const Landmarks& from, const Landmarks& to) {
  constexpr double kMinSeparation = 1e-6;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (!std::isfinite(from[i].x) || !std::isfinite(from[i].y)) {
      throw AlignmentError("non-finite landmark");
    }
    for (std::size_t j = i + 1; j < from.size(); ++j) {
      if (std::hypot(from[i].x - from[j].x, from[i].y - from[j].y) <
          kMinSeparation) {
        throw AlignmentError("coincident landmarks " + std::to_string(i) +
                             " and " + std::to_string(j));
      }
    }
  }

  Point2 mf, mt;
  for (std::size_t i = 0; i < from.size(); ++i) {
    mf.x += from[i].x;
    mf.y += from[i].y;
    mt.x += to[i].x;
    mt.y += to[i].y;
  }
  const double n = static_cast<double>(from.size());
  mf = {mf.x / n, mf.y / n};
  mt = {mt.x / n, mt.y / n};

  double sxx = 0, syy = 0, sxy = 0, num_re = 0, num_im = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double fx = from[i].x - mf.x, fy = from[i].y - mf.y;
    const double gx = to[i].x - mt.x, gy = to[i].y - mt.y;
    sxx += fx * fx;
    syy += fy * fy;
    sxy += fx * fy;
    // (g) * conj(f) in complex form.
    num_re += gx * fx + gy * fy;
    num_im += gy * fx - gx * fy;
  }
  const double trace = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  // Smallest/largest eigenvalue ratio of the scatter matrix.
  const double disc = std::sqrt(std::max(0.0, trace * trace / 4 - det));
  const double lmin = trace / 2 - disc;
  const double lmax = trace / 2 + disc;
  if (lmax <= 0.0 || lmin / lmax < 1e-6) {
    throw AlignmentError("collinear landmarks");
  }

  Similarity s{num_re / trace, num_im / trace, 0.0, 0.0};
  const Point2 r = s.apply(mf);
  s.tx = mt.x - r.x;
  s.ty = mt.y - r.y;
  return s;
}

template <typename T>
Tensor<T> warp(const Tensor<T>& t, const Similarity& out_to_src,
               int out_height, int out_width) {
  Tensor<T> out(t.channels(), out_height, out_width);
  const int h = t.height(), w = t.width();
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Point2 p = out_to_src.apply({static_cast<double>(x),
                                         static_cast<double>(y)});
      const double sx = std::clamp(p.x, 0.0, w - 1.0);
      const double sy = std::clamp(p.y, 0.0, h - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < t.channels(); ++c) {
        // Exact-hit fast path keeps identity warps bit-exact.
        if (fx == 0.0 && fy == 0.0) {
          out(c, y, x) = t(c, y0, x0);
          continue;
        }
        out(c, y, x) = static_cast<T>(
            (1 - fy) * ((1 - fx) * t(c, y0, x0) + fx * t(c, y0, x1)) +
            fy * ((1 - fx) * t(c, y1, x0) + fx * t(c, y1, x1)));
      }
    }
  }
  return out;
}

template Tensor<double> warp(const Tensor<double>&, const Similarity&, int, int);
template Tensor<float> warp(const Tensor<float>&, const Similarity&, int, int);

Image align_face(const Image& image, const Landmarks& landmarks, int out_size) {
  if (out_size < 1) throw ParameterError("out_size must be >= 1");
  const Similarity to_template =
      fit_similarity(landmarks, canonical_template(out_size));
  return warp(image, to_template.inverse(), out_size, out_size);
}

Tensor<int> align_labels(const Tensor<int>& labels, const Landmarks& landmarks,
                         int out_size) {
  const Similarity inv =
      fit_similarity(landmarks, canonical_template(out_size)).inverse();
  Tensor<int> out(1, out_size, out_size);
  for (int y = 0; y < out_size; ++y) {
    for (int x = 0; x < out_size; ++x) {
      const Point2 p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int sx = std::clamp(static_cast<int>(std::lround(p.x)), 0, labels.width() - 1);
      const int sy = std::clamp(static_cast<int>(std::lround(p.y)), 0, labels.height() - 1);
      out(0, y, x) = labels(0, sy, sx);
    }
  }
  return out;
}

Landmarks read_landmarks(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read landmarks " + path.string());
  Landmarks lm;
  for (auto& p : lm) {
    if (!(is >> p.x >> p.y)) {
      throw IoError("landmark file needs 5 'x y' rows: " + path.string());
    }
  }
  return lm;
}

void write_landmarks(const Landmarks& lm, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write landmarks " + path.string());
  os.precision(17);
  for (const auto& p : lm) os << p.x << ' ' << p.y << '\n';
}

}  // namespace semdeblur
