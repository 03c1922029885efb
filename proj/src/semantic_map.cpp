#include "semdeblur/semantic_map.hpp"

#include <cmath>
#include <vector>

namespace semdeblur {

void SemanticMap::validate(double tol) const {
  if (probs.channels() != kNumClasses) {
    throw InputError("semantic map must have 11 channels, got " +
                     std::to_string(probs.channels()));
  }
  for (int y = 0; y < height(); ++y) {
    for (int x = 0; x < width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < kNumClasses; ++c) {
        const double p = probs(c, y, x);
        if (!(p >= 0.0)) throw InputError("negative or NaN class probability");
        s += p;
      }
      if (std::abs(s - 1.0) > tol) {
        throw InputError("class probabilities do not sum to 1 at (" +
                         std::to_string(y) + "," + std::to_string(x) + ")");
      }
    }
  }
}

bool SemanticMap::is_valid(double tol) const {
  try {
    validate(tol);
    return true;
  } catch (const InputError&) {
    return false;
  }
}

SemanticMap SemanticMap::uniform(int height, int width) {
  return {Tensor<double>(kNumClasses, height, width, 1.0 / kNumClasses)};
}

SemanticMap encode_labels(const Tensor<int>& labels) {
  if (labels.channels() != 1) throw LabelError("label image must be single-channel");
  SemanticMap map{Tensor<double>(kNumClasses, labels.height(), labels.width())};
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const int c = labels(0, y, x);
      if (c < 0 || c >= kNumClasses) {
        throw LabelError("label index " + std::to_string(c) + " out of range");
      }
      map.probs(c, y, x) = 1.0;
    }
  }
  return map;
}

Tensor<int> argmax_labels(const SemanticMap& map) {
  Tensor<int> out(1, map.height(), map.width());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      int best = 0;
      for (int c = 1; c < map.probs.channels(); ++c) {
        if (map.probs(c, y, x) > map.probs(best, y, x)) best = c;
      }
      out(0, y, x) = best;
    }
  }
  return out;
}

namespace {

// Coverage weights of input cells [0,n_in) by output cell i when the axis is
// stretched to n_out cells.
struct Span1d {
  int first = 0;
  std::vector<double> weights;
};

std::vector<Span1d> area_weights(int n_in, int n_out) {
  std::vector<Span1d> spans(n_out);
  const double ratio = static_cast<double>(n_in) / n_out;
  for (int i = 0; i < n_out; ++i) {
    const double lo = i * ratio;
    const double hi = (i + 1) * ratio;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(n_in - 1, static_cast<int>(std::ceil(hi)) - 1);
    spans[i].first = first;
    double total = 0.0;
    for (int j = first; j <= last; ++j) {
      const double w = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      spans[i].weights.push_back(std::max(w, 0.0));
      total += spans[i].weights.back();
    }
    for (double& w : spans[i].weights) w /= total;
  }
  return spans;
}

}  // namespace

Tensor<double> area_resample(const Tensor<double>& t, int out_height,
                             int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw ParameterError("output dimensions must be >= 1");
  }
  if (t.height() == out_height && t.width() == out_width) return t;
  const auto ys = area_weights(t.height(), out_height);
  const auto xs = area_weights(t.width(), out_width);
  Tensor<double> out(t.channels(), out_height, out_width);
  for (int c = 0; c < t.channels(); ++c) {
    for (int y = 0; y < out_height; ++y) {
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (std::size_t a = 0; a < ys[y].weights.size(); ++a) {
          for (std::size_t b = 0; b < xs[x].weights.size(); ++b) {
            acc += ys[y].weights[a] * xs[x].weights[b] *
                   t(c, ys[y].first + static_cast<int>(a),
                     xs[x].first + static_cast<int>(b));
          }
        }
        out(c, y, x) = acc;
      }
    }
  }
  return out;
}

void renormalize(SemanticMap& map) {
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < map.probs.channels(); ++c) s += map.probs(c, y, x);
      if (s <= 0.0) {
        for (int c = 0; c < map.probs.channels(); ++c)
          map.probs(c, y, x) = 1.0 / map.probs.channels();
        continue;
      }
      for (int c = 0; c < map.probs.channels(); ++c) map.probs(c, y, x) /= s;
    }
  }
}

SemanticMap resample_semantic(const SemanticMap& map, int out_height,
                              int out_width) {
  SemanticMap out{area_resample(map.probs, out_height, out_width)};
  renormalize(out);
  return out;
}

}  // namespace semdeblur
