#include "semdeblur/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace semdeblur::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct Geometry {
  int channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t rows() const {
    return static_cast<std::size_t>(channels) * kernel * kernel;
  }
  std::size_t cols() const { return static_cast<std::size_t>(out_h) * out_w; }
};

// Column block for output rows [oy0, oy1):
// cols[(c*k + i)*k + j][(oy - oy0)*out_w + ox] = x[c][oy*s - p + i][ox*s - p + j]
template <typename T>
void im2col(const T* x, const Geometry& g, int oy0, int oy1, T* cols) {
  const std::size_t n = static_cast<std::size_t>(oy1 - oy0) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kernel; ++i) {
      for (int j = 0; j < g.kernel; ++j) {
        T* row = cols + ((static_cast<std::size_t>(c) * g.kernel + i) * g.kernel + j) * n;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int y = oy * g.stride - g.pad + i;
          T* dst = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          if (y < 0 || y >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * g.width;
          if (g.stride == 1) {
            const int x0 = j - g.pad;
            int ox = 0;
            for (; ox < g.out_w && ox + x0 < 0; ++ox) dst[ox] = T(0);
            const int hi = std::min(g.out_w, g.width - x0);
            if (hi > ox) {
              std::memcpy(dst + ox, src + ox + x0, sizeof(T) * (hi - ox));
              ox = hi;
            }
            for (; ox < g.out_w; ++ox) dst[ox] = T(0);
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int xx = ox * g.stride - g.pad + j;
              dst[ox] = (xx >= 0 && xx < g.width) ? src[xx] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds a column block back into x.
template <typename T>
void col2im(const T* cols, const Geometry& g, int oy0, int oy1, T* x) {
  const std::size_t n = static_cast<std::size_t>(oy1 - oy0) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kernel; ++i) {
      for (int j = 0; j < g.kernel; ++j) {
        const T* row =
            cols + ((static_cast<std::size_t>(c) * g.kernel + i) * g.kernel + j) * n;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int y = oy * g.stride - g.pad + i;
          if (y < 0 || y >= g.height) continue;
          T* dst = plane + static_cast<std::size_t>(y) * g.width;
          const T* src = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          if (g.stride == 1) {
            const int x0 = j - g.pad;
            const int lo = std::max(0, -x0);
            const int hi = std::min(g.out_w, g.width - x0);
            for (int ox = lo; ox < hi; ++ox) dst[ox + x0] += src[ox];
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int xx = ox * g.stride - g.pad + j;
              if (xx >= 0 && xx < g.width) dst[xx] += src[ox];
            }
          }
        }
      }
    }
  }
}

// Output rows per column block; keeps the im2col buffer cache-sized.
int block_rows(const Geometry& g) {
  constexpr std::size_t kTarget = 1 << 18;  // elements
  const std::size_t per_row = g.rows() * static_cast<std::size_t>(g.out_w);
  return static_cast<int>(std::clamp<std::size_t>(kTarget / std::max<std::size_t>(per_row, 1), 1,
                                                  static_cast<std::size_t>(g.out_h)));
}

template <typename T>
void fill_normal(std::vector<T>& v, Rng& rng, double stddev) {
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
}

}  // namespace

template <typename T>
Parameter<T>::Parameter(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void zero_grad(const ParamList<T>& params) {
  for (auto* p : params) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <typename T>
std::uint64_t checksum(const ParamList<T>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(T); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ULL;
    }
  }
  return h;
}

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

// ---- Conv2d ----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels,
                  int kernel, int stride, int pad)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad < 0 ? kernel / 2 : pad),
      weight_(name_ + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name_ + ".bias", {out_channels}) {}

template <typename T>
void Conv2d<T>::init_he(Rng& rng, double gain) {
  fill_normal(weight_.value, rng, std::sqrt(gain / (in_ * k_ * k_)));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Conv2d<T>::zero() {
  std::fill(weight_.value.begin(), weight_.value.end(), T(0));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.channels() != in_) {
    throw SizeError(name_ + ": expected " + std::to_string(in_) +
                    " input channels, got " + std::to_string(x.channels()));
  }
  input_ = x;
  const Geometry g{in_, x.height(), x.width(), k_, stride_, pad_,
                   out_size(x.height()), out_size(x.width())};
  Tensor<T> out(out_, g.out_h, g.out_w);
  ConstMapMat<T> w(weight_.value.data(), out_, static_cast<Eigen::Index>(g.rows()));
  MapMat<T> y(out.data(), out_, static_cast<Eigen::Index>(g.cols()));
  if (k_ == 1 && stride_ == 1 && pad_ == 0) {
    ConstMapMat<T> xm(x.data(), in_, static_cast<Eigen::Index>(g.cols()));
    y.noalias() = w * xm;
  } else {
    const int rb = block_rows(g);
    std::vector<T> cols(g.rows() * rb * g.out_w);
    for (int oy0 = 0; oy0 < g.out_h; oy0 += rb) {
      const int oy1 = std::min(g.out_h, oy0 + rb);
      const auto n = static_cast<Eigen::Index>(oy1 - oy0) * g.out_w;
      im2col(x.data(), g, oy0, oy1, cols.data());
      ConstMapMat<T> cm(cols.data(), static_cast<Eigen::Index>(g.rows()), n);
      MapMat<T>(out.data(), out_, static_cast<Eigen::Index>(g.cols()))
          .middleCols(static_cast<Eigen::Index>(oy0) * g.out_w, n)
          .noalias() = w * cm;
    }
  }
  for (int o = 0; o < out_; ++o) y.row(o).array() += bias_.value[o];
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out, bool input_grad,
                               int grad_channels) {
  const Tensor<T>& x = input_;
  const Geometry g{in_, x.height(), x.width(), k_, stride_, pad_,
                   out_size(x.height()), out_size(x.width())};
  if (grad_out.channels() != out_ || grad_out.height() != g.out_h ||
      grad_out.width() != g.out_w) {
    throw SizeError(name_ + ": gradient shape mismatch");
  }
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto n = static_cast<Eigen::Index>(g.cols());
  ConstMapMat<T> go(grad_out.data(), out_, n);
  ConstMapMat<T> w(weight_.value.data(), out_, rows);
  MapMat<T> dw(weight_.grad.data(), out_, rows);
  // Plain loop: Eigen's vectorized sum peels by alignment, which would make
  // results depend on where the buffer happens to be allocated.
  for (int o = 0; o < out_; ++o) {
    const T* row = grad_out.data() + static_cast<std::size_t>(o) * n;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += row[i];
    bias_.grad[o] += static_cast<T>(s);
  }

  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
  Tensor<T> dx;
  if (direct) {
    ConstMapMat<T> xm(x.data(), in_, n);
    dw.noalias() += go * xm.transpose();
    if (input_grad) {
      dx = Tensor<T>(in_, x.height(), x.width());
      MapMat<T>(dx.data(), in_, n).noalias() = w.transpose() * go;
    }
    return dx;
  }
  const int gc = grad_channels < 0 ? in_ : std::min(grad_channels, in_);
  const Geometry gsub{gc, g.height, g.width, k_, stride_, pad_, g.out_h, g.out_w};
  const auto sub_rows = static_cast<Eigen::Index>(gsub.rows());
  if (input_grad) dx = Tensor<T>(gc, x.height(), x.width());
  const int rb = block_rows(g);
  std::vector<T> cols(g.rows() * rb * g.out_w);
  for (int oy0 = 0; oy0 < g.out_h; oy0 += rb) {
    const int oy1 = std::min(g.out_h, oy0 + rb);
    const auto nb = static_cast<Eigen::Index>(oy1 - oy0) * g.out_w;
    const auto go_b = go.middleCols(static_cast<Eigen::Index>(oy0) * g.out_w, nb);
    im2col(x.data(), g, oy0, oy1, cols.data());
    MapMat<T> cm(cols.data(), rows, nb);
    dw.noalias() += go_b * cm.transpose();
    if (input_grad && gc > 0) {
      MapMat<T> cs(cols.data(), sub_rows, nb);
      cs.noalias() = w.leftCols(sub_rows).transpose() * go_b;
      col2im(cols.data(), gsub, oy0, oy1, dx.data());
    }
  }
  return dx;
}

// ---- ConvTranspose2d -------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_channels,
                                    int out_channels, int kernel, int stride,
                                    int pad)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(name_ + ".weight", {in_channels, out_channels, kernel, kernel}),
      bias_(name_ + ".bias", {out_channels}) {}

template <typename T>
void ConvTranspose2d<T>::init_he(Rng& rng, double gain) {
  fill_normal(weight_.value, rng, std::sqrt(gain / (in_ * k_ * k_ / (stride_ * stride_))));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void ConvTranspose2d<T>::init_bilinear() {
  std::fill(weight_.value.begin(), weight_.value.end(), T(0));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  const double factor = (k_ + 1) / 2;
  const double center = factor - (k_ % 2 == 1 ? 1.0 : 0.5);
  for (int c = 0; c < std::min(in_, out_); ++c) {
    for (int i = 0; i < k_; ++i) {
      for (int j = 0; j < k_; ++j) {
        const double w = (1 - std::abs(i - center) / factor) *
                         (1 - std::abs(j - center) / factor);
        weight_.value[((static_cast<std::size_t>(c) * out_ + c) * k_ + i) * k_ + j] =
            static_cast<T>(w);
      }
    }
  }
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  if (x.channels() != in_) {
    throw SizeError(name_ + ": expected " + std::to_string(in_) +
                    " input channels, got " + std::to_string(x.channels()));
  }
  input_ = x;
  const int oh = (x.height() - 1) * stride_ - 2 * pad_ + k_;
  const int ow = (x.width() - 1) * stride_ - 2 * pad_ + k_;
  const Geometry g{out_, oh, ow, k_, stride_, pad_, x.height(), x.width()};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto n = static_cast<Eigen::Index>(g.cols());
  std::vector<T> cols(g.rows() * g.cols());
  MapMat<T> cm(cols.data(), rows, n);
  ConstMapMat<T> w(weight_.value.data(), in_, rows);
  ConstMapMat<T> xm(x.data(), in_, n);
  cm.noalias() = w.transpose() * xm;
  Tensor<T> out(out_, oh, ow);
  col2im(cols.data(), g, 0, g.out_h, out.data());
  for (int o = 0; o < out_; ++o) {
    for (T& v : out.plane(o)) v += bias_.value[o];
  }
  return out;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out, bool input_grad) {
  const Tensor<T>& x = input_;
  const Geometry g{out_, grad_out.height(), grad_out.width(), k_, stride_, pad_,
                   x.height(), x.width()};
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto n = static_cast<Eigen::Index>(g.cols());
  for (int o = 0; o < out_; ++o) {
    T s = 0;
    for (T v : grad_out.plane(o)) s += v;
    bias_.grad[o] += s;
  }
  std::vector<T> cols(g.rows() * g.cols());
  im2col(grad_out.data(), g, 0, g.out_h, cols.data());
  ConstMapMat<T> cm(cols.data(), rows, n);
  ConstMapMat<T> xm(x.data(), in_, n);
  MapMat<T>(weight_.grad.data(), in_, rows).noalias() += xm * cm.transpose();
  Tensor<T> dx;
  if (input_grad) {
    dx = Tensor<T>(in_, x.height(), x.width());
    MapMat<T>(dx.data(), in_, n).noalias() =
        ConstMapMat<T>(weight_.value.data(), in_, rows) * cm;
  }
  return dx;
}

// ---- activations / pooling -------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (T& v : output_.values()) v = v > T(0) ? v : T(0);
  return output_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) const {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(output_[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <typename T>
Tensor<T> AvgPool2<T>::forward(const Tensor<T>& x) {
  return downsample2x(x);
}

template <typename T>
Tensor<T> AvgPool2<T>::backward(const Tensor<T>& grad_out) const {
  Tensor<T> dx(grad_out.channels(), grad_out.height() * 2, grad_out.width() * 2);
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < dx.height(); ++y)
      for (int x = 0; x < dx.width(); ++x)
        dx(c, y, x) = grad_out(c, y / 2, x / 2) / T(4);
  return dx;
}

// ---- Adam ------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), T(0));
    v_.emplace_back(p->size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step = static_cast<T>(cfg_.learning_rate / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg_.epsilon);
  const T scale = static_cast<T>(grad_scale);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = p.grad[j] * scale;
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p.value[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

#define SEMDEBLUR_INSTANTIATE(T)                                      \
  template struct Parameter<T>;                                       \
  template void zero_grad<T>(const ParamList<T>&);                    \
  template std::uint64_t checksum<T>(const ParamList<T>&);            \
  template std::size_t count_parameters<T>(const ParamList<T>&);      \
  template class Conv2d<T>;                                           \
  template class ConvTranspose2d<T>;                                  \
  template class Relu<T>;                                             \
  template class AvgPool2<T>;                                         \
  template class Adam<T>;

SEMDEBLUR_INSTANTIATE(float)
SEMDEBLUR_INSTANTIATE(double)

#undef SEMDEBLUR_INSTANTIATE

}  // namespace semdeblur::nn
