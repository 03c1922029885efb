#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "semdeblur/errors.hpp"

namespace semdeblur {

// Dense channel-major (C, H, W) array. Used both for images (double, values
// in [0,1]) and for network activations (float or double).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) {
      throw SizeError("negative tensor dimension");
    }
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Tensor& o) const {
    return channels_ == o.channels_ && height_ == o.height_ &&
           width_ == o.width_;
  }
  template <typename U>
  bool same_shape(const Tensor<U>& o) const {
    return channels_ == o.channels() && height_ == o.height() &&
           width_ == o.width();
  }

  T& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  const T& operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> plane(int c) {
    return std::span<T>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<const T> plane(int c) const {
    return std::span<const T>(data_).subspan(c * plane_size(), plane_size());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& o) const {
    return same_shape(o) && data_ == o.data_;
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
           std::to_string(width_);
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// RGB or gray images in [0,1], channel-major.
using Image = Tensor<double>;

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.channels(), t.height(), t.width());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

// Stacks tensors of equal spatial size along the channel axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) return {};
  int c = 0;
  const int h = parts.front()->height();
  const int w = parts.front()->width();
  for (const auto* p : parts) {
    if (p->height() != h || p->width() != w) {
      throw SizeError("concat_channels: spatial size mismatch");
    }
    c += p->channels();
  }
  Tensor<T> out(c, h, w);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    std::copy(p->data(), p->data() + p->size(), out.data() + offset);
    offset += p->size();
  }
  return out;
}

// Copies channels [first, first+count) into a new tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.channels()) {
    throw SizeError("slice_channels: channel range out of bounds");
  }
  Tensor<T> out(count, t.height(), t.width());
  std::copy(t.data() + first * t.plane_size(),
            t.data() + (first + count) * t.plane_size(), out.data());
  return out;
}

// Mean over non-overlapping 2x2 blocks; height and width must be even.
template <typename T>
Tensor<T> downsample2x(const Tensor<T>& t) {
  if (t.height() % 2 != 0 || t.width() % 2 != 0) {
    throw SizeError("downsample2x: odd spatial size " + t.shape_string());
  }
  Tensor<T> out(t.channels(), t.height() / 2, t.width() / 2);
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out(c, y, x) = (t(c, 2 * y, 2 * x) + t(c, 2 * y, 2 * x + 1) +
                        t(c, 2 * y + 1, 2 * x) + t(c, 2 * y + 1, 2 * x + 1)) /
                       T(4);
  return out;
}

template <typename T>
Image clamp_unit(const Tensor<T>& t) {
  Image out(t.channels(), t.height(), t.width());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = std::clamp(static_cast<double>(t[i]), 0.0, 1.0);
  return out;
}

}  // namespace semdeblur
