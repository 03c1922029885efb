#include "semdeblur/image_io.hpp"

#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace semdeblur {
namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw IoError("cannot write image " + path.string());
  }
}

}  // namespace

Image read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  Image out(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      out(0, y, x) = row[x][2] / 255.0;
      out(1, y, x) = row[x][1] / 255.0;
      out(2, y, x) = row[x][0] / 255.0;
    }
  }
  return out;
}

void write_rgb(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 3) throw SizeError("write_rgb expects 3 channels");
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x] = cv::Vec3b(to_byte(image(2, y, x)), to_byte(image(1, y, x)),
                         to_byte(image(0, y, x)));
    }
  }
  write_or_throw(path, bgr);
}

Tensor<int> read_index_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read label image " + path.string());
  Tensor<int> out(1, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) out(0, y, x) = m.at<unsigned char>(y, x);
  return out;
}

void write_index_image(const Tensor<int>& labels,
                       const std::filesystem::path& path) {
  cv::Mat m(labels.height(), labels.width(), CV_8UC1);
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x)
      m.at<unsigned char>(y, x) =
          static_cast<unsigned char>(std::clamp(labels(0, y, x), 0, 255));
  write_or_throw(path, m);
}

void write_gray(const Image& image, const std::filesystem::path& path) {
  cv::Mat m(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      m.at<unsigned char>(y, x) = to_byte(image(0, y, x));
  write_or_throw(path, m);
}

Image quantize8(const Image& image) {
  Image out = image;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_byte(out[i]) / 255.0;
  return out;
}

}  // namespace semdeblur
