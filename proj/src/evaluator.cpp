#include "semdeblur/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semdeblur/errors.hpp"
#include "semdeblur/parse_net.hpp"

namespace semdeblur {

namespace fs = std::filesystem;

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw SizeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                    b.shape_string());
  }
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += win[i] * src[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += win[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return std::stod(s);
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.size() == 0) throw SizeError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

Image luma(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  if (rgb.channels() != 3) throw SizeError("luma expects 1 or 3 channels");
  Image out(1, rgb.height(), rgb.width());
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      out(0, y, x) = 0.299 * rgb(0, y, x) + 0.587 * rgb(1, y, x) + 0.114 * rgb(2, y, x);
    }
  }
  return out;
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  constexpr int kWin = 11;
  if (a.height() < kWin || a.width() < kWin) {
    throw SizeError("ssim: image smaller than the 11x11 window");
  }
  const Image la = luma(a), lb = luma(b);
  const int h = la.height(), w = la.width();
  const auto win = gaussian_window(kWin, 1.5);
  std::vector<double> x(la.values().begin(), la.values().end());
  std::vector<double> y(lb.values().begin(), lb.values().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, win), my = filter_valid(y, h, w, win);
  const auto sxx = filter_valid(xx, h, w, win), syy = filter_valid(yy, h, w, win);
  const auto sxy = filter_valid(xy, h, w, win);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

// ---- reports ---------------------------------------------------------------

void MetricsReport::aggregate() {
  auto summarize = [](const std::vector<const ImageMetrics*>& rows) {
    MetricsSummary s;
    s.count = rows.size();
    if (rows.empty()) return s;
    for (const auto* r : rows) {
      s.mean_psnr += r->psnr;
      s.mean_ssim += r->ssim;
    }
    s.mean_psnr /= static_cast<double>(rows.size());
    s.mean_ssim /= static_cast<double>(rows.size());
    return s;
  };
  std::vector<const ImageMetrics*> all;
  std::map<int, std::vector<const ImageMetrics*>> by_size;
  for (const auto& r : per_image) {
    all.push_back(&r);
    by_size[r.kernel_size].push_back(&r);
  }
  overall = summarize(all);
  per_kernel_size.clear();
  for (const auto& [k, rows] : by_size) per_kernel_size[k] = summarize(rows);
}

void MetricsReport::write_csv(const fs::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "entry_id,kernel_size,psnr,ssim\n";
  for (const auto& r : per_image) {
    os << r.entry_id << ',' << r.kernel_size << ',' << format_double(r.psnr) << ','
       << format_double(r.ssim) << '\n';
  }
}

MetricsReport MetricsReport::read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  MetricsReport report;
  std::string line;
  std::getline(is, line);
  if (line != "entry_id,kernel_size,psnr,ssim") throw InputError("unexpected metrics header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[4];
    for (auto& s : f) std::getline(ls, s, ',');
    try {
      report.per_image.push_back({std::stoull(f[0]), std::stoi(f[1]), parse_double(f[2]),
                                  parse_double(f[3])});
    } catch (const std::exception&) {
      throw InputError("malformed metrics row: " + line);
    }
  }
  report.aggregate();
  return report;
}

nlohmann::json MetricsReport::summary_json() const {
  // JSON has no infinity; capped values are reported alongside the raw count.
  auto summary = [](const MetricsSummary& s) {
    return nlohmann::json{{"count", s.count},
                          {"mean_psnr", std::min(s.mean_psnr, kPsnrDisplayCap)},
                          {"mean_ssim", s.mean_ssim}};
  };
  nlohmann::json sizes = nlohmann::json::object();
  for (const auto& [k, s] : per_kernel_size) sizes[std::to_string(k)] = summary(s);
  nlohmann::json out = {{"overall", summary(overall)},
          {"per_kernel_size", sizes},
          {"errors", errors},
          {"checkpoint_id", checkpoint_id},
          {"manifest_id", manifest_id}};
  if (!identity_distances.empty()) {
    out["mean_identity_distance"] =
        std::accumulate(identity_distances.begin(), identity_distances.end(), 0.0) /
        static_cast<double>(identity_distances.size());
  }
  return out;
}

MetricsReport evaluate_deblurring(const RestoreFn& restore, const ParserFn& parser,
                                  const Dataset& test_set, const FaceEmbedder* embedder) {
  MetricsReport report;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    try {
      const FaceSample s = test_set.sample(i);
      const Image out = clamp_unit(restore(s.blurred, parser(s)));
      const ImageMetrics row{i, s.kernel_size, psnr(out, s.clear), ssim(out, s.clear)};
      const double id = embedder ? identity_distance(*embedder, out, s.clear) : 0.0;
      report.per_image.push_back(row);
      if (embedder) report.identity_distances.push_back(id);
    } catch (const Error& e) {
      report.errors.push_back("entry " + std::to_string(i) + ": " + e.what());
    } catch (const cv::Exception& e) {
      report.errors.push_back("entry " + std::to_string(i) + ": " + e.what());
    }
  }
  report.aggregate();
  return report;
}

// ---- identity --------------------------------------------------------------

std::vector<double> DownsampleEmbedder::embed(const Image& image) const {
  const Image l = luma(image);
  // Box-average into side x side cells with fractional overlap.
  const auto cells = area_resample(l, side_, side_);
  std::vector<double> v(cells.values().begin(), cells.values().end());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double norm = 0.0;
  for (auto& x : v) {
    x -= mean;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (auto& x : v) x /= norm;
  return v;
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw SizeError("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double identity_distance(const FaceEmbedder& embedder, const Image& a, const Image& b) {
  const auto ea = embedder.embed(a), eb = embedder.embed(b);
  for (const auto* e : {&ea, &eb}) {
    double n = 0.0;
    for (double x : *e) n += x * x;
    if (std::abs(std::sqrt(n) - 1.0) > 1e-6) {
      throw ContractError("embedder returned a non-unit embedding");
    }
  }
  return l2_distance(ea, eb);
}

double topk_recognition(const std::vector<LabeledEmbedding>& probes,
                        const std::vector<LabeledEmbedding>& gallery, int k) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (probes.empty()) throw ProtocolError("no probes");
  std::size_t hits = 0;
  std::vector<std::pair<double, std::size_t>> d(gallery.size());
  for (const auto& probe : probes) {
    bool present = false;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      d[g] = {l2_distance(probe.embedding, gallery[g].embedding), g};
      present = present || gallery[g].identity == probe.identity;
    }
    if (!present) throw ProtocolError("probe identity '" + probe.identity + "' not in gallery");
    const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(top), d.end());
    for (std::size_t i = 0; i < top; ++i) {
      if (gallery[d[i].second].identity == probe.identity) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

// ---- parsing report --------------------------------------------------------

void ParsingReport::write_csv(const fs::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "condition";
  for (const auto& name : kClassNames) os << ',' << name;
  os << '\n' << std::setprecision(6);
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    os << conditions[i];
    for (double v : scores.at(i)) os << ',' << v;
    os << '\n';
  }
}

std::array<double, kNumClasses> mean_fscores(const std::vector<Tensor<int>>& predictions,
                                             const std::vector<Tensor<int>>& ground_truth) {
  if (predictions.size() != ground_truth.size() || predictions.empty()) {
    throw SizeError("prediction and ground-truth lists must be non-empty and equal length");
  }
  std::array<double, kNumClasses> out{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (int c = 0; c < kNumClasses; ++c) out[c] += fscore(predictions[i], ground_truth[i], c);
  }
  for (auto& v : out) v /= static_cast<double>(predictions.size());
  return out;
}

// ---- plots -----------------------------------------------------------------

namespace {

const cv::Scalar kPalette[] = {{200, 60, 30}, {30, 140, 30}, {30, 30, 200},
                               {160, 30, 160}, {30, 160, 160}, {100, 100, 100}};

struct Frame {
  cv::Mat canvas{480, 640, CV_8UC3, cv::Scalar(255, 255, 255)};
  cv::Rect area{70, 40, 540, 380};
  double x0, x1, y0, y1;

  cv::Point map(double x, double y) const {
    const double fx = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
    const double fy = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
    return {area.x + static_cast<int>(fx * area.width),
            area.y + area.height - static_cast<int>(fy * area.height)};
  }

  void axes(const std::string& title, const std::string& ylabel) {
    cv::rectangle(canvas, area, cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, title, {area.x, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1,
                cv::LINE_AA);
    cv::putText(canvas, ylabel, {5, area.y - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
                cv::LINE_AA);
    for (int i = 0; i <= 4; ++i) {
      const double v = y0 + (y1 - y0) * i / 4.0;
      std::ostringstream os;
      os << std::fixed << std::setprecision(2) << v;
      const cv::Point p = map(x0, v);
      cv::putText(canvas, os.str(), {5, p.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1,
                  cv::LINE_AA);
    }
  }

  void save(const fs::path& png) const {
    if (!cv::imwrite(png.string(), canvas)) throw IoError("cannot write " + png.string());
  }
};

void line_plot(const std::vector<std::pair<std::string, MetricsReport>>& runs, bool use_psnr,
               const fs::path& png) {
  Frame f;
  f.x0 = 1e9;
  f.x1 = -1e9;
  f.y0 = 1e9;
  f.y1 = -1e9;
  auto value = [&](const MetricsSummary& s) {
    return use_psnr ? std::min(s.mean_psnr, kPsnrDisplayCap) : s.mean_ssim;
  };
  for (const auto& [name, r] : runs) {
    for (const auto& [k, s] : r.per_kernel_size) {
      f.x0 = std::min<double>(f.x0, k);
      f.x1 = std::max<double>(f.x1, k);
      f.y0 = std::min(f.y0, value(s));
      f.y1 = std::max(f.y1, value(s));
    }
  }
  if (f.x0 > f.x1) throw InputError("nothing to plot");
  const double pad = std::max(1e-3, (f.y1 - f.y0) * 0.1);
  f.y0 -= pad;
  f.y1 += pad;
  f.axes(use_psnr ? "PSNR vs kernel size" : "SSIM vs kernel size", use_psnr ? "dB" : "SSIM");
  for (const auto& [k, s] : runs.front().second.per_kernel_size) {
    const cv::Point p = f.map(k, f.y0);
    cv::putText(f.canvas, std::to_string(k), {p.x - 8, p.y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                {0, 0, 0}, 1, cv::LINE_AA);
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const cv::Scalar color = kPalette[i % std::size(kPalette)];
    cv::Point prev(-1, -1);
    for (const auto& [k, s] : runs[i].second.per_kernel_size) {
      const cv::Point p = f.map(k, value(s));
      cv::circle(f.canvas, p, 3, color, cv::FILLED, cv::LINE_AA);
      if (prev.x >= 0) cv::line(f.canvas, prev, p, color, 2, cv::LINE_AA);
      prev = p;
    }
    cv::putText(f.canvas, runs[i].first, {f.area.x + 10, f.area.y + 20 + 18 * static_cast<int>(i)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
  }
  f.save(png);
}

}  // namespace

void plot_metrics_by_kernel(const std::vector<std::pair<std::string, MetricsReport>>& runs,
                            const fs::path& psnr_png, const fs::path& ssim_png) {
  if (runs.empty()) throw InputError("no reports to plot");
  line_plot(runs, true, psnr_png);
  line_plot(runs, false, ssim_png);
}

void plot_bars(const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title, const fs::path& png) {
  if (bars.empty()) throw InputError("no bars to plot");
  Frame f;
  f.x0 = 0;
  f.x1 = static_cast<double>(bars.size());
  f.y0 = 0;
  f.y1 = 0;
  for (const auto& b : bars) f.y1 = std::max(f.y1, b.second);
  f.y1 = f.y1 > 0 ? f.y1 * 1.1 : 1.0;
  f.axes(title, "");
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const cv::Point top = f.map(i + 0.2, bars[i].second);
    const cv::Point bottom = f.map(i + 0.8, 0);
    cv::rectangle(f.canvas, top, bottom, kPalette[i % std::size(kPalette)], cv::FILLED);
    cv::putText(f.canvas, bars[i].first, {top.x, bottom.y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                {0, 0, 0}, 1, cv::LINE_AA);
  }
  f.save(png);
}

}  // namespace semdeblur
