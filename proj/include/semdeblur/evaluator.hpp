#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "semdeblur/dataset.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {

inline constexpr double kPsnrDisplayCap = 60.0;

// 10 log10(1 / MSE) over all channels; +inf when the images are identical.
double psnr(const Image& a, const Image& b);

// Rec. 601 luma of an RGB image (single channel passes through).
Image luma(const Image& rgb);

// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) of the luma
// channel, K1 = 0.01, K2 = 0.03, L = 1.
double ssim(const Image& a, const Image& b);

struct ImageMetrics {
  std::size_t entry_id = 0;
  int kernel_size = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsSummary {
  std::size_t count = 0;
  double mean_psnr = 0.0;  // +inf if any row is +inf
  double mean_ssim = 0.0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  MetricsSummary overall;
  std::map<int, MetricsSummary> per_kernel_size;
  std::vector<std::string> errors;  // per-entry failures
  // Restored-vs-clear identity distance per row, when an embedder was given.
  std::vector<double> identity_distances;
  std::string checkpoint_id;
  std::string manifest_id;

  // Recomputes the aggregates from per_image.
  void aggregate();

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary_json() const;
  static MetricsReport read_csv(const std::filesystem::path& path);
};

// Embedding with unit L2 norm.
class FaceEmbedder {
 public:
  virtual ~FaceEmbedder() = default;
  virtual std::vector<double> embed(const Image& image) const = 0;
};

// 16x16 area-downsampled luma, mean-subtracted, L2-normalized. Constant
// images (zero vector after centering) map to the first basis vector.
class DownsampleEmbedder final : public FaceEmbedder {
 public:
  explicit DownsampleEmbedder(int side = 16) : side_(side) {}
  std::vector<double> embed(const Image& image) const override;

 private:
  int side_;
};

// Semantic prior for a test sample; normally parse(sample.blurred).
using ParserFn = std::function<SemanticMap(const FaceSample& sample)>;
using RestoreFn =
    std::function<Image(const Image& blurred, const SemanticMap& semantics)>;

// Parse each blurred entry, restore it, and score the restoration against
// the clear image. Entry failures are collected in report.errors.
MetricsReport evaluate_deblurring(const RestoreFn& restore, const ParserFn& parser,
                                  const Dataset& test_set,
                                  const FaceEmbedder* embedder = nullptr);

double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

// ||embed(a) - embed(b)||; throws ContractError when an embedding is not
// unit-norm within 1e-6.
double identity_distance(const FaceEmbedder& embedder, const Image& a, const Image& b);

struct LabeledEmbedding {
  std::string identity;
  std::vector<double> embedding;
};

// Fraction of probes whose identity is among the k nearest gallery entries
// (L2 distance, ties broken by gallery index). Throws ProtocolError when a
// probe identity is missing from the gallery.
double topk_recognition(const std::vector<LabeledEmbedding>& probes,
                        const std::vector<LabeledEmbedding>& gallery, int k);

// Per-class F-scores for each named condition (e.g. "clear/pre-trained").
struct ParsingReport {
  std::vector<std::string> conditions;
  std::vector<std::array<double, kNumClasses>> scores;  // mean over images

  void write_csv(const std::filesystem::path& path) const;
};

// Mean per-class F-score of predicted vs ground-truth label images.
std::array<double, kNumClasses> mean_fscores(
    const std::vector<Tensor<int>>& predictions,
    const std::vector<Tensor<int>>& ground_truth);

// PSNR/SSIM versus kernel size line plots and identity-distance bars.
void plot_metrics_by_kernel(const std::vector<std::pair<std::string, MetricsReport>>& runs,
                            const std::filesystem::path& psnr_png,
                            const std::filesystem::path& ssim_png);
void plot_bars(const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title, const std::filesystem::path& png);

}  // namespace semdeblur
