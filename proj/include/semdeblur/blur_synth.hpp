#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "semdeblur/tensor.hpp"

namespace semdeblur {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct CameraTrajectory {
  std::vector<Point2> positions;  // kernel-grid units, centered
  std::int64_t rng_seed = 0;

  int num_steps() const { return static_cast<int>(positions.size()); }
};

inline constexpr int kMinKernelSize = 13;
inline constexpr int kMaxKernelSize = 27;
inline constexpr std::array<int, 8> kKernelSizes = {13, 15, 17, 19,
                                                    21, 23, 25, 27};

// Normalized point-spread function stored row-major, size x size.
struct BlurKernel {
  int size = 0;
  std::vector<double> taps;
  std::int64_t source_seed = 0;

  double at(int row, int col) const { return taps[row * size + col]; }
  double sum() const;
  static BlurKernel delta(int size);
};

enum class Boundary { kReplicate };

struct DegradationConfig {
  double noise_sigma = 0.01;
  Boundary boundary = Boundary::kReplicate;
  std::int64_t rng_seed = 0;
};

enum class BankSplit { kTrain, kTest };

struct KernelBank {
  std::vector<BlurKernel> kernels;
  BankSplit split = BankSplit::kTrain;

  // Distinct kernel sizes, ascending.
  std::vector<int> sizes() const;
};

struct TrajectoryParams {
  int num_steps = 256;
  double inertia = 0.95;
  double impulse_prob = 0.005;
  double step_sigma = 1.0;
};

// 2D inertial random walk: v <- inertia*v + N(0, step_sigma^2) per axis, and
// with probability impulse_prob the velocity is reversed and doubled.
// Positions are returned with their mean subtracted.
CameraTrajectory sample_trajectory(int num_steps, double inertia,
                                   double impulse_prob, std::int64_t rng_seed,
                                   double step_sigma = 1.0);

// Bilinear splat of every trajectory point onto a size x size grid centered
// on the grid center. Trajectories that do not fit are isotropically shrunk.
// Taps are rounded to float32 precision so a bank survives a file round trip
// bit-exactly.
BlurKernel rasterize_kernel(const CameraTrajectory& traj, int size);

// Per-channel 2D correlation (not flipped convolution) with replicate border.
// Evaluated as x_c + sum_k K_k (x_k - x_c), which is exact on constant
// images. No clipping; exposed for linearity tests.
Image correlate(const Image& image, const BlurKernel& kernel);

// correlate() clamped to [0,1].
Image apply_blur(const Image& image, const BlurKernel& kernel,
                 Boundary boundary = Boundary::kReplicate);

// Blur, add i.i.d. Gaussian noise drawn from cfg.rng_seed, clip to [0,1].
Image degrade(const Image& image, const BlurKernel& kernel,
              const DegradationConfig& cfg);

// `count` kernels assigned round-robin over `sizes`; kernel i draws its
// trajectory from mix_seed(seed, i).
KernelBank generate_kernel_bank(int count, const std::vector<int>& sizes,
                                std::int64_t seed,
                                const TrajectoryParams& params = {},
                                BankSplit split = BankSplit::kTrain);

// True when no source_seed appears in both banks.
bool banks_disjoint(const KernelBank& a, const KernelBank& b);

// Binary layout: "KBNK1", u32 count, u32 n_sizes, i32 sizes[n_sizes], then
// per kernel i64 seed, i32 k, k*k little-endian float32 taps (row-major).
void save_kernel_bank(const KernelBank& bank, const std::filesystem::path& path);
KernelBank load_kernel_bank(const std::filesystem::path& path);

// Kernel as 8-bit grayscale PNG scaled so the max tap maps to 255.
void write_kernel_png(const BlurKernel& kernel,
                      const std::filesystem::path& path);

}  // namespace semdeblur
