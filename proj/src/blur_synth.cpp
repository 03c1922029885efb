#include "semdeblur/blur_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "semdeblur/binary_io.hpp"
#include "semdeblur/image_io.hpp"
#include "semdeblur/rng.hpp"

namespace semdeblur {

double BlurKernel::sum() const {
  double s = 0.0;
  for (double t : taps) s += t;
  return s;
}

BlurKernel BlurKernel::delta(int size) {
  if (size < 1 || size % 2 == 0) throw ParameterError("kernel size must be odd");
  BlurKernel k;
  k.size = size;
  k.taps.assign(static_cast<std::size_t>(size) * size, 0.0);
  k.taps[(size / 2) * size + size / 2] = 1.0;
  return k;
}

std::vector<int> KernelBank::sizes() const {
  std::set<int> s;
  for (const auto& k : kernels) s.insert(k.size);
  return {s.begin(), s.end()};
}

CameraTrajectory sample_trajectory(int num_steps, double inertia,
                                   double impulse_prob, std::int64_t rng_seed,
                                   double step_sigma) {
  if (num_steps < 2) throw ParameterError("num_steps must be >= 2");
  if (!(inertia >= 0.0 && inertia <= 1.0)) {
    throw ParameterError("inertia must lie in [0,1]");
  }
  if (!(impulse_prob >= 0.0 && impulse_prob <= 1.0)) {
    throw ParameterError("impulse_prob must lie in [0,1]");
  }
  if (!(step_sigma >= 0.0) || !std::isfinite(step_sigma)) {
    throw ParameterError("step_sigma must be finite and >= 0");
  }

  Rng rng(static_cast<std::uint64_t>(rng_seed));
  CameraTrajectory traj;
  traj.rng_seed = rng_seed;
  traj.positions.reserve(num_steps);

  Point2 p;
  Point2 v{step_sigma * rng.normal(), step_sigma * rng.normal()};
  traj.positions.push_back(p);
  for (int i = 1; i < num_steps; ++i) {
    p.x += v.x;
    p.y += v.y;
    traj.positions.push_back(p);
    v.x = inertia * v.x + step_sigma * rng.normal();
    v.y = inertia * v.y + step_sigma * rng.normal();
    if (rng.uniform() < impulse_prob) {
      v.x *= -2.0;
      v.y *= -2.0;
    }
  }

  Point2 mean;
  for (const auto& q : traj.positions) {
    mean.x += q.x;
    mean.y += q.y;
  }
  mean.x /= num_steps;
  mean.y /= num_steps;
  for (auto& q : traj.positions) {
    q.x -= mean.x;
    q.y -= mean.y;
  }
  return traj;
}

BlurKernel rasterize_kernel(const CameraTrajectory& traj, int size) {
  if (size < 3 || size % 2 == 0) {
    throw ParameterError("kernel size must be odd and >= 3");
  }
  if (traj.positions.empty()) throw ParameterError("empty trajectory");

  const double half = (size - 1) / 2.0;
  double extent = 0.0;
  for (const auto& p : traj.positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ParameterError("trajectory has non-finite positions");
    }
    extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
  }
  const double scale = extent > half ? half / extent : 1.0;

  BlurKernel k;
  k.size = size;
  k.source_seed = traj.rng_seed;
  k.taps.assign(static_cast<std::size_t>(size) * size, 0.0);
  auto splat = [&](int row, int col, double w) {
    if (w <= 0.0) return;
    if (row < 0 || row >= size || col < 0 || col >= size) return;
    k.taps[row * size + col] += w;
  };
  for (const auto& p : traj.positions) {
    // Clamp guards against the scaled extent landing a hair outside the grid.
    const double gx = std::clamp(half + p.x * scale, 0.0, size - 1.0);
    const double gy = std::clamp(half + p.y * scale, 0.0, size - 1.0);
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0;
    const double fy = gy - y0;
    splat(y0, x0, (1 - fx) * (1 - fy));
    splat(y0, x0 + 1, fx * (1 - fy));
    splat(y0 + 1, x0, (1 - fx) * fy);
    splat(y0 + 1, x0 + 1, fx * fy);
  }

  const double total = k.sum();
  if (!(total > 0.0)) throw InternalError("kernel mass fell outside the grid");
  for (double& t : k.taps) t = static_cast<float>(t / total);
  return k;
}

Image correlate(const Image& image, const BlurKernel& kernel) {
  const int k = kernel.size;
  if (image.height() < k || image.width() < k) {
    throw SizeError("kernel " + std::to_string(k) + "x" + std::to_string(k) +
                    " larger than image " + image.shape_string());
  }
  const int r = k / 2;
  const int h = image.height();
  const int w = image.width();
  const int ph = h + 2 * r;
  const int pw = w + 2 * r;

  // Nonzero taps only; motion kernels are sparse.
  struct Tap {
    int dy, dx;
    double v;
  };
  std::vector<Tap> taps;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (kernel.at(i, j) != 0.0) taps.push_back({i, j, kernel.at(i, j)});

  Image out(image.channels(), h, w);
  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = std::clamp(y - r, 0, h - 1);
      for (int x = 0; x < pw; ++x) {
        padded[y * pw + x] = image(c, sy, std::clamp(x - r, 0, w - 1));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double center = image(c, y, x);
        double acc = 0.0;
        for (const auto& t : taps) {
          acc += t.v * (padded[(y + t.dy) * pw + x + t.dx] - center);
        }
        out(c, y, x) = center + acc;
      }
    }
  }
  return out;
}

Image apply_blur(const Image& image, const BlurKernel& kernel,
                 Boundary /*boundary*/) {
  Image out = correlate(image, kernel);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i], 0.0, 1.0);
  }
  return out;
}

Image degrade(const Image& image, const BlurKernel& kernel,
              const DegradationConfig& cfg) {
  if (!(cfg.noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be >= 0");
  Image out = apply_blur(image, kernel, cfg.boundary);
  if (cfg.noise_sigma == 0.0) return out;
  Rng rng(static_cast<std::uint64_t>(cfg.rng_seed));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(out[i] + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
  }
  return out;
}

KernelBank generate_kernel_bank(int count, const std::vector<int>& sizes,
                                std::int64_t seed,
                                const TrajectoryParams& params,
                                BankSplit split) {
  if (count < 1) throw ParameterError("kernel count must be >= 1");
  if (sizes.empty()) throw ParameterError("empty kernel size list");
  for (int s : sizes) {
    if (s % 2 == 0 || s < kMinKernelSize || s > kMaxKernelSize) {
      throw ParameterError("kernel size " + std::to_string(s) +
                           " outside odd range 13..27");
    }
  }
  KernelBank bank;
  bank.split = split;
  bank.kernels.reserve(count);
  for (int i = 0; i < count; ++i) {
    const auto kseed = static_cast<std::int64_t>(
        mix_seed(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(i)));
    const auto traj = sample_trajectory(params.num_steps, params.inertia,
                                        params.impulse_prob, kseed,
                                        params.step_sigma);
    bank.kernels.push_back(rasterize_kernel(traj, sizes[i % sizes.size()]));
  }
  return bank;
}

bool banks_disjoint(const KernelBank& a, const KernelBank& b) {
  std::set<std::int64_t> seeds;
  for (const auto& k : a.kernels) seeds.insert(k.source_seed);
  return std::none_of(b.kernels.begin(), b.kernels.end(), [&](const auto& k) {
    return seeds.count(k.source_seed) > 0;
  });
}

void save_kernel_bank(const KernelBank& bank,
                      const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os.write("KBNK1", 5);
  const auto sizes = bank.sizes();
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(bank.kernels.size()));
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) binio::write_pod<std::int32_t>(os, s);
  for (const auto& k : bank.kernels) {
    binio::write_pod<std::int64_t>(os, k.source_seed);
    binio::write_pod<std::int32_t>(os, k.size);
    for (double t : k.taps) binio::write_pod<float>(os, static_cast<float>(t));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

KernelBank load_kernel_bank(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open kernel bank " + path.string());
  binio::expect_magic(is, "KBNK1");
  const auto count = binio::read_pod<std::uint32_t>(is);
  const auto n_sizes = binio::read_pod<std::uint32_t>(is);
  if (n_sizes > 64) throw CheckpointError("corrupt kernel bank size list");
  std::set<int> declared;
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    declared.insert(binio::read_pod<std::int32_t>(is));
  }
  KernelBank bank;
  bank.kernels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    BlurKernel k;
    k.source_seed = binio::read_pod<std::int64_t>(is);
    k.size = binio::read_pod<std::int32_t>(is);
    if (k.size < 1 || k.size > 255 || !declared.count(k.size)) {
      throw CheckpointError("corrupt kernel size in bank");
    }
    k.taps.resize(static_cast<std::size_t>(k.size) * k.size);
    for (double& t : k.taps) t = binio::read_pod<float>(is);
    bank.kernels.push_back(std::move(k));
  }
  return bank;
}

void write_kernel_png(const BlurKernel& kernel,
                      const std::filesystem::path& path) {
  const double peak = *std::max_element(kernel.taps.begin(), kernel.taps.end());
  Image img(1, kernel.size, kernel.size);
  for (int i = 0; i < kernel.size; ++i)
    for (int j = 0; j < kernel.size; ++j)
      img(0, i, j) = peak > 0 ? kernel.at(i, j) / peak : 0.0;
  write_gray(img, path);
}

}  // namespace semdeblur
