#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "semdeblur/blur_synth.hpp"
#include "semdeblur/errors.hpp"
#include "semdeblur/rng.hpp"
#include "support.hpp"

using namespace semdeblur;

namespace {

Image random_image(int h, int w, std::mt19937_64& gen) {
  return testsupport::random_tensor<double>(3, h, w, gen);
}

}  // namespace

TEST_CASE("trajectory: still camera gives coincident points") {
  const auto t = sample_trajectory(2, 0.0, 0.0, 5, 0.0);
  REQUIRE(t.positions.size() == 2);
  CHECK(t.positions[0].x == t.positions[1].x);
  CHECK(t.positions[0].y == t.positions[1].y);
}

TEST_CASE("trajectory: centered and deterministic") {
  const auto a = sample_trajectory(2000, 0.7, 0.005, 1);
  const auto b = sample_trajectory(2000, 0.7, 0.005, 1);
  REQUIRE(a.positions.size() == 2000);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    mx += a.positions[i].x;
    my += a.positions[i].y;
    CHECK(a.positions[i].x == b.positions[i].x);
    CHECK(a.positions[i].y == b.positions[i].y);
    CHECK(std::isfinite(a.positions[i].x));
  }
  CHECK(std::abs(mx / 2000) < 1e-9);
  CHECK(std::abs(my / 2000) < 1e-9);
}

TEST_CASE("trajectory: parameter errors") {
  CHECK_THROWS_AS(sample_trajectory(1, 0.5, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(sample_trajectory(10, 1.5, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(sample_trajectory(10, 0.5, -0.1, 1), ParameterError);
}

TEST_CASE("rasterize: coincident points give a delta kernel") {
  CameraTrajectory t;
  t.positions = {{0, 0}, {0, 0}, {0, 0}};
  const auto k = rasterize_kernel(t, 13);
  for (int i = 0; i < 13; ++i) {
    for (int j = 0; j < 13; ++j) CHECK(k.at(i, j) == (i == 6 && j == 6 ? 1.0 : 0.0));
  }
}

TEST_CASE("rasterize: horizontal segment matches a hand-computed splat") {
  // Points at x = -2, -1.5, ..., 2 on the center row of a 13x13 grid: every
  // point splits between two columns of row 6 only.
  CameraTrajectory t;
  for (int i = 0; i <= 8; ++i) t.positions.push_back({-2.0 + 0.5 * i, 0.0});
  const auto k = rasterize_kernel(t, 13);
  std::vector<double> expect(13, 0.0);
  for (int i = 0; i <= 8; ++i) {
    const double gx = 6.0 - 2.0 + 0.5 * i;
    const int x0 = static_cast<int>(std::floor(gx));
    const double f = gx - x0;
    expect[x0] += (1 - f) / 9.0;
    if (f > 0) expect[x0 + 1] += f / 9.0;
  }
  double row_sum = 0.0;
  for (int i = 0; i < 13; ++i) {
    for (int j = 0; j < 13; ++j) {
      if (i != 6) {
        CHECK(k.at(i, j) == 0.0);
      } else {
        CHECK(k.at(i, j) == doctest::Approx(expect[j]).epsilon(1e-7));
        row_sum += k.at(i, j);
      }
    }
  }
  CHECK(std::abs(row_sum - 1.0) < 1e-6);
}

TEST_CASE("rasterize: normalization on random trajectories") {
  for (int s = 0; s < 20; ++s) {
    const auto k = rasterize_kernel(sample_trajectory(256, 0.95, 0.005, s), 27);
    CHECK(std::abs(k.sum() - 1.0) < 1e-6);
    for (double t : k.taps) CHECK(t >= 0.0);
  }
}

TEST_CASE("apply_blur: constant image is a fixed point") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const double c = std::uniform_real_distribution<double>(0, 1)(gen);
    const Image img(3, 32, 32, c);
    const auto k = rasterize_kernel(sample_trajectory(256, 0.95, 0.005, trial), 13 + 2 * (trial % 8));
    const Image out = apply_blur(img, k);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == c);
  }
}

TEST_CASE("apply_blur: delta kernel is the identity") {
  std::mt19937_64 gen(3);
  const Image img = random_image(20, 24, gen);
  CHECK(apply_blur(img, BlurKernel::delta(13)) == img);
}

TEST_CASE("apply_blur: matches direct correlation oracle") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Image img = random_image(16, 16, gen);
    const auto k = oracle::random_kernel(5, gen);
    const Image ref = oracle::direct_correlation(img, k);
    const Image out = correlate(img, k);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - ref[i]));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("correlate: linearity") {
  std::mt19937_64 gen(5);
  const Image x = random_image(20, 20, gen), y = random_image(20, 20, gen);
  const auto k = oracle::random_kernel(7, gen);
  const double a = 0.3, b = -1.7;
  Image mix(3, 20, 20);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Image lhs = correlate(mix, k), cx = correlate(x, k), cy = correlate(y, k);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-9);
}

TEST_CASE("apply_blur: kernel larger than image") {
  CHECK_THROWS_AS(apply_blur(Image(3, 10, 10, 0.5), BlurKernel::delta(13)), SizeError);
}

TEST_CASE("degrade: zero noise with delta kernel is the identity") {
  std::mt19937_64 gen(8);
  const Image img = random_image(16, 16, gen);
  DegradationConfig cfg;
  cfg.noise_sigma = 0.0;
  CHECK(degrade(img, BlurKernel::delta(13), cfg) == img);
}

TEST_CASE("degrade: noise statistics and determinism") {
  const Image img(3, 128, 128, 0.5);
  const auto k = rasterize_kernel(sample_trajectory(256, 0.95, 0.005, 4), 17);
  DegradationConfig cfg;
  cfg.rng_seed = 7;
  const Image a = degrade(img, k, cfg);
  const Image b = degrade(img, k, cfg);
  CHECK(a == b);
  // Per channel plane of 128x128 samples.
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (double v : a.plane(c)) mean += v;
    mean /= 128.0 * 128.0;
    for (double v : a.plane(c)) var += (v - mean) * (v - mean);
    var /= 128.0 * 128.0 - 1;
    CHECK(std::abs(mean - 0.5) <= 3 * 0.01 / 128.0);
    CHECK(std::sqrt(var) == doctest::Approx(0.01).epsilon(0.05));
  }
  cfg.rng_seed = 8;
  CHECK_FALSE(degrade(img, k, cfg) == a);
}

TEST_CASE("kernel bank: round robin and normalization") {
  const auto bank = generate_kernel_bank(8, {13, 27}, 3);
  REQUIRE(bank.kernels.size() == 8);
  int n13 = 0, n27 = 0;
  for (const auto& k : bank.kernels) {
    n13 += k.size == 13;
    n27 += k.size == 27;
  }
  CHECK(n13 == 4);
  CHECK(n27 == 4);

  const std::vector<int> all(kKernelSizes.begin(), kKernelSizes.end());
  const auto test = generate_kernel_bank(80, all, 9, {}, BankSplit::kTest);
  REQUIRE(test.kernels.size() == 80);
  for (int size : all) {
    int n = 0;
    for (const auto& k : test.kernels) n += k.size == size;
    CHECK(n == 10);
  }
  for (const auto& k : test.kernels) {
    CHECK(std::abs(k.sum() - 1.0) < 1e-6);
    for (double t : k.taps) CHECK(t >= 0.0);
  }
  CHECK_THROWS_AS(generate_kernel_bank(8, {}, 3), ParameterError);
  CHECK_THROWS_AS(generate_kernel_bank(8, {14}, 3), ParameterError);
}

TEST_CASE("kernel bank: different seeds share no kernel") {
  const std::vector<int> all(kKernelSizes.begin(), kKernelSizes.end());
  const auto a = generate_kernel_bank(40, all, 3);
  const auto b = generate_kernel_bank(40, all, 4);
  for (const auto& ka : a.kernels) {
    for (const auto& kb : b.kernels) CHECK_FALSE((ka.size == kb.size && ka.taps == kb.taps));
  }
  CHECK(banks_disjoint(a, b));
  CHECK_FALSE(banks_disjoint(a, a));
}

TEST_CASE("kernel bank: file round trip is bit exact") {
  const auto dir = testsupport::scratch_dir("bank_io");
  const std::vector<int> all(kKernelSizes.begin(), kKernelSizes.end());
  const auto bank = generate_kernel_bank(16, all, 12);
  save_kernel_bank(bank, dir / "b.kbnk");
  const auto back = load_kernel_bank(dir / "b.kbnk");
  REQUIRE(back.kernels.size() == bank.kernels.size());
  for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
    CHECK(back.kernels[i].size == bank.kernels[i].size);
    CHECK(back.kernels[i].source_seed == bank.kernels[i].source_seed);
    CHECK(back.kernels[i].taps == bank.kernels[i].taps);
  }
  write_kernel_png(bank.kernels[0], dir / "k0.png");
  CHECK(std::filesystem::exists(dir / "k0.png"));

  std::ofstream(dir / "bad.kbnk") << "NOPE";
  CHECK_THROWS(load_kernel_bank(dir / "bad.kbnk"));
}

TEST_CASE("rng: state round trip and seed mixing") {
  Rng a(42);
  for (int i = 0; i < 10; ++i) a.normal();
  Rng b;
  b.set_state(a.state());
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) == mix_seed(1, 0));
  Rng c(1);
  for (int i = 0; i < 1000; ++i) CHECK(c.below(7) < 7);
}
