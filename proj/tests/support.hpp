#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "semdeblur/blur_synth.hpp"
#include "semdeblur/dataset.hpp"
#include "semdeblur/nn.hpp"
#include "semdeblur/synthetic_faces.hpp"
#include "semdeblur/tensor.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Fresh scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("semdeblur_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct DeskData {
  fs::path dir;
  fs::path manifest;
};

// Synthetic faces (identities x per_identity) crossed with a kernel bank of
// `kernels` kernels spread over `sizes`.
inline DeskData make_desk_dataset(const std::string& name, int identities, int per_identity,
                                  int kernels, const std::vector<int>& sizes,
                                  std::uint64_t seed, bool materialize = false) {
  const fs::path dir = scratch_dir(name);
  semdeblur::FaceSetOptions faces;
  faces.out_dir = dir / "faces";
  faces.identities = identities;
  faces.per_identity = per_identity;
  faces.seed = seed;
  semdeblur::write_synthetic_face_set(faces);

  const auto bank = semdeblur::generate_kernel_bank(kernels, sizes, static_cast<std::int64_t>(seed));
  semdeblur::save_kernel_bank(bank, dir / "bank.kbnk");

  semdeblur::SynthesisOptions opts;
  opts.clear_dir = faces.out_dir / "images";
  opts.labels_dir = faces.out_dir / "labels";
  opts.kernel_bank_path = dir / "bank.kbnk";
  opts.out_dir = dir / "data";
  opts.materialize = materialize;
  opts.seed = seed;
  semdeblur::synthesize_dataset(opts);
  return {dir, dir / "data" / "manifest.jsonl"};
}

template <typename T>
semdeblur::Tensor<T> random_tensor(int c, int h, int w, std::mt19937_64& gen, double lo = 0.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  semdeblur::Tensor<T> t(c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(gen));
  return t;
}

// Zero-initialized biases put ReLU pre-activations exactly on the kink wherever
// an upstream region is dead; gradient checks need a differentiable point.
template <typename T>
void randomize_biases(const semdeblur::nn::ParamList<T>& params, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto* p : params) {
    if (p->name.size() >= 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0) {
      for (auto& v : p->value) v = static_cast<T>(u(gen));
    }
  }
}

// Finite-difference settings for 64-bit gradient checks: eps balances
// truncation against roundoff, and gradients below kGradFloor are compared
// in absolute terms (central-difference roundoff is ~|L| 1e-16 / eps).
inline constexpr double kGradEps = 1e-5;
inline constexpr double kGradFloor = 1e-4;

// Roundoff grows with |L|, so the absolute floor does too.
inline double grad_floor(double loss, double base = kGradFloor) {
  return base * std::max(1.0, std::abs(loss));
}

}  // namespace testsupport
