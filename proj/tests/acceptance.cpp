// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and time budgets are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "semdeblur/checkpoint.hpp"
#include "semdeblur/evaluator.hpp"
#include "semdeblur/image_io.hpp"
#include "semdeblur/trainer.hpp"
#include "support.hpp"

using namespace semdeblur;
using testsupport::random_tensor;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kKernelSumTol = 1e-6;
constexpr double kCorrelationTol = 1e-10;
constexpr double kLossOracleTol = 1e-9;
constexpr double kLinearityTol = 1e-12;
constexpr double kGradTol = 1e-6;
constexpr double kSsimSelfTol = 1e-9;
constexpr double kSsimOracleTol = 1e-7;
constexpr double kOverfitGainDb = 3.0;
constexpr double kParseAccuracy = 0.99;

// Budgets in seconds. Criterion 6 is measured against twice criterion 5's
// CPU budget.
constexpr double kBudget1 = 10, kBudget2 = 120, kBudget3 = 10, kBudget4 = 1;
constexpr double kBudget5 = 2 * 3600, kBudget6 = 2 * kBudget5;
constexpr double kBudget7 = 30, kBudget8 = 600, kBudget9 = 300;

// Overfit desk configuration.
constexpr int kOverfitIters = 3000;
constexpr int kOverfitImages = 8;
constexpr int kOverfitKernelSize = 13;

constexpr int kParseMaxIters = 2000;

// Collects failed checks for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream notes;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool run_criterion(int id, const std::string& name, double budget,
                   const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const double t = seconds_since(t0);
  c.expect(t <= budget, "runtime over budget");
  const bool ok = c.failures.empty();
  std::printf("%s criterion %d %s: %s[%.1f s, budget %.0f s]", ok ? "PASS" : "FAIL", id,
              name.c_str(), c.notes.str().c_str(), t, budget);
  for (const auto& f : c.failures) std::printf(" | %s", f.c_str());
  std::printf("\n");
  std::fflush(stdout);
  return ok;
}

double max_abs_diff(const Image& a, const Image& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// ---- 1 ---------------------------------------------------------------------

void degradation(Check& c) {
  const std::vector<int> sizes{13, 15, 17, 19, 21, 23, 25, 27};
  double worst_sum = 0.0;
  for (int s = 0; s < 50; ++s) {
    const auto k = rasterize_kernel(sample_trajectory(256, 0.95, 0.005, s), sizes[s % 8]);
    worst_sum = std::max(worst_sum, std::abs(k.sum() - 1.0));
  }
  for (const auto& k : generate_kernel_bank(16, sizes, 1).kernels) {
    worst_sum = std::max(worst_sum, std::abs(k.sum() - 1.0));
  }
  c.expect(worst_sum <= kKernelSumTol, "kernel sum off by " + std::to_string(worst_sum));

  std::mt19937_64 gen(2024);
  for (int size : sizes) {
    const Image img = random_tensor<double>(3, 32, 30, gen);
    c.expect(apply_blur(img, BlurKernel::delta(size)) == img, "delta kernel changed the image");
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const double v = u(gen);
    const Image img(3, 32, 32, v);
    const auto k = rasterize_kernel(sample_trajectory(256, 0.95, 0.005, 100 + t), sizes[t % 8]);
    const Image out = apply_blur(img, k);
    bool fixed = true;
    for (std::size_t i = 0; i < out.size(); ++i) fixed &= out[i] == v;
    c.expect(fixed, "constant image moved");
  }

  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Image img = random_tensor<double>(3, 16, 16, gen);
    const auto k = oracle::random_kernel(3 + 2 * (t % 7), gen);
    worst = std::max(worst, max_abs_diff(apply_blur(img, k), oracle::direct_correlation(img, k)));
  }
  c.expect(worst <= kCorrelationTol, "correlation oracle error " + std::to_string(worst));
  c.notes << "max |sum-1| " << worst_sum << ", oracle error " << worst << " ";
}

// ---- 2 ---------------------------------------------------------------------

void losses(Check& c) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomConvExtractor<double> feat(3, 4, 31);
  const std::vector<std::string> layers{"pool1", "pool3"};
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Image a = random_tensor<double>(3, 8, 8, gen);
    const Image b = random_tensor<double>(3, 8, 8, gen);
    const SemanticMap sem = oracle::random_semantic(8, 8, gen);
    worst = std::max(worst, std::abs(content_loss(a, b) - oracle::content_loss(a, b)));
    worst = std::max(worst, std::abs(structural_loss(a, b, sem) - oracle::structural_loss(a, b, sem)));

    const auto fa = oracle::random_conv_features(a, 3, 4, 31);
    const auto fb = oracle::random_conv_features(b, 3, 4, 31);
    double expected = 0.0;
    for (int l : {0, 2}) {
      double s = 0.0;
      for (std::size_t i = 0; i < fa[l].size(); ++i) s += std::pow(fa[l][i] - fb[l][i], 2);
      expected += s / static_cast<double>(fa[l].size());
    }
    worst = std::max(worst, std::abs(perceptual_loss(a, b, feat, layers) - expected));

    const double dr = u(gen), df = u(gen);
    const auto adv = adversarial_losses(dr, df);
    worst = std::max(worst, std::abs(adv.g_loss + std::log(df)));
    worst = std::max(worst, std::abs(adv.d_loss + std::log(dr) + std::log(1.0 - df)));
  }
  c.expect(worst <= kLossOracleTol, "loss oracle error " + std::to_string(worst));

  // total_loss against a hand-written sum, and linearity in each term.
  const LossWeights w;
  double lin = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<ScaleTerms> s(2);
    s[0] = {u(gen), u(gen), std::nullopt, std::nullopt};
    s[1] = {u(gen), u(gen), u(gen), u(gen)};
    const double l0 = total_loss(s, w);
    const double hand = s[0].content + w.lambda_s * s[0].structural + s[1].content +
                        w.lambda_s * s[1].structural + w.lambda_p * *s[1].perceptual +
                        w.lambda_adv * *s[1].adversarial;
    worst = std::max(worst, std::abs(l0 - hand));
    const double d = 0.25;
    auto p = s;
    p[0].content += d;
    lin = std::max(lin, std::abs(total_loss(p, w) - l0 - d));
    p = s;
    p[1].structural += d;
    lin = std::max(lin, std::abs(total_loss(p, w) - l0 - w.lambda_s * d));
    p = s;
    *p[1].perceptual += d;
    lin = std::max(lin, std::abs(total_loss(p, w) - l0 - w.lambda_p * d));
    p = s;
    *p[1].adversarial += d;
    lin = std::max(lin, std::abs(total_loss(p, w) - l0 - w.lambda_adv * d));
  }
  c.expect(worst <= kLossOracleTol, "total loss oracle error " + std::to_string(worst));
  c.expect(lin <= kLinearityTol, "linearity error " + std::to_string(lin));

  // Miniature generator, 64-bit, every parameter element.
  std::mt19937_64 rng(17);
  Generator<double> g(miniature_generator_config(), 5);
  auto params = g.parameters();
  testsupport::randomize_biases(params, 6);
  const Tensor<double> blurred = random_tensor<double>(3, 8, 8, rng);
  const Tensor<double> clear = random_tensor<double>(3, 8, 8, rng);
  Tensor<int> labels(1, 8, 8);
  std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = cls(rng);
  const SemanticMap hot = encode_labels(labels);
  RandomConvExtractor<double> gfeat(3, 4, 99);
  DiscriminatorConfig dcfg;
  dcfg.input_size = 8;
  dcfg.strided_layers = 3;
  dcfg.base_channels = 2;
  dcfg.max_channels = 4;
  Discriminator<double> disc(dcfg, 8);
  disc.zero_head();

  struct Case {
    std::string name;
    LossSelection sel;
    LossWeights weights;
  };
  LossWeights unit_s, unit_p;
  unit_s.lambda_s = 1.0;
  unit_p.lambda_p = 1.0;
  const std::vector<Case> cases{{"content", {true, false, false, false}, {}},
                                {"structural", {false, true, false, false}, unit_s},
                                {"perceptual", {false, false, true, false}, unit_p},
                                {"total", {true, true, true, true}, {}}};
  for (const auto& k : cases) {
    auto loss = [&](bool backprop) {
      return generator_loss(g, blurred, clear, hot, k.weights, k.sel, &gfeat, layers, &disc,
                            backprop)
          .total;
    };
    const auto r =
        finite_diff_gradcheck(loss, params, 1e-6, testsupport::grad_floor(loss(false), 1e-3));
    c.notes << k.name << " grad " << r.max_rel_error << " (" << r.skipped << " skipped), ";
    c.expect(r.max_rel_error < kGradTol, k.name + " gradient error at " + r.worst_parameter);
    c.expect(r.skipped * 100 <= r.checked + r.skipped, k.name + ": too many kinks");
  }
  c.notes << "oracle " << worst << ", linearity " << lin << " ";
}

// ---- 3 ---------------------------------------------------------------------

void architecture(Check& c) {
  const GeneratorConfig cfg;
  Generator<float> gen(cfg, 1);
  const auto convs = gen.describe();
  int first_seen = 0;
  for (const auto& conv : convs) {
    if (conv.transposed) continue;
    if (conv.kernel == cfg.first_conv_kernel) {
      c.expect(conv.in_channels == (first_seen == 0 ? 14 : 17), conv.name + " input channels");
      ++first_seen;
      continue;
    }
    c.expect(conv.kernel == 5 && conv.in_channels == 64, conv.name + " is not 5x5/64");
    c.expect(conv.out_channels == 64 || conv.out_channels == 3, conv.name + " output width");
  }
  c.expect(first_seen == 2, "expected one first conv per scale");

  std::mt19937_64 rng(3);
  const Image blurred = random_tensor<double>(3, 128, 128, rng);
  const auto [o64, o128] = generator_forward(gen, blurred, SemanticMap::uniform(128, 128));
  c.expect(o64.channels() == 3 && o64.height() == 64 && o64.width() == 64, "coarse output shape");
  c.expect(o128.channels() == 3 && o128.height() == 128 && o128.width() == 128,
           "fine output shape");

  Discriminator<float> disc(DiscriminatorConfig{}, 2);
  int strided = 0;
  for (const auto& conv : disc.describe()) strided += conv.stride == 2;
  c.expect(strided == 6, "discriminator strided stages: " + std::to_string(strided));
  for (int t = 0; t < 3; ++t) {
    const double p = discriminator_forward(disc, random_tensor<double>(3, 128, 128, rng));
    c.expect(p > 0.0 && p < 1.0, "discriminator output outside (0,1)");
  }
  c.notes << convs.size() << " generator convs, " << strided << " strided stages ";
}

// ---- 4 ---------------------------------------------------------------------

void schedule(Check& c) {
  const std::vector<int> sizes{13, 15, 17, 19, 21, 23, 25, 27};
  constexpr std::int64_t K = 30000;
  const KernelSchedule s{sizes, K, true};
  // Bucket b joins at iteration b * K; earlier buckets stay active.
  auto expected = [&](std::int64_t t) {
    const auto n = static_cast<std::size_t>(std::min<std::int64_t>(t / K + 1, sizes.size()));
    return std::vector<int>(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(n));
  };
  std::vector<std::int64_t> probes;
  for (std::int64_t b = 0; b <= 12; ++b) {
    for (std::int64_t d : {-2, -1, 0, 1, 2}) {
      if (b * K + d >= 0) probes.push_back(b * K + d);
    }
  }
  probes.push_back(17'000'000);
  std::vector<int> prev;
  int checked = 0;
  for (std::int64_t t : probes) {
    const auto got = active_kernel_subset(s, t);
    c.expect(got == expected(t), "wrong subset at " + std::to_string(t));
    c.expect(std::includes(got.begin(), got.end(), prev.begin(), prev.end()),
             "not monotone at " + std::to_string(t));
    prev = got;
    ++checked;
  }
  for (std::int64_t t = 0; t < 9 * K; t += 997) {
    c.expect(active_kernel_subset(s, t) == expected(t), "wrong subset at " + std::to_string(t));
    ++checked;
  }
  c.expect(active_kernel_subset(s, 100 * K) == sizes, "does not saturate");
  c.notes << checked << " iterations ";
}

// ---- 5 / 6 -----------------------------------------------------------------

struct OverfitResult {
  double baseline = 0.0;
  double psnr = 0.0;
  double seconds = 0.0;
};

const Dataset& overfit_data() {
  static const testsupport::DeskData d = testsupport::make_desk_dataset(
      "acceptance_overfit", kOverfitImages, 1, 1, {kOverfitKernelSize}, 7);
  static const Dataset data = Dataset::open(d.manifest);
  return data;
}

OverfitResult overfit(SemanticSource semantics, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const Dataset& data = overfit_data();
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.lr_deblur = 1e-3;
  cfg.weights.lambda_s = 0;
  cfg.weights.lambda_p = 0;
  cfg.weights.lambda_adv = 0;
  cfg.total_iters = kOverfitIters;
  cfg.augment = false;
  cfg.semantics = semantics;
  cfg.seed = seed;
  cfg.generator.channels = 8;
  cfg.generator.resblocks_per_scale = 1;
  Generator<float> gen(cfg.generator, seed);
  Discriminator<float> disc(cfg.discriminator, seed);
  DeblurTrainer trainer(gen, disc, nullptr, data, cfg);
  OverfitResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FaceSample s = data.sample(i);
    r.baseline += psnr(s.blurred, s.clear);
  }
  r.baseline /= static_cast<double>(data.size());
  for (int i = 0; i < kOverfitIters; ++i) trainer.step();
  r.psnr = trainer.validation_psnr(static_cast<int>(data.size()));
  r.seconds = seconds_since(t0);
  return r;
}

OverfitResult g_overfit_gt;

void overfit_content(Check& c) {
  g_overfit_gt = overfit(SemanticSource::kGroundTruth, 0);
  const double gain = g_overfit_gt.psnr - g_overfit_gt.baseline;
  c.notes << "blurred " << g_overfit_gt.baseline << " dB, deblurred " << g_overfit_gt.psnr
          << " dB, gain " << gain << " dB ";
  c.expect(gain >= kOverfitGainDb, "gain below 3 dB");
}

void semantic_sensitivity(Check& c) {
  double gt = 0.0, uni = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    // Seed 0 with ground-truth semantics is the run above.
    const OverfitResult a = seed == 0 && g_overfit_gt.seconds > 0
                                ? g_overfit_gt
                                : overfit(SemanticSource::kGroundTruth, seed);
    const OverfitResult b = overfit(SemanticSource::kUniform, seed);
    c.notes << "seed " << seed << ": " << a.psnr << " vs " << b.psnr << ", ";
    gt += a.psnr / 3;
    uni += b.psnr / 3;
  }
  c.notes << "mean " << gt << " vs " << uni << " dB ";
  c.expect(gt >= uni, "ground-truth semantics below uniform");
}

// ---- 7 ---------------------------------------------------------------------

void metrics(Check& c) {
  // One pixel of 25 off by 0.5 in every channel: MSE is exactly 0.01.
  Image a(3, 5, 5, 0.25), b = a;
  for (int ch = 0; ch < 3; ++ch) b(ch, 2, 3) = 0.75;
  const double p = psnr(a, b);
  c.expect(p == 20.0, "psnr " + std::to_string(p));

  std::mt19937_64 gen(2);
  double self = 0.0, trans = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Image x = random_tensor<double>(3, 24, 24, gen);
    Image y = x;
    std::normal_distribution<double> n(0.0, 0.1);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i] + n(gen), 0.0, 1.0);
    self = std::max(self, std::abs(ssim(x, x) - 1.0));
    trans = std::max(trans, std::abs(ssim(x, y) - oracle::ssim(x, y)));
  }
  c.expect(self <= kSsimSelfTol, "ssim self-similarity " + std::to_string(self));
  c.expect(trans <= kSsimOracleTol, "ssim oracle error " + std::to_string(trans));

  std::vector<LabeledEmbedding> gallery, probes;
  std::normal_distribution<double> n;
  auto unit = [&](int dim) {
    std::vector<double> v(dim);
    double s = 0.0;
    for (auto& x : v) s += (x = n(gen)) * x;
    for (auto& x : v) x /= std::sqrt(s);
    return v;
  };
  for (int id = 0; id < 20; ++id) {
    for (int k = 0; k < 3; ++k) gallery.push_back({"p" + std::to_string(id), unit(6)});
    probes.push_back({"p" + std::to_string(id), unit(6)});
  }
  int mismatches = 0;
  for (int k = 1; k <= 61; ++k) {
    mismatches += topk_recognition(probes, gallery, k) != oracle::topk(probes, gallery, k);
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " top-k mismatches");
  c.notes << "psnr " << p << ", ssim self " << self << ", ssim oracle " << trans << " ";
}

// ---- 8 ---------------------------------------------------------------------

void parsing(Check& c) {
  const auto d = testsupport::make_desk_dataset("acceptance_parse", 1, 1, 1, {13}, 3);
  const Dataset data = Dataset::open(d.manifest);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.lr_parsing = 1e-3;
  cfg.augment = false;
  cfg.parser.base_channels = 8;
  cfg.parser.encoder_depth = 3;
  ParsingModel<float> model(cfg.parser, 1);
  ParsingTrainer trainer(model, data, cfg);
  const FaceSample s = data.sample(0);
  const Tensor<int> gt = argmax_labels(*s.labels);
  double acc = 0.0;
  int iters = 0;
  while (iters < kParseMaxIters && acc < kParseAccuracy) {
    for (int i = 0; i < 100; ++i) trainer.step();
    iters += 100;
    const Tensor<int> pred = argmax_labels(parse_face(model, s.clear));
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gt[i];
    acc = hits / static_cast<double>(pred.size());
  }
  c.notes << "pixel accuracy " << acc << " after " << iters << " iterations, ";
  c.expect(acc >= kParseAccuracy, "accuracy below 99%");

  Tensor<int> g(1, 4, 4, 0), half(1, 4, 4, 0), apart(1, 4, 4, 0);
  for (int x = 0; x < 4; ++x) {
    g(0, 1, x) = g(0, 2, x) = 3;
    half(0, 1, x) = 3;
  }
  apart(0, 0, 0) = 3;
  const double f1 = fscore(g, g, 3), f0 = fscore(apart, g, 3), f23 = fscore(half, g, 3);
  c.expect(f1 == 1.0, "identical masks");
  c.expect(f0 == 0.0, "disjoint masks");
  c.expect(f23 == 2.0 / 3.0, "half mask");
  c.notes << "fscores " << f1 << " / " << f0 << " / " << f23 << " ";
}

// ---- 9 ---------------------------------------------------------------------

void reproducibility(Check& c) {
  const auto d = testsupport::make_desk_dataset("acceptance_repro", 2, 1, 2, {13, 15}, 9, true);
  const Dataset data = Dataset::open(d.manifest);
  const auto dir = testsupport::scratch_dir("acceptance_ckpt");

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.lr_deblur = 1e-3;
  cfg.kernel_period = 2;
  cfg.semantics = SemanticSource::kGroundTruth;
  cfg.generator.channels = 4;
  cfg.generator.resblocks_per_scale = 1;
  cfg.discriminator.base_channels = 4;
  cfg.discriminator.max_channels = 8;
  cfg.seed = 5;
  struct Run {
    Generator<float> gen;
    Discriminator<float> disc;
    DeblurTrainer trainer;
    Run(const TrainConfig& cfg, const Dataset& data)
        : gen(cfg.generator, 1), disc(cfg.discriminator, 2),
          trainer(gen, disc, nullptr, data, cfg) {}
  };

  // Straight run of 6 steps vs. 3 steps, checkpoint, fresh process state, 3 more.
  Run straight(cfg, data);
  std::vector<DeblurStep> ref;
  for (int i = 0; i < 6; ++i) ref.push_back(straight.trainer.step());
  Run first(cfg, data);
  for (int i = 0; i < 3; ++i) first.trainer.step();
  first.trainer.save(dir / "mid.gckpt");
  Run resumed(cfg, data);
  resumed.trainer.load(dir / "mid.gckpt");
  resumed.trainer.save(dir / "again.gckpt");
  c.expect(slurp(dir / "mid.gckpt") == slurp(dir / "again.gckpt"), "generator checkpoint bytes");
  c.expect(slurp(dir / "mid.dckpt") == slurp(dir / "again.dckpt"), "discriminator checkpoint bytes");

  Run peek(cfg, data);
  peek.trainer.load(dir / "mid.gckpt");
  const auto ba = first.trainer.draw_batch(), bb = peek.trainer.draw_batch();
  bool same_batch = ba.size() == bb.size();
  for (std::size_t i = 0; same_batch && i < ba.size(); ++i) {
    same_batch = ba[i].entry_index == bb[i].entry_index && ba[i].blurred == bb[i].blurred;
  }
  c.expect(same_batch, "replayed batch differs");
  for (int i = 3; i < 6; ++i) {
    const DeblurStep s = resumed.trainer.step();
    c.expect(s.iteration == ref[i].iteration && s.total == ref[i].total &&
                 s.d_loss == ref[i].d_loss,
             "resumed step " + std::to_string(i + 1) + " differs");
  }
  c.expect(nn::checksum(resumed.gen.parameters()) == nn::checksum(straight.gen.parameters()),
           "generator parameters differ after resume");
  c.expect(nn::checksum(resumed.disc.parameters()) == nn::checksum(straight.disc.parameters()),
           "discriminator parameters differ after resume");

  // Parsing phase: the same through a parser checkpoint.
  cfg.parser.base_channels = 4;
  cfg.parser.encoder_depth = 2;
  cfg.lr_parsing = 1e-3;
  ParsingModel<float> pa(cfg.parser, 4), pb(cfg.parser, 4);
  ParsingTrainer ta(pa, data, cfg), tb(pb, data, cfg);
  for (int i = 0; i < 2; ++i) ta.step();
  ta.save(dir / "parse.ckpt");
  tb.load(dir / "parse.ckpt");
  for (int i = 0; i < 2; ++i) c.expect(ta.step().loss == tb.step().loss, "parsing resume differs");

  // Dataset artifacts: regenerate from the manifest and from scratch.
  int mismatched = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FaceSample s = data.sample(i);
    mismatched += !(data.regenerate_blurred(i) == s.blurred);
    const auto& e = data.manifest().entries[i];
    if (e.blurred_path) {
      mismatched += !(read_rgb(data.manifest().resolve(*e.blurred_path)) == quantize8(s.blurred));
    }
  }
  c.expect(mismatched == 0, std::to_string(mismatched) + " regenerated samples differ");
  const auto again = testsupport::make_desk_dataset("acceptance_repro2", 2, 1, 2, {13, 15}, 9, true);
  c.expect(slurp(d.manifest) == slurp(again.manifest), "manifest bytes differ");
  c.expect(slurp(d.dir / "bank.kbnk") == slurp(again.dir / "bank.kbnk"), "kernel bank bytes differ");
  int files = 0, differing = 0;
  for (const auto& f : fs::recursive_directory_iterator(d.dir / "data")) {
    if (!f.is_regular_file()) continue;
    ++files;
    differing += slurp(f.path()) != slurp(again.dir / "data" / fs::relative(f.path(), d.dir / "data"));
  }
  c.expect(differing == 0, std::to_string(differing) + " dataset files differ");
  c.notes << data.size() << " samples and " << files << " files regenerated ";
}

}  // namespace

// Arguments, if any, select criteria by number.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<std::tuple<int, std::string, double, std::function<void(Check&)>>> all{
      {1, "degradation invariants", kBudget1, degradation},
      {2, "loss correctness", kBudget2, losses},
      {3, "architecture contracts", kBudget3, architecture},
      {4, "schedule", kBudget4, schedule},
      {5, "overfit", kBudget5, overfit_content},
      {6, "semantic sensitivity", kBudget6, semantic_sensitivity},
      {7, "metric oracles", kBudget7, metrics},
      {8, "parsing smoke", kBudget8, parsing},
      {9, "reproducibility", kBudget9, reproducibility}};
  bool ok = true;
  for (const auto& [id, name, budget, body] : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ok &= run_criterion(id, name, budget, body);
  }
  return ok ? 0 : 1;
}
