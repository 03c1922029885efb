#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semdeblur/checkpoint.hpp"
#include "semdeblur/dataset.hpp"
#include "semdeblur/deblur_net.hpp"
#include "semdeblur/losses.hpp"
#include "semdeblur/parse_net.hpp"

namespace semdeblur {

// Incremental curriculum: bucket b becomes active at iteration b * period.
struct KernelSchedule {
  std::vector<int> size_groups;  // ascending kernel sizes
  std::int64_t period = 30000;
  bool incremental = true;

  void validate() const;
};

// Ascending prefix of size_groups active at `iter` (all groups when the
// schedule is not incremental).
std::vector<int> active_kernel_subset(const KernelSchedule& schedule,
                                      std::int64_t iter);

enum class SemanticSource { kParser, kGroundTruth, kUniform };

SemanticSource semantic_source_from_string(const std::string& s);
std::string to_string(SemanticSource s);

struct TrainConfig {
  int batch_size = 16;
  double lr_parsing = 5e-6;
  double lr_deblur = 4e-5;
  double lr_discriminator = 4e-5;
  LossWeights weights;
  std::int64_t total_iters = 17'000'000;
  std::uint64_t seed = 0;
  nn::AdamConfig adam;  // learning_rate is taken from the lr_* fields

  // Curriculum.
  std::int64_t kernel_period = 30000;
  bool incremental = true;

  bool augment = true;
  SemanticSource semantics = SemanticSource::kParser;
  std::int64_t checkpoint_interval = 10000;
  std::int64_t log_interval = 100;
  int validation_samples = 4;
  std::vector<std::string> perceptual_layers = default_perceptual_layers();

  // Parsing phase.
  std::int64_t parsing_iters = 60000;
  bool parse_on_blurred = false;  // fine-tuning on degraded inputs
  std::int64_t eval_interval = 1000;
  int early_stop_patience = 5;

  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  ParsingModelConfig parser;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct LossSelection {
  bool content = true;
  bool structural = true;
  bool perceptual = true;
  bool adversarial = true;
};

struct GeneratorLoss {
  ScaleTerms coarse;
  ScaleTerms fine;
  double total = 0.0;
};

// Full generator objective for one sample: content + structural at both
// scales, perceptual and adversarial at the finest. With backprop, parameter
// gradients of the generator are accumulated (discriminator parameters are
// left untouched).
template <typename T>
GeneratorLoss generator_loss(Generator<T>& gen, const Tensor<T>& blurred,
                             const Tensor<T>& clear, const SemanticMap& sem,
                             const LossWeights& weights, const LossSelection& sel,
                             FeatureExtractor<T>* feat,
                             const std::vector<std::string>& layers,
                             Discriminator<T>* disc, bool backprop);

// ---- parsing phase ---------------------------------------------------------

struct ParsingStep {
  std::int64_t iteration;
  double loss;
};

class ParsingTrainer {
 public:
  ParsingTrainer(ParsingModel<float>& model, const Dataset& data, const TrainConfig& cfg);

  ParsingStep step();
  std::int64_t iteration() const { return iteration_; }
  const std::vector<ParsingStep>& history() const { return history_; }

  // Mean cross-entropy over a dataset (no augmentation).
  double evaluate(const Dataset& data) const;

  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);

 private:
  ParsingModel<float>* model_;
  const Dataset* data_;
  TrainConfig cfg_;
  nn::ParamList<float> params_;
  nn::Adam<float> opt_;
  Rng rng_;
  std::int64_t iteration_ = 0;
  std::vector<ParsingStep> history_;
};

struct ParsingRunOptions {
  std::filesystem::path out_dir;
  const Dataset* validation = nullptr;
  std::optional<std::filesystem::path> resume;
};

// Runs the parsing phase to cfg.parsing_iters (or early stop) and writes
// parser.pckpt, loss_history.csv and periodic checkpoints under out_dir.
// Throws ConfigError if the dataset has no labels.
std::vector<ParsingStep> train_parsing(ParsingModel<float>& model, const Dataset& data,
                                       const TrainConfig& cfg,
                                       const ParsingRunOptions& opts);

// ---- deblurring phase ------------------------------------------------------

struct DeblurStep {
  std::int64_t iteration = 0;
  double total = 0.0;
  double content = 0.0;     // both scales
  double structural = 0.0;  // both scales
  double perceptual = 0.0;
  double adversarial = 0.0;
  double d_loss = 0.0;
  double d_real = 0.0;
  double d_fake = 0.0;
  int active_sizes = 0;
};

class DeblurTrainer {
 public:
  // `parser` may be null unless cfg.semantics == kParser. It is frozen: only
  // forward passes are run and it is never handed to an optimizer.
  DeblurTrainer(Generator<float>& gen, Discriminator<float>& disc,
                ParsingModel<float>* parser, const Dataset& data,
                const TrainConfig& cfg);

  // Draws the next batch from the schedule-active kernels (advances the RNG).
  std::vector<FaceSample> draw_batch();
  SemanticMap semantics_for(const FaceSample& s);

  DeblurStep step();
  // Discriminator update on one batch; returns (d_real - d_fake) before and
  // after the update averaged over the batch.
  std::pair<double, double> discriminator_step(const std::vector<FaceSample>& batch);

  std::int64_t iteration() const { return iteration_; }
  const KernelSchedule& schedule() const { return schedule_; }

  // Mean PSNR of clamped fine-scale outputs over the first n entries.
  double validation_psnr(int n);

  // Writes <stem>.gckpt and <stem>.dckpt (parameters, optimizer moments,
  // iteration, RNG state).
  void save(const std::filesystem::path& gckpt_path);
  void load(const std::filesystem::path& gckpt_path);

 private:
  std::vector<std::size_t> active_entries() const;

  Generator<float>* gen_;
  Discriminator<float>* disc_;
  ParsingModel<float>* parser_;
  const Dataset* data_;
  TrainConfig cfg_;
  KernelSchedule schedule_;
  nn::ParamList<float> gparams_, dparams_;
  nn::Adam<float> gopt_, dopt_;
  std::unique_ptr<RandomConvExtractor<float>> feat_;
  Rng rng_;
  std::int64_t iteration_ = 0;
};

// Path of the discriminator checkpoint paired with a generator checkpoint.
std::filesystem::path paired_discriminator_path(const std::filesystem::path& gckpt);

struct DeblurRunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
};

// Runs to cfg.total_iters, logging metrics.csv (iter, each loss term,
// validation PSNR) and writing periodic plus final checkpoints.
std::vector<DeblurStep> train_deblurring(Generator<float>& gen, Discriminator<float>& disc,
                                         ParsingModel<float>* parser,
                                         const Dataset& data, const TrainConfig& cfg,
                                         const DeblurRunOptions& opts);

// ---- gradient checking -----------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // elements with a kink at every probed step
};

inline constexpr int kGradcheckRungs = 3;
inline constexpr double kGradcheckStability = 5e-7;

// `loss_fn(backprop)` evaluates the scalar loss; with backprop=true it must
// also accumulate dL/dparam into the parameters' grad buffers. Every element
// of every parameter is perturbed by +-eps. Relative error per element is
// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor). A central
// difference within kGradcheckStability is accepted as is; otherwise the
// element is probed for a kink and the step shrinks by 10x up to kGradcheckRungs times; elements that
// stay non-differentiable at every step are counted as skipped.
GradCheckResult finite_diff_gradcheck(const std::function<double(bool)>& loss_fn,
                                      const nn::ParamList<double>& params, double eps,
                                      double abs_floor = 1e-8);

// 8x8 inputs, one ResBlock per scale, 4 channels.
GeneratorConfig miniature_generator_config();

}  // namespace semdeblur
