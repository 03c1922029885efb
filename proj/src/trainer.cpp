#include "semdeblur/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <iomanip>
#include <set>

#include "semdeblur/evaluator.hpp"

namespace semdeblur {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- schedule --------------------------------------------------------------

void KernelSchedule::validate() const {
  if (size_groups.empty()) throw ParameterError("schedule needs at least one size group");
  if (!std::is_sorted(size_groups.begin(), size_groups.end())) {
    throw ParameterError("schedule size groups must be ascending");
  }
  if (period < 1) throw ParameterError("schedule period must be >= 1");
}

std::vector<int> active_kernel_subset(const KernelSchedule& schedule, std::int64_t iter) {
  schedule.validate();
  if (iter < 0) throw ParameterError("iteration must be >= 0");
  const auto n = static_cast<std::int64_t>(schedule.size_groups.size());
  const std::int64_t last = schedule.incremental ? std::min(iter / schedule.period, n - 1) : n - 1;
  return {schedule.size_groups.begin(), schedule.size_groups.begin() + last + 1};
}

SemanticSource semantic_source_from_string(const std::string& s) {
  if (s == "parser") return SemanticSource::kParser;
  if (s == "ground_truth") return SemanticSource::kGroundTruth;
  if (s == "uniform") return SemanticSource::kUniform;
  throw ConfigError("unknown semantic source '" + s + "'");
}

std::string to_string(SemanticSource s) {
  switch (s) {
    case SemanticSource::kParser: return "parser";
    case SemanticSource::kGroundTruth: return "ground_truth";
    case SemanticSource::kUniform: return "uniform";
  }
  return "parser";
}

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_parsing > 0 && lr_deblur > 0 && lr_discriminator > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (total_iters < 0 || parsing_iters < 0) throw ConfigError("iteration budgets must be >= 0");
  if (kernel_period < 1) throw ConfigError("kernel_period must be >= 1");
  if (checkpoint_interval < 1 || log_interval < 1 || eval_interval < 1) {
    throw ConfigError("intervals must be >= 1");
  }
  weights.validate();
  generator.validate();
  discriminator.validate();
  parser.validate();
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"lr_parsing", c.lr_parsing},
          {"lr_deblur", c.lr_deblur},
          {"lr_discriminator", c.lr_discriminator},
          {"weights",
           {{"lambda_s", c.weights.lambda_s},
            {"lambda_p", c.weights.lambda_p},
            {"lambda_adv", c.weights.lambda_adv}}},
          {"total_iters", c.total_iters},
          {"seed", c.seed},
          {"optimizer",
           {{"name", "adam"},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon}}},
          {"kernel_period", c.kernel_period},
          {"incremental", c.incremental},
          {"augment", c.augment},
          {"semantics", to_string(c.semantics)},
          {"checkpoint_interval", c.checkpoint_interval},
          {"log_interval", c.log_interval},
          {"validation_samples", c.validation_samples},
          {"perceptual_layers", c.perceptual_layers},
          {"parsing_iters", c.parsing_iters},
          {"parse_on_blurred", c.parse_on_blurred},
          {"eval_interval", c.eval_interval},
          {"early_stop_patience", c.early_stop_patience},
          {"generator", to_json(c.generator)},
          {"discriminator", to_json(c.discriminator)},
          {"parser", to_json(c.parser)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_parsing = j.value("lr_parsing", c.lr_parsing);
    c.lr_deblur = j.value("lr_deblur", c.lr_deblur);
    c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      c.weights.lambda_s = w.value("lambda_s", c.weights.lambda_s);
      c.weights.lambda_p = w.value("lambda_p", c.weights.lambda_p);
      c.weights.lambda_adv = w.value("lambda_adv", c.weights.lambda_adv);
    }
    c.total_iters = j.value("total_iters", c.total_iters);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      if (o.value("name", std::string("adam")) != "adam") {
        throw ConfigError("only the adam optimizer is supported");
      }
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.epsilon = o.value("epsilon", c.adam.epsilon);
    }
    c.kernel_period = j.value("kernel_period", c.kernel_period);
    c.incremental = j.value("incremental", c.incremental);
    c.augment = j.value("augment", c.augment);
    if (j.contains("semantics")) {
      c.semantics = semantic_source_from_string(j["semantics"].get<std::string>());
    }
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.validation_samples = j.value("validation_samples", c.validation_samples);
    c.perceptual_layers = j.value("perceptual_layers", c.perceptual_layers);
    c.parsing_iters = j.value("parsing_iters", c.parsing_iters);
    c.parse_on_blurred = j.value("parse_on_blurred", c.parse_on_blurred);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
    if (j.contains("discriminator")) {
      c.discriminator = discriminator_config_from_json(j["discriminator"]);
    }
    if (j.contains("parser")) c.parser = parsing_config_from_json(j["parser"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  try {
    return train_config_from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

// ---- generator objective ---------------------------------------------------

namespace {

template <typename T>
void add_scaled(Tensor<T>& acc, const Tensor<T>& g, double scale) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<T>(scale) * g[i];
}

}  // namespace

template <typename T>
GeneratorLoss generator_loss(Generator<T>& gen, const Tensor<T>& blurred,
                             const Tensor<T>& clear, const SemanticMap& sem,
                             const LossWeights& weights, const LossSelection& sel,
                             FeatureExtractor<T>* feat,
                             const std::vector<std::string>& layers,
                             Discriminator<T>* disc, bool backprop) {
  const auto out = gen.forward(blurred, tensor_cast<T>(sem.probs));
  const Tensor<T> clear_half = downsample2x(clear);
  const SemanticMap sem_half = resample_semantic(sem, sem.height() / 2, sem.width() / 2);

  Tensor<T> g64(out.out64.channels(), out.out64.height(), out.out64.width());
  Tensor<T> g128(out.out128.channels(), out.out128.height(), out.out128.width());
  Tensor<T> g;
  Tensor<T>* gp = backprop ? &g : nullptr;
  GeneratorLoss loss;

  if (sel.content) {
    loss.coarse.content = content_loss(out.out64, clear_half, gp);
    if (backprop) add_scaled(g64, g, 1.0);
    loss.fine.content = content_loss(out.out128, clear, gp);
    if (backprop) add_scaled(g128, g, 1.0);
  }
  if (sel.structural) {
    loss.coarse.structural = structural_loss(out.out64, clear_half, sem_half, gp);
    if (backprop) add_scaled(g64, g, weights.lambda_s);
    loss.fine.structural = structural_loss(out.out128, clear, sem, gp);
    if (backprop) add_scaled(g128, g, weights.lambda_s);
  }
  if (sel.perceptual && feat) {
    loss.fine.perceptual = perceptual_loss(out.out128, clear, *feat, layers, gp);
    if (backprop) add_scaled(g128, g, weights.lambda_p);
  }
  if (sel.adversarial && disc) {
    const double p = static_cast<double>(disc->forward(out.out128));
    loss.fine.adversarial = adversarial_losses(0.5, p).g_loss;
    if (backprop) {
      const bool clamped = p <= kProbEpsilon || p >= 1.0 - kProbEpsilon;
      const T dp = clamped ? T(0) : static_cast<T>(-1.0 / p);
      add_scaled(g128, disc->backward(dp, false), weights.lambda_adv);
    }
  }
  const ScaleTerms scales[] = {loss.coarse, loss.fine};
  loss.total = total_loss(scales, weights);
  if (backprop) gen.backward(g64, g128);
  return loss;
}

template GeneratorLoss generator_loss(Generator<float>&, const Tensor<float>&,
                                      const Tensor<float>&, const SemanticMap&,
                                      const LossWeights&, const LossSelection&,
                                      FeatureExtractor<float>*,
                                      const std::vector<std::string>&,
                                      Discriminator<float>*, bool);
template GeneratorLoss generator_loss(Generator<double>&, const Tensor<double>&,
                                      const Tensor<double>&, const SemanticMap&,
                                      const LossWeights&, const LossSelection&,
                                      FeatureExtractor<double>*,
                                      const std::vector<std::string>&,
                                      Discriminator<double>*, bool);

// ---- parsing phase ---------------------------------------------------------

ParsingTrainer::ParsingTrainer(ParsingModel<float>& model, const Dataset& data,
                               const TrainConfig& cfg)
    : model_(&model),
      data_(&data),
      cfg_(cfg),
      params_(model.parameters()),
      rng_(mix_seed(cfg.seed, 0x9A25E)) {
  if (!data.manifest().has_labels()) {
    throw ConfigError("parsing training needs a manifest with labels");
  }
  nn::AdamConfig adam = cfg.adam;
  adam.learning_rate = cfg.lr_parsing;
  opt_ = nn::Adam<float>(params_, adam);
}

ParsingStep ParsingTrainer::step() {
  nn::zero_grad(params_);
  double loss = 0.0;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    FaceSample s = data_->sample(rng_.below(data_->size()));
    if (cfg_.augment) augment_sample(s, rng_);
    const Image& input = cfg_.parse_on_blurred ? s.blurred : s.clear;
    const Tensor<float> scores = model_->forward(tensor_cast<float>(input));
    Tensor<float> grad;
    loss += cross_entropy(scores, *s.labels, &grad);
    model_->backward(grad);
  }
  opt_.step(1.0 / cfg_.batch_size);
  ++iteration_;
  const ParsingStep st{iteration_, loss / cfg_.batch_size};
  if (!std::isfinite(st.loss)) throw NumericError("parsing loss is not finite");
  history_.push_back(st);
  return st;
}

double ParsingTrainer::evaluate(const Dataset& data) const {
  if (!data.manifest().has_labels()) throw ConfigError("evaluation set has no labels");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const FaceSample s = data.sample(i);
    const Image& input = cfg_.parse_on_blurred ? s.blurred : s.clear;
    total += cross_entropy(model_->forward(tensor_cast<float>(input)), *s.labels,
                           static_cast<Tensor<float>*>(nullptr));
  }
  return total / static_cast<double>(data.size());
}

void ParsingTrainer::save(const fs::path& path) {
  CheckpointFile f{kParserMagic,
                   {{"config", to_json(model_->config())},
                    {"train_state",
                     {{"iteration", iteration_}, {"rng_state", rng_.state()}}}},
                   {}};
  store_parameters(f, params_);
  store_optimizer(f, params_, opt_);
  write_checkpoint(f, path);
}

void ParsingTrainer::load(const fs::path& path) {
  const auto f = read_checkpoint(path, kParserMagic);
  restore_parameters(f, params_);
  restore_optimizer(f, params_, opt_);
  const auto& st = f.meta.at("train_state");
  iteration_ = st.at("iteration").get<std::int64_t>();
  rng_.set_state(st.at("rng_state").get<std::string>());
}

std::vector<ParsingStep> train_parsing(ParsingModel<float>& model, const Dataset& data,
                                       const TrainConfig& cfg,
                                       const ParsingRunOptions& opts) {
  cfg.validate();
  ParsingTrainer trainer(model, data, cfg);
  if (opts.resume) trainer.load(*opts.resume);
  fs::create_directories(opts.out_dir);
  {
    std::ofstream echo(opts.out_dir / "config.json");
    echo << std::setw(2) << to_json(cfg) << '\n';
  }
  std::ofstream log(opts.out_dir / "loss_history.csv",
                    opts.resume ? std::ios::app : std::ios::trunc);
  if (!opts.resume) log << "iteration,loss\n";
  log << std::setprecision(10);

  double best = INFINITY;
  int stale = 0;
  while (trainer.iteration() < cfg.parsing_iters) {
    const ParsingStep st = trainer.step();
    log << st.iteration << ',' << st.loss << '\n';
    if (st.iteration % cfg.checkpoint_interval == 0) {
      trainer.save(opts.out_dir / ("parse_" + std::to_string(st.iteration) + ".pckpt"));
    }
    if (opts.validation && st.iteration % cfg.eval_interval == 0) {
      const double v = trainer.evaluate(*opts.validation);
      if (v < best) {
        best = v;
        stale = 0;
      } else if (++stale >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  trainer.save(opts.out_dir / "parser.pckpt");
  return trainer.history();
}

// ---- deblurring phase ------------------------------------------------------

DeblurTrainer::DeblurTrainer(Generator<float>& gen, Discriminator<float>& disc,
                             ParsingModel<float>* parser, const Dataset& data,
                             const TrainConfig& cfg)
    : gen_(&gen),
      disc_(&disc),
      parser_(parser),
      data_(&data),
      cfg_(cfg),
      gparams_(gen.parameters()),
      dparams_(disc.parameters()),
      rng_(mix_seed(cfg.seed, 0xDEB1)) {
  if (cfg.semantics == SemanticSource::kParser && !parser) {
    throw ConfigError("parser-derived semantics need a parsing checkpoint");
  }
  if (cfg.semantics == SemanticSource::kGroundTruth && !data.manifest().has_labels()) {
    throw ConfigError("ground-truth semantics need a manifest with labels");
  }
  if (data.size() == 0) throw ConfigError("empty training manifest");
  schedule_.size_groups = data.bank().sizes();
  schedule_.period = cfg.kernel_period;
  schedule_.incremental = cfg.incremental;
  schedule_.validate();

  nn::AdamConfig g = cfg.adam;
  g.learning_rate = cfg.lr_deblur;
  gopt_ = nn::Adam<float>(gparams_, g);
  nn::AdamConfig d = cfg.adam;
  d.learning_rate = cfg.lr_discriminator;
  dopt_ = nn::Adam<float>(dparams_, d);
  if (cfg.weights.lambda_p > 0) {
    feat_ = std::make_unique<RandomConvExtractor<float>>();
  }
}

std::vector<std::size_t> DeblurTrainer::active_entries() const {
  const auto active = active_kernel_subset(schedule_, iteration_);
  const std::set<int> sizes(active.begin(), active.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data_->size(); ++i) {
    if (sizes.count(data_->kernel_size(i))) out.push_back(i);
  }
  if (out.empty()) throw ConfigError("no manifest entries use the active kernel sizes");
  return out;
}

std::vector<FaceSample> DeblurTrainer::draw_batch() {
  const auto pool = active_entries();
  std::vector<FaceSample> batch;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    batch.push_back(data_->sample(pool[rng_.below(pool.size())]));
    if (cfg_.augment) augment_sample(batch.back(), rng_);
  }
  return batch;
}

SemanticMap DeblurTrainer::semantics_for(const FaceSample& s) {
  switch (cfg_.semantics) {
    case SemanticSource::kParser: return parse_face(*parser_, s.blurred);
    case SemanticSource::kGroundTruth: return *s.labels;
    case SemanticSource::kUniform:
      return SemanticMap::uniform(s.blurred.height(), s.blurred.width());
  }
  throw InternalError("unhandled semantic source");
}

std::pair<double, double> DeblurTrainer::discriminator_step(
    const std::vector<FaceSample>& batch) {
  std::vector<Tensor<float>> fakes, reals;
  for (const auto& s : batch) {
    fakes.push_back(gen_->forward(tensor_cast<float>(s.blurred),
                                  tensor_cast<float>(semantics_for(s).probs))
                        .out128);
    reals.push_back(tensor_cast<float>(s.clear));
  }
  auto margin = [&] {
    double m = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      m += disc_->forward(reals[i]) - disc_->forward(fakes[i]);
    }
    return m / static_cast<double>(batch.size());
  };
  const double before = margin();
  nn::zero_grad(dparams_);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const float pr = disc_->forward(reals[i]);
    disc_->backward(-1.0f / pr);
    const float pf = disc_->forward(fakes[i]);
    disc_->backward(1.0f / (1.0f - pf));
  }
  dopt_.step(1.0 / static_cast<double>(batch.size()));
  return {before, margin()};
}

DeblurStep DeblurTrainer::step() {
  const std::vector<FaceSample> batch = draw_batch();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<SemanticMap> sems;
  std::vector<Tensor<float>> blurred, clear;
  for (const auto& s : batch) {
    sems.push_back(semantics_for(s));
    blurred.push_back(tensor_cast<float>(s.blurred));
    clear.push_back(tensor_cast<float>(s.clear));
  }

  DeblurStep st;
  st.active_sizes = static_cast<int>(active_kernel_subset(schedule_, iteration_).size());
  const bool adversarial = cfg_.weights.lambda_adv > 0;

  // Discriminator first, on the current generator's outputs.
  if (adversarial) {
    nn::zero_grad(dparams_);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor<float> fake =
          gen_->forward(blurred[i], tensor_cast<float>(sems[i].probs)).out128;
      const float pr = disc_->forward(clear[i]);
      disc_->backward(-1.0f / std::max(pr, 1e-7f));
      const float pf = disc_->forward(fake);
      disc_->backward(1.0f / std::max(1.0f - pf, 1e-7f));
      const auto adv = adversarial_losses(pr, pf);
      st.d_loss += adv.d_loss * inv_b;
      st.d_real += pr * inv_b;
      st.d_fake += pf * inv_b;
    }
    dopt_.step(inv_b);
  }

  nn::zero_grad(gparams_);
  LossSelection sel;
  sel.perceptual = cfg_.weights.lambda_p > 0;
  sel.adversarial = adversarial;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const GeneratorLoss l = generator_loss<float>(
        *gen_, blurred[i], clear[i], sems[i], cfg_.weights, sel, feat_.get(),
        cfg_.perceptual_layers, adversarial ? disc_ : nullptr, true);
    st.total += l.total * inv_b;
    st.content += (l.coarse.content + l.fine.content) * inv_b;
    st.structural += (l.coarse.structural + l.fine.structural) * inv_b;
    st.perceptual += l.fine.perceptual.value_or(0.0) * inv_b;
    st.adversarial += l.fine.adversarial.value_or(0.0) * inv_b;
  }
  if (!std::isfinite(st.total)) throw NumericError("generator loss is not finite");
  gopt_.step(inv_b);
  st.iteration = ++iteration_;
  return st;
}

double DeblurTrainer::validation_psnr(int n) {
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0)),
                                           data_->size());
  if (count == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const FaceSample s = data_->sample(i);
    const auto out = generator_forward(*gen_, s.blurred, semantics_for(s));
    total += std::min(psnr(out.second, s.clear), kPsnrDisplayCap);
  }
  return total / static_cast<double>(count);
}

fs::path paired_discriminator_path(const fs::path& gckpt) {
  fs::path p = gckpt;
  p.replace_extension(".dckpt");
  return p;
}

void DeblurTrainer::save(const fs::path& gckpt_path) {
  CheckpointFile g{kGeneratorMagic,
                   {{"config", to_json(gen_->config())},
                    {"train_state",
                     {{"iteration", iteration_},
                      {"rng_state", rng_.state()},
                      {"train_config", to_json(cfg_)}}}},
                   {}};
  store_parameters(g, gparams_);
  store_optimizer(g, gparams_, gopt_);
  write_checkpoint(g, gckpt_path);

  CheckpointFile d{kDiscriminatorMagic, {{"config", to_json(disc_->config())}}, {}};
  store_parameters(d, dparams_);
  store_optimizer(d, dparams_, dopt_);
  write_checkpoint(d, paired_discriminator_path(gckpt_path));
}

void DeblurTrainer::load(const fs::path& gckpt_path) {
  const auto g = read_checkpoint(gckpt_path, kGeneratorMagic);
  const auto d = read_checkpoint(paired_discriminator_path(gckpt_path), kDiscriminatorMagic);
  if (!g.meta.contains("train_state")) {
    throw CheckpointError("generator checkpoint carries no training state");
  }
  restore_parameters(g, gparams_);
  restore_optimizer(g, gparams_, gopt_);
  restore_parameters(d, dparams_);
  restore_optimizer(d, dparams_, dopt_);
  const auto& st = g.meta.at("train_state");
  iteration_ = st.at("iteration").get<std::int64_t>();
  rng_.set_state(st.at("rng_state").get<std::string>());
}

std::vector<DeblurStep> train_deblurring(Generator<float>& gen, Discriminator<float>& disc,
                                         ParsingModel<float>* parser, const Dataset& data,
                                         const TrainConfig& cfg,
                                         const DeblurRunOptions& opts) {
  cfg.validate();
  DeblurTrainer trainer(gen, disc, parser, data, cfg);
  if (opts.resume) trainer.load(*opts.resume);
  fs::create_directories(opts.out_dir);
  {
    std::ofstream echo(opts.out_dir / "config.json");
    echo << std::setw(2) << to_json(cfg) << '\n';
  }
  std::ofstream log(opts.out_dir / "metrics.csv",
                    opts.resume ? std::ios::app : std::ios::trunc);
  if (!opts.resume) {
    log << "iter,total,content,structural,perceptual,adversarial,d_loss,active_sizes,val_psnr\n";
  }
  log << std::setprecision(8);

  std::vector<DeblurStep> history;
  while (trainer.iteration() < cfg.total_iters) {
    const DeblurStep st = trainer.step();
    history.push_back(st);
    if (st.iteration % cfg.log_interval == 0 || st.iteration == cfg.total_iters) {
      log << st.iteration << ',' << st.total << ',' << st.content << ','
          << st.structural << ',' << st.perceptual << ',' << st.adversarial << ','
          << st.d_loss << ',' << st.active_sizes << ','
          << trainer.validation_psnr(cfg.validation_samples) << '\n';
      log.flush();
    }
    if (st.iteration % cfg.checkpoint_interval == 0) {
      trainer.save(opts.out_dir / ("ckpt_" + std::to_string(st.iteration) + ".gckpt"));
    }
  }
  trainer.save(opts.out_dir / "generator.gckpt");
  return history;
}

// ---- gradient checking -----------------------------------------------------

GradCheckResult finite_diff_gradcheck(const std::function<double(bool)>& loss_fn,
                                      const nn::ParamList<double>& params, double eps,
                                      double abs_floor) {
  if (!(eps > 0)) throw ParameterError("eps must be positive");
  nn::zero_grad(params);
  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw NumericError("loss is not finite");
  std::vector<std::vector<double>> analytic;
  for (const auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double orig = p.value[j];
      auto eval = [&](double v) {
        p.value[j] = v;
        const double l = loss_fn(false);
        p.value[j] = orig;
        if (!std::isfinite(l)) {
          throw NumericError("loss is not finite under perturbation of " + p.name);
        }
        return l;
      };
      // L1 and ReLU make the loss piecewise linear (piecewise quadratic with
      // the perceptual term), so a kink can sit inside [x - e, x + e]. With
      // one-sided slopes at e and e/2, a quadratic piece satisfies
      //   fwd(e) - fwd(e/2) = bwd(e/2) - bwd(e) = (fwd(e/2) - bwd(e/2)) / 2,
      // and any kink in the interval breaks one of these by at least the
      // error it would add to the central difference at e/2.
      const double a = analytic[pi][j];
      const auto rel = [&](double n) {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), abs_floor});
      };
      // Plain central difference first; the kink ladder only runs when it
      // disagrees, so a smooth element costs two evaluations.
      std::optional<double> numeric = (eval(orig + eps) - eval(orig - eps)) / (2 * eps);
      if (rel(*numeric) > kGradcheckStability) numeric.reset();
      double e = eps;
      for (int rung = 0; rung < kGradcheckRungs && !numeric; ++rung, e /= 10) {
        const double h = e / 2;
        const double f1 = (eval(orig + e) - base) / e, b1 = (base - eval(orig - e)) / e;
        const double f2 = (eval(orig + h) - base) / h, b2 = (base - eval(orig - h)) / h;
        const double half_gap = (f2 - b2) / 2;
        const double scale = std::max(std::abs((f2 + b2) / 2), abs_floor);
        // Slopes carry roundoff of a few ulps of the loss divided by the step.
        const double roundoff = 8 * std::numeric_limits<double>::epsilon() * std::abs(base) / h;
        const double tol = std::max(kGradcheckStability * scale, roundoff);
        if (std::abs(f1 - f2 - half_gap) <= tol && std::abs(b2 - b1 - half_gap) <= tol) {
          numeric = (f2 + b2) / 2;
        }
      }
      if (!numeric) {
        ++result.skipped;
        continue;
      }
      const double err = rel(*numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = p.name + "[" + std::to_string(j) + "]";
      }
      ++result.checked;
    }
  }
  return result;
}

GeneratorConfig miniature_generator_config() {
  GeneratorConfig cfg;
  cfg.resblocks_per_scale = 1;
  cfg.channels = 4;
  cfg.image_size = 8;
  return cfg;
}

}  // namespace semdeblur
