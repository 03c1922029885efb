#include "semdeblur/cli.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "semdeblur/checkpoint.hpp"
#include "semdeblur/evaluator.hpp"
#include "semdeblur/image_io.hpp"
#include "semdeblur/synthetic_faces.hpp"
#include "semdeblur/trainer.hpp"

namespace semdeblur {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<int> parse_sizes(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError("bad kernel size '" + item + "'");
    }
  }
  if (out.empty()) throw ParameterError("empty kernel size list");
  return out;
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << std::setw(2) << j << '\n';
}

// Flags that override fields of a TrainConfig loaded from --config.
struct TrainOverrides {
  std::string config;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<std::int64_t> iters;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> checkpoint_interval;
  std::optional<std::int64_t> log_interval;
  bool no_augment = false;

  void add(CLI::App* cmd, const std::string& lr_help) {
    cmd->add_option("--config", config, "JSON training config (flags override it)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--batch", batch, "Batch size [config: 16]");
    cmd->add_option("--lr", lr, lr_help);
    cmd->add_option("--iters", iters, "Iteration budget");
    cmd->add_option("--seed", seed, "Global seed [config: 0]");
    cmd->add_option("--checkpoint-interval", checkpoint_interval, "Iterations between checkpoints");
    cmd->add_option("--log-interval", log_interval, "Iterations between log rows");
    cmd->add_flag("--no-augment", no_augment, "Disable random similarity augmentation");
  }

  TrainConfig base() const { return config.empty() ? TrainConfig{} : load_train_config(config); }

  void apply(TrainConfig& c) const {
    if (batch) c.batch_size = *batch;
    if (seed) c.seed = *seed;
    if (checkpoint_interval) c.checkpoint_interval = *checkpoint_interval;
    if (log_interval) c.log_interval = *log_interval;
    if (no_augment) c.augment = false;
  }
};

std::string stem_id(const fs::path& p) { return p.filename().string(); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic-prior face deblurring toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // make-faces
  FaceSetOptions faces;
  std::string faces_out;
  auto* make_faces = app.add_subcommand("make-faces", "Render synthetic labeled face images");
  make_faces->add_option("--out", faces_out, "Output directory")->required();
  make_faces->add_option("--identities", faces.identities, "Number of identities");
  make_faces->add_option("--per-identity", faces.per_identity, "Images per identity");
  make_faces->add_option("--seed", faces.seed, "Seed");
  make_faces->add_option("--canvas", faces.canvas, "Canvas side in pixels (128 = pre-aligned)");

  // synth-kernels
  int k_count = 1000;
  std::string k_sizes = "13,15,17,19,21,23,25,27";
  std::int64_t k_seed = 0;
  std::string k_out, k_png, k_split = "train";
  TrajectoryParams k_traj;
  auto* synth = app.add_subcommand("synth-kernels", "Generate a motion-blur kernel bank");
  synth->add_option("--count", k_count, "Number of kernels");
  synth->add_option("--sizes", k_sizes, "Comma-separated odd kernel sizes");
  synth->add_option("--seed", k_seed, "Seed");
  synth->add_option("--out", k_out, "Bank file")->required();
  synth->add_option("--dump-png", k_png, "Also write each kernel as a PNG into this directory");
  synth->add_option("--split", k_split, "Bank split")->check(CLI::IsMember({"train", "test"}));
  synth->add_option("--steps", k_traj.num_steps, "Trajectory steps");
  synth->add_option("--inertia", k_traj.inertia, "Trajectory inertia");
  synth->add_option("--impulse-prob", k_traj.impulse_prob, "Per-step impulse probability");

  // build-dataset
  SynthesisOptions ds;
  std::string ds_clear, ds_labels, ds_landmarks, ds_bank, ds_out;
  auto* build = app.add_subcommand("build-dataset", "Pair aligned faces with blur kernels");
  build->add_option("--clear", ds_clear, "Directory of clear PNG faces")->required()
      ->check(CLI::ExistingDirectory);
  build->add_option("--labels", ds_labels, "Directory of label PNGs (same stems)")
      ->check(CLI::ExistingDirectory);
  build->add_option("--landmarks", ds_landmarks, "Directory of 5-point landmark files")
      ->check(CLI::ExistingDirectory);
  build->add_option("--bank", ds_bank, "Kernel bank file")->required()->check(CLI::ExistingFile);
  build->add_option("--out", ds_out, "Output directory")->required();
  build->add_option("--pairs-per-image", ds.pairs_per_image,
                    "Kernels sampled per image (0 = every kernel)");
  build->add_option("--noise-sigma", ds.degradation.noise_sigma, "Gaussian noise sigma");
  build->add_option("--seed", ds.seed, "Seed");
  build->add_flag("--materialize", ds.materialize, "Write blurred PNGs as well");

  // train-parse
  TrainOverrides tp;
  std::string tp_manifest, tp_out, tp_val, tp_init, tp_resume;
  bool tp_blurred = false;
  std::optional<int> tp_base;
  auto* train_parse = app.add_subcommand("train-parse", "Train the face parsing network");
  train_parse->add_option("--manifest", tp_manifest, "Training manifest")->required()
      ->check(CLI::ExistingFile);
  train_parse->add_option("--out", tp_out, "Output directory")->required();
  train_parse->add_option("--val-manifest", tp_val, "Validation manifest for early stopping")
      ->check(CLI::ExistingFile);
  train_parse->add_option("--init", tp_init, "Start from these parser weights")
      ->check(CLI::ExistingFile);
  train_parse->add_option("--resume", tp_resume, "Resume from a parser checkpoint")
      ->check(CLI::ExistingFile);
  train_parse->add_flag("--blurred", tp_blurred, "Train on blurred inputs (fine-tuning)");
  train_parse->add_option("--base-channels", tp_base, "Parser width [config: 32]");
  tp.add(train_parse, "Learning rate [config: 5e-6]");

  // eval-parse
  std::string ep_manifest, ep_pre, ep_fine, ep_report;
  bool ep_json = false;
  auto* eval_parse = app.add_subcommand("eval-parse", "Per-class parsing F-scores");
  eval_parse->add_option("--manifest", ep_manifest, "Labeled test manifest")->required()
      ->check(CLI::ExistingFile);
  eval_parse->add_option("--pretrained", ep_pre, "Parser trained on clear faces")->required()
      ->check(CLI::ExistingFile);
  eval_parse->add_option("--finetuned", ep_fine, "Parser fine-tuned on blurred faces")
      ->check(CLI::ExistingFile);
  eval_parse->add_option("--report", ep_report, "CSV output")->required();
  eval_parse->add_flag("--json", ep_json, "Print the scores as JSON");

  // train-deblur
  TrainOverrides td;
  std::string td_manifest, td_out, td_parse, td_resume, td_sem;
  std::optional<std::int64_t> td_period;
  std::optional<int> td_channels, td_resblocks;
  std::optional<double> td_ls, td_lp, td_ladv;
  bool td_no_incremental = false;
  auto* train_deblur = app.add_subcommand("train-deblur", "Train the deblurring network");
  train_deblur->add_option("--manifest", td_manifest, "Training manifest")->required()
      ->check(CLI::ExistingFile);
  train_deblur->add_option("--out", td_out, "Output directory")->required();
  train_deblur->add_option("--parse-ckpt", td_parse, "Frozen parser checkpoint")
      ->check(CLI::ExistingFile);
  train_deblur->add_option("--resume", td_resume, "Resume from a generator checkpoint")
      ->check(CLI::ExistingFile);
  train_deblur->add_option("--semantics", td_sem, "parser | ground_truth | uniform [config: parser]")
      ->check(CLI::IsMember({"parser", "ground_truth", "uniform"}));
  train_deblur->add_option("--kernel-period", td_period, "Curriculum period K [config: 30000]");
  train_deblur->add_flag("--no-incremental", td_no_incremental, "Train on all kernels at once");
  train_deblur->add_option("--channels", td_channels, "Generator width [config: 64]");
  train_deblur->add_option("--resblocks", td_resblocks, "ResBlocks per scale [config: 6]");
  train_deblur->add_option("--lambda-s", td_ls, "Structural loss weight [config: 50]");
  train_deblur->add_option("--lambda-p", td_lp, "Perceptual loss weight [config: 1e-5]");
  train_deblur->add_option("--lambda-adv", td_ladv, "Adversarial loss weight [config: 5e-5]");
  td.add(train_deblur, "Generator learning rate [config: 4e-5]");

  // evaluate
  std::string ev_manifest, ev_gen, ev_parse, ev_out, ev_sem = "parser";
  bool ev_json = false;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM on a test manifest");
  evaluate->add_option("--manifest", ev_manifest, "Test manifest")->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--gen-ckpt", ev_gen, "Generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--parse-ckpt", ev_parse, "Parser checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--semantics", ev_sem, "parser | ground_truth | uniform")
      ->check(CLI::IsMember({"parser", "ground_truth", "uniform"}));
  evaluate->add_option("--out", ev_out, "Directory for metrics.csv and summary.json")->required();
  evaluate->add_flag("--json", ev_json, "Print the summary as JSON");

  // deblur
  std::string db_in, db_out, db_gen, db_parse, db_sem;
  auto* deblur = app.add_subcommand("deblur", "Deblur one aligned 128x128 face");
  deblur->add_option("--in", db_in, "Blurred PNG")->required()->check(CLI::ExistingFile);
  deblur->add_option("--out", db_out, "Output PNG")->required();
  deblur->add_option("--gen-ckpt", db_gen, "Generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  auto* db_parse_opt =
      deblur->add_option("--parse-ckpt", db_parse, "Parser checkpoint")->check(CLI::ExistingFile);
  auto* db_sem_opt = deblur->add_option("--semantics", db_sem, "Label PNG used as the prior")
                         ->check(CLI::ExistingFile);
  db_parse_opt->excludes(db_sem_opt);

  // report
  std::vector<std::string> rp_runs;
  std::string rp_out;
  bool rp_plot = false, rp_json = false;
  auto* report = app.add_subcommand("report", "Compare evaluation runs");
  report->add_option("--run", rp_runs, "NAME=DIR of an evaluate output (repeatable)")
      ->required();
  report->add_option("--out", rp_out, "Output directory")->required();
  report->add_flag("--plot", rp_plot, "Write PSNR/SSIM and identity-distance plots");
  report->add_flag("--json", rp_json, "Print the comparison as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    const auto subs = app.get_subcommands();
    err << '\n' << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (*make_faces) {
      faces.out_dir = faces_out;
      const auto stems = write_synthetic_face_set(faces);
      out << "wrote " << stems.size() << " faces to " << faces_out << '\n';
    } else if (*synth) {
      const auto split = k_split == "test" ? BankSplit::kTest : BankSplit::kTrain;
      const KernelBank bank = generate_kernel_bank(k_count, parse_sizes(k_sizes), k_seed, k_traj, split);
      if (fs::path(k_out).has_parent_path()) fs::create_directories(fs::path(k_out).parent_path());
      save_kernel_bank(bank, k_out);
      if (!k_png.empty()) {
        fs::create_directories(k_png);
        for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
          write_kernel_png(bank.kernels[i], fs::path(k_png) / ("kernel_" + std::to_string(i) + ".png"));
        }
      }
      out << "wrote " << bank.kernels.size() << " kernels to " << k_out << '\n';
    } else if (*build) {
      ds.clear_dir = ds_clear;
      if (!ds_labels.empty()) ds.labels_dir = ds_labels;
      if (!ds_landmarks.empty()) ds.landmarks_dir = ds_landmarks;
      ds.kernel_bank_path = ds_bank;
      ds.out_dir = ds_out;
      if (!(ds.degradation.noise_sigma >= 0)) throw ParameterError("noise sigma must be >= 0");
      const auto m = synthesize_dataset(ds);
      out << "wrote " << m.entries.size() << " entries to "
          << (fs::path(ds_out) / "manifest.jsonl").string() << '\n';
    } else if (*train_parse) {
      TrainConfig cfg = tp.base();
      tp.apply(cfg);
      if (tp.lr) cfg.lr_parsing = *tp.lr;
      if (tp.iters) cfg.parsing_iters = *tp.iters;
      if (tp_blurred) cfg.parse_on_blurred = true;
      if (tp_base) cfg.parser.base_channels = *tp_base;
      cfg.validate();
      const Dataset data = Dataset::open(tp_manifest);
      std::optional<Dataset> val;
      if (!tp_val.empty()) val.emplace(Dataset::open(tp_val));
      ParsingModel<float> model = tp_init.empty() ? ParsingModel<float>(cfg.parser, cfg.seed)
                                                  : load_parser(tp_init);
      ParsingRunOptions opts;
      opts.out_dir = tp_out;
      opts.validation = val ? &*val : nullptr;
      if (!tp_resume.empty()) opts.resume = fs::path(tp_resume);
      const auto history = train_parsing(model, data, cfg, opts);
      out << "trained parser for " << history.size() << " iterations; final loss "
          << (history.empty() ? 0.0 : history.back().loss) << '\n';
    } else if (*eval_parse) {
      const Dataset data = Dataset::open(ep_manifest);
      if (!data.manifest().has_labels()) throw ConfigError("eval-parse needs labels");
      ParsingReport rep;
      auto run = [&](const std::string& name, const std::string& ckpt, bool blurred) {
        ParsingModel<float> model = load_parser(ckpt);
        std::vector<Tensor<int>> pred, gt;
        for (std::size_t i = 0; i < data.size(); ++i) {
          const FaceSample s = data.sample(i);
          pred.push_back(argmax_labels(parse_face(model, blurred ? s.blurred : s.clear)));
          gt.push_back(argmax_labels(*s.labels));
        }
        rep.conditions.push_back(name);
        rep.scores.push_back(mean_fscores(pred, gt));
      };
      run("clear/pre-trained", ep_pre, false);
      run("blurred/pre-trained", ep_pre, true);
      if (!ep_fine.empty()) run("blurred/fine-tuned", ep_fine, true);
      if (fs::path(ep_report).has_parent_path()) {
        fs::create_directories(fs::path(ep_report).parent_path());
      }
      rep.write_csv(ep_report);
      if (ep_json) {
        json j = json::object();
        for (std::size_t i = 0; i < rep.conditions.size(); ++i) {
          json row = json::object();
          for (int c = 0; c < kNumClasses; ++c) {
            row[std::string(kClassNames[c])] = rep.scores[i][c];
          }
          j[rep.conditions[i]] = row;
        }
        out << j.dump(2) << '\n';
      } else {
        for (std::size_t i = 0; i < rep.conditions.size(); ++i) {
          const auto& s = rep.scores[i];
          out << rep.conditions[i] << ": mean F-score "
              << std::accumulate(s.begin(), s.end(), 0.0) / kNumClasses << '\n';
        }
        out << "wrote " << ep_report << '\n';
      }
    } else if (*train_deblur) {
      TrainConfig cfg = td.base();
      td.apply(cfg);
      if (td.lr) cfg.lr_deblur = *td.lr;
      if (td.iters) cfg.total_iters = *td.iters;
      if (!td_sem.empty()) cfg.semantics = semantic_source_from_string(td_sem);
      if (td_period) cfg.kernel_period = *td_period;
      if (td_no_incremental) cfg.incremental = false;
      if (td_channels) cfg.generator.channels = *td_channels;
      if (td_resblocks) cfg.generator.resblocks_per_scale = *td_resblocks;
      if (td_ls) cfg.weights.lambda_s = *td_ls;
      if (td_lp) cfg.weights.lambda_p = *td_lp;
      if (td_ladv) cfg.weights.lambda_adv = *td_ladv;
      cfg.validate();
      if (cfg.semantics == SemanticSource::kParser && td_parse.empty()) {
        throw ConfigError("--parse-ckpt is required when semantics come from the parser");
      }
      const Dataset data = Dataset::open(td_manifest);
      std::optional<ParsingModel<float>> parser;
      if (!td_parse.empty()) parser.emplace(load_parser(td_parse));
      Generator<float> gen(cfg.generator, mix_seed(cfg.seed, 1));
      Discriminator<float> disc(cfg.discriminator, mix_seed(cfg.seed, 2));
      DeblurRunOptions opts;
      opts.out_dir = td_out;
      if (!td_resume.empty()) opts.resume = fs::path(td_resume);
      const auto history =
          train_deblurring(gen, disc, parser ? &*parser : nullptr, data, cfg, opts);
      out << "trained generator for " << history.size() << " iterations\n";
    } else if (*evaluate) {
      const SemanticSource src = semantic_source_from_string(ev_sem);
      if (src == SemanticSource::kParser && ev_parse.empty()) {
        throw ConfigError("--parse-ckpt is required when --semantics=parser");
      }
      const Dataset data = Dataset::open(ev_manifest);
      Generator<float> gen = load_generator(ev_gen);
      std::optional<ParsingModel<float>> parser;
      if (!ev_parse.empty()) parser.emplace(load_parser(ev_parse));
      ParserFn parse = [&](const FaceSample& s) -> SemanticMap {
        switch (src) {
          case SemanticSource::kParser: return parse_face(*parser, s.blurred);
          case SemanticSource::kUniform:
            return SemanticMap::uniform(s.blurred.height(), s.blurred.width());
          case SemanticSource::kGroundTruth:
            if (!s.labels) throw ConfigError("manifest has no labels");
            return *s.labels;
        }
        throw InternalError("unhandled semantic source");
      };
      RestoreFn restore = [&](const Image& blurred, const SemanticMap& sem) {
        return generator_forward(gen, blurred, sem).second;
      };
      const DownsampleEmbedder embedder;
      MetricsReport rep = evaluate_deblurring(restore, parse, data, &embedder);
      rep.checkpoint_id = stem_id(ev_gen);
      rep.manifest_id = stem_id(ev_manifest);
      fs::create_directories(ev_out);
      rep.write_csv(fs::path(ev_out) / "metrics.csv");
      write_json(rep.summary_json(), fs::path(ev_out) / "summary.json");
      if (ev_json) {
        out << rep.summary_json().dump(2) << '\n';
      } else {
        out << "evaluated " << rep.per_image.size() << " images: PSNR "
            << std::min(rep.overall.mean_psnr, kPsnrDisplayCap) << " dB, SSIM "
            << rep.overall.mean_ssim << '\n';
      }
      if (!rep.errors.empty()) {
        for (const auto& e : rep.errors) err << e << '\n';
        return 2;
      }
    } else if (*deblur) {
      Generator<float> gen = load_generator(db_gen);
      const Image blurred = read_rgb(db_in);
      const int size = gen.config().image_size;
      if (blurred.height() != size || blurred.width() != size) {
        throw SizeError("input must be an aligned " + std::to_string(size) + "x" +
                        std::to_string(size) + " face");
      }
      SemanticMap sem;
      if (!db_sem.empty()) {
        sem = encode_labels(read_index_image(db_sem));
      } else if (!db_parse.empty()) {
        ParsingModel<float> parser = load_parser(db_parse);
        sem = parse_face(parser, blurred);
      } else {
        throw ConfigError("one of --parse-ckpt or --semantics is required");
      }
      write_rgb(generator_forward(gen, blurred, sem).second, db_out);
      out << "wrote " << db_out << '\n';
    } else if (*report) {
      std::vector<std::pair<std::string, MetricsReport>> runs;
      std::vector<std::pair<std::string, double>> identity;
      json summary = json::object();
      for (const auto& spec : rp_runs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw ParameterError("--run expects NAME=DIR, got '" + spec + "'");
        }
        const std::string name = spec.substr(0, eq);
        const fs::path dir = spec.substr(eq + 1);
        MetricsReport r = MetricsReport::read_csv(dir / "metrics.csv");
        json s = r.summary_json();
        if (fs::exists(dir / "summary.json")) {
          std::ifstream is(dir / "summary.json");
          const json saved = json::parse(is);
          if (saved.contains("mean_identity_distance")) {
            s["mean_identity_distance"] = saved["mean_identity_distance"];
            identity.emplace_back(name, saved["mean_identity_distance"].get<double>());
          }
        }
        summary[name] = s;
        runs.emplace_back(name, std::move(r));
      }
      fs::create_directories(rp_out);
      write_json(summary, fs::path(rp_out) / "report.json");
      if (rp_plot) {
        plot_metrics_by_kernel(runs, fs::path(rp_out) / "psnr_vs_kernel.png",
                               fs::path(rp_out) / "ssim_vs_kernel.png");
        if (!identity.empty()) {
          plot_bars(identity, "Identity distance (lower is better)",
                    fs::path(rp_out) / "identity_distance.png");
        }
      }
      if (rp_json) {
        out << summary.dump(2) << '\n';
      } else {
        for (const auto& [name, r] : runs) {
          out << name << ": PSNR " << std::min(r.overall.mean_psnr, kPsnrDisplayCap)
              << " dB, SSIM " << r.overall.mean_ssim << " over " << r.overall.count
              << " images\n";
        }
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace semdeblur
