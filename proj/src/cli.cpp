#include "mdfl/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "mdfl/ablation.hpp"
#include "mdfl/checkpoint.hpp"
#include "mdfl/config.hpp"
#include "mdfl/errors.hpp"
#include "mdfl/npy.hpp"
#include "mdfl/pipeline.hpp"
#include "mdfl/render.hpp"

namespace mdfl {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

void require_empty_target(const fs::path& dir, bool force) {
  if (!force && fs::exists(dir) && !fs::is_empty(dir)) {
    throw ValidationError("output directory " + dir.string() + " exists and is not empty (use --force)");
  }
}

struct SynthArgs {
  std::string out;
  SynthSpec spec;
  std::uint64_t seed = 0;
  bool force = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  require_empty_target(a.out, a.force);
  const Scene s = synth_scene(a.spec, a.seed);
  save_scene(s, a.out);
  out << "wrote " << s.name << " (" << s.height() << "x" << s.width() << ", hsi " << s.hsi.dim(2) << " bands, lidar "
      << s.lidar.dim(2) << " bands) to " << a.out << '\n';
  const auto counts = s.class_counts();
  for (std::size_t k = 0; k < s.num_classes; ++k) {
    out << "class " << k + 1 << " (" << s.class_names[k] << "): " << counts[k] << " pixels\n";
  }
  return 0;
}

struct ConvertArgs {
  std::string hsi, lidar, labels, out, name;
  std::size_t classes = 0;
  bool force = false;
};

Tensor<float> raster_from_npy(const NpyArray& a, const std::string& what) {
  if (a.shape.size() == 2) return Tensor<float>({a.shape[0], a.shape[1], 1}, std::vector<float>(a.values.begin(), a.values.end()));
  if (a.shape.size() == 3) return Tensor<float>(a.shape, std::vector<float>(a.values.begin(), a.values.end()));
  throw ShapeMismatchError(what + " must be [H,W] or [H,W,C], got " + shape_str(a.shape));
}

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  require_empty_target(a.out, a.force);
  Scene s;
  s.name = a.name.empty() ? fs::path(a.out).filename().string() : a.name;
  s.hsi = raster_from_npy(read_npy(a.hsi), "hsi");
  s.lidar = raster_from_npy(read_npy(a.lidar), "lidar");
  const auto labels = read_npy(a.labels);
  if (labels.shape.size() != 2) throw ShapeMismatchError("labels must be [H,W], got " + shape_str(labels.shape));
  s.labels = {labels.shape[0], labels.shape[1], {}};
  double max_label = 0;
  for (double v : labels.values) {
    if (v < 0 || v > 65535 || v != std::floor(v)) throw LabelRangeError("label value " + std::to_string(v) + " is not in 0..65535");
    s.labels.data.push_back(static_cast<std::uint16_t>(v));
    max_label = std::max(max_label, v);
  }
  s.num_classes = a.classes ? a.classes : static_cast<std::size_t>(max_label);
  for (std::size_t k = 1; k <= s.num_classes; ++k) s.class_names.push_back("class_" + std::to_string(k));
  save_scene(s, a.out);
  out << "wrote " << s.name << " (" << s.height() << "x" << s.width() << ", " << s.num_classes << " classes) to " << a.out
      << '\n';
  return 0;
}

struct TrainArgs {
  std::string config, stage = "all";
  bool resume = false;
  std::size_t stop_after = 0;
};

fs::path diffusion_path(const RunConfig& c, Modality m) {
  return fs::path(c.output) / (std::string("diffusion_") + modality_name(m) + ".ckpt");
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.config);
  if (cfg.output.empty()) throw ValidationError("config: 'output' is required for training");
  const PreparedData data = prepare_data(cfg);
  print_warnings(data.split.warnings, err);
  const fs::path dir = cfg.output;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_to_json(cfg));
  out << "train: " << data.split.train.size() << " training pixels, " << data.split.test.size() << " test pixels\n";

  RunControl control;
  control.resume = a.resume;
  control.stop_after = a.stop_after;
  control.progress = &out;

  if (a.stage == "diffusion" || a.stage == "all") {
    for (auto m : {Modality::hsi, Modality::lidar}) {
      control.checkpoint = diffusion_path(cfg, m);
      if (a.resume && fs::exists(control.checkpoint) && load_checkpoint(control.checkpoint).complete) {
        out << "diffusion " << modality_name(m) << ": already complete in " << control.checkpoint << '\n';
        continue;
      }
      const auto r = train_diffusion(data, cfg, m, control);
      write_text(dir / (std::string("diffusion_") + modality_name(m) + "_log.csv"), log_csv(r.log));
      print_warnings(r.warnings, err);
      if (!r.complete) {
        out << "stopped after epoch " << r.log.size() << "; continue with --resume\n";
        return 0;
      }
    }
  }
  if (a.stage == "classifier" || a.stage == "all") {
    std::vector<Encoder<float>> encoders;
    for (auto m : {Modality::hsi, Modality::lidar}) {
      const auto path = diffusion_path(cfg, m);
      if (!fs::exists(path)) throw MissingFileError("classifier stage needs the diffusion checkpoint " + path.string());
      const auto ckpt = load_checkpoint(path);
      if (!ckpt.complete) {
        throw ValidationError("diffusion checkpoint " + path.string() + " is incomplete (epoch " +
                              std::to_string(ckpt.epoch) + "); resume the diffusion stage first");
      }
      check_scene_matches(ckpt, data.scene);
      encoders.push_back(encoder_from_checkpoint(ckpt, m));
    }
    control.checkpoint = dir / "classifier.ckpt";
    auto r = train_classifier(data, cfg, std::move(encoders[0]), std::move(encoders[1]), control);
    write_text(dir / "classifier_log.csv", log_csv(r.log));
    print_warnings(r.warnings, err);
    if (!r.complete) {
      out << "stopped after epoch " << r.log.size() << "; continue with --resume\n";
      return 0;
    }
    const auto metrics = evaluate(r.model, data);
    print_warnings(metrics.warnings, err);
    write_text(dir / "metrics.json", metrics_json(metrics));
    out << "test oa " << metrics.oa << " aa " << metrics.aa << " kappa " << metrics.kappa << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::string scene, ckpt, render, metrics;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const Scene raw = load_scene(a.scene);
  check_scene_matches(ckpt, raw);
  auto model = model_from_checkpoint(ckpt);
  const auto data = prepare_data(ckpt.config, raw);
  const auto metrics = evaluate(model, data);
  print_warnings(metrics.warnings, err);
  const auto json = metrics_json(metrics);
  if (a.metrics.empty()) {
    out << json;
  } else {
    write_text(a.metrics, json);
  }
  if (!a.render.empty()) {
    render_map(predict_map(model, data), default_palette(), a.render);
    if (!a.metrics.empty()) out << "rendered " << a.render << '\n';
  }
  return 0;
}

struct AblateArgs {
  std::string config, sweep, out;
  std::vector<std::uint64_t> seeds;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.config);
  const Sweep sweep = parse_sweep(a.sweep);
  if (cfg.scene.empty()) throw ValidationError("config: 'scene' is required");
  const fs::path dir = !a.out.empty() ? fs::path(a.out) : fs::path(cfg.output.empty() ? "." : cfg.output) / "ablation";
  const Scene raw = load_scene(cfg.scene);
  const auto seeds = a.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : a.seeds;
  const auto report = run_ablation(raw, cfg, sweep, seeds, &out);
  fs::create_directories(dir);
  const auto csv = ablation_csv(report);
  write_text(dir / ("ablation_" + a.sweep + ".csv"), csv);
  if (sweep == Sweep::single_steps || sweep == Sweep::all) {
    write_text(dir / "single_step_curve.csv", single_step_curve_csv(report, cfg));
  }
  out << csv;
  return 0;
}

struct ScheduleArgs {
  std::size_t T = 500;
  double beta_start = 1e-4, beta_end = 0.02;
  std::string out = "-";
};

int cmd_schedule(const ScheduleArgs& a, std::ostream& out) {
  const auto s = NoiseSchedule::linear(a.T, a.beta_start, a.beta_end);
  if (a.out == "-") {
    write_schedule_csv(out, s);
  } else {
    std::ostringstream ss;
    write_schedule_csv(ss, s);
    write_text(a.out, ss.str());
  }
  return 0;
}

std::string config_footer() {
  std::ostringstream s;
  s << "\nConfig keys (JSON, unknown keys rejected):\n";
  for (const auto& d : config_key_docs()) {
    s << "  " << std::left << std::setw(26) << d.key << std::setw(22) << d.default_value << d.meaning << '\n';
  }
  return s.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-modality diffusion feature learning: synthesize, train, evaluate and ablate", "mdfl"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic scene directory");
  s->set_help_flag("--help", "Print this help message and exit");
  s->add_option("--out", synth.out, "Scene directory to create")->required();
  s->add_option("--h", synth.spec.height, "Height in pixels");
  s->add_option("--w", synth.spec.width, "Width in pixels");
  s->add_option("--c1", synth.spec.hsi_channels, "Hyperspectral bands");
  s->add_option("--c2", synth.spec.lidar_channels, "Elevation bands");
  s->add_option("--k", synth.spec.num_classes, "Number of classes");
  s->add_option("--noise", synth.spec.noise_sigma, "White noise standard deviation");
  s->add_option("--texture", synth.spec.texture_scale, "Smooth texture amplitude");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_flag("--force", synth.force, "Allow writing into a non-empty directory")->default_str("false");

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Build a scene directory from .npy arrays");
  c->add_option("--hsi", convert.hsi, "Hyperspectral cube [H,W,C] (.npy)")->required();
  c->add_option("--lidar", convert.lidar, "Elevation raster [H,W] or [H,W,C] (.npy)")->required();
  c->add_option("--labels", convert.labels, "Label raster [H,W], 0 = unlabeled (.npy)")->required();
  c->add_option("--out", convert.out, "Scene directory to create")->required();
  c->add_option("--name", convert.name, "Scene name (default: directory name)");
  c->add_option("--classes", convert.classes, "Number of classes (0: largest label)");
  c->add_flag("--force", convert.force, "Allow writing into a non-empty directory")->default_str("false");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run diffusion pretraining and/or classifier training");
  t->add_option("--config", train.config, "Run config (JSON)")->required();
  t->add_option("--stage", train.stage, "Stage to run")->check(CLI::IsMember({"diffusion", "classifier", "all"}));
  t->add_flag("--resume", train.resume, "Continue from checkpoints in the output directory")->default_str("false");
  t->add_option("--stop-after", train.stop_after, "Stop each stage after this many epochs (0: run to the end)");
  t->footer(config_footer());

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a classifier checkpoint on a scene's test split");
  e->add_option("--scene", eval.scene, "Scene directory")->required();
  e->add_option("--ckpt", eval.ckpt, "Classifier checkpoint")->required();
  e->add_option("--render", eval.render, "Write a full-scene class map PNG here (default: none)");
  e->add_option("--metrics", eval.metrics, "Write metrics JSON here (default: stdout)");

  AblateArgs ablate;
  auto* a = app.add_subcommand("ablate", "Train the reference and ablated variants with identical seeds");
  a->add_option("--config", ablate.config, "Base run config (JSON)")->required();
  a->add_option("--sweep", ablate.sweep, "Variants to compare")
      ->required()
      ->check(CLI::IsMember({"single_steps", "no_freq", "no_frm", "all"}));
  a->add_option("--seeds", ablate.seeds, "Seeds to average over (default: the config seed)")->delimiter(',');
  a->add_option("--out", ablate.out, "Report directory (default: <output>/ablation)");
  a->footer(config_footer());

  ScheduleArgs sched;
  auto* d = app.add_subcommand("schedule", "Dump the noise schedule as CSV");
  d->add_option("--T", sched.T, "Diffusion steps");
  d->add_option("--beta-start", sched.beta_start, "First beta");
  d->add_option("--beta-end", sched.beta_end, "Last beta");
  d->add_option("--out", sched.out, "Output file, - for stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return 2;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*c) return cmd_convert(convert, out);
    if (*t) return cmd_train(train, out, err);
    if (*e) return cmd_eval(eval, out, err);
    if (*a) return cmd_ablate(ablate, out);
    if (*d) return cmd_schedule(sched, out);
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace mdfl
