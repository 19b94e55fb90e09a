#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/logger.h>
#include <spdlog/sinks/ostream_sink.h>

#include "cfcf/cfloss.hpp"
#include "cfcf/dataset.hpp"
#include "cfcf/errors.hpp"
#include "cfcf/eval.hpp"
#include "cfcf/network.hpp"
#include "cfcf/synthetic.hpp"
#include "cfcf/tracker.hpp"

namespace cfcf::cli {
namespace {

namespace fs = std::filesystem;

// Raised for argument problems found after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::CorruptFile:
    case ErrorKind::VersionMismatch:
      return kIoFailure;
    case ErrorKind::NonFiniteLoss:
      return kNonFiniteLoss;
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidVariant:
    case ErrorKind::NonPositiveLambda:
    case ErrorKind::InvalidStep:
    case ErrorKind::InvalidSigma:
    case ErrorKind::MissingModel:
      return kBadArguments;
    default:
      return kValidationFailure;
  }
}

std::vector<double> parse_scale_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("bad noise scale \"" + item + "\"");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size() || !std::isfinite(v) || v < 0.0) {
      throw UsageError("bad noise scale \"" + item + "\"");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("noise scale list is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw UsageError("bad integer \"" + item + "\"");
    }
    if (used != item.size() || v < 1) throw UsageError("bad width \"" + item + "\"");
    out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

struct Globals {
  std::uint64_t seed = 42;
  int threads = 0;
  std::string log_level = "info";
};

// --- gen-dataset --------------------------------------------------------------

struct GenDatasetArgs {
  std::string sequences;
  std::string out;
  std::size_t count = 0;
  dataset::SamplerConfig sampler;
};

int gen_dataset(const GenDatasetArgs& a, const Globals& g, std::ostream& out, spdlog::logger& log) {
  const auto seqs = dataset::load_sequences(a.sequences);
  log.info("loaded {} sequence(s) from {}", seqs.size(), a.sequences);
  dataset::GenerateOptions opts{a.count, g.seed, a.sampler, g.threads};
  const dataset::Manifest m = dataset::generate_dataset(seqs, opts, a.out);
  out << "wrote " << m.samples.size() << " samples to " << a.out << '\n';
  return kOk;
}

// --- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string arch;
  std::string preset;
  int out_channels = 0;
  std::string widths = "32,32,64";
  int aux = 0;
  network::TrainConfig config;
  std::string out;
  std::string log_path;
};

int train(TrainArgs a, const Globals& g, std::ostream& out, spdlog::logger& log) {
  const auto data = dataset::load_all(a.dataset);
  if (data.empty()) throw UsageError("dataset " + a.dataset + " has no samples");
  const network::Geometry input{data.front().x_patch.channels, data.front().x_patch.height,
                                data.front().x_patch.width};

  network::NetworkModel model;
  if (!a.arch.empty()) {
    const network::Architecture arch = network::load_architecture(a.arch);
    model = network::make_network(arch.layers, arch.input.value_or(input), g.seed);
  } else {
    const bool single = a.preset == "single";
    network::ArchOptions opts;
    opts.widths = parse_int_list(a.widths);
    opts.input = input;
    opts.seed = g.seed;
    const int d = a.out_channels > 0 ? a.out_channels : (single ? 1 : 8);
    model = network::build_custom_arch(single ? network::Variant::Single : network::Variant::Multi,
                                       d, opts);
  }
  if (a.aux > 0) model = network::attach_auxiliary_layer(model, a.aux, g.seed + 1);
  if (!(model.input == input)) {
    throw ShapeMismatch("architecture input does not match the dataset patches");
  }

  a.config.seed = g.seed;
  a.config.threads = g.threads;
  network::Trainer trainer(std::move(model), a.config);
  log.info("training on {} triplets, {} trainable parameters, {} epoch(s)", data.size(),
           trainer.model().trainable_parameter_count(), a.config.epochs);

  std::optional<std::ofstream> csv;
  if (!a.log_path.empty()) {
    csv.emplace(a.log_path, std::ios::trunc);
    if (!*csv) throw IoError("cannot write " + a.log_path);
    *csv << "epoch,mean_loss,mean_peak_error,learning_rate\n";
  }
  try {
    network::fit(trainer, data, [&](const network::EpochStats& s) {
      log.info("epoch {} loss {:.6g} peak error {:.4g} px lr {:.3g}", s.epoch, s.mean_loss,
               s.mean_peak_error, s.learning_rate);
      if (csv) {
        char line[160];
        std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g\n", s.epoch, s.mean_loss,
                      s.mean_peak_error, s.learning_rate);
        *csv << line << std::flush;
      }
    });
  } catch (const NonFiniteLoss& e) {
    log.error("{}", e.what());
    throw;
  }
  network::save_model(trainer.model(), a.out);
  out << "saved model to " << a.out << '\n';
  return kOk;
}

// --- grad-check -------------------------------------------------------------------

struct GradCheckArgs {
  std::string arch;
  int size = 17;
  int channels = 2;
  int trials = 25;
  double tolerance = 1e-4;
  double lambda = 0.01;
  double step = 1e-6;
  std::string report;
};

int grad_check(const GradCheckArgs& a, const Globals& g, std::ostream& out, spdlog::logger& log) {
  cfloss::GradCheckOptions opts;
  opts.trials = a.trials;
  opts.tolerance = a.tolerance;
  opts.step = a.step;
  opts.seed = g.seed;

  const network::Geometry input{3, a.size, a.size};
  network::NetworkModel model;
  if (!a.arch.empty()) {
    const network::Architecture arch = network::load_architecture(a.arch);
    model = network::make_network(arch.layers, input, g.seed);
  } else {
    using namespace network;
    model = make_network({ConvSpec{3, 4, 3, 3, 1, 1}, BatchNormSpec{}, LeakyReluSpec{},
                          ConvSpec{4, a.channels, 3, 3, 1, 1}},
                         input, g.seed);
  }
  const Triplet t = network::random_triplet(input, g.seed + 1);

  // Loss-level check on the network's own output maps, then through the chain.
  const FeatureStack x = network::forward(model, t.x_patch, network::Mode::Train);
  const FeatureStack y = network::forward(model, t.y_patch, network::Mode::Train);
  const RealGrid g_hat =
      corrfilter::make_desired_response(a.size, a.size, a.size / 2, a.size / 2, t.g.sigma).grid;
  const cfloss::GradCheckReport features =
      cfloss::grad_check(x, y, t.g.grid, g_hat, a.lambda, opts);
  const network::NetworkGradCheck chain = network::grad_check(model, t, a.lambda, opts);

  const nlohmann::json j{{"format_version", 1},
                         {"size", a.size},
                         {"channels", model.output_channels()},
                         {"trials", a.trials},
                         {"tolerance", a.tolerance},
                         {"features",
                          {{"max_rel_err_x", features.max_rel_err_x},
                           {"max_rel_err_y", features.max_rel_err_y},
                           {"pass", features.pass},
                           {"worst_coordinate", features.worst_coordinate}}},
                         {"network",
                          {{"max_rel_err", chain.max_rel_err},
                           {"pass", chain.pass},
                           {"worst_coordinate", chain.worst_coordinate}}},
                         {"pass", features.pass && chain.pass}};
  if (!a.report.empty()) write_text(a.report, j.dump(2));
  out << j.dump(2) << '\n';
  if (features.pass && chain.pass) return kOk;
  log.error("gradient check failed");
  if (!features.pass) log.error("feature gradients: worst {}", features.worst_coordinate);
  if (!chain.pass) log.error("network gradients: worst {}", chain.worst_coordinate);
  return kGradCheckFailed;
}

// --- track ------------------------------------------------------------------------

struct TrackArgs {
  std::string model;
  std::string features = "gray_grads";
  std::string sequence;
  std::string init;
  std::string out;
  std::string report;
  bool no_window = false;
  tracker::TrackerConfig config;
};

int track(TrackArgs a, std::ostream& out) {
  tracker::TrackerConfig cfg = a.config;
  cfg.features = tracker::parse_feature_mode(a.features);
  cfg.window = !a.no_window;
  if (!a.model.empty()) cfg.model_path = a.model;
  if (tracker::uses_network(cfg.features) && !cfg.model_path) {
    throw UsageError(a.features + " features need --model");
  }
  Box init;
  if (!a.init.empty()) {
    init = parse_box(a.init);
  } else {
    const fs::path gt = fs::path(a.sequence) / "groundtruth.txt";
    if (!fs::exists(gt)) throw UsageError("--init is required when the sequence has no groundtruth.txt");
    const auto boxes = read_boxes(gt);
    if (boxes.empty()) throw UsageError(gt.string() + " is empty; pass --init");
    init = boxes.front();
  }
  std::optional<fs::path> report;
  if (!a.report.empty()) report = a.report;
  const tracker::TrackResult r = tracker::track_sequence(cfg, a.sequence, init, a.out, report);
  char line[128];
  std::snprintf(line, sizeof line, "tracked %zu frames at %.1f fps (%s)\n", r.boxes.size(), r.fps,
                tracker::to_string(cfg.features));
  out << line;
  return kOk;
}

// --- eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string report;
  std::string csv;
};

int evaluate(const EvalArgs& a, std::ostream& out) {
  const eval::EvalReport r = eval::evaluate_files(a.pred, a.gt);
  eval::write_report(r, a.report);
  if (!a.csv.empty()) eval::write_csv(r, a.csv);
  char line[160];
  std::snprintf(line, sizeof line, "frames %zu  OP %.4f  DP %.4f  AUC %.4f\n", r.frames, r.op, r.dp,
                r.auc);
  out << line;
  return kOk;
}

// --- layer-transfer ---------------------------------------------------------------

struct LayerTransferArgs {
  int size = 16;
  std::string scales = "0.5,1,2";
  double gamma = 0.0;
  std::string report;
};

int layer_transfer(const LayerTransferArgs& a, const Globals& g, std::ostream& out) {
  const std::vector<double> scales = parse_scale_list(a.scales);
  if (a.gamma < 0.0) throw UsageError("--gamma must be non-negative");
  const cfloss::LayerTransferInputs in = cfloss::random_layer_transfer_inputs(a.size, g.seed);
  nlohmann::json rows = nlohmann::json::array();
  for (double t : scales) {
    SpectralGrid mu1 = in.mu1;
    SpectralGrid mu2 = in.mu2;
    for (auto& v : mu1) v *= t;
    for (auto& v : mu2) v *= t;
    const auto r = cfloss::layer_transfer_experiment(in.x1, in.x2, mu1, mu2, in.g_hat, a.gamma);
    rows.push_back({{"scale", t}, {"norm_single", r.norm_single}, {"norm_multi", r.norm_multi}});
    char line[128];
    std::snprintf(line, sizeof line, "scale %-8g |E_single| %-14.8g |E_multi| %.8g\n", t,
                  r.norm_single, r.norm_multi);
    out << line;
  }
  const nlohmann::json j{{"format_version", 1}, {"size", a.size},  {"gamma", a.gamma},
                         {"seed", g.seed},      {"rows", rows}};
  write_text(a.report, j.dump(2));
  return kOk;
}

// --- synth ------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "translate";
  std::string out;
  int frames = 0;
};

int synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  synthetic::SyntheticSequence seq;
  if (a.kind == "translate") {
    synthetic::TranslateOptions o;
    if (a.frames > 0) o.frames = a.frames;
    o.seed = g.seed;
    seq = synthetic::translating_square(o);
  } else if (a.kind == "zoom") {
    synthetic::ZoomOptions o;
    if (a.frames > 0) o.frames = a.frames;
    o.seed = g.seed;
    seq = synthetic::zoom_square(o);
  } else {
    throw UsageError("unknown sequence kind \"" + a.kind + "\"");
  }
  synthetic::write_sequence(seq, a.out);
  out << "wrote " << seq.frames.size() << " frames to " << a.out << '\n';
  return kOk;
}

spdlog::level::level_enum parse_level(const std::string& s) {
  const auto level = spdlog::level::from_str(s);
  if (level == spdlog::level::off && s != "off") throw UsageError("unknown log level \"" + s + "\"");
  return level;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Correlation filter feature learning and tracking", "cfcf"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->capture_default_str();

  GenDatasetArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "Sample training triplets from annotated sequences");
  gen_cmd->add_option("--sequences", gen.sequences, "Sequence directory, or a root holding several")
      ->required();
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of triplets")->required();
  gen_cmd->add_option("--patch-size", gen.sampler.patch_size, "Side of the square patches")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--shift-frac", gen.sampler.shift_frac,
                      "Shift range as a fraction of the box width/height")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--frame-sigma", gen.sampler.frame_sigma,
                      "Standard deviation of the template/test frame gap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Learn network features with the correlation filter loss");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset directory from gen-dataset")->required();
  auto* arch_opt = train_cmd->add_option("--arch", tr.arch, "Architecture JSON file");
  auto* preset_opt = train_cmd->add_option("--preset", tr.preset, "Built-in architecture: single or multi (default multi)")
      ->check(CLI::IsMember({"single", "multi"}));
  arch_opt->excludes(preset_opt);
  train_cmd->add_option("--out-channels", tr.out_channels,
                        "Output maps of the preset (default 1 for single, 8 for multi)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--widths", tr.widths, "Preset widths of the first three layers")
      ->capture_default_str();
  train_cmd->add_option("--aux", tr.aux, "Append an auxiliary layer with this many maps (0 = none)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--batch", tr.config.batch_size, "Triplets per SGD step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate, "Initial learning rate, halved every 20 epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--momentum", tr.config.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--lambda", tr.config.lambda, "Filter regularisation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Output model file")->required();
  train_cmd->add_option("--log", tr.log_path, "Per-epoch CSV log");
  tr.config.epochs = 50;

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of the loss gradients");
  gc_cmd->add_option("--arch", gc.arch, "Architecture JSON file (default: two conv layers)");
  gc_cmd->add_option("--size", gc.size, "Input side")->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--channels", gc.channels, "Output maps of the default network")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--trials", gc.trials, "Random coordinates per check")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--lambda", gc.lambda, "Filter regularisation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--step", gc.step, "Central difference step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gc_cmd->add_option("--report", gc.report, "Write the JSON report here as well");

  TrackArgs tk;
  auto* track_cmd = app.add_subcommand("track", "Track an object through a frame sequence");
  track_cmd->add_option("--model", tk.model, "Model file (required for cfcf and mcfcf)");
  track_cmd->add_option("--features", tk.features, "gray, gray_grads, cfcf or mcfcf")
      ->check(CLI::IsMember({"gray", "gray_grads", "cfcf", "mcfcf"}))
      ->capture_default_str();
  track_cmd->add_option("--sequence", tk.sequence, "Directory of frame images")->required();
  track_cmd->add_option("--init", tk.init, "Initial box \"x,y,w,h\" (default: first groundtruth box)");
  track_cmd->add_option("--out", tk.out, "Output boxes file")->required();
  track_cmd->add_option("--report", tk.report, "Run report JSON (fps, peak values)");
  track_cmd->add_flag("--no-window", tk.no_window, "Disable the Hann window");
  track_cmd->add_option("--update-rate", tk.config.update_rate, "Model update rate")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  track_cmd->add_option("--search-area-factor", tk.config.search_area_factor,
                        "Search side in units of 2 sqrt(w h)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  track_cmd->add_option("--lambda", tk.config.lambda, "Filter regularisation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  track_cmd->add_option("--scales", tk.config.scale.num_scales, "Number of scales")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  track_cmd->add_option("--scale-step", tk.config.scale.scale_step, "Ratio between scales")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Success and precision metrics of a boxes file");
  eval_cmd->add_option("--pred", ev.pred, "Predicted boxes")->required();
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth boxes")->required();
  eval_cmd->add_option("--report", ev.report, "Output report JSON")->required();
  eval_cmd->add_option("--csv", ev.csv, "Output curves CSV");

  LayerTransferArgs lt;
  auto* lt_cmd = app.add_subcommand("layer-transfer",
                                    "Correlation error of one summed map versus two separate maps");
  lt_cmd->add_option("--size", lt.size, "Side of the square maps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lt_cmd->add_option("--noise-scales", lt.scales, "Comma-separated noise scales")->capture_default_str();
  lt_cmd->add_option("--gamma", lt.gamma, "Regularisation")->capture_default_str();
  lt_cmd->add_option("--report", lt.report, "Output report JSON")->required();

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic test sequence");
  synth_cmd->add_option("--kind", sy.kind, "translate or zoom")
      ->check(CLI::IsMember({"translate", "zoom"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", sy.out, "Output sequence directory")->required();
  synth_cmd->add_option("--frames", sy.frames, "Frame count (default per kind)")
      ->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return kBadArguments;
  }

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  spdlog::logger log("cfcf", sink);
  log.set_pattern("[%l] %v");
  try {
    log.set_level(parse_level(g.log_level));
    if (*gen_cmd) return gen_dataset(gen, g, out, log);
    if (*train_cmd) return train(tr, g, out, log);
    if (*gc_cmd) return grad_check(gc, g, out, log);
    if (*track_cmd) return track(tk, out);
    if (*eval_cmd) return evaluate(ev, out);
    if (*lt_cmd) return layer_transfer(lt, g, out);
    if (*synth_cmd) return synth(sy, g, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kBadArguments;
  } catch (const Error& e) {
    log.error("{}", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    log.error("{}", e.what());
    return kValidationFailure;
  }
  return kBadArguments;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cfcf::cli
