#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "cfcf/cfloss.hpp"
#include "cfcf/network.hpp"

namespace cfcf::network {
namespace {

double wrapped(int d, int n) {
  d %= n;
  if (d > n / 2) d -= n;
  if (d <= -((n + 1) / 2)) d += n;
  return d;
}

std::string describe(const Triplet& t) {
  return "sequence '" + t.sequence + "' frames " + std::to_string(t.template_frame) + " -> " +
         std::to_string(t.test_frame) + " shift (" + std::to_string(t.shift_dx) + ", " +
         std::to_string(t.shift_dy) + ")";
}

int resolve_threads(int requested, std::size_t work) {
  int n = requested;
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), work));
}

}  // namespace

TripletEvaluation evaluate_triplet(const NetworkModel& model, const Triplet& triplet,
                                   double lambda, bool with_gradients) {
  ForwardResult fx = forward_batch(model, {triplet.x_patch}, Mode::Train);
  ForwardResult fy = forward_batch(model, {triplet.y_patch}, Mode::Train);
  const FeatureStack x = to_feature_stack(fx.outputs.front());
  const FeatureStack y = to_feature_stack(fy.outputs.front());

  const RealGrid& g = triplet.g.grid;
  require_same_shape(g, x.front(), "evaluate_triplet");
  const RealGrid g_hat = corrfilter::make_desired_response(g.height(), g.width(), g.height() / 2,
                                                           g.width() / 2, triplet.g.sigma)
                             .grid;
  const cfloss::TripletLossResult r = cfloss::triplet_loss(x, y, g, g_hat, lambda);

  TripletEvaluation out;
  out.loss = r.loss;
  const corrfilter::Peak peak = corrfilter::argmax(r.response);
  out.peak_error = std::hypot(wrapped(peak.row - triplet.g.peak_row, g.height()),
                              wrapped(peak.col - triplet.g.peak_col, g.width()));
  out.x_stats = collect_batch_stats(fx.cache);
  out.y_stats = collect_batch_stats(fy.cache);
  if (with_gradients && std::isfinite(r.loss)) {
    out.grads = backward(model, fx.cache, {from_feature_stack(r.grad_x)}).params;
    accumulate(out.grads, backward(model, fy.cache, {from_feature_stack(r.grad_y)}).params);
  }
  return out;
}

double triplet_loss_value(const NetworkModel& model, const Triplet& triplet, double lambda) {
  return evaluate_triplet(model, triplet, lambda, false).loss;
}

Trainer::Trainer(NetworkModel model, TrainConfig config)
    : model_(std::move(model)), config_(config), velocity_(zero_grads(model_)) {
  if (config_.batch_size < 1) throw InvalidArgument("batch size must be positive");
  if (!(config_.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
  if (config_.momentum < 0.0 || config_.momentum >= 1.0) {
    throw InvalidArgument("momentum must lie in [0, 1)");
  }
  if (!(config_.lambda > 0.0)) throw NonPositiveLambda("lambda must be positive");
}

StepResult Trainer::step(std::span<const Triplet> batch, double learning_rate) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  std::vector<TripletEvaluation> evals(batch.size());
  const int workers = resolve_threads(config_.threads, batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      evals[i] = evaluate_triplet(model_, batch[i], config_.lambda);
    }
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
               i += static_cast<std::size_t>(workers)) {
            evals[i] = evaluate_triplet(model_, batch[i], config_.lambda);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  StepResult result;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!std::isfinite(evals[i].loss)) {
      throw NonFiniteLoss("loss is not finite for batch item " + std::to_string(i) + " (" +
                          describe(batch[i]) + ")");
    }
    result.mean_loss += evals[i].loss;
    result.mean_peak_error += evals[i].peak_error;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  result.mean_loss *= inv;
  result.mean_peak_error *= inv;

  ParamGrads grad = zero_grads(model_);
  for (const auto& e : evals) accumulate(grad, e.grads, inv);
  for (std::size_t li = 0; li < model_.layers.size(); ++li) {
    auto& params = model_.layers[li].params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      if (!params[pi].trainable) continue;
      auto& v = velocity_[li][pi];
      auto& w = params[pi].values;
      const auto& g = grad[li][pi];
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = config_.momentum * v[k] - learning_rate * g[k];
        w[k] += v[k];
      }
    }
  }
  for (const auto& e : evals) {
    update_running_stats(model_, e.x_stats);
    update_running_stats(model_, e.y_stats);
  }
  return result;
}

double learning_rate_for_epoch(const TrainConfig& config, int epoch) {
  if (config.lr_decay_every <= 0) return config.learning_rate;
  return config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_decay_every);
}

std::vector<EpochStats> fit(Trainer& trainer, std::span<const Triplet> data,
                            const std::function<void(const EpochStats&)>& on_epoch) {
  const TrainConfig& cfg = trainer.config();
  std::vector<EpochStats> history;
  if (data.empty()) {
    if (cfg.epochs > 0) throw InvalidArgument("no training data");
    return history;
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.learning_rate = learning_rate_for_epoch(cfg, epoch);
    std::vector<Triplet> batch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(data[order[i]]);
      }
      const StepResult r = trainer.step(batch, stats.learning_rate);
      stats.mean_loss += r.mean_loss * static_cast<double>(batch.size());
      stats.mean_peak_error += r.mean_peak_error * static_cast<double>(batch.size());
    }
    stats.mean_loss /= static_cast<double>(data.size());
    stats.mean_peak_error /= static_cast<double>(data.size());
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

Triplet random_triplet(const Geometry& input, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Triplet t;
  t.x_patch = Tensor(input.channels, input.height, input.width);
  t.y_patch = Tensor(input.channels, input.height, input.width);
  for (auto& v : t.x_patch.data) v = u(rng);
  for (auto& v : t.y_patch.data) v = u(rng);
  const int reach = std::max(input.height, input.width) / 4;
  std::uniform_int_distribution<int> shift(-reach, reach);
  t.shift_dx = shift(rng);
  t.shift_dy = shift(rng);
  const int cr = input.height / 2;
  const int cc = input.width / 2;
  t.g = corrfilter::make_desired_response(
      input.height, input.width, ((cr + t.shift_dy) % input.height + input.height) % input.height,
      ((cc + t.shift_dx) % input.width + input.width) % input.width,
      corrfilter::default_sigma(input.height, input.width));
  t.sequence = "random";
  return t;
}

NetworkGradCheck grad_check(const NetworkModel& model, const Triplet& triplet, double lambda,
                            const cfloss::GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw InvalidStep("finite-difference step must be positive");
  if (opts.trials < 1) throw InvalidArgument("grad_check needs at least one trial");

  struct Coord {
    std::size_t layer;
    std::size_t param;
  };
  std::vector<Coord> tensors;
  std::vector<std::size_t> sizes;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    // A conv bias right before batch norm is cancelled by the mean
    // subtraction; its gradient is identically zero and carries no signal.
    const bool bias_cancelled = std::holds_alternative<ConvSpec>(model.layers[li].spec) &&
                                li + 1 < model.layers.size() &&
                                std::holds_alternative<BatchNormSpec>(model.layers[li + 1].spec);
    for (std::size_t pi = 0; pi < model.layers[li].params.size(); ++pi) {
      const ParamTensor& p = model.layers[li].params[pi];
      if (!p.trainable || p.values.empty()) continue;
      if (bias_cancelled && pi == 1) continue;
      tensors.push_back({li, pi});
      sizes.push_back(p.values.size());
    }
  }
  if (tensors.empty()) throw InvalidArgument("model has no trainable parameters");

  const TripletEvaluation ev = evaluate_triplet(model, triplet, lambda);
  if (!std::isfinite(ev.loss)) throw NonFiniteLoss("loss is not finite for " + describe(triplet));
  NetworkModel work = model;
  std::mt19937_64 rng(opts.seed);
  // Coordinates drawn uniformly over all trainable scalars.
  std::discrete_distribution<std::size_t> pick_tensor(sizes.begin(), sizes.end());

  NetworkGradCheck report;
  report.trials = opts.trials;
  double worst = -1.0;
  for (int t = 0; t < opts.trials; ++t) {
    const Coord c = tensors[pick_tensor(rng)];
    auto& values = work.layers[c.layer].params[c.param].values;
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    const std::size_t k = pick(rng);
    const double base = values[k];
    values[k] = base + opts.step;
    const double plus = triplet_loss_value(work, triplet, lambda);
    values[k] = base - opts.step;
    const double minus = triplet_loss_value(work, triplet, lambda);
    values[k] = base;
    const double numeric = (plus - minus) / (2.0 * opts.step);
    const double analytic = opts.analytic_scale * ev.grads[c.layer][c.param][k];
    const double err = cfloss::relative_error(analytic, numeric);
    report.max_rel_err = std::max(report.max_rel_err, err);
    if (err > worst) {
      worst = err;
      report.worst_coordinate = "layer " + std::to_string(c.layer) + " (" +
                                kind_name(model.layers[c.layer].spec) + ") " +
                                model.layers[c.layer].params[c.param].name + "[" +
                                std::to_string(k) + "] analytic=" + std::to_string(analytic) +
                                " numeric=" + std::to_string(numeric) +
                                " rel_err=" + std::to_string(err);
    }
  }
  report.pass = report.max_rel_err < opts.tolerance;
  return report;
}

}  // namespace cfcf::network
