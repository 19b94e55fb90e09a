#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfcf/cfloss.hpp"
#include "cfcf/grid.hpp"
#include "cfcf/tensor.hpp"
#include "cfcf/triplet.hpp"

namespace cfcf::network {

// --- layer specifications ---------------------------------------------------

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 1;
};

struct BatchNormSpec {
  int channels = 0;
  double epsilon = 1e-5;
  double momentum = 0.9;
};

struct LeakyReluSpec {
  double leak = 0.1;
};

struct MaxPoolSpec {
  int window = 2;
  int stride = 2;
};

using LayerSpec = std::variant<ConvSpec, BatchNormSpec, LeakyReluSpec, MaxPoolSpec>;

const char* kind_name(const LayerSpec& spec);

/// Padding that keeps the spatial size for an odd kernel at stride 1.
int same_padding(int kernel);

struct Geometry {
  int channels = 3;
  int height = 101;
  int width = 101;

  bool operator==(const Geometry&) const = default;
};

// --- model ------------------------------------------------------------------

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
  bool trainable = true;
};

struct Layer {
  LayerSpec spec;
  std::vector<ParamTensor> params;
};

/// Fully convolutional network: conv / batch-norm / leaky-ReLU / max-pool
/// layers only, float64 throughout.
struct NetworkModel {
  Geometry input;
  std::vector<Layer> layers;

  Geometry output_geometry() const;
  /// Geometry after the first `count` layers.
  Geometry geometry_after(std::size_t count) const;
  int output_channels() const { return output_geometry().channels; }
  std::size_t trainable_parameter_count() const;
};

/// Builds parameters for `specs` with He-initialized conv weights, zero
/// biases, unit batch-norm scale and zero shift. Batch-norm channel counts of
/// 0 are inferred from the preceding layer. Throws InvalidArgument on
/// inconsistent channel counts.
NetworkModel make_network(const std::vector<LayerSpec>& specs, Geometry input,
                          std::uint64_t seed);

enum class Variant { Single, Multi };

struct ArchOptions {
  std::vector<int> widths{32, 32, 64};
  int kernel = 3;
  Geometry input{};
  std::uint64_t seed = 42;
};

/// Four size-preserving conv layers, each followed by batch norm; leaky ReLU
/// (0.1) after the first three. The single variant emits one map.
NetworkModel build_custom_arch(Variant variant, int out_channels,
                               const ArchOptions& options = {});

/// Appends a size-preserving conv + batch norm emitting `aux_channels` maps.
NetworkModel attach_auxiliary_layer(const NetworkModel& model, int aux_channels,
                                    std::uint64_t seed = 7, int kernel = 1);

// --- forward / backward -----------------------------------------------------

enum class Mode { Train, Eval };

struct LayerCache {
  std::vector<Tensor> inputs;          // layer input per batch item
  std::vector<Tensor> normalized;      // batch norm: x_hat
  std::vector<double> inv_std;         // batch norm
  std::vector<double> batch_mean;      // batch norm, train mode
  std::vector<double> batch_var;       // batch norm, train mode
  std::vector<std::vector<std::size_t>> argmax;  // max pool
};

struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<Geometry> shapes;  // input geometry of every layer + final output
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  std::vector<Tensor> outputs;
  ForwardCache cache;
};

/// Evaluates a batch. In train mode batch norm uses the statistics of this
/// batch (over items and spatial positions) and the cache holds what backward
/// needs; in eval mode the running statistics are used.
ForwardResult forward_batch(const NetworkModel& model, const std::vector<Tensor>& images,
                            Mode mode);

FeatureStack forward(const NetworkModel& model, const Tensor& image, Mode mode = Mode::Eval);

/// Output of the first `layer_count` layers (eval mode).
Tensor forward_partial(const NetworkModel& model, const Tensor& image, std::size_t layer_count);

/// [layer][param][element], mirroring NetworkModel::layers[i].params.
using ParamGrads = std::vector<std::vector<std::vector<double>>>;

ParamGrads zero_grads(const NetworkModel& model);
void accumulate(ParamGrads& into, const ParamGrads& from, double scale = 1.0);

struct BackwardResult {
  ParamGrads params;
  std::vector<Tensor> inputs;
};

/// Reverse-mode pass. Throws StaleCache when the gradient shapes or the model
/// no longer match the cache.
BackwardResult backward(const NetworkModel& model, const ForwardCache& cache,
                        const std::vector<Tensor>& grad_outputs);

/// Batch-norm statistics of one train-mode forward, per layer (empty for
/// layers without running statistics).
struct BatchStats {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> var;
};

BatchStats collect_batch_stats(const ForwardCache& cache);

/// running = momentum * running + (1 - momentum) * batch, for every
/// batch-norm layer.
void update_running_stats(NetworkModel& model, const BatchStats& stats);

// --- persistence ------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

/// Container: 7-byte magic "CFCFMDL", one format-version byte, little-endian
/// uint64 manifest length, JSON manifest, then every tensor as little-endian
/// float64 concatenated in manifest order.
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

std::string specs_to_json(const std::vector<LayerSpec>& specs);

struct Architecture {
  std::vector<LayerSpec> layers;
  std::optional<Geometry> input;
};

/// Either a JSON list of layer objects or {"input": [c, h, w], "layers": [...]}.
Architecture parse_architecture(const std::string& json_text);
Architecture load_architecture(const std::filesystem::path& path);

// --- training ---------------------------------------------------------------

struct TrainConfig {
  int batch_size = 8;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int epochs = 1;
  std::uint64_t seed = 42;
  double lambda = 0.01;
  double lr_decay = 0.5;
  int lr_decay_every = 20;
  int threads = 1;
};

struct TripletEvaluation {
  double loss = 0.0;
  double peak_error = 0.0;  // pixels between response argmax and g's peak
  ParamGrads grads;
  BatchStats x_stats;
  BatchStats y_stats;
};

/// Loss of one triplet through the network and its gradient with respect to
/// every trainable parameter: both patches go through the same model and the
/// contributions of dL/dx and dL/dy are summed.
TripletEvaluation evaluate_triplet(const NetworkModel& model, const Triplet& triplet,
                                   double lambda, bool with_gradients = true);

/// Loss only (train-mode batch norm, no parameter change).
double triplet_loss_value(const NetworkModel& model, const Triplet& triplet, double lambda);

struct StepResult {
  double mean_loss = 0.0;
  double mean_peak_error = 0.0;
};

/// SGD with momentum. Owns the velocity buffers so consecutive steps share
/// them.
class Trainer {
 public:
  Trainer(NetworkModel model, TrainConfig config);

  /// Mean loss and peak error of the batch before the update.
  StepResult step(std::span<const Triplet> batch, double learning_rate);
  StepResult step(std::span<const Triplet> batch) { return step(batch, config_.learning_rate); }

  const NetworkModel& model() const noexcept { return model_; }
  NetworkModel& model() noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  NetworkModel model_;
  TrainConfig config_;
  ParamGrads velocity_;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_peak_error = 0.0;
  double learning_rate = 0.0;
};

double learning_rate_for_epoch(const TrainConfig& config, int epoch);

/// Runs config.epochs epochs over `data`, reshuffled each epoch from
/// config.seed. `on_epoch` is called after every epoch.
std::vector<EpochStats> fit(Trainer& trainer, std::span<const Triplet> data,
                            const std::function<void(const EpochStats&)>& on_epoch = {});

// --- finite-difference check through the network ---------------------------

struct NetworkGradCheck {
  double max_rel_err = 0.0;
  int trials = 0;
  bool pass = false;
  std::string worst_coordinate;
};

/// Random test/template images of the model's input geometry, shift within a
/// quarter of the size, g with the default sigma.
Triplet random_triplet(const Geometry& input, std::uint64_t seed);

/// Central differences of the triplet loss against evaluate_triplet at
/// `opts.trials` random trainable parameter coordinates.
NetworkGradCheck grad_check(const NetworkModel& model, const Triplet& triplet, double lambda,
                            const cfloss::GradCheckOptions& opts);

}  // namespace cfcf::network
