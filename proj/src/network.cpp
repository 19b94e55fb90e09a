#include "cfcf/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cfcf::network {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Geometry conv_output(const ConvSpec& c, const Geometry& in) {
  return {c.out_channels, (in.height + 2 * c.padding - c.kernel_h) / c.stride + 1,
          (in.width + 2 * c.padding - c.kernel_w) / c.stride + 1};
}

Geometry pool_output(const MaxPoolSpec& p, const Geometry& in) {
  return {in.channels, (in.height - p.window) / p.stride + 1,
          (in.width - p.window) / p.stride + 1};
}

Geometry layer_output(const LayerSpec& spec, const Geometry& in) {
  return std::visit(Overloaded{
                        [&](const ConvSpec& c) { return conv_output(c, in); },
                        [&](const MaxPoolSpec& p) { return pool_output(p, in); },
                        [&](const auto&) { return in; },
                    },
                    spec);
}

// im2col for one image: rows are (channel, ky, kx), columns output positions.
RowMatrix im2col(const Tensor& in, const ConvSpec& c, const Geometry& out) {
  const int k = c.kernel_h * c.kernel_w;
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(in.channels) * k,
                                  static_cast<Eigen::Index>(out.height) * out.width);
  for (int ch = 0; ch < in.channels; ++ch) {
    const double* src = in.channel_data(ch);
    for (int ky = 0; ky < c.kernel_h; ++ky) {
      for (int kx = 0; kx < c.kernel_w; ++kx) {
        double* dst = col.row((static_cast<Eigen::Index>(ch) * c.kernel_h + ky) * c.kernel_w + kx)
                          .data();
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * c.stride - c.padding + ky;
          if (iy < 0 || iy >= in.height) continue;
          const double* src_row = src + static_cast<std::size_t>(iy) * in.width;
          double* dst_row = dst + static_cast<std::size_t>(oy) * out.width;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * c.stride - c.padding + kx;
            if (ix >= 0 && ix < in.width) dst_row[ox] = src_row[ix];
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const RowMatrix& col, const ConvSpec& c, const Geometry& out, Tensor& grad_in) {
  for (int ch = 0; ch < grad_in.channels; ++ch) {
    double* dst = grad_in.channel_data(ch);
    for (int ky = 0; ky < c.kernel_h; ++ky) {
      for (int kx = 0; kx < c.kernel_w; ++kx) {
        const double* src =
            col.row((static_cast<Eigen::Index>(ch) * c.kernel_h + ky) * c.kernel_w + kx).data();
        for (int oy = 0; oy < out.height; ++oy) {
          const int iy = oy * c.stride - c.padding + ky;
          if (iy < 0 || iy >= grad_in.height) continue;
          double* dst_row = dst + static_cast<std::size_t>(iy) * grad_in.width;
          const double* src_row = src + static_cast<std::size_t>(oy) * out.width;
          for (int ox = 0; ox < out.width; ++ox) {
            const int ix = ox * c.stride - c.padding + kx;
            if (ix >= 0 && ix < grad_in.width) dst_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Layer& layer, const ConvSpec& c, const Tensor& in) {
  const Geometry out_g = conv_output(c, {in.channels, in.height, in.width});
  const RowMatrix col = im2col(in, c, out_g);
  ConstMatrixMap weight(layer.params[0].values.data(), c.out_channels,
                        static_cast<Eigen::Index>(c.in_channels) * c.kernel_h * c.kernel_w);
  Tensor out(out_g.channels, out_g.height, out_g.width);
  MatrixMap result(out.data.data(), out_g.channels,
                   static_cast<Eigen::Index>(out_g.height) * out_g.width);
  result.noalias() = weight * col;
  for (int o = 0; o < out_g.channels; ++o) result.row(o).array() += layer.params[1].values[o];
  return out;
}

void conv_backward(const Layer& layer, const ConvSpec& c, const Tensor& in, const Tensor& grad_out,
                   std::vector<std::vector<double>>& grads, Tensor* grad_in) {
  const Geometry out_g{grad_out.channels, grad_out.height, grad_out.width};
  const RowMatrix col = im2col(in, c, out_g);
  const Eigen::Index k = static_cast<Eigen::Index>(c.in_channels) * c.kernel_h * c.kernel_w;
  ConstMatrixMap dout(grad_out.data.data(), out_g.channels,
                      static_cast<Eigen::Index>(out_g.height) * out_g.width);
  MatrixMap dweight(grads[0].data(), c.out_channels, k);
  dweight.noalias() += dout * col.transpose();
  for (int o = 0; o < out_g.channels; ++o) grads[1][o] += dout.row(o).sum();
  if (grad_in != nullptr) {
    ConstMatrixMap weight(layer.params[0].values.data(), c.out_channels, k);
    const RowMatrix dcol = weight.transpose() * dout;
    col2im_add(dcol, c, out_g, *grad_in);
  }
}

}  // namespace

const char* kind_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const ConvSpec&) { return "conv"; },
                        [](const BatchNormSpec&) { return "batch_norm"; },
                        [](const LeakyReluSpec&) { return "leaky_relu"; },
                        [](const MaxPoolSpec&) { return "max_pool"; },
                    },
                    spec);
}

int same_padding(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw InvalidArgument("size-preserving padding needs an odd kernel");
  }
  return (kernel - 1) / 2;
}

Geometry NetworkModel::geometry_after(std::size_t count) const {
  Geometry g = input;
  for (std::size_t i = 0; i < count && i < layers.size(); ++i) g = layer_output(layers[i].spec, g);
  return g;
}

Geometry NetworkModel::output_geometry() const { return geometry_after(layers.size()); }

std::size_t NetworkModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& p : layer.params) {
      if (p.trainable) n += p.values.size();
    }
  }
  return n;
}

NetworkModel make_network(const std::vector<LayerSpec>& specs, Geometry input,
                          std::uint64_t seed) {
  if (input.channels < 1 || input.height < 1 || input.width < 1) {
    throw InvalidArgument("input geometry must be positive");
  }
  NetworkModel model;
  model.input = input;
  std::mt19937_64 rng(seed);
  Geometry g = input;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer{specs[i], {}};
    const std::string prefix = "layers." + std::to_string(i) + ".";
    std::visit(
        Overloaded{
            [&](ConvSpec& c) {
              if (c.in_channels == 0) c.in_channels = g.channels;
              if (c.in_channels != g.channels) {
                throw InvalidArgument("conv layer " + std::to_string(i) + " expects " +
                                      std::to_string(c.in_channels) + " channels, gets " +
                                      std::to_string(g.channels));
              }
              if (c.out_channels < 1 || c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1 ||
                  c.padding < 0) {
                throw InvalidArgument("invalid conv layer " + std::to_string(i));
              }
              const int fan_in = c.in_channels * c.kernel_h * c.kernel_w;
              std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
              ParamTensor w{prefix + "weight",
                            {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w},
                            std::vector<double>(static_cast<std::size_t>(c.out_channels) * fan_in),
                            true};
              for (auto& v : w.values) v = he(rng);
              layer.params.push_back(std::move(w));
              layer.params.push_back({prefix + "bias", {c.out_channels},
                                      std::vector<double>(c.out_channels, 0.0), true});
            },
            [&](BatchNormSpec& b) {
              if (b.channels == 0) b.channels = g.channels;
              if (b.channels != g.channels) {
                throw InvalidArgument("batch norm layer " + std::to_string(i) +
                                      " channel count differs from its input");
              }
              if (!(b.epsilon > 0.0) || b.momentum < 0.0 || b.momentum > 1.0) {
                throw InvalidArgument("invalid batch norm layer " + std::to_string(i));
              }
              const auto n = static_cast<std::size_t>(b.channels);
              layer.params.push_back({prefix + "gamma", {b.channels}, std::vector<double>(n, 1.0), true});
              layer.params.push_back({prefix + "beta", {b.channels}, std::vector<double>(n, 0.0), true});
              layer.params.push_back(
                  {prefix + "running_mean", {b.channels}, std::vector<double>(n, 0.0), false});
              layer.params.push_back(
                  {prefix + "running_var", {b.channels}, std::vector<double>(n, 1.0), false});
            },
            [&](LeakyReluSpec& r) {
              if (r.leak < 0.0) throw InvalidArgument("leak must be non-negative");
            },
            [&](MaxPoolSpec& p) {
              if (p.window < 1 || p.stride < 1) throw InvalidArgument("invalid max pool layer");
            },
        },
        layer.spec);
    g = layer_output(layer.spec, g);
    if (g.height < 1 || g.width < 1) {
      throw InvalidArgument("layer " + std::to_string(i) + " shrinks the input to nothing");
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

NetworkModel build_custom_arch(Variant variant, int out_channels, const ArchOptions& options) {
  if (variant == Variant::Single && out_channels != 1) {
    throw InvalidVariant("the single-channel variant emits exactly one map");
  }
  if (out_channels < 1) throw InvalidVariant("output channel count must be positive");
  if (options.widths.size() != 3) throw InvalidArgument("custom architecture has three hidden widths");
  const int pad = same_padding(options.kernel);
  std::vector<LayerSpec> specs;
  int in = options.input.channels;
  auto conv_bn = [&](int out) {
    specs.emplace_back(ConvSpec{in, out, options.kernel, options.kernel, 1, pad});
    specs.emplace_back(BatchNormSpec{out});
    in = out;
  };
  for (int w : options.widths) {
    conv_bn(w);
    specs.emplace_back(LeakyReluSpec{0.1});
  }
  conv_bn(out_channels);
  return make_network(specs, options.input, options.seed);
}

NetworkModel attach_auxiliary_layer(const NetworkModel& model, int aux_channels,
                                    std::uint64_t seed, int kernel) {
  if (aux_channels < 1) throw InvalidArgument("auxiliary layer needs at least one channel");
  const int pad = same_padding(kernel);
  const int in = model.output_channels();
  NetworkModel aux = make_network(
      {ConvSpec{in, aux_channels, kernel, kernel, 1, pad}, BatchNormSpec{aux_channels}},
      model.output_geometry(), seed);
  NetworkModel out = model;
  for (std::size_t i = 0; i < aux.layers.size(); ++i) {
    Layer layer = std::move(aux.layers[i]);
    const std::string prefix = "layers." + std::to_string(out.layers.size()) + ".";
    for (auto& p : layer.params) p.name = prefix + p.name.substr(p.name.rfind('.') + 1);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

// --- forward ------------------------------------------------------------------

ForwardResult forward_batch(const NetworkModel& model, const std::vector<Tensor>& images,
                            Mode mode) {
  if (images.empty()) throw ShapeMismatch("empty batch");
  for (const auto& img : images) {
    if (img.channels != model.input.channels || img.height != model.input.height ||
        img.width != model.input.width) {
      throw ShapeMismatch("input " + std::to_string(img.channels) + "x" +
                          std::to_string(img.height) + "x" + std::to_string(img.width) +
                          " does not match model input " + std::to_string(model.input.channels) +
                          "x" + std::to_string(model.input.height) + "x" +
                          std::to_string(model.input.width));
    }
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = mode;
  cache.layers.resize(model.layers.size());
  cache.shapes.push_back(model.input);

  std::vector<Tensor> current = images;
  const bool train = mode == Mode::Train;

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    LayerCache& lc = cache.layers[li];
    if (train) lc.inputs = current;

    std::visit(
        Overloaded{
            [&](const ConvSpec& c) {
              for (auto& t : current) t = conv_forward(layer, c, t);
            },
            [&](const LeakyReluSpec& r) {
              for (auto& t : current) {
                for (auto& v : t.data) v = v > 0.0 ? v : r.leak * v;
              }
            },
            [&](const MaxPoolSpec& p) {
              const Geometry out_g = pool_output(p, {current[0].channels, current[0].height,
                                                     current[0].width});
              if (train) lc.argmax.resize(current.size());
              for (std::size_t n = 0; n < current.size(); ++n) {
                const Tensor& in = current[n];
                Tensor out(out_g.channels, out_g.height, out_g.width);
                std::vector<std::size_t> idx(out.size());
                for (int ch = 0; ch < in.channels; ++ch) {
                  for (int oy = 0; oy < out_g.height; ++oy) {
                    for (int ox = 0; ox < out_g.width; ++ox) {
                      double best = -std::numeric_limits<double>::infinity();
                      std::size_t best_i = 0;
                      for (int ky = 0; ky < p.window; ++ky) {
                        for (int kx = 0; kx < p.window; ++kx) {
                          const int iy = oy * p.stride + ky;
                          const int ix = ox * p.stride + kx;
                          const std::size_t flat = static_cast<std::size_t>(ch) * in.plane() +
                                                   static_cast<std::size_t>(iy) * in.width + ix;
                          if (in.data[flat] > best) {
                            best = in.data[flat];
                            best_i = flat;
                          }
                        }
                      }
                      out.at(ch, oy, ox) = best;
                      idx[static_cast<std::size_t>(ch) * out.plane() +
                          static_cast<std::size_t>(oy) * out.width + ox] = best_i;
                    }
                  }
                }
                if (train) lc.argmax[n] = std::move(idx);
                current[n] = std::move(out);
              }
            },
            [&](const BatchNormSpec& b) {
              const auto& gamma = layer.params[0].values;
              const auto& beta = layer.params[1].values;
              const int channels = b.channels;
              std::vector<double> mean(channels, 0.0);
              std::vector<double> var(channels, 0.0);
              if (train) {
                const double count =
                    static_cast<double>(current.size()) * static_cast<double>(current[0].plane());
                for (int ch = 0; ch < channels; ++ch) {
                  double s = 0.0;
                  for (const auto& t : current) {
                    const double* p = t.channel_data(ch);
                    for (std::size_t i = 0; i < t.plane(); ++i) s += p[i];
                  }
                  mean[ch] = s / count;
                  double v = 0.0;
                  for (const auto& t : current) {
                    const double* p = t.channel_data(ch);
                    for (std::size_t i = 0; i < t.plane(); ++i) {
                      v += (p[i] - mean[ch]) * (p[i] - mean[ch]);
                    }
                  }
                  var[ch] = v / count;
                }
                lc.batch_mean = mean;
                lc.batch_var = var;
              } else {
                mean = layer.params[2].values;
                var = layer.params[3].values;
              }
              std::vector<double> inv_std(channels);
              for (int ch = 0; ch < channels; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + b.epsilon);
              if (train) {
                lc.inv_std = inv_std;
                lc.normalized.resize(current.size());
              }
              for (std::size_t n = 0; n < current.size(); ++n) {
                Tensor& t = current[n];
                if (train) lc.normalized[n] = Tensor(t.channels, t.height, t.width);
                for (int ch = 0; ch < channels; ++ch) {
                  double* p = t.channel_data(ch);
                  double* xh = train ? lc.normalized[n].channel_data(ch) : nullptr;
                  for (std::size_t i = 0; i < t.plane(); ++i) {
                    const double h = (p[i] - mean[ch]) * inv_std[ch];
                    if (xh != nullptr) xh[i] = h;
                    p[i] = gamma[ch] * h + beta[ch];
                  }
                }
              }
            },
        },
        layer.spec);
    cache.shapes.push_back({current[0].channels, current[0].height, current[0].width});
  }
  if (!train) cache.layers.clear();
  result.outputs = std::move(current);
  return result;
}

FeatureStack forward(const NetworkModel& model, const Tensor& image, Mode mode) {
  return to_feature_stack(forward_batch(model, {image}, mode).outputs.front());
}

Tensor forward_partial(const NetworkModel& model, const Tensor& image, std::size_t layer_count) {
  NetworkModel head;
  head.input = model.input;
  head.layers.assign(model.layers.begin(),
                     model.layers.begin() +
                         static_cast<std::ptrdiff_t>(std::min(layer_count, model.layers.size())));
  if (head.layers.empty()) return image;
  return forward_batch(head, {image}, Mode::Eval).outputs.front();
}

// --- backward -----------------------------------------------------------------

ParamGrads zero_grads(const NetworkModel& model) {
  ParamGrads g(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (const auto& p : model.layers[i].params) g[i].emplace_back(p.values.size(), 0.0);
  }
  return g;
}

void accumulate(ParamGrads& into, const ParamGrads& from, double scale) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    for (std::size_t j = 0; j < into[i].size(); ++j) {
      auto& dst = into[i][j];
      const auto& src = from[i][j];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    }
  }
}

BackwardResult backward(const NetworkModel& model, const ForwardCache& cache,
                        const std::vector<Tensor>& grad_outputs) {
  if (cache.mode != Mode::Train || cache.layers.size() != model.layers.size() ||
      cache.shapes.size() != model.layers.size() + 1) {
    throw StaleCache("cache was not produced by a train-mode forward of this model");
  }
  const std::size_t batch = cache.layers.empty() ? grad_outputs.size()
                                                  : cache.layers.front().inputs.size();
  if (grad_outputs.size() != batch) throw StaleCache("gradient batch size differs from cache");
  const Geometry& out_g = cache.shapes.back();
  for (const auto& g : grad_outputs) {
    if (g.channels != out_g.channels || g.height != out_g.height || g.width != out_g.width) {
      throw StaleCache("gradient shape differs from the cached output");
    }
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (layer_output(model.layers[li].spec, cache.shapes[li]) != cache.shapes[li + 1]) {
      throw StaleCache("model layer " + std::to_string(li) + " changed since the forward pass");
    }
  }

  BackwardResult result;
  result.params = zero_grads(model);
  std::vector<Tensor> grad = grad_outputs;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    const LayerCache& lc = cache.layers[li];
    auto& pg = result.params[li];
    std::visit(
        Overloaded{
            [&](const ConvSpec& c) {
              for (std::size_t n = 0; n < batch; ++n) {
                const Tensor& in = lc.inputs[n];
                Tensor gin(in.channels, in.height, in.width);
                conv_backward(layer, c, in, grad[n], pg, &gin);
                grad[n] = std::move(gin);
              }
            },
            [&](const LeakyReluSpec& r) {
              for (std::size_t n = 0; n < batch; ++n) {
                const auto& in = lc.inputs[n].data;
                auto& g = grad[n].data;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  if (!(in[i] > 0.0)) g[i] *= r.leak;
                }
              }
            },
            [&](const MaxPoolSpec&) {
              for (std::size_t n = 0; n < batch; ++n) {
                const Tensor& in = lc.inputs[n];
                Tensor gin(in.channels, in.height, in.width);
                const auto& idx = lc.argmax[n];
                for (std::size_t i = 0; i < idx.size(); ++i) gin.data[idx[i]] += grad[n].data[i];
                grad[n] = std::move(gin);
              }
            },
            [&](const BatchNormSpec& b) {
              const auto& gamma = layer.params[0].values;
              const double count =
                  static_cast<double>(batch) * static_cast<double>(lc.inputs[0].plane());
              for (int ch = 0; ch < b.channels; ++ch) {
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (std::size_t n = 0; n < batch; ++n) {
                  const double* dy = grad[n].channel_data(ch);
                  const double* xh = lc.normalized[n].channel_data(ch);
                  for (std::size_t i = 0; i < grad[n].plane(); ++i) {
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xh[i];
                  }
                }
                pg[0][ch] += sum_dy_xhat;
                pg[1][ch] += sum_dy;
                const double scale = gamma[ch] * lc.inv_std[ch];
                for (std::size_t n = 0; n < batch; ++n) {
                  double* dy = grad[n].channel_data(ch);
                  const double* xh = lc.normalized[n].channel_data(ch);
                  for (std::size_t i = 0; i < grad[n].plane(); ++i) {
                    dy[i] = scale * (dy[i] - sum_dy / count - xh[i] * sum_dy_xhat / count);
                  }
                }
              }
            },
        },
        layer.spec);
  }
  result.inputs = std::move(grad);
  return result;
}

BatchStats collect_batch_stats(const ForwardCache& cache) {
  BatchStats stats;
  stats.mean.resize(cache.layers.size());
  stats.var.resize(cache.layers.size());
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    stats.mean[i] = cache.layers[i].batch_mean;
    stats.var[i] = cache.layers[i].batch_var;
  }
  return stats;
}

void update_running_stats(NetworkModel& model, const BatchStats& stats) {
  if (stats.mean.size() != model.layers.size()) {
    throw StaleCache("batch statistics do not match the model");
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto* bn = std::get_if<BatchNormSpec>(&model.layers[li].spec);
    if (bn == nullptr || stats.mean[li].empty()) continue;
    auto& rm = model.layers[li].params[2].values;
    auto& rv = model.layers[li].params[3].values;
    for (int ch = 0; ch < bn->channels; ++ch) {
      rm[ch] = bn->momentum * rm[ch] + (1.0 - bn->momentum) * stats.mean[li][ch];
      rv[ch] = bn->momentum * rv[ch] + (1.0 - bn->momentum) * stats.var[li][ch];
    }
  }
}

}  // namespace cfcf::network
