#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nodeval/error.hpp"
#include "nodeval/image.hpp"
#include "nodeval/rng.hpp"

namespace nodeval {

inline constexpr int kConvLayers = 6;
inline constexpr int kPoolLayers = 5;  // after conv 1..5; conv 6 feeds the FC layer directly
inline constexpr int kDefaultInputSide = 160;
inline constexpr std::array<int, kConvLayers> kDefaultChannels = {16, 32, 48, 64, 80, 96};

/// Spatial side after 2x2/stride-2 pooling. Odd sides round up (a window
/// hanging off the edge takes the max of the pixels it covers).
constexpr int pooled_side(int side) { return (side + 1) / 2; }

constexpr int feature_side(int input_side) {
  for (int i = 0; i < kPoolLayers; ++i) input_side = pooled_side(input_side);
  return input_side;
}

/// Six 3x3 same-padded conv + ReLU blocks, max-pool after the first five,
/// inverted dropout, one fully-connected unit, sigmoid.
///
/// All parameters live in one flat vector, in file order: for each conv layer
/// its kernel (out, in, ky, kx) then its bias; then the FC weights and bias.
class CnnModel {
 public:
  CnnModel() : CnnModel(kDefaultChannels) {}
  explicit CnnModel(std::array<int, kConvLayers> channels, int input_side = kDefaultInputSide)
      : channels_(channels), input_side_(input_side) {
    for (int c : channels_)
      if (c <= 0) throw InputError("CnnModel: channel counts must be positive");
    if (input_side_ <= 0) throw InputError("CnnModel: input side must be positive");
    std::size_t off = 0;
    int in = 1;
    for (int l = 0; l < kConvLayers; ++l) {
      conv_w_[l] = off;
      off += static_cast<std::size_t>(channels_[l]) * in * 9;
      conv_b_[l] = off;
      off += static_cast<std::size_t>(channels_[l]);
      in = channels_[l];
    }
    fc_w_ = off;
    off += static_cast<std::size_t>(fc_inputs());
    fc_b_ = off;
    params_.assign(off + 1, 0.0);
  }

  const std::array<int, kConvLayers>& channels() const noexcept { return channels_; }
  int input_side() const noexcept { return input_side_; }
  int in_channels(int layer) const noexcept { return layer == 0 ? 1 : channels_[layer - 1]; }
  int fc_inputs() const noexcept {
    const int s = feature_side(input_side_);
    return channels_[kConvLayers - 1] * s * s;
  }
  double dropout_rate() const noexcept { return 0.5; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::span<const double> conv_weight(int l) const { return slice(conv_w_[l], conv_b_[l]); }
  std::span<const double> conv_bias(int l) const { return slice(conv_b_[l], l + 1 < kConvLayers ? conv_w_[l + 1] : fc_w_); }
  std::span<const double> fc_weight() const { return slice(fc_w_, fc_b_); }
  double fc_bias() const { return params_[fc_b_]; }

  std::size_t conv_weight_offset(int l) const noexcept { return conv_w_[l]; }
  std::size_t conv_bias_offset(int l) const noexcept { return conv_b_[l]; }
  std::size_t fc_weight_offset() const noexcept { return fc_w_; }
  std::size_t fc_bias_offset() const noexcept { return fc_b_; }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::span<const double> slice(std::size_t b, std::size_t e) const {
    return std::span<const double>(params_).subspan(b, e - b);
  }

  std::array<int, kConvLayers> channels_;
  int input_side_;
  std::array<std::size_t, kConvLayers> conv_w_{}, conv_b_{};
  std::size_t fc_w_ = 0, fc_b_ = 0;
  std::vector<double> params_;
};

/// He-normal kernels, zero biases.
inline void init_random(CnnModel& model, std::uint64_t seed) {
  Rng rng(seed, 0x434e4eULL);
  auto p = model.params();
  std::fill(p.begin(), p.end(), 0.0);
  for (int l = 0; l < kConvLayers; ++l) {
    const double sd = std::sqrt(2.0 / (9.0 * model.in_channels(l)));
    const auto off = model.conv_weight_offset(l);
    for (std::size_t i = off; i < model.conv_bias_offset(l); ++i) p[i] = sd * rng.normal();
  }
  const double sd = std::sqrt(1.0 / model.fc_inputs());
  for (std::size_t i = model.fc_weight_offset(); i < model.fc_bias_offset(); ++i) p[i] = sd * rng.normal();
}

/// C x H x W activations.
struct FeatureMap {
  int channels = 0, height = 0, width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}
  double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
  const double* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * height * width; }
};

enum class Phase { Infer, Train };

/// Everything backward() needs from a forward pass.
struct ForwardTrace {
  std::array<FeatureMap, kConvLayers> conv_in;   // input to each conv layer
  std::array<FeatureMap, kConvLayers> relu_out;  // post-ReLU output of each conv layer
  std::array<std::vector<std::uint32_t>, kPoolLayers> pool_argmax;  // flat index into relu_out
  std::vector<double> dropout_scale;  // per FC input: 0 or 1/(1-rate); all 1 in Infer
  std::vector<double> fc_in;          // after dropout
  double logit = 0.0;
  double probability = 0.5;
};

namespace detail {

inline void conv3x3_same(const FeatureMap& in, std::span<const double> w, std::span<const double> b,
                         FeatureMap& out) {
  const int H = in.height, W = in.width, C = in.channels;
  for (int o = 0; o < out.channels; ++o) {
    double* dst = out.plane(o);
    std::fill(dst, dst + H * W, b[o]);
    for (int i = 0; i < C; ++i) {
      const double* src = in.plane(i);
      const double* k = &w[(static_cast<std::size_t>(o) * C + i) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky), y_hi = std::min(H, H + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double kv = k[ky * 3 + kx];
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(W, W + 1 - kx);
          for (int y = y_lo; y < y_hi; ++y) {
            const double* s = src + (y + ky - 1) * W + (kx - 1);
            double* d = dst + y * W;
            for (int x = x_lo; x < x_hi; ++x) d[x] += kv * s[x];
          }
        }
      }
    }
  }
}

/// Accumulates kernel/bias gradients and (optionally) the input gradient.
inline void conv3x3_same_backward(const FeatureMap& in, std::span<const double> w, const FeatureMap& grad_out,
                                  std::span<double> grad_w, std::span<double> grad_b, FeatureMap* grad_in) {
  const int H = in.height, W = in.width, C = in.channels;
  for (int o = 0; o < grad_out.channels; ++o) {
    const double* g = grad_out.plane(o);
    double gb = 0.0;
    for (int p = 0; p < H * W; ++p) gb += g[p];
    grad_b[o] += gb;
    for (int i = 0; i < C; ++i) {
      const double* src = in.plane(i);
      const std::size_t kbase = (static_cast<std::size_t>(o) * C + i) * 9;
      double* gi = grad_in ? grad_in->plane(i) : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky), y_hi = std::min(H, H + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(W, W + 1 - kx);
          const double kv = w[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y_lo; y < y_hi; ++y) {
            const int off = (y + ky - 1) * W + (kx - 1);
            const double* s = src + off;
            const double* gr = g + y * W;
            for (int x = x_lo; x < x_hi; ++x) acc += gr[x] * s[x];
            if (gi)
              for (int x = x_lo; x < x_hi; ++x) gi[off + x] += kv * gr[x];
          }
          grad_w[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

inline FeatureMap max_pool2(const FeatureMap& in, std::vector<std::uint32_t>& argmax) {
  const int oh = pooled_side(in.height), ow = pooled_side(in.width);
  FeatureMap out(in.channels, oh, ow);
  argmax.assign(out.data.size(), 0);
  std::size_t k = 0;
  for (int c = 0; c < in.channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * in.height * in.width;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x, ++k) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t at = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy >= in.height || xx >= in.width) continue;
            const std::size_t idx = base + static_cast<std::size_t>(yy) * in.width + xx;
            if (in.data[idx] > best) {
              best = in.data[idx];
              at = idx;
            }
          }
        out.data[k] = best;
        argmax[k] = static_cast<std::uint32_t>(at);
      }
  }
  return out;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace detail

inline void check_input(const CnnModel& model, const Plane& input) {
  if (input.width != model.input_side() || input.height != model.input_side())
    throw InputError("network input must be " + std::to_string(model.input_side()) + "x" +
                     std::to_string(model.input_side()) + ", got " + std::to_string(input.width) + "x" +
                     std::to_string(input.height));
  for (double v : input.values)
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("network input values must lie in [0,1]");
  if (!model.all_finite()) throw InputError("model has non-finite weights");
}

/// Full forward pass. In Train phase a dropout mask is drawn from `dropout_seed`;
/// Infer is deterministic and needs no rescaling (inverted dropout).
inline ForwardTrace forward_trace(const CnnModel& model, const Plane& input, Phase phase = Phase::Infer,
                                  std::uint64_t dropout_seed = 0) {
  check_input(model, input);
  ForwardTrace t;
  FeatureMap x(1, input.height, input.width);
  std::copy(input.values.begin(), input.values.end(), x.data.begin());
  for (int l = 0; l < kConvLayers; ++l) {
    t.conv_in[l] = std::move(x);
    FeatureMap y(model.channels()[l], t.conv_in[l].height, t.conv_in[l].width);
    detail::conv3x3_same(t.conv_in[l], model.conv_weight(l), model.conv_bias(l), y);
    for (auto& v : y.data) v = std::max(v, 0.0);
    t.relu_out[l] = std::move(y);
    x = l < kPoolLayers ? detail::max_pool2(t.relu_out[l], t.pool_argmax[l]) : t.relu_out[l];
  }

  const auto n = x.data.size();
  t.dropout_scale.assign(n, 1.0);
  if (phase == Phase::Train) {
    Rng rng(dropout_seed, 0x64726f70ULL);
    const double keep = 1.0 - model.dropout_rate();
    for (auto& s : t.dropout_scale) s = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  t.fc_in.resize(n);
  const auto fw = model.fc_weight();
  double z = model.fc_bias();
  for (std::size_t i = 0; i < n; ++i) {
    t.fc_in[i] = x.data[i] * t.dropout_scale[i];
    z += fw[i] * t.fc_in[i];
  }
  t.logit = z;
  t.probability = detail::sigmoid(z);
  return t;
}

/// Probability of malignancy for one preprocessed view.
inline double forward(const CnnModel& model, const Plane& input, Phase phase = Phase::Infer,
                      std::uint64_t dropout_seed = 0) {
  return forward_trace(model, input, phase, dropout_seed).probability;
}

inline constexpr double kProbabilityClamp = 1e-12;

inline double bce_loss(double p, int target) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return target == 1 ? -std::log(p) : -std::log(1.0 - p);
}

struct Gradient {
  std::vector<double> params;  // same layout as CnnModel::params()
  double loss = 0.0;
};

/// Binary cross-entropy loss and its gradient with respect to every parameter.
inline Gradient backward(const CnnModel& model, const Plane& input, int target, Phase phase = Phase::Infer,
                         std::uint64_t dropout_seed = 0) {
  if (target != 0 && target != 1) throw InputError("target must be 0 or 1");
  const ForwardTrace t = forward_trace(model, input, phase, dropout_seed);
  Gradient g;
  g.params.assign(model.params().size(), 0.0);
  g.loss = bce_loss(t.probability, target);
  const double p = t.probability;
  const double dz = (p > kProbabilityClamp && p < 1.0 - kProbabilityClamp) ? p - target : 0.0;

  std::span<double> grad(g.params);
  const auto fw = model.fc_weight();
  const auto n = t.fc_in.size();
  for (std::size_t i = 0; i < n; ++i) grad[model.fc_weight_offset() + i] = dz * t.fc_in[i];
  grad[model.fc_bias_offset()] = dz;

  // Gradient w.r.t. conv-6 output (pre-dropout, post-ReLU).
  const FeatureMap& last = t.relu_out[kConvLayers - 1];
  FeatureMap up(last.channels, last.height, last.width);
  for (std::size_t i = 0; i < n; ++i) up.data[i] = dz * fw[i] * t.dropout_scale[i];

  for (int l = kConvLayers - 1; l >= 0; --l) {
    if (l < kPoolLayers) {
      // `up` is the gradient at the pool output; route it to the argmax.
      FeatureMap pre(t.relu_out[l].channels, t.relu_out[l].height, t.relu_out[l].width);
      for (std::size_t k = 0; k < up.data.size(); ++k) pre.data[t.pool_argmax[l][k]] += up.data[k];
      up = std::move(pre);
    }
    for (std::size_t k = 0; k < up.data.size(); ++k)
      if (t.relu_out[l].data[k] <= 0.0) up.data[k] = 0.0;
    const auto wsize = model.conv_weight(l).size();
    const auto bsize = model.conv_bias(l).size();
    FeatureMap down(t.conv_in[l].channels, t.conv_in[l].height, t.conv_in[l].width);
    detail::conv3x3_same_backward(t.conv_in[l], model.conv_weight(l), up,
                                  grad.subspan(model.conv_weight_offset(l), wsize),
                                  grad.subspan(model.conv_bias_offset(l), bsize), l > 0 ? &down : nullptr);
    up = std::move(down);
  }
  return g;
}

/// Plain gradient-descent step: params -= rate * grad.
inline void sgd_step(CnnModel& model, const Gradient& g, double rate) {
  auto p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= rate * g.params[i];
}

struct TrainingExample {
  Plane input;
  int target;
};

/// One pass over `examples` with per-example SGD updates. Dropout masks are
/// keyed by (seed, example index). Returns the mean loss.
inline double train_epoch(CnnModel& model, const std::vector<TrainingExample>& examples, double rate,
                          std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Gradient g = backward(model, examples[i].input, examples[i].target, Phase::Train, stream_key(seed, i));
    sgd_step(model, g, rate);
    total += g.loss;
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

struct NoduleInference {
  double p_transverse;
  double p_longitudinal;
  double p_fused;
};

/// Mean of the two view probabilities.
inline double fuse_views(double p_transverse, double p_longitudinal) {
  if (!(p_transverse >= 0.0 && p_transverse <= 1.0 && p_longitudinal >= 0.0 && p_longitudinal <= 1.0))
    throw InputError("fuse_views: probabilities must lie in [0,1]");
  return 0.5 * (p_transverse + p_longitudinal);
}

inline NoduleInference infer_nodule(const CnnModel& model, const Plane& transverse, const Plane& longitudinal) {
  NoduleInference r;
  r.p_transverse = forward(model, transverse);
  r.p_longitudinal = forward(model, longitudinal);
  r.p_fused = fuse_views(r.p_transverse, r.p_longitudinal);
  return r;
}

// Weights file: "TCNN1", little-endian u32 C1..C6 and FC input size, then every
// parameter as a little-endian IEEE-754 double in CnnModel::params() order.
// The input side is recovered as 32 * sqrt(FC inputs / C6).

inline constexpr char kWeightsMagic[5] = {'T', 'C', 'N', 'N', '1'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  return true;
}

inline void put_f64(std::ostream& out, double d) {
  const auto u = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_f64(std::istream& in, double& d) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  d = std::bit_cast<double>(u);
  return true;
}

}  // namespace detail

inline void write_weights(std::ostream& out, const CnnModel& model) {
  out.write(kWeightsMagic, sizeof kWeightsMagic);
  for (int c : model.channels()) detail::put_u32(out, static_cast<std::uint32_t>(c));
  detail::put_u32(out, static_cast<std::uint32_t>(model.fc_inputs()));
  for (double v : model.params()) detail::put_f64(out, v);
}

inline CnnModel read_weights(std::istream& in) {
  char magic[sizeof kWeightsMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kWeightsMagic, sizeof magic) != 0)
    throw InputError("weights file: bad magic (expected TCNN1)");
  std::array<int, kConvLayers> channels{};
  for (int l = 0; l < kConvLayers; ++l) {
    std::uint32_t c = 0;
    if (!detail::get_u32(in, c)) throw InputError("weights file: truncated header");
    if (c == 0 || c > 65536) throw InputError("weights file: conv" + std::to_string(l + 1) + " has invalid channel count " + std::to_string(c));
    channels[l] = static_cast<int>(c);
  }
  std::uint32_t fc_in = 0;
  if (!detail::get_u32(in, fc_in)) throw InputError("weights file: truncated header");
  const auto c6 = static_cast<std::uint32_t>(channels[kConvLayers - 1]);
  const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(fc_in) / c6)));
  if (fc_in == 0 || fc_in % c6 != 0 || side * side * c6 != fc_in || side > 2048)
    throw InputError("weights file: dimension mismatch at layer fc: " + std::to_string(fc_in) +
                     " inputs is not conv6 channels (" + std::to_string(c6) + ") times a square feature map");

  CnnModel model(channels, static_cast<int>(side) << kPoolLayers);
  auto p = model.params();
  auto layer_of = [&](std::size_t i) -> std::string {
    for (int l = kConvLayers - 1; l >= 0; --l)
      if (i >= model.conv_weight_offset(l) && i < model.fc_weight_offset())
        return "conv" + std::to_string(l + 1);
    return "fc";
  };
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!detail::get_f64(in, p[i])) throw InputError("weights file: truncated in layer " + layer_of(i));
  if (in.peek() != std::char_traits<char>::eof())
    throw InputError("weights file: trailing data after fc layer (dimension mismatch)");
  return model;
}

inline void save_weights(const CnnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write weights file '" + path + "'");
  write_weights(out, model);
  if (!out) throw InputError("error writing weights file '" + path + "'");
}

inline CnnModel load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weights file '" + path + "'");
  return read_weights(in);
}

}  // namespace nodeval
