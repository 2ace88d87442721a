/// @file nn.hpp
/// @brief Small feed-forward regressors mapping a binarized sub-sample to a
///        normalized contact angle, trained with Adam and MSE.
///
/// Three architectures are available. Architecture 2 (dense 128/64/32 with
/// dropout and batch normalization, then 16/4/1) is the production model;
/// architecture 3 is its shallow variant and architecture 1 a small
/// convolutional net kept for comparison runs.
///
/// Activations are stored feature-major: a batch is a (features x batch)
/// matrix, one sample per column. Conv/pool features are channel-major with
/// x-fastest voxels, matching the volume layout.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deepangle/common.hpp"
#include "deepangle/synth.hpp"

namespace deepangle {

enum class LayerKind { dense, relu, sigmoid, dropout, batch_norm, conv3d, max_pool3d };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::dropout: return "dropout";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::max_pool3d: return "max_pool3d";
  }
  return "?";
}

inline LayerKind layer_kind_from(const std::string& s) {
  for (auto k : {LayerKind::dense, LayerKind::relu, LayerKind::sigmoid, LayerKind::dropout, LayerKind::batch_norm,
                 LayerKind::conv3d, LayerKind::max_pool3d})
    if (s == to_string(k)) return k;
  fail(ErrorKind::data, "unknown layer kind '" + s + "'");
}

struct LayerDesc {
  LayerKind kind = LayerKind::dense;
  int in = 0;    ///< input feature count
  int out = 0;   ///< output feature count
  int channels_in = 1, channels_out = 1, side_in = 0;  ///< conv / pool geometry
  double rate = 0;  ///< dropout rate

  std::size_t trainable() const {
    switch (kind) {
      case LayerKind::dense: return std::size_t(in) * std::size_t(out) + std::size_t(out);
      case LayerKind::batch_norm: return 2 * std::size_t(in);
      case LayerKind::conv3d: return std::size_t(channels_out) * std::size_t(channels_in) * 27 + std::size_t(channels_out);
      default: return 0;
    }
  }
  /// Non-trainable running statistics.
  std::size_t state() const { return kind == LayerKind::batch_norm ? 2 * std::size_t(in) : 0; }
};

struct ModelSpec {
  int architecture = 2;
  int radius = 8;
  std::vector<LayerDesc> layers;

  int input_side() const { return 2 * radius + 1; }
  std::size_t input_size() const { return std::size_t(input_side()) * input_side() * input_side(); }
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.trainable();
    return n;
  }
  std::size_t state_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.state();
    return n;
  }
};

namespace detail {
inline void push_dense(std::vector<LayerDesc>& v, int in, int out) { v.push_back({LayerKind::dense, in, out}); }
inline void push_act(std::vector<LayerDesc>& v, LayerKind k, int n) { v.push_back({k, n, n}); }
inline void push_dropout(std::vector<LayerDesc>& v, int n, double rate) {
  LayerDesc d{LayerKind::dropout, n, n};
  d.rate = rate;
  v.push_back(d);
}
inline void push_bn(std::vector<LayerDesc>& v, int n) { v.push_back({LayerKind::batch_norm, n, n}); }
inline void push_tail(std::vector<LayerDesc>& v, int in) {
  push_dense(v, in, 16);
  push_act(v, LayerKind::relu, 16);
  push_dense(v, 16, 4);
  push_act(v, LayerKind::relu, 4);
  push_dense(v, 4, 1);
  push_act(v, LayerKind::sigmoid, 1);
}
}  // namespace detail

/// Layer stack of architecture 1, 2 or 3 for sub-sample radius r.
inline ModelSpec build_arch(int architecture, int r, double dropout = 0.2) {
  if (architecture < 1 || architecture > 3)
    fail(ErrorKind::precondition, "unsupported architecture " + std::to_string(architecture));
  require(r >= 2 && r <= 12, "sub-sample radius must be in [2, 12]");
  ModelSpec spec{architecture, r, {}};
  auto& v = spec.layers;
  const int s = spec.input_side();
  const int n = s * s * s;
  using detail::push_act, detail::push_bn, detail::push_dense, detail::push_dropout;
  if (architecture == 2) {
    int prev = n;
    for (int w : {128, 64, 32}) {
      push_dense(v, prev, w);
      push_act(v, LayerKind::relu, w);
      push_dropout(v, w, dropout);
      push_bn(v, w);
      prev = w;
    }
    detail::push_tail(v, prev);
  } else if (architecture == 3) {
    push_dense(v, n, 64);
    push_act(v, LayerKind::relu, 64);
    push_bn(v, 64);
    detail::push_tail(v, 64);
  } else {
    int side = s, ch = 1;
    for (int out_ch : {8, 4}) {
      LayerDesc conv{LayerKind::conv3d, ch * side * side * side, out_ch * side * side * side};
      conv.channels_in = ch, conv.channels_out = out_ch, conv.side_in = side;
      v.push_back(conv);
      push_act(v, LayerKind::relu, conv.out);
      int half = side / 2;
      LayerDesc pool{LayerKind::max_pool3d, conv.out, out_ch * half * half * half};
      pool.channels_in = pool.channels_out = out_ch, pool.side_in = side;
      v.push_back(pool);
      push_dropout(v, pool.out, dropout);
      side = half, ch = out_ch;
    }
    int flat = ch * side * side * side;
    push_bn(v, flat);
    detail::push_tail(v, flat);
  }
  return spec;
}

enum class Mode { train, infer };

/// Parameters and (in train mode) the activations needed for back-propagation.
template <typename Scalar>
class Network {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr Scalar bn_epsilon = Scalar(1e-3);
  static constexpr Scalar bn_momentum = Scalar(0.99);

  struct Params {
    Matrix w;                       // dense: out x in; conv: out_ch x (in_ch*27)
    Vector b;                       // dense/conv bias
    Vector gamma, beta, mean, var;  // batch normalization
  };

  Network() = default;
  explicit Network(ModelSpec spec, std::uint64_t seed = 1) : spec_(std::move(spec)), seed_(seed) {
    params_.resize(spec_.layers.size());
    grads_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      auto& p = params_[i];
      if (l.kind == LayerKind::dense) {
        p.w = Matrix::Zero(l.out, l.in);
        p.b = Vector::Zero(l.out);
      } else if (l.kind == LayerKind::conv3d) {
        p.w = Matrix::Zero(l.channels_out, l.channels_in * 27);
        p.b = Vector::Zero(l.channels_out);
      } else if (l.kind == LayerKind::batch_norm) {
        p.gamma = Vector::Ones(l.in);
        p.beta = Vector::Zero(l.in);
        p.mean = Vector::Zero(l.in);
        p.var = Vector::Ones(l.in);
      }
      grads_[i] = p;
    }
    cache_.resize(spec_.layers.size());
  }

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<Params>& params() { return params_; }
  const std::vector<Params>& params() const { return params_; }
  std::vector<Params>& grads() { return grads_; }

  /// He-uniform weights (Glorot-uniform for the layer feeding the sigmoid), zero biases.
  void initialize(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(derive_seed(seed, 0x1417));
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      if (l.kind != LayerKind::dense && l.kind != LayerKind::conv3d) continue;
      auto& w = params_[i].w;
      double fan_in = double(w.cols()), fan_out = double(w.rows());
      bool feeds_sigmoid = i + 1 < spec_.layers.size() && spec_.layers[i + 1].kind == LayerKind::sigmoid;
      double limit = feeds_sigmoid ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = Scalar(u(rng));
      params_[i].b.setZero();
    }
  }

  /// Runs the stack on a (input_size x batch) matrix. Dropout is active only in
  /// train mode with `rng` supplied; train mode also caches activations for `backward`.
  Matrix forward(const Matrix& x, Mode mode, std::mt19937_64* rng = nullptr) {
    if (std::size_t(x.rows()) != spec_.input_size())
      fail(ErrorKind::precondition, "input width " + std::to_string(x.rows()) + " does not match model input " +
                                        std::to_string(spec_.input_size()));
    Matrix a = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      if (mode == Mode::train) cache_[i].input = a;
      a = forward_layer(i, a, mode, rng);
    }
    return a;
  }

  /// Inference without touching the training caches; safe to call concurrently.
  Matrix infer(const Matrix& x) const {
    if (std::size_t(x.rows()) != spec_.input_size())
      fail(ErrorKind::precondition, "input width " + std::to_string(x.rows()) + " does not match model input " +
                                        std::to_string(spec_.input_size()));
    Matrix a = x;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) a = infer_layer(i, a);
    return a;
  }

  /// Back-propagates dL/dy of the last train-mode forward; overwrites grads().
  void backward(const Matrix& dy) {
    Matrix g = dy;
    for (std::size_t i = spec_.layers.size(); i-- > 0;) g = backward_layer(i, g, i > 0);
  }

  /// Visits (param block, grad block) pairs of trainable parameters in file order.
  template <typename F>
  void for_each_trainable(F&& f) {
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      auto& p = params_[i];
      auto& g = grads_[i];
      switch (spec_.layers[i].kind) {
        case LayerKind::dense:
        case LayerKind::conv3d:
          f(std::span<Scalar>(p.w.data(), std::size_t(p.w.size())), std::span<Scalar>(g.w.data(), std::size_t(g.w.size())));
          f(std::span<Scalar>(p.b.data(), std::size_t(p.b.size())), std::span<Scalar>(g.b.data(), std::size_t(g.b.size())));
          break;
        case LayerKind::batch_norm:
          f(std::span<Scalar>(p.gamma.data(), std::size_t(p.gamma.size())),
            std::span<Scalar>(g.gamma.data(), std::size_t(g.gamma.size())));
          f(std::span<Scalar>(p.beta.data(), std::size_t(p.beta.size())),
            std::span<Scalar>(g.beta.data(), std::size_t(g.beta.size())));
          break;
        default: break;
      }
    }
  }

  /// Every stored value (trainable and running statistics) in file order.
  template <typename F>
  void for_each_stored(F&& f) {
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      auto& p = params_[i];
      auto block = [&](auto& m) { f(std::span<Scalar>(m.data(), std::size_t(m.size()))); };
      switch (spec_.layers[i].kind) {
        case LayerKind::dense:
        case LayerKind::conv3d: block(p.w), block(p.b); break;
        case LayerKind::batch_norm: block(p.gamma), block(p.beta), block(p.mean), block(p.var); break;
        default: break;
      }
    }
  }

 private:
  struct Cache {
    Matrix input;
    Matrix aux;                                   // dropout mask, BN x-hat, relu/sigmoid output
    Vector inv_std;                               // BN
    std::vector<Matrix> cols;                     // conv im2col per sample
    std::vector<std::vector<std::int32_t>> argmax;  // pool
  };

  // Same-padded 3x3x3 im2col of one sample (channels_in * side^3 features).
  static void im2col(const Scalar* src, int ch, int side, Matrix& cols) {
    const int n = side * side * side;
    cols.setZero(ch * 27, n);
    for (int c = 0; c < ch; ++c)
      for (int k = 0; k < 27; ++k) {
        const int dx = k % 3 - 1, dy = (k / 3) % 3 - 1, dz = k / 9 - 1;
        const Eigen::Index row = c * 27 + k;
        for (int z = 0; z < side; ++z) {
          int sz = z + dz;
          if (sz < 0 || sz >= side) continue;
          for (int y = 0; y < side; ++y) {
            int sy = y + dy;
            if (sy < 0 || sy >= side) continue;
            for (int x = 0; x < side; ++x) {
              int sx = x + dx;
              if (sx < 0 || sx >= side) continue;
              cols(row, (z * side + y) * side + x) = src[(c * side + sz) * side * side + sy * side + sx];
            }
          }
        }
      }
  }

  static void col2im(const Matrix& cols, int ch, int side, Scalar* dst) {
    for (int c = 0; c < ch; ++c)
      for (int k = 0; k < 27; ++k) {
        const int dx = k % 3 - 1, dy = (k / 3) % 3 - 1, dz = k / 9 - 1;
        const Eigen::Index row = c * 27 + k;
        for (int z = 0; z < side; ++z) {
          int sz = z + dz;
          if (sz < 0 || sz >= side) continue;
          for (int y = 0; y < side; ++y) {
            int sy = y + dy;
            if (sy < 0 || sy >= side) continue;
            for (int x = 0; x < side; ++x) {
              int sx = x + dx;
              if (sx < 0 || sx >= side) continue;
              dst[(c * side + sz) * side * side + sy * side + sx] += cols(row, (z * side + y) * side + x);
            }
          }
        }
      }
  }

  Matrix conv_forward(std::size_t i, const Matrix& a, Cache* cache) const {
    const auto& l = spec_.layers[i];
    const auto& p = params_[i];
    const int n = l.side_in * l.side_in * l.side_in;
    Matrix out(l.out, a.cols());
    Matrix cols;
    if (cache) cache->cols.resize(std::size_t(a.cols()));
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      Matrix& c = cache ? cache->cols[std::size_t(j)] : cols;
      im2col(a.col(j).data(), l.channels_in, l.side_in, c);
      Matrix y = p.w * c;  // out_ch x n
      y.colwise() += p.b;
      // y is column-major (channel fastest); transpose to channel-major layout
      Eigen::Map<Matrix>(out.col(j).data(), n, l.channels_out) = y.transpose();
    }
    return out;
  }

  Matrix pool_forward(std::size_t i, const Matrix& a, Cache* cache) const {
    const auto& l = spec_.layers[i];
    const int s = l.side_in, h = s / 2, ch = l.channels_in;
    Matrix out(l.out, a.cols());
    if (cache) cache->argmax.assign(std::size_t(a.cols()), std::vector<std::int32_t>(std::size_t(l.out)));
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const Scalar* src = a.col(j).data();
      for (int c = 0; c < ch; ++c)
        for (int z = 0; z < h; ++z)
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < h; ++x) {
              int best = -1;
              Scalar bv = -std::numeric_limits<Scalar>::infinity();
              for (int k = 0; k < 8; ++k) {
                int sx = 2 * x + (k & 1), sy = 2 * y + ((k >> 1) & 1), sz = 2 * z + (k >> 2);
                int idx = ((c * s + sz) * s + sy) * s + sx;
                if (src[idx] > bv) bv = src[idx], best = idx;
              }
              int o = ((c * h + z) * h + y) * h + x;
              out(o, j) = bv;
              if (cache) cache->argmax[std::size_t(j)][std::size_t(o)] = best;
            }
    }
    return out;
  }

  Matrix infer_layer(std::size_t i, const Matrix& a) const {
    const auto& l = spec_.layers[i];
    const auto& p = params_[i];
    switch (l.kind) {
      case LayerKind::dense: {
        Matrix y = p.w * a;
        y.colwise() += p.b;
        return y;
      }
      case LayerKind::relu: return a.cwiseMax(Scalar(0));
      case LayerKind::sigmoid: return sigmoid(a);
      case LayerKind::dropout: return a;
      case LayerKind::batch_norm: {
        Vector scale = p.gamma.array() / (p.var.array() + bn_epsilon).sqrt();
        Vector offset = p.beta.array() - p.mean.array() * scale.array();
        Matrix y = (a.array().colwise() * scale.array()).matrix();
        y.colwise() += offset;
        return y;
      }
      case LayerKind::conv3d: return conv_forward(i, a, nullptr);
      case LayerKind::max_pool3d: return pool_forward(i, a, nullptr);
    }
    return a;
  }

  // Clamped one ulp inside (0, 1) so saturated outputs still map to a valid angle.
  static Matrix sigmoid(const Matrix& a) {
    static constexpr Scalar lo = std::numeric_limits<Scalar>::epsilon(), hi = Scalar(1) - lo;
    return a.unaryExpr([](Scalar v) { return std::clamp(Scalar(1) / (Scalar(1) + std::exp(-v)), lo, hi); });
  }

  Matrix forward_layer(std::size_t i, const Matrix& a, Mode mode, std::mt19937_64* rng) {
    if (mode == Mode::infer) return infer_layer(i, a);
    const auto& l = spec_.layers[i];
    auto& p = params_[i];
    auto& c = cache_[i];
    switch (l.kind) {
      case LayerKind::relu: return a.cwiseMax(Scalar(0));
      case LayerKind::sigmoid: return c.aux = sigmoid(a);
      case LayerKind::dropout: {
        if (!rng || l.rate <= 0) {
          c.aux.setConstant(a.rows(), a.cols(), Scalar(1));
          return a;
        }
        std::bernoulli_distribution keep(1.0 - l.rate);
        const Scalar scale = Scalar(1.0 / (1.0 - l.rate));
        c.aux.resize(a.rows(), a.cols());
        for (Eigen::Index k = 0; k < c.aux.size(); ++k) c.aux.data()[k] = keep(*rng) ? scale : Scalar(0);
        return a.cwiseProduct(c.aux);
      }
      case LayerKind::batch_norm: {
        const Scalar n = Scalar(a.cols());
        Vector mu = a.rowwise().mean();
        Matrix centered = a.colwise() - mu;
        Vector var = centered.array().square().rowwise().sum() / n;
        c.inv_std = (var.array() + bn_epsilon).rsqrt();
        c.aux = (centered.array().colwise() * c.inv_std.array()).matrix();
        p.mean = bn_momentum * p.mean + (Scalar(1) - bn_momentum) * mu;
        p.var = bn_momentum * p.var + (Scalar(1) - bn_momentum) * var;
        Matrix y = (c.aux.array().colwise() * p.gamma.array()).matrix();
        y.colwise() += p.beta;
        return y;
      }
      case LayerKind::conv3d: return conv_forward(i, a, &c);
      case LayerKind::max_pool3d: return pool_forward(i, a, &c);
      case LayerKind::dense: return infer_layer(i, a);
    }
    return a;
  }

  Matrix backward_layer(std::size_t i, const Matrix& dy, bool need_dx) {
    const auto& l = spec_.layers[i];
    const auto& p = params_[i];
    auto& g = grads_[i];
    auto& c = cache_[i];
    switch (l.kind) {
      case LayerKind::dense:
        g.w.noalias() = dy * c.input.transpose();
        g.b = dy.rowwise().sum();
        if (!need_dx) return {};
        return p.w.transpose() * dy;
      case LayerKind::relu: return (c.input.array() > Scalar(0)).select(dy, Scalar(0));
      case LayerKind::sigmoid: return (dy.array() * c.aux.array() * (Scalar(1) - c.aux.array())).matrix();
      case LayerKind::dropout: return dy.cwiseProduct(c.aux);
      case LayerKind::batch_norm: {
        const Scalar n = Scalar(dy.cols());
        g.gamma = (dy.array() * c.aux.array()).rowwise().sum();
        g.beta = dy.rowwise().sum();
        Matrix dxhat = (dy.array().colwise() * p.gamma.array()).matrix();
        Vector sum_dxhat = dxhat.rowwise().sum();
        Vector sum_dxhat_xhat = (dxhat.array() * c.aux.array()).rowwise().sum();
        Matrix dx = (n * dxhat.array() - c.aux.array().colwise() * sum_dxhat_xhat.array()).matrix();
        dx.colwise() -= sum_dxhat;
        return (dx.array().colwise() * (c.inv_std.array() / n)).matrix();
      }
      case LayerKind::conv3d: {
        const int n = l.side_in * l.side_in * l.side_in;
        g.w.setZero();
        g.b.setZero();
        Matrix dx = Matrix::Zero(l.in, dy.cols());
        for (Eigen::Index j = 0; j < dy.cols(); ++j) {
          Matrix dys = Eigen::Map<const Matrix>(dy.col(j).data(), n, l.channels_out).transpose();
          g.w.noalias() += dys * c.cols[std::size_t(j)].transpose();
          g.b += dys.rowwise().sum();
          if (need_dx) {
            Matrix dcols = p.w.transpose() * dys;
            col2im(dcols, l.channels_in, l.side_in, dx.col(j).data());
          }
        }
        return dx;
      }
      case LayerKind::max_pool3d: {
        Matrix dx = Matrix::Zero(l.in, dy.cols());
        for (Eigen::Index j = 0; j < dy.cols(); ++j)
          for (Eigen::Index o = 0; o < dy.rows(); ++o) dx(c.argmax[std::size_t(j)][std::size_t(o)], j) += dy(o, j);
        return dx;
      }
    }
    return dy;
  }

  ModelSpec spec_;
  std::uint64_t seed_ = 1;
  std::vector<Params> params_;
  std::vector<Params> grads_;
  std::vector<Cache> cache_;
};

using Model = Network<float>;

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double initial_lr = 2e-4;
  double decay_rate = 0.9;
  double decay_steps = 2e4;
  int epochs = 200;
  int batch_size = 32;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 1;

  /// Continuous exponential decay per optimizer step.
  double learning_rate(std::uint64_t step) const {
    return initial_lr * std::pow(decay_rate, double(step) / decay_steps);
  }
};

struct EpochReport {
  int epoch = 0;
  double train_mse = 0;
  double val_mse = 0;
  double learning_rate = 0;
};

struct Metrics {
  double mse = 0;
  double mae_deg = 0;
  double r2 = 0;
  bool r2_defined = true;
};

/// Packs samples `idx[begin, end)` into a (input_size x count) matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gather_inputs(const Dataset& ds,
                                                                     std::span<const std::size_t> idx) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x(Eigen::Index(ds.input_size()), Eigen::Index(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    auto in = ds.input(idx[j]);
    Scalar* col = x.col(Eigen::Index(j)).data();
    for (std::size_t k = 0; k < in.size(); ++k) col[k] = Scalar(in[k]);
  }
  return x;
}

/// Predictions (normalized) for every sample, evaluated in fixed-size batches.
template <typename Scalar>
std::vector<double> predict_dataset(const Network<Scalar>& net, const Dataset& ds, std::size_t batch = 256) {
  std::vector<double> out(ds.size());
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < ds.size(); b += batch) {
    idx.clear();
    for (std::size_t i = b; i < std::min(ds.size(), b + batch); ++i) idx.push_back(i);
    auto y = net.infer(gather_inputs<Scalar>(ds, idx));
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = double(y(0, Eigen::Index(j)));
  }
  return out;
}

inline Metrics compute_metrics(std::span<const double> pred, std::span<const double> target) {
  require(!target.empty() && pred.size() == target.size(), "metrics need equal, non-empty inputs");
  Metrics m;
  double mean = 0;
  for (double t : target) mean += t;
  mean /= double(target.size());
  double ss_res = 0, ss_tot = 0, abs_sum = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double e = pred[i] - target[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    ss_tot += (target[i] - mean) * (target[i] - mean);
  }
  m.mse = ss_res / double(target.size());
  m.mae_deg = 180.0 * abs_sum / double(target.size());
  if (ss_tot > 0) {
    m.r2 = 1.0 - ss_res / ss_tot;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = false;
  }
  return m;
}

template <typename Scalar>
Metrics evaluate(const Network<Scalar>& net, const Dataset& test) {
  require(test.size() > 0, "test set is empty");
  if (test.radius != net.spec().radius) fail(ErrorKind::data, "dataset radius does not match model radius");
  auto pred = predict_dataset(net, test);
  return compute_metrics(pred, test.targets);
}

/// Adam state for every trainable block of a network.
template <typename Scalar>
class Adam {
 public:
  Adam(Network<Scalar>& net, const TrainConfig& cfg) : cfg_(cfg) {
    net.for_each_trainable([&](std::span<Scalar> p, std::span<Scalar>) {
      m_.emplace_back(p.size(), Scalar(0));
      v_.emplace_back(p.size(), Scalar(0));
    });
  }

  void step(Network<Scalar>& net) {
    const double lr = cfg_.learning_rate(t_);
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_)), c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar step_size = Scalar(lr / c1), eps = Scalar(cfg_.epsilon), inv_c2 = Scalar(1.0 / c2);
    std::size_t k = 0;
    net.for_each_trainable([&](std::span<Scalar> p, std::span<Scalar> g) {
      Scalar* m = m_[k].data();
      Scalar* v = v_[k].data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
        v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
        p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
      ++k;
    });
  }

  std::uint64_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<Scalar>> m_, v_;
};

template <typename Scalar>
struct TrainResult {
  Network<Scalar> net;
  std::vector<EpochReport> history;
};

/// Mini-batch Adam on the MSE of normalized targets. Deterministic for a given seed.
template <typename Scalar = float>
TrainResult<Scalar> train(const ModelSpec& spec, const Dataset& train_set, const Dataset& val_set,
                          const TrainConfig& cfg, const std::function<void(const EpochReport&)>& on_epoch = {}) {
  if (train_set.size() == 0) fail(ErrorKind::data, "training set is empty");
  if (train_set.radius != spec.radius) fail(ErrorKind::data, "training set radius does not match the model");
  require(cfg.batch_size >= 1 && cfg.epochs >= 0, "invalid training configuration");
  TrainResult<Scalar> result{Network<Scalar>(spec, cfg.seed), {}};
  auto& net = result.net;
  net.initialize(cfg.seed);
  Adam<Scalar> adam(net, cfg);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5a0f)), dropout_rng(derive_seed(cfg.seed, 0xd80f));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  using Matrix = typename Network<Scalar>::Matrix;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      std::size_t e = std::min(order.size(), b + std::size_t(cfg.batch_size));
      std::span<const std::size_t> idx(order.data() + b, e - b);
      Matrix x = gather_inputs<Scalar>(train_set, idx);
      Matrix y = net.forward(x, Mode::train, &dropout_rng);
      Matrix dy(1, y.cols());
      double batch_loss = 0;
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        double err = double(y(0, j)) - train_set.targets[idx[std::size_t(j)]];
        batch_loss += err * err;
        dy(0, j) = Scalar(2.0 * err / double(y.cols()));
      }
      if (!std::isfinite(batch_loss))
        fail(ErrorKind::numerical, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(adam.steps()));
      loss_sum += batch_loss;
      net.backward(dy);
      adam.step(net);
    }
    EpochReport rep{epoch, loss_sum / double(order.size()), std::numeric_limits<double>::quiet_NaN(),
                    cfg.learning_rate(adam.steps())};
    if (val_set.size() > 0) rep.val_mse = evaluate(net, val_set).mse;
    result.history.push_back(rep);
    if (on_epoch) on_epoch(rep);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Weight files: text manifest, "end_header\n", then float32 little-endian
// values of every layer in manifest order (weights, bias, BN scale, offset,
// running mean, running variance).

inline void save_weights(Model& net, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "weight files are little-endian");
  std::vector<float> blob;
  net.for_each_stored([&](std::span<float> b) { blob.insert(blob.end(), b.begin(), b.end()); });
  const auto& spec = net.spec();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << "deepangle-weights 1\n"
      << "architecture " << spec.architecture << "\nradius " << spec.radius << "\ninput_side " << spec.input_side()
      << "\nseed " << net.seed() << "\nlayers " << spec.layers.size() << "\n";
  for (const auto& l : spec.layers) {
    out << "layer " << to_string(l.kind) << ' ' << l.in << ' ' << l.out << ' ' << l.channels_in << ' '
        << l.channels_out << ' ' << l.side_in << ' ' << l.rate << "\n";
  }
  out << "trainable " << spec.trainable_count() << "\nstate " << spec.state_count() << "\nchecksum "
      << hex64(fnv1a64(blob.data(), blob.size() * sizeof(float))) << "\nend_header\n";
  out.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size() * sizeof(float)));
  if (!out) fail(ErrorKind::data, "write failed: " + path.string());
}

struct LoadedModel {
  Model net;
  std::string checksum;
};

/// Reads a weight file; `expected_radius` > 0 additionally enforces the sub-sample radius.
inline LoadedModel load_weights(const std::filesystem::path& path, int expected_radius = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open weight file " + path.string());
  std::string line, key, checksum;
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::size_t trainable = 0, state = 0;
  if (!std::getline(in, line) || line != "deepangle-weights 1") fail(ErrorKind::data, "not a weight file: " + path.string());
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    ls >> key;
    if (key == "architecture") ls >> spec.architecture;
    else if (key == "radius") ls >> spec.radius;
    else if (key == "seed") ls >> seed;
    else if (key == "trainable") ls >> trainable;
    else if (key == "state") ls >> state;
    else if (key == "checksum") ls >> checksum;
    else if (key == "layer") {
      std::string kind;
      LayerDesc l;
      ls >> kind >> l.in >> l.out >> l.channels_in >> l.channels_out >> l.side_in >> l.rate;
      if (!ls) fail(ErrorKind::data, "malformed layer line in " + path.string());
      l.kind = layer_kind_from(kind);
      spec.layers.push_back(l);
    }
  }
  if (line != "end_header") fail(ErrorKind::data, "weight file header not terminated: " + path.string());
  if (expected_radius > 0 && spec.radius != expected_radius)
    fail(ErrorKind::data, "radius mismatch: " + path.string() + " holds a radius-" + std::to_string(spec.radius) +
                              " model, expected radius " + std::to_string(expected_radius));
  if (spec.trainable_count() != trainable || spec.state_count() != state)
    fail(ErrorKind::data, "parameter count mismatch in manifest of " + path.string());
  std::vector<float> blob(trainable + state);
  in.read(reinterpret_cast<char*>(blob.data()), std::streamsize(blob.size() * sizeof(float)));
  if (std::size_t(in.gcount()) != blob.size() * sizeof(float))
    fail(ErrorKind::data, "parameter count mismatch: " + path.string() + " is truncated");
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::data, "parameter count mismatch: trailing bytes in " + path.string());
  if (hex64(fnv1a64(blob.data(), blob.size() * sizeof(float))) != checksum)
    fail(ErrorKind::data, "checksum mismatch in " + path.string());
  LoadedModel lm{Model(spec, seed), checksum};
  std::size_t off = 0;
  lm.net.for_each_stored([&](std::span<float> b) {
    std::memcpy(b.data(), blob.data() + off, b.size() * sizeof(float));
    off += b.size();
  });
  return lm;
}

}  // namespace deepangle
