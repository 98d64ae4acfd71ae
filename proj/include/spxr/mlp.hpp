#pragma once

// Fully-connected superpixel classifier: ReLU hidden layers, sigmoid output,
// trained with mean binary cross-entropy by mini-batch SGD.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spxr/error.hpp"
#include "spxr/io.hpp"

namespace spxr {

template <class Real>
using RowMajorMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using ColumnVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
/// Inputs are stored one sample per column (input_dim x batch).
template <class Real>
using Batch = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

template <class Real>
struct DenseLayer {
  RowMajorMatrix<Real> weight;  // out x in
  ColumnVector<Real> bias;      // out

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

inline const std::vector<int>& default_hidden_sizes() {
  static const std::vector<int> sizes{512, 512, 512};
  return sizes;
}

template <class Real>
struct BasicMlp {
  std::vector<DenseLayer<Real>> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

  void validate() const {
    require(!layers.empty(), Errc::dimension_mismatch, "mlp: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      require(l.bias.size() == l.weight.rows(), Errc::dimension_mismatch, "mlp: bias length does not match layer");
      if (i > 0)
        require(l.in_dim() == layers[i - 1].out_dim(), Errc::dimension_mismatch, "mlp: dim chain mismatch");
      require(l.weight.allFinite() && l.bias.allFinite(), Errc::invalid_argument, "mlp: non-finite weights");
    }
    require(layers.back().out_dim() == 1, Errc::dimension_mismatch, "mlp: final layer must have one output");
  }

  static BasicMlp zeros(int input_dim, std::span<const int> hidden) {
    BasicMlp net;
    int in = input_dim;
    auto add = [&](int out) {
      DenseLayer<Real> l;
      l.weight = RowMajorMatrix<Real>::Zero(out, in);
      l.bias = ColumnVector<Real>::Zero(out);
      net.layers.push_back(std::move(l));
      in = out;
    };
    for (int h : hidden) add(h);
    add(1);
    return net;
  }

  /// Glorot-uniform weights, zero biases.
  static BasicMlp glorot(int input_dim, std::span<const int> hidden, std::uint64_t seed) {
    BasicMlp net = zeros(input_dim, hidden);
    std::mt19937_64 rng(seed);
    for (auto& l : net.layers) {
      const double limit = std::sqrt(6.0 / (l.in_dim() + l.out_dim()));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
          const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
          l.weight(r, c) = static_cast<Real>(limit * (2.0 * u - 1.0));
        }
    }
    return net;
  }

  template <class Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out;
    for (const auto& l : layers) out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    return out;
  }
};

using MlpWeights = BasicMlp<float>;

template <class Real>
Batch<Real> make_batch(std::span<const std::vector<double>> inputs, int input_dim) {
  Batch<Real> x(input_dim, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    require(inputs[j].size() == static_cast<std::size_t>(input_dim), Errc::dimension_mismatch,
            "mlp: input length " + std::to_string(inputs[j].size()) + " does not match input dim " +
                std::to_string(input_dim));
    for (int i = 0; i < input_dim; ++i) x(i, static_cast<Eigen::Index>(j)) = static_cast<Real>(inputs[j][i]);
  }
  return x;
}

/// Output-layer pre-activations, one per column of x.
template <class Real>
Eigen::Matrix<Real, 1, Eigen::Dynamic> forward_logits(const BasicMlp<Real>& net, const Batch<Real>& x) {
  require(x.rows() == net.input_dim(), Errc::dimension_mismatch, "mlp: input dim mismatch");
  Batch<Real> a = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Batch<Real> z = l.weight * a;
    z.colwise() += l.bias;
    if (i + 1 < net.layers.size()) z = z.cwiseMax(Real(0));
    a = std::move(z);
  }
  return a.row(0);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <class Real>
std::vector<double> forward(const BasicMlp<Real>& net, const Batch<Real>& x) {
  const auto logits = forward_logits(net, x);
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index j = 0; j < logits.size(); ++j) p[j] = sigmoid(static_cast<double>(logits(j)));
  return p;
}

template <class Real>
std::vector<double> forward(const BasicMlp<Real>& net, std::span<const std::vector<double>> inputs) {
  return forward(net, make_batch<Real>(inputs, net.input_dim()));
}

/// Object iff probability > threshold (strict).
inline std::vector<bool> classify_probabilities(std::span<const double> probs, double threshold = 0.5) {
  require(threshold > 0.0 && threshold < 1.0, Errc::invalid_argument, "classify: threshold must lie in (0,1)");
  std::vector<bool> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > threshold;
  return out;
}

template <class Real>
std::vector<bool> classify(const BasicMlp<Real>& net, std::span<const std::vector<double>> inputs,
                           double threshold = 0.5) {
  const auto p = forward(net, inputs);
  return classify_probabilities(p, threshold);
}

/// Mean binary cross-entropy over the batch and, if grad is non-null, its
/// gradient with respect to every weight and bias (same shapes as net).
template <class Real>
Real bce_loss_and_gradient(const BasicMlp<Real>& net, const Batch<Real>& x,
                           const Eigen::Matrix<Real, 1, Eigen::Dynamic>& y, BasicMlp<Real>* grad) {
  const std::size_t depth = net.layers.size();
  const auto n = static_cast<Real>(x.cols());
  std::vector<Batch<Real>> act(depth + 1);  // act[0] = x, act[i] = output of layer i-1 (post-ReLU)
  act[0] = x;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& l = net.layers[i];
    Batch<Real> z = l.weight * act[i];
    z.colwise() += l.bias;
    if (i + 1 < depth) z = z.cwiseMax(Real(0));
    act[i + 1] = std::move(z);
  }
  const auto& logits = act[depth];
  Real loss = 0;
  Batch<Real> delta(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Real z = logits(0, j);
    loss += std::max(z, Real(0)) - z * y(j) + std::log1p(std::exp(-std::abs(z)));
    delta(0, j) = (Real(1) / (Real(1) + std::exp(-z)) - y(j)) / n;
  }
  loss /= n;
  if (grad == nullptr) return loss;

  grad->layers.resize(depth);
  for (std::size_t i = depth; i-- > 0;) {
    const auto& l = net.layers[i];
    grad->layers[i].weight = delta * act[i].transpose();
    grad->layers[i].bias = delta.rowwise().sum();
    if (i > 0) {
      Batch<Real> back = l.weight.transpose() * delta;
      delta = back.cwiseProduct((act[i].array() > Real(0)).template cast<Real>().matrix());
    }
  }
  return loss;
}

struct SpxSample {
  std::vector<double> input;  // mask prior first, then pooled features
  bool label = false;         // object part
};

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 50;
  int batch_size = 64;
  double momentum = 0.0;
  std::uint64_t seed = 1;
  std::vector<int> hidden = default_hidden_sizes();
};

struct TrainResult {
  MlpWeights weights;
  std::vector<double> loss_curve;  // mean mini-batch loss per epoch
};

inline TrainResult train(std::span<const SpxSample> samples, const TrainConfig& cfg) {
  require(!samples.empty(), Errc::degenerate_training_set, "degenerate training set");
  const bool any_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label; });
  const bool any_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return !s.label; });
  require(any_pos && any_neg, Errc::degenerate_training_set, "degenerate training set");
  require(cfg.epochs >= 0 && cfg.batch_size >= 1 && cfg.learning_rate > 0.0, Errc::invalid_argument,
          "train: invalid configuration");

  const int dim = static_cast<int>(samples.front().input.size());
  const auto count = static_cast<Eigen::Index>(samples.size());
  Batch<float> all(dim, count);
  Eigen::Matrix<float, 1, Eigen::Dynamic> labels(count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const auto& s = samples[static_cast<std::size_t>(j)];
    require(static_cast<int>(s.input.size()) == dim, Errc::dimension_mismatch, "train: inconsistent sample length");
    for (int i = 0; i < dim; ++i) all(i, j) = static_cast<float>(s.input[i]);
    labels(j) = s.label ? 1.0f : 0.0f;
  }

  TrainResult result;
  result.weights = MlpWeights::glorot(dim, cfg.hidden, cfg.seed);
  auto& net = result.weights;
  MlpWeights velocity = MlpWeights::zeros(dim, cfg.hidden);
  MlpWeights grad;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with an explicit draw so the order is library-independent
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto m = static_cast<Eigen::Index>(end - start);
      Batch<float> x(dim, m);
      Eigen::Matrix<float, 1, Eigen::Dynamic> y(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        x.col(j) = all.col(order[start + static_cast<std::size_t>(j)]);
        y(j) = labels(order[start + static_cast<std::size_t>(j)]);
      }
      epoch_loss += bce_loss_and_gradient(net, x, y, &grad);
      ++batches;
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& v = velocity.layers[li];
        v.weight = mu * v.weight - lr * grad.layers[li].weight;
        v.bias = mu * v.bias - lr * grad.layers[li].bias;
        net.layers[li].weight += v.weight;
        net.layers[li].bias += v.bias;
      }
    }
    result.loss_curve.push_back(batches > 0 ? epoch_loss / batches : 0.0);
  }
  return result;
}

// MLPW: "MLPW" u32 layers, per layer u32 out, u32 in, f32 weights (row-major), f32 biases.
inline void save_weights(const MlpWeights& net, const std::string& path) {
  net.validate();
  detail::ByteWriter w;
  w.magic("MLPW");
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.f32(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f32(l.bias(r));
  }
  detail::write_file_bytes(path, w.bytes());
}

inline MlpWeights load_weights(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes);
  if (!r.magic_is("MLPW")) fail(Errc::bad_magic, "bad magic");
  if (!r.has(4)) fail(Errc::payload_size_mismatch, "payload size mismatch");
  const std::uint32_t depth = r.u32();
  MlpWeights net;
  for (std::uint32_t i = 0; i < depth; ++i) {
    if (!r.has(8)) fail(Errc::payload_size_mismatch, "payload size mismatch");
    const std::uint64_t out = r.u32(), in = r.u32();
    if (out == 0 || in == 0 || out * in > (1ULL << 32) || !r.has((out * in + out) * 4))
      fail(Errc::payload_size_mismatch, "payload size mismatch");
    DenseLayer<float> l;
    l.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    l.bias.resize(static_cast<Eigen::Index>(out));
    for (Eigen::Index rr = 0; rr < l.weight.rows(); ++rr)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(rr, c) = r.f32();
    for (Eigen::Index rr = 0; rr < l.bias.size(); ++rr) l.bias(rr) = r.f32();
    net.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) fail(Errc::payload_size_mismatch, "payload size mismatch");
  net.validate();
  return net;
}

}  // namespace spxr
