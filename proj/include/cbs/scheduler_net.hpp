// Bias-free ReLU MLP s(h) = W_L relu(W_{L-1} relu(... relu(W_1 h))) mapping an
// arm's feature vector to a scalar score, trained online by plain full-batch
// gradient descent on the mean squared error.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cbs/rollout.hpp"

namespace cbs {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Weights W_1 (m x 10), W_2..W_{L-1} (m x m), W_L (1 x m).
template <typename Scalar = double>
class BasicSchedulerNet {
 public:
  using Matrix = MatrixX<Scalar>;

  BasicSchedulerNet() = default;

  /// Last layer i.i.d. N(0, 1/m), every other layer i.i.d. N(0, 2/m).
  static BasicSchedulerNet init(int depth, int width, std::uint64_t seed) {
    if (depth < 2) throw std::invalid_argument("SchedulerNet: depth must be >= 2");
    if (width < 1) throw std::invalid_argument("SchedulerNet: width must be >= 1");
    BasicSchedulerNet net;
    net.depth_ = depth;
    net.width_ = width;
    net.seed_ = seed;
    std::mt19937_64 rng(seed);
    const double m = static_cast<double>(width);
    std::normal_distribution<double> hidden(0.0, std::sqrt(2.0 / m));
    std::normal_distribution<double> last(0.0, std::sqrt(1.0 / m));
    for (int l = 0; l < depth; ++l) {
      const auto [rows, cols] = shape_of(l, depth, width);
      Matrix w(rows, cols);
      auto& dist = (l == depth - 1) ? last : hidden;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = static_cast<Scalar>(dist(rng));
      net.weights_.push_back(std::move(w));
    }
    return net;
  }

  /// Builds a net from explicit weights; shapes must chain 10 -> m -> ... -> m -> 1.
  static BasicSchedulerNet from_weights(std::vector<Matrix> weights, std::uint64_t seed = 0) {
    if (weights.size() < 2) throw std::invalid_argument("SchedulerNet: need at least 2 layers");
    const int depth = static_cast<int>(weights.size());
    const int width = static_cast<int>(weights.front().rows());
    if (width < 1) throw std::invalid_argument("SchedulerNet: width must be >= 1");
    for (int l = 0; l < depth; ++l) {
      const auto [rows, cols] = shape_of(l, depth, width);
      if (weights[l].rows() != rows || weights[l].cols() != cols)
        throw std::invalid_argument("SchedulerNet: layer " + std::to_string(l + 1) +
                                    " has shape " + std::to_string(weights[l].rows()) + "x" +
                                    std::to_string(weights[l].cols()) + ", expected " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    BasicSchedulerNet net;
    net.depth_ = depth;
    net.width_ = width;
    net.seed_ = seed;
    net.weights_ = std::move(weights);
    return net;
  }

  static std::pair<Eigen::Index, Eigen::Index> shape_of(int layer, int depth, int width) {
    const Eigen::Index rows = (layer == depth - 1) ? 1 : width;
    const Eigen::Index cols = (layer == 0) ? static_cast<Eigen::Index>(kFeatureDim) : width;
    return {rows, cols};
  }

  int depth() const { return depth_; }
  int width() const { return width_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Matrix>& weights() { return weights_; }

  bool all_finite() const {
    for (const auto& w : weights_)
      if (!w.allFinite()) return false;
    return true;
  }

  template <typename Other>
  BasicSchedulerNet<Other> cast() const {
    std::vector<MatrixX<Other>> ws;
    for (const auto& w : weights_) ws.push_back(w.template cast<Other>());
    return BasicSchedulerNet<Other>::from_weights(std::move(ws), seed_);
  }

 private:
  int depth_ = 0;
  int width_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Matrix> weights_;
};

using SchedulerNet = BasicSchedulerNet<double>;

struct TrainingBatch {
  std::vector<FeatureVector> features;
  std::vector<double> targets;

  void validate() const {
    if (features.empty()) throw std::invalid_argument("TrainingBatch: empty batch");
    if (features.size() != targets.size())
      throw std::invalid_argument("TrainingBatch: features/targets length mismatch");
  }
};

namespace detail {

template <typename Scalar>
MatrixX<Scalar> pack_columns(std::span<const FeatureVector> features) {
  MatrixX<Scalar> x(static_cast<Eigen::Index>(kFeatureDim),
                    static_cast<Eigen::Index>(features.size()));
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (!features[k].all_finite())
      throw std::invalid_argument("SchedulerNet: non-finite feature input");
    for (std::size_t i = 0; i < kFeatureDim; ++i)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          static_cast<Scalar>(features[k][i]);
  }
  return x;
}

// Forward pass keeping every layer input (post-activation) for backprop.
template <typename Scalar>
MatrixX<Scalar> forward(const BasicSchedulerNet<Scalar>& net, const MatrixX<Scalar>& x,
                        std::vector<MatrixX<Scalar>>* inputs) {
  MatrixX<Scalar> a = x;
  const auto& ws = net.weights();
  for (std::size_t l = 0; l + 1 < ws.size(); ++l) {
    if (inputs) inputs->push_back(a);
    a = (ws[l] * a).cwiseMax(Scalar(0));
  }
  if (inputs) inputs->push_back(a);
  return ws.back() * a;
}

}  // namespace detail

template <typename Scalar>
Scalar predict(const BasicSchedulerNet<Scalar>& net, const FeatureVector& h) {
  const auto x = detail::pack_columns<Scalar>(std::span<const FeatureVector>(&h, 1));
  return detail::forward<Scalar>(net, x, nullptr)(0, 0);
}

template <typename Scalar>
std::vector<Scalar> predict_batch(const BasicSchedulerNet<Scalar>& net,
                                  std::span<const FeatureVector> features) {
  if (features.empty()) return {};
  const auto out = detail::forward<Scalar>(net, detail::pack_columns<Scalar>(features), nullptr);
  return std::vector<Scalar>(out.data(), out.data() + out.size());
}

/// (1/K) sum_k (s(h_k) - y_k)^2
template <typename Scalar>
Scalar loss(const BasicSchedulerNet<Scalar>& net, const TrainingBatch& batch) {
  batch.validate();
  const auto s = detail::forward<Scalar>(net, detail::pack_columns<Scalar>(batch.features), nullptr);
  Scalar total(0);
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    const Scalar r = s(0, k) - static_cast<Scalar>(batch.targets[static_cast<std::size_t>(k)]);
    total += r * r;
  }
  return total / static_cast<Scalar>(s.cols());
}

/// Gradient of loss() with respect to every weight matrix, same shapes as net.weights().
template <typename Scalar>
std::vector<MatrixX<Scalar>> loss_gradient(const BasicSchedulerNet<Scalar>& net,
                                           const TrainingBatch& batch) {
  batch.validate();
  const auto& ws = net.weights();
  std::vector<MatrixX<Scalar>> inputs;
  const auto s = detail::forward<Scalar>(net, detail::pack_columns<Scalar>(batch.features), &inputs);
  const auto k = static_cast<Scalar>(s.cols());

  MatrixX<Scalar> delta(1, s.cols());
  for (Eigen::Index c = 0; c < s.cols(); ++c)
    delta(0, c) =
        Scalar(2) * (s(0, c) - static_cast<Scalar>(batch.targets[static_cast<std::size_t>(c)])) / k;

  std::vector<MatrixX<Scalar>> grads(ws.size());
  for (std::size_t l = ws.size(); l-- > 0;) {
    grads[l] = delta * inputs[l].transpose();
    if (l == 0) break;
    // inputs[l] = relu(z_{l}); relu'(z) = 1 exactly where the activation is positive
    delta = (ws[l].transpose() * delta).cwiseProduct(
        inputs[l].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
  }
  return grads;
}

/// One full-batch gradient step; returns the updated net.
template <typename Scalar>
BasicSchedulerNet<Scalar> sgd_update(const BasicSchedulerNet<Scalar>& net,
                                     const TrainingBatch& batch, double learning_rate) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("sgd_update: learning rate must be a finite non-negative real");
  const auto grads = loss_gradient(net, batch);
  BasicSchedulerNet<Scalar> next = net;
  for (std::size_t l = 0; l < grads.size(); ++l)
    next.weights()[l] -= static_cast<Scalar>(learning_rate) * grads[l];
  return next;
}

/// JSON checkpoint: {"depth", "width", "seed", "layers": [{"rows","cols","data"}]},
/// matrices row-major in layer order.
template <typename Scalar>
nlohmann::json to_checkpoint(const BasicSchedulerNet<Scalar>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& w : net.weights()) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) data.push_back(static_cast<double>(w(r, c)));
    layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"data", data}});
  }
  return {{"depth", net.depth()}, {"width", net.width()}, {"seed", net.seed()},
          {"layers", layers}};
}

template <typename Scalar = double>
BasicSchedulerNet<Scalar> from_checkpoint(const nlohmann::json& j) {
  const int depth = j.at("depth").get<int>();
  const int width = j.at("width").get<int>();
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != depth)
    throw std::invalid_argument("checkpoint: layer count does not match depth");
  std::vector<MatrixX<Scalar>> ws;
  for (const auto& layer : layers) {
    const auto rows = layer.at("rows").get<Eigen::Index>();
    const auto cols = layer.at("cols").get<Eigen::Index>();
    const auto data = layer.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::invalid_argument("checkpoint: layer data size mismatch");
    MatrixX<Scalar> w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        w(r, c) = static_cast<Scalar>(data[static_cast<std::size_t>(r * cols + c)]);
    ws.push_back(std::move(w));
  }
  auto net = BasicSchedulerNet<Scalar>::from_weights(std::move(ws), j.at("seed").get<std::uint64_t>());
  if (net.width() != width) throw std::invalid_argument("checkpoint: width mismatch");
  return net;
}

}  // namespace cbs
