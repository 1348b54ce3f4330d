#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "relex/common.hpp"
#include "relex/dataset.hpp"

namespace relex {

enum class Activation { ReLU, Tanh };

enum class FeatureMapId { Input, LastHidden, AllHidden };

// Multinomial logistic regression (empty hidden_layers) or a fully connected
// classifier. l2_penalty enters the training objective only; per-instance
// losses and gradients used downstream are plain cross-entropy.
struct ModelSpec {
  int input_dim = 0;
  int class_count = 0;
  std::vector<int> hidden_layers;
  Activation activation = Activation::ReLU;
  double l2_penalty = 0.0;
  bool include_bias = true;

  bool is_logreg() const { return hidden_layers.empty(); }

  bool operator==(const ModelSpec& o) const {
    return input_dim == o.input_dim && class_count == o.class_count &&
           hidden_layers == o.hidden_layers && activation == o.activation &&
           l2_penalty == o.l2_penalty && include_bias == o.include_bias;
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

inline Eigen::VectorXd stable_softmax(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

// -log p[y] computed without forming p, so confident logits never hit log(0).
inline double stable_cross_entropy(const Eigen::VectorXd& logits, int y) {
  double m = logits.maxCoeff();
  double lse = std::log((logits.array() - m).exp().sum()) + m;
  return lse - logits[y];
}

struct ForwardPass {
  std::vector<Eigen::VectorXd> pre;     // pre-activation, one per hidden layer
  std::vector<Eigen::VectorXd> hidden;  // post-activation, one per hidden layer
  Eigen::VectorXd logits;
};

class Model {
 public:
  using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstRowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Model() = default;
  Model(ModelSpec spec, Eigen::VectorXd theta) : spec_(std::move(spec)), theta_(std::move(theta)) {
    init_layout();
    if (theta_.size() != param_count_)
      throw parse_error("theta size " + std::to_string(theta_.size()) + " != param count " +
                        std::to_string(param_count_));
  }

  const ModelSpec& spec() const { return spec_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  int param_count() const { return param_count_; }
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }

  // Flattened layout: layer by layer, weight matrix row-major, then bias.
  int weight_offset(int l) const { return w_off_[l]; }
  int bias_offset(int l) const { return b_off_[l]; }
  ConstRowMajorMap weight(int l) const {
    return ConstRowMajorMap(theta_.data() + w_off_[l], dims_[l + 1], dims_[l]);
  }

  ForwardPass forward(const Eigen::VectorXd& x) const {
    ForwardPass f;
    Eigen::VectorXd a = x;
    int layers = layer_count();
    for (int l = 0; l < layers; ++l) {
      Eigen::VectorXd z = weight(l) * a;
      if (spec_.include_bias) z += theta_.segment(b_off_[l], dims_[l + 1]);
      if (l + 1 == layers) {
        f.logits = std::move(z);
      } else {
        f.pre.push_back(z);
        f.hidden.push_back(activate(z));
        a = f.hidden.back();
      }
    }
    return f;
  }

  Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const {
    return stable_softmax(forward(x).logits);
  }

  // Ties resolve to the lowest class index.
  int predict(const Eigen::VectorXd& x) const {
    Eigen::VectorXd logits = forward(x).logits;
    int best = 0;
    for (int c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = c;
    return best;
  }

  double loss(const Instance& z) const {
    check_instance(z);
    return stable_cross_entropy(forward(z.features).logits, z.label);
  }

  // d loss / d theta for a single instance, flattened in parameter layout.
  Eigen::VectorXd loss_gradient(const Instance& z) const {
    check_instance(z);
    ForwardPass f = forward(z.features);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(param_count_);
    Eigen::VectorXd delta = stable_softmax(f.logits);
    delta[z.label] -= 1.0;
    int layers = layer_count();
    for (int l = layers - 1; l >= 0; --l) {
      const Eigen::VectorXd& a_prev = l == 0 ? z.features : f.hidden[l - 1];
      RowMajorMap gw(grad.data() + w_off_[l], dims_[l + 1], dims_[l]);
      gw.noalias() = delta * a_prev.transpose();
      if (spec_.include_bias) grad.segment(b_off_[l], dims_[l + 1]) = delta;
      if (l > 0) {
        Eigen::VectorXd back = weight(l).transpose() * delta;
        delta = back.cwiseProduct(activate_grad(f.pre[l - 1]));
      }
    }
    return grad;
  }

  // softmax(logits) - onehot(label); the class-space residual that scales the
  // input in every logistic-regression gradient block.
  Eigen::VectorXd residual(const Instance& z) const {
    check_instance(z);
    Eigen::VectorXd r = predict_proba(z.features);
    r[z.label] -= 1.0;
    return r;
  }

  Eigen::VectorXd features(const Eigen::VectorXd& x, FeatureMapId map) const {
    if (map == FeatureMapId::Input) return x;
    if (spec_.is_logreg())
      throw parse_error("hidden feature maps require at least one hidden layer");
    ForwardPass f = forward(x);
    if (map == FeatureMapId::LastHidden) return f.hidden.back();
    Eigen::Index total = 0;
    for (const auto& h : f.hidden) total += h.size();
    Eigen::VectorXd all(total);
    Eigen::Index at = 0;
    for (const auto& h : f.hidden) {
      all.segment(at, h.size()) = h;
      at += h.size();
    }
    return all;
  }

  std::uint64_t digest() const {
    std::uint64_t h = fnv1a64(theta_.data(), sizeof(double) * static_cast<std::size_t>(theta_.size()));
    h = fnv1a64(&spec_.input_dim, sizeof spec_.input_dim, h);
    h = fnv1a64(&spec_.class_count, sizeof spec_.class_count, h);
    for (int w : spec_.hidden_layers) h = fnv1a64(&w, sizeof w, h);
    int act = static_cast<int>(spec_.activation);
    h = fnv1a64(&act, sizeof act, h);
    int bias = spec_.include_bias ? 1 : 0;
    return fnv1a64(&bias, sizeof bias, h);
  }

 private:
  void init_layout() {
    if (spec_.input_dim < 1 || spec_.class_count < 2)
      throw parse_error("model spec needs input_dim >= 1 and class_count >= 2");
    for (int wdt : spec_.hidden_layers)
      if (wdt < 1) throw parse_error("hidden layer widths must be positive");
    dims_.clear();
    dims_.push_back(spec_.input_dim);
    for (int wdt : spec_.hidden_layers) dims_.push_back(wdt);
    dims_.push_back(spec_.class_count);
    int at = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      w_off_.push_back(at);
      at += dims_[l + 1] * dims_[l];
      b_off_.push_back(at);
      if (spec_.include_bias) at += dims_[l + 1];
    }
    param_count_ = at;
  }

  void check_instance(const Instance& z) const {
    if (z.features.size() != spec_.input_dim)
      throw parse_error("instance dimension mismatch");
    if (z.label < 0 || z.label >= spec_.class_count)
      throw parse_error("instance label out of range");
  }

  Eigen::VectorXd activate(const Eigen::VectorXd& z) const {
    if (spec_.activation == Activation::ReLU) return z.cwiseMax(0.0);
    return z.array().tanh();
  }

  Eigen::VectorXd activate_grad(const Eigen::VectorXd& z) const {
    if (spec_.activation == Activation::ReLU)
      return (z.array() > 0.0).cast<double>();
    Eigen::ArrayXd t = z.array().tanh();
    return (1.0 - t * t).matrix();
  }

  ModelSpec spec_;
  Eigen::VectorXd theta_;
  std::vector<int> dims_;
  std::vector<int> w_off_, b_off_;
  int param_count_ = 0;
};

inline int param_count(const ModelSpec& spec) {
  int at = 0;
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  for (int w : spec.hidden_layers) dims.push_back(w);
  dims.push_back(spec.class_count);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    at += dims[l + 1] * dims[l];
    if (spec.include_bias) at += dims[l + 1];
  }
  return at;
}

// Weights uniform in +-1/sqrt(fan_in), biases zero. Weights are drawn layer by
// layer in row-major order so the stream layout is reproducible.
inline Model init_random(const ModelSpec& spec, std::uint64_t seed) {
  Model shape(spec, Eigen::VectorXd::Zero(param_count(spec)));
  std::mt19937_64 rng(seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(shape.param_count());
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  for (int w : spec.hidden_layers) dims.push_back(w);
  dims.push_back(spec.class_count);
  for (int l = 0; l + 1 < static_cast<int>(dims.size()); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> unif(-bound, bound);
    int n = dims[l + 1] * dims[l];
    for (int i = 0; i < n; ++i) theta[shape.weight_offset(l) + i] = unif(rng);
  }
  return Model(spec, std::move(theta));
}

inline double mean_cross_entropy(const Model& m, const Dataset& ds) {
  double s = 0.0;
  for (const auto& z : ds.instances) s += m.loss(z);
  return s / static_cast<double>(ds.size());
}

// The optimized objective: mean cross-entropy plus (l2_penalty/2)*||theta||^2.
inline double training_loss(const Model& m, const Dataset& ds) {
  return mean_cross_entropy(m, ds) + 0.5 * m.spec().l2_penalty * m.theta().squaredNorm();
}

// Mean per-instance cross-entropy gradient, penalty excluded. This is the
// gradient whose Jacobian the curvature code differentiates.
inline Eigen::VectorXd ce_gradient_mean(const Model& m, const Dataset& ds) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m.param_count());
  for (const auto& z : ds.instances) g += m.loss_gradient(z);
  return g / static_cast<double>(ds.size());
}

inline Eigen::VectorXd objective_gradient(const Model& m, const Dataset& ds) {
  return ce_gradient_mean(m, ds) + m.spec().l2_penalty * m.theta();
}

inline double accuracy(const Model& m, const Dataset& ds) {
  int hits = 0;
  for (const auto& z : ds.instances)
    if (m.predict(z.features) == z.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

struct TrainResult {
  Model model;
  double final_loss = 0.0;
};

// Mini-batch Adam on the training objective. Epoch order reshuffles from the
// config seed; the run aborts with the epoch number if the objective leaves
// the finite range.
inline TrainResult train(const Model& start, const Dataset& ds, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw parse_error("train config: epochs >= 0 and batch_size >= 1 required");
  if (ds.instances.empty()) throw parse_error("train: empty dataset");
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd theta = start.theta();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  double l2 = start.spec().l2_penalty;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  long t = 0;
  Model cur = start;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
      for (std::size_t i = at; i < end; ++i) g += cur.loss_gradient(ds.instances[order[i]]);
      g /= static_cast<double>(end - at);
      g += l2 * theta;
      ++t;
      m1 = beta1 * m1 + (1 - beta1) * g;
      m2 = beta2 * m2 + (1 - beta2) * g.cwiseProduct(g);
      double c1 = 1 - std::pow(beta1, static_cast<double>(t));
      double c2 = 1 - std::pow(beta2, static_cast<double>(t));
      theta -= (cfg.learning_rate / c1) * m1.cwiseQuotient(((m2 / c2).cwiseSqrt().array() + eps).matrix());
      cur = Model(start.spec(), theta);
    }
    double obj = training_loss(cur, ds);
    if (!std::isfinite(obj))
      throw numeric_error("non-finite training loss at epoch " + std::to_string(epoch + 1));
  }
  return {cur, training_loss(cur, ds)};
}

}  // namespace relex
