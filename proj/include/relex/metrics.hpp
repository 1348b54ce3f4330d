#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "relex/common.hpp"
#include "relex/dataset.hpp"
#include "relex/model.hpp"
#include "relex/numerics.hpp"

namespace relex {

// Similarity families score feature-space closeness under a chosen feature
// map; gradient families score loss-gradient alignment, optionally
// preconditioned by curvature (Hessian H or empirical Fisher I).
enum class MetricFamily {
  L2Sim,   // -||phi(t) - phi(i)||^2
  CosSim,  // cos(phi(t), phi(i))
  DotSim,  // <phi(t), phi(i)>
  IF,      // <g_t, H^-1 g_i>
  RIF,     // cos(H^-1/2 g_t, H^-1/2 g_i)
  FK,      // <g_t, I^-1 g_i>
  GD,      // <g_t, g_i>
  GC,      // cos(g_t, g_i)
  L2IF,    // -||H^-1/2 g_t - H^-1/2 g_i||^2
  L2FK,    // -||I^-1/2 g_t - I^-1/2 g_i||^2
  CosFK,   // cos(I^-1/2 g_t, I^-1/2 g_i)
  L2Grad,  // -||g_t - g_i||^2
};

struct MetricId {
  MetricFamily family = MetricFamily::GC;
  FeatureMapId feature_map = FeatureMapId::Input;  // similarity families only

  bool operator==(const MetricId& o) const {
    return family == o.family && feature_map == o.feature_map;
  }
};

inline bool is_similarity_family(MetricFamily f) {
  return f == MetricFamily::L2Sim || f == MetricFamily::CosSim || f == MetricFamily::DotSim;
}

inline bool is_cosine_scored(MetricFamily f) {
  return f == MetricFamily::CosSim || f == MetricFamily::RIF || f == MetricFamily::GC ||
         f == MetricFamily::CosFK;
}

inline bool is_l2_scored(MetricFamily f) {
  return f == MetricFamily::L2Sim || f == MetricFamily::L2IF || f == MetricFamily::L2FK ||
         f == MetricFamily::L2Grad;
}

inline bool needs_hessian(MetricFamily f) {
  return f == MetricFamily::IF || f == MetricFamily::RIF || f == MetricFamily::L2IF;
}

inline bool needs_fisher(MetricFamily f) {
  return f == MetricFamily::FK || f == MetricFamily::CosFK || f == MetricFamily::L2FK;
}

// Tokens: similarity families pair with a feature map as `l2@x`, `cos@last`,
// `dot@all`; gradient families are bare tokens. `cos-if` and `cos-grad` are
// aliases of `rif` and `gc`, mapped to the same id at parse time.
inline MetricId parse_metric(const std::string& token) {
  auto at = token.find('@');
  if (at != std::string::npos) {
    std::string fam = token.substr(0, at);
    std::string map = token.substr(at + 1);
    MetricId id;
    if (fam == "l2")
      id.family = MetricFamily::L2Sim;
    else if (fam == "cos")
      id.family = MetricFamily::CosSim;
    else if (fam == "dot")
      id.family = MetricFamily::DotSim;
    else
      throw parse_error("unknown metric token '" + token + "'");
    if (map == "x")
      id.feature_map = FeatureMapId::Input;
    else if (map == "last")
      id.feature_map = FeatureMapId::LastHidden;
    else if (map == "all")
      id.feature_map = FeatureMapId::AllHidden;
    else
      throw parse_error("unknown feature map '" + map + "' in metric token '" + token + "'");
    return id;
  }
  if (token == "if") return {MetricFamily::IF};
  if (token == "rif" || token == "cos-if") return {MetricFamily::RIF};
  if (token == "fk") return {MetricFamily::FK};
  if (token == "gd") return {MetricFamily::GD};
  if (token == "gc" || token == "cos-grad") return {MetricFamily::GC};
  if (token == "l2-if") return {MetricFamily::L2IF};
  if (token == "l2-fk") return {MetricFamily::L2FK};
  if (token == "cos-fk") return {MetricFamily::CosFK};
  if (token == "l2-grad") return {MetricFamily::L2Grad};
  throw parse_error("unknown metric token '" + token + "'");
}

inline std::string metric_token(const MetricId& id) {
  if (is_similarity_family(id.family)) {
    std::string fam = id.family == MetricFamily::L2Sim    ? "l2"
                      : id.family == MetricFamily::CosSim ? "cos"
                                                          : "dot";
    std::string map = id.feature_map == FeatureMapId::Input        ? "x"
                      : id.feature_map == FeatureMapId::LastHidden ? "last"
                                                                   : "all";
    return fam + "@" + map;
  }
  switch (id.family) {
    case MetricFamily::IF: return "if";
    case MetricFamily::RIF: return "rif";
    case MetricFamily::FK: return "fk";
    case MetricFamily::GD: return "gd";
    case MetricFamily::GC: return "gc";
    case MetricFamily::L2IF: return "l2-if";
    case MetricFamily::L2FK: return "l2-fk";
    case MetricFamily::CosFK: return "cos-fk";
    default: return "l2-grad";
  }
}

struct NumericsConfig {
  double damping = 0.0;  // <= 0 requests the auto rule
  int dense_limit = 4096;
  enum class IfSolver { Dense, Cg } if_solver = IfSolver::Dense;
  double cg_tol = 1e-8;
  int cg_max_iter = 1000;
};

// Per-(model, training set) intermediates shared across metric caches:
// per-instance gradients and the curvature factors.
struct GradientWorkspace {
  std::shared_ptr<std::vector<Eigen::VectorXd>> gradients;
  std::shared_ptr<PsdFactor> hessian;
  std::shared_ptr<FisherMatrix> fisher;
};

inline const std::vector<Eigen::VectorXd>& ensure_gradients(GradientWorkspace& ws, const Model& m,
                                                            const Dataset& train) {
  if (!ws.gradients) {
    auto g = std::make_shared<std::vector<Eigen::VectorXd>>();
    g->reserve(train.size());
    for (const auto& z : train.instances) g->push_back(m.loss_gradient(z));
    ws.gradients = std::move(g);
  }
  return *ws.gradients;
}

inline const std::shared_ptr<PsdFactor>& ensure_hessian(GradientWorkspace& ws, const Model& m,
                                                        const Dataset& train,
                                                        const NumericsConfig& cfg) {
  if (!ws.hessian)
    ws.hessian =
        std::make_shared<PsdFactor>(dense_hessian(m, train, cfg.damping, cfg.dense_limit));
  return ws.hessian;
}

inline const std::shared_ptr<FisherMatrix>& ensure_fisher(GradientWorkspace& ws, const Model& m,
                                                          const Dataset& train,
                                                          const NumericsConfig& cfg) {
  if (!ws.fisher)
    ws.fisher =
        std::make_shared<FisherMatrix>(empirical_fisher(m, train, cfg.damping, cfg.dense_limit));
  return ws.fisher;
}

// Materialized per-training-instance score vectors for one (metric, model)
// pair, plus the transform the test-side vector goes through before scoring.
struct MetricCache {
  MetricId metric;
  std::uint64_t model_digest = 0;
  double damping = 0.0;  // realized lambda of the factor involved, 0 if none
  bool cg_used = false;
  std::vector<Eigen::VectorXd> vectors;
  std::vector<double> norms;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> test_transform;  // null = identity

  Eigen::VectorXd transform_test(const Eigen::VectorXd& g) const {
    return test_transform ? test_transform(g) : g;
  }
};

inline MetricCache precompute(const MetricId& metric, const Model& m, const Dataset& train,
                              const NumericsConfig& cfg, GradientWorkspace& ws) {
  MetricCache cache;
  cache.metric = metric;
  cache.model_digest = m.digest();
  cache.vectors.reserve(train.size());
  if (is_similarity_family(metric.family)) {
    for (const auto& z : train.instances) cache.vectors.push_back(m.features(z.features, metric.feature_map));
  } else if (metric.family == MetricFamily::GD || metric.family == MetricFamily::GC ||
             metric.family == MetricFamily::L2Grad) {
    cache.vectors = ensure_gradients(ws, m, train);
  } else if (metric.family == MetricFamily::IF &&
             cfg.if_solver == NumericsConfig::IfSolver::Cg) {
    const auto& grads = ensure_gradients(ws, m, train);
    double lam = cfg.damping > 0.0
                     ? cfg.damping
                     : auto_damping(hessian_trace(m, train), m.param_count());
    auto op = training_hvp_operator(m, train);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      CgResult r = cg_solve(op, grads[i], lam, cfg.cg_tol, cfg.cg_max_iter);
      if (!r.converged)
        throw numeric_error("cg did not converge for training instance " + std::to_string(i));
      cache.vectors.push_back(std::move(r.x));
    }
    cache.damping = lam;
    cache.cg_used = true;
  } else if (needs_hessian(metric.family)) {
    const auto& grads = ensure_gradients(ws, m, train);
    auto H = ensure_hessian(ws, m, train, cfg);
    double power = metric.family == MetricFamily::IF ? -1.0 : -0.5;
    for (const auto& g : grads) cache.vectors.push_back(H->apply(g, power));
    cache.damping = H->damping;
    if (metric.family != MetricFamily::IF)
      cache.test_transform = [H](const Eigen::VectorXd& g) { return H->apply(g, -0.5); };
  } else {
    const auto& grads = ensure_gradients(ws, m, train);
    auto F = ensure_fisher(ws, m, train, cfg);
    double power = metric.family == MetricFamily::FK ? -1.0 : -0.5;
    for (const auto& g : grads) cache.vectors.push_back(F->apply(g, power));
    cache.damping = F->damping;
    if (metric.family != MetricFamily::FK)
      cache.test_transform = [F](const Eigen::VectorXd& g) { return F->apply(g, -0.5); };
  }
  cache.norms.reserve(cache.vectors.size());
  for (const auto& v : cache.vectors) cache.norms.push_back(v.norm());
  return cache;
}

inline MetricCache precompute(const MetricId& metric, const Model& m, const Dataset& train,
                              const NumericsConfig& cfg = {}) {
  GradientWorkspace ws;
  return precompute(metric, m, train, cfg, ws);
}

namespace detail {

inline void check_cache(const MetricCache& cache, const MetricId& metric, const Model& m) {
  if (!(cache.metric == metric) || cache.model_digest != m.digest())
    throw parse_error("metric cache does not match the requested metric/model");
}

// Test-side vector in the cache's scoring space. The label slot of z carries
// the model's predicted class for gradient families.
inline Eigen::VectorXd test_vector(const MetricId& metric, const Model& m, const Instance& z,
                                   const MetricCache& cache) {
  if (is_similarity_family(metric.family)) return m.features(z.features, metric.feature_map);
  return cache.transform_test(m.loss_gradient(z));
}

inline double score_pair(MetricFamily family, const Eigen::VectorXd& t, double tnorm,
                         const Eigen::VectorXd& v, double vnorm, bool& degenerate) {
  if (is_cosine_scored(family)) {
    if (tnorm == 0.0 || vnorm == 0.0) {
      degenerate = true;
      return 0.0;
    }
    return std::clamp(t.dot(v) / (tnorm * vnorm), -1.0, 1.0);
  }
  if (is_l2_scored(family)) return -(t - v).squaredNorm();
  return t.dot(v);
}

}  // namespace detail

// Relevance of training instance i to the test instance; cosine-scored
// families report 0 and set *degenerate when either vector is zero.
inline double relevance(const MetricId& metric, const Model& m, const Instance& z_test,
                        std::size_t i, const MetricCache& cache, bool* degenerate = nullptr) {
  detail::check_cache(cache, metric, m);
  if (i >= cache.vectors.size()) throw parse_error("relevance: training index out of range");
  Eigen::VectorXd t = detail::test_vector(metric, m, z_test, cache);
  bool deg = false;
  double s = detail::score_pair(metric.family, t, t.norm(), cache.vectors[i], cache.norms[i], deg);
  if (degenerate) *degenerate = deg;
  return s;
}

// Training indices by descending relevance; exact score ties break by
// ascending index. scores is aligned with order.
struct Ranking {
  std::vector<int> order;
  std::vector<double> scores;
  int degenerate_pairs = 0;
  bool degenerate_test = false;  // zero test vector under a cosine-scored family
};

inline Ranking rank_training(const MetricId& metric, const Model& m, const Instance& z_test,
                             const MetricCache& cache) {
  detail::check_cache(cache, metric, m);
  Eigen::VectorXd t = detail::test_vector(metric, m, z_test, cache);
  double tnorm = t.norm();
  Ranking r;
  if (is_cosine_scored(metric.family) && tnorm == 0.0) r.degenerate_test = true;
  std::size_t n = cache.vectors.size();
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool deg = false;
    raw[i] = detail::score_pair(metric.family, t, tnorm, cache.vectors[i], cache.norms[i], deg);
    if (deg) ++r.degenerate_pairs;
  }
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    if (raw[a] != raw[b]) return raw[a] > raw[b];
    return a < b;
  });
  r.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.scores[i] = raw[static_cast<std::size_t>(r.order[i])];
  return r;
}

// Raw (unsorted) score vector in training order; the randomization test
// correlates these across models.
inline std::vector<double> score_all(const MetricId& metric, const Model& m, const Instance& z_test,
                                     const MetricCache& cache, int* degenerate_pairs = nullptr) {
  detail::check_cache(cache, metric, m);
  Eigen::VectorXd t = detail::test_vector(metric, m, z_test, cache);
  double tnorm = t.norm();
  std::size_t n = cache.vectors.size();
  std::vector<double> raw(n);
  int deg_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool deg = false;
    raw[i] = detail::score_pair(metric.family, t, tnorm, cache.vectors[i], cache.norms[i], deg);
    if (deg) ++deg_count;
  }
  if (degenerate_pairs) *degenerate_pairs = deg_count;
  return raw;
}

// For logistic regression the gradient factors as residual tensor input, so
// the gradient cosine splits into a residual cosine times an input cosine.
// Exact only without bias terms; with biases the factors cover the weight
// block and the product deviates by the bias block's contribution.
struct GcDecomposition {
  double cos_residual = 0.0;
  double cos_input = 0.0;
  bool degenerate = false;
};

inline GcDecomposition gc_decomposition(const Model& m, const Instance& a, const Instance& b) {
  if (!m.spec().is_logreg())
    throw parse_error("gc decomposition is defined for logistic regression only");
  GcDecomposition out;
  auto cr = cosine(m.residual(a), m.residual(b));
  auto cx = cosine(a.features, b.features);
  if (!cr || !cx) {
    out.degenerate = true;
    return out;
  }
  out.cos_residual = *cr;
  out.cos_input = *cx;
  return out;
}

// Sufficient condition for instance j to outscore instance i under any dot
// metric: ||phi_i|| < ||phi_j|| * cos(phi_test, phi_j). A zero vector makes
// the condition unassertable, hence false.
inline bool dominance_condition(const Eigen::VectorXd& phi_i, const Eigen::VectorXd& phi_j,
                                const Eigen::VectorXd& phi_test) {
  auto c = cosine(phi_test, phi_j);
  if (!c) return false;
  return phi_i.norm() < phi_j.norm() * (*c);
}

}  // namespace relex
