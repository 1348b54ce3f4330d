#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "relex/common.hpp"
#include "relex/model.hpp"

namespace relex {

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b); }

inline double norm(const Eigen::VectorXd& a) { return a.norm(); }

// Undefined when either vector is zero; callers decide how to score that.
inline std::optional<double> cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

// Hessian-vector product of the mean training cross-entropy (penalty
// excluded; damping is added by the consumers). Logistic regression uses the
// closed form: per instance, the logit-space curvature diag(p) - p p^T acts on
// the logit perturbation V x + v_b. Models with hidden layers fall back to a
// central difference of the full mean gradient.
inline Eigen::VectorXd training_hvp(const Model& m, const Dataset& ds, const Eigen::VectorXd& v) {
  if (v.size() != m.param_count()) throw parse_error("hvp: vector size mismatch");
  double vnorm = v.norm();
  if (vnorm == 0.0) return Eigen::VectorXd::Zero(v.size());
  if (m.spec().is_logreg()) {
    int C = m.spec().class_count;
    int d = m.spec().input_dim;
    bool bias = m.spec().include_bias;
    Model::ConstRowMajorMap V(v.data() + m.weight_offset(0), C, d);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    Model::RowMajorMap OutW(out.data() + m.weight_offset(0), C, d);
    for (const auto& z : ds.instances) {
      Eigen::VectorXd p = m.predict_proba(z.features);
      Eigen::VectorXd u = V * z.features;
      if (bias) u += v.segment(m.bias_offset(0), C);
      Eigen::VectorXd su = p.cwiseProduct(u) - p * p.dot(u);  // (diag(p) - p p^T) u
      OutW.noalias() += su * z.features.transpose();
      if (bias) out.segment(m.bias_offset(0), C) += su;
    }
    return out / static_cast<double>(ds.size());
  }
  double h = 1e-5 * (1.0 + m.theta().norm()) / vnorm;
  Model plus(m.spec(), m.theta() + h * v);
  Model minus(m.spec(), m.theta() - h * v);
  return (ce_gradient_mean(plus, ds) - ce_gradient_mean(minus, ds)) / (2.0 * h);
}

inline LinearOperator training_hvp_operator(const Model& m, const Dataset& ds) {
  return [&m, &ds](const Eigen::VectorXd& v) { return training_hvp(m, ds, v); };
}

// Eigendecomposition of a damped symmetric matrix, exposing matrix powers.
// Eigenvalues are clipped from below at the damping value, so every power in
// {-1, -1/2} is well defined.
struct PsdFactor {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double damping = 0.0;

  int dim() const { return static_cast<int>(eigenvalues.size()); }

  Eigen::VectorXd apply(const Eigen::VectorXd& v, double power) const {
    if (v.size() != eigenvalues.size()) throw parse_error("psd factor: vector size mismatch");
    Eigen::VectorXd w = eigenvectors.transpose() * v;
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] *= std::pow(eigenvalues[i], power);
    return eigenvectors * w;
  }

  Eigen::MatrixXd dense(double power) const {
    Eigen::VectorXd scaled(eigenvalues.size());
    for (Eigen::Index i = 0; i < scaled.size(); ++i) scaled[i] = std::pow(eigenvalues[i], power);
    return eigenvectors * scaled.asDiagonal() * eigenvectors.transpose();
  }
};

inline PsdFactor psd_factor_from_dense(const Eigen::MatrixXd& raw, double damping) {
  if (!(damping > 0.0)) throw parse_error("psd factor: damping must be positive");
  Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw numeric_error("eigendecomposition failed");
  PsdFactor f;
  f.damping = damping;
  f.eigenvectors = es.eigenvectors();
  f.eigenvalues = es.eigenvalues();
  for (Eigen::Index i = 0; i < f.eigenvalues.size(); ++i)
    f.eigenvalues[i] = std::max(f.eigenvalues[i] + damping, damping);
  return f;
}

inline Eigen::MatrixXd assemble_dense(const LinearOperator& op, int dim) {
  Eigen::MatrixXd out(dim, dim);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (int j = 0; j < dim; ++j) {
    e[j] = 1.0;
    out.col(j) = op(e);
    e[j] = 0.0;
  }
  if (!out.allFinite()) throw numeric_error("dense assembly produced non-finite entries");
  return out;
}

// Default damping rule: one percent of the mean diagonal entry.
inline double auto_damping(double trace, int dim) {
  double lam = 0.01 * trace / static_cast<double>(dim);
  return std::max(lam, 1e-12);
}

// Sum of basis-vector HVP diagonal entries; used to resolve auto damping when
// no dense factor is wanted.
inline double hessian_trace(const Model& m, const Dataset& ds) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m.param_count());
  double tr = 0.0;
  for (int j = 0; j < m.param_count(); ++j) {
    e[j] = 1.0;
    tr += training_hvp(m, ds, e)[j];
    e[j] = 0.0;
  }
  return tr;
}

// Damped training Hessian, assembled column-by-column from HVPs and
// symmetrized. damping <= 0 requests the auto rule.
inline PsdFactor dense_hessian(const Model& m, const Dataset& ds, double damping, int dense_limit) {
  if (m.param_count() > dense_limit)
    throw numeric_error("param count " + std::to_string(m.param_count()) +
                        " exceeds dense limit " + std::to_string(dense_limit));
  Eigen::MatrixXd raw = assemble_dense(training_hvp_operator(m, ds), m.param_count());
  double lam = damping > 0.0 ? damping : auto_damping(raw.trace(), m.param_count());
  return psd_factor_from_dense(raw, lam);
}

// Empirical Fisher (1/N) sum g_i g_i^T + damping * I, with the same clipped
// eigendecomposition interface as the Hessian factor.
struct FisherMatrix {
  Eigen::MatrixXd matrix;  // damping included
  double damping = 0.0;
  PsdFactor factor;

  Eigen::VectorXd apply(const Eigen::VectorXd& v, double power) const {
    return factor.apply(v, power);
  }
};

inline FisherMatrix empirical_fisher(const Model& m, const Dataset& ds, double damping,
                                     int dense_limit) {
  if (m.param_count() > dense_limit)
    throw numeric_error("param count " + std::to_string(m.param_count()) +
                        " exceeds dense limit " + std::to_string(dense_limit));
  int p = m.param_count();
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(p, p);
  for (const auto& z : ds.instances) {
    Eigen::VectorXd g = m.loss_gradient(z);
    raw.selfadjointView<Eigen::Lower>().rankUpdate(g, 1.0 / static_cast<double>(ds.size()));
  }
  raw = raw.selfadjointView<Eigen::Lower>();
  double lam = damping > 0.0 ? damping : auto_damping(raw.trace(), p);
  FisherMatrix f;
  f.damping = lam;
  f.factor = psd_factor_from_dense(raw, lam);
  f.matrix = raw + lam * Eigen::MatrixXd::Identity(p, p);
  return f;
}

struct CgResult {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradients on (op + damping * I) x = b from x = 0; the damping
// keeps the system positive definite.
inline CgResult cg_solve(const LinearOperator& op, const Eigen::VectorXd& b, double damping,
                         double tol = 1e-8, int max_iter = 1000) {
  if (!(damping > 0.0)) throw parse_error("cg_solve: damping must be positive");
  CgResult res;
  res.x = Eigen::VectorXd::Zero(b.size());
  double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = b;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd ap = op(p) + damping * p;
    double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0)
      throw numeric_error("cg_solve: operator lost positive definiteness");
    double alpha = rr / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    double rr_next = r.squaredNorm();
    if (!std::isfinite(rr_next)) throw numeric_error("cg_solve: non-finite residual");
    res.iterations = it + 1;
    if (std::sqrt(rr_next) <= tol * bnorm) {
      res.converged = true;
      rr = rr_next;
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  res.relative_residual = std::sqrt(rr) / bnorm;
  if (res.converged) res.relative_residual = r.norm() / bnorm;
  return res;
}

// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation with average ranks for ties. Undefined (nullopt)
// when either side is constant. Identical rank vectors short-circuit to 1.0:
// the Pearson correlation of a vector with itself is exactly 1.
inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw parse_error("spearman: length mismatch");
  if (a.size() < 2) throw parse_error("spearman: need at least 2 observations");
  for (double x : a)
    if (!std::isfinite(x)) throw numeric_error("spearman: non-finite input");
  for (double x : b)
    if (!std::isfinite(x)) throw numeric_error("spearman: non-finite input");
  std::vector<double> ra = average_ranks(a);
  std::vector<double> rb = average_ranks(b);
  double n = static_cast<double>(ra.size());
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
    cov += (ra[i] - ma) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  if (ra == rb) return 1.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

// Two-sided normal null band for a rank correlation over n items:
// +- z(level) / sqrt(n - 1).
inline std::pair<double, double> spearman_null_ci(int n, double level) {
  if (n < 2) throw parse_error("spearman_null_ci: need n >= 2");
  if (!(level > 0.0 && level < 1.0)) throw parse_error("spearman_null_ci: level in (0, 1)");
  boost::math::normal dist;
  double z = boost::math::quantile(dist, 0.5 + level / 2.0);
  double half = z / std::sqrt(static_cast<double>(n - 1));
  return {-half, half};
}

}  // namespace relex
