#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relex/common.hpp"
#include "relex/dataset.hpp"
#include "relex/metrics.hpp"
#include "relex/model.hpp"
#include "relex/numerics.hpp"

namespace relex {

enum class TestKind {
  Randomization,      // rank agreement between trained and freshly initialized model
  IdenticalClass,     // top-1 training label matches the predicted test label
  IdenticalSubclass,  // top-1 training subclass matches, on correctly predicted tests
  TopkClass,          // all of the top k match the predicted label
  TopkSubclass,       // all of the top k match the subclass
  NormAnalysis,       // feature-map norms of all vs rank-1 selected instances
  ResidualAnalysis,   // gradient cosine vs residual cosine on sampled pairs
};

inline TestKind parse_test(const std::string& token) {
  if (token == "randomization") return TestKind::Randomization;
  if (token == "identical-class") return TestKind::IdenticalClass;
  if (token == "identical-subclass") return TestKind::IdenticalSubclass;
  if (token == "topk-class") return TestKind::TopkClass;
  if (token == "topk-subclass") return TestKind::TopkSubclass;
  if (token == "norm-analysis") return TestKind::NormAnalysis;
  if (token == "residual-analysis") return TestKind::ResidualAnalysis;
  throw parse_error("unknown test token '" + token + "'");
}

inline std::string test_token(TestKind t) {
  switch (t) {
    case TestKind::Randomization: return "randomization";
    case TestKind::IdenticalClass: return "identical-class";
    case TestKind::IdenticalSubclass: return "identical-subclass";
    case TestKind::TopkClass: return "topk-class";
    case TestKind::TopkSubclass: return "topk-subclass";
    case TestKind::NormAnalysis: return "norm-analysis";
    default: return "residual-analysis";
  }
}

struct CorrelationResult {
  double mean = 0.0;
  int used = 0;
  int excluded_degenerate = 0;  // undefined correlations (constant score vector)
};

// Spearman correlation between the score vectors the two models assign over
// the training set, averaged over test inputs. Each model explains its own
// prediction: the test label is that model's predicted class.
inline CorrelationResult model_randomization_test(const MetricId& metric, const Model& trained,
                                                  const Model& randomized,
                                                  const std::vector<Instance>& test_samples,
                                                  const MetricCache& cache_trained,
                                                  const MetricCache& cache_randomized,
                                                  int threads = 1) {
  if (test_samples.empty()) throw parse_error("randomization test: no test samples");
  std::vector<std::optional<double>> rho(test_samples.size());
  parallel_for(test_samples.size(), threads, [&](std::size_t s) {
    Instance zt = test_samples[s];
    zt.label = trained.predict(zt.features);
    Instance zr = test_samples[s];
    zr.label = randomized.predict(zr.features);
    std::vector<double> a = score_all(metric, trained, zt, cache_trained);
    std::vector<double> b = score_all(metric, randomized, zr, cache_randomized);
    rho[s] = spearman(a, b);
  });
  CorrelationResult out;
  double sum = 0.0;
  for (const auto& r : rho) {
    if (r) {
      sum += *r;
      ++out.used;
    } else {
      ++out.excluded_degenerate;
    }
  }
  if (out.used == 0) throw numeric_error("randomization test: every correlation was undefined");
  out.mean = sum / static_cast<double>(out.used);
  return out;
}

struct RateResult {
  double rate = 0.0;
  int used = 0;
  int degenerate = 0;  // rankings scored from a degenerate (zero) test vector
};

// Fraction of test inputs whose k most relevant training instances all carry
// the model's predicted class. k = 1 is the identical class test.
inline RateResult topk_identical_class_test(const MetricId& metric, const Model& m,
                                            const std::vector<Instance>& test_samples,
                                            const Dataset& train, const MetricCache& cache, int k,
                                            int threads = 1) {
  if (test_samples.empty()) throw parse_error("identical class test: no test samples");
  if (k < 1 || k > static_cast<int>(train.size()))
    throw parse_error("identical class test: k out of range");
  std::vector<unsigned char> hit(test_samples.size(), 0);
  std::vector<unsigned char> degen(test_samples.size(), 0);
  parallel_for(test_samples.size(), threads, [&](std::size_t s) {
    Instance zt = test_samples[s];
    zt.label = m.predict(zt.features);
    Ranking r = rank_training(metric, m, zt, cache);
    if (r.degenerate_test) degen[s] = 1;
    bool all = true;
    for (int j = 0; j < k; ++j)
      if (train.instances[static_cast<std::size_t>(r.order[j])].label != zt.label) {
        all = false;
        break;
      }
    hit[s] = all ? 1 : 0;
  });
  RateResult out;
  out.used = static_cast<int>(test_samples.size());
  for (std::size_t s = 0; s < hit.size(); ++s) {
    out.rate += hit[s];
    out.degenerate += degen[s];
  }
  out.rate /= static_cast<double>(out.used);
  return out;
}

inline RateResult identical_class_test(const MetricId& metric, const Model& m,
                                       const std::vector<Instance>& test_samples,
                                       const Dataset& train, const MetricCache& cache,
                                       int threads = 1) {
  return topk_identical_class_test(metric, m, test_samples, train, cache, 1, threads);
}

// Subclass variant: callers pass correctly predicted test instances only
// (gold label, subclass set); the ranking must surface the same subclass.
inline RateResult topk_identical_subclass_test(const MetricId& metric, const Model& m,
                                               const std::vector<Instance>& test_samples,
                                               const Dataset& train, const MetricCache& cache,
                                               int k, int threads = 1) {
  if (!train.has_subclass())
    throw parse_error("identical subclass test: training set has no subclasses");
  if (static_cast<int>(test_samples.size()) < 10)
    throw numeric_error("identical subclass test: fewer than 10 correctly predicted test instances");
  if (k < 1 || k > static_cast<int>(train.size()))
    throw parse_error("identical subclass test: k out of range");
  std::vector<unsigned char> hit(test_samples.size(), 0);
  std::vector<unsigned char> degen(test_samples.size(), 0);
  parallel_for(test_samples.size(), threads, [&](std::size_t s) {
    const Instance& zt = test_samples[s];
    if (zt.subclass < 0 || m.predict(zt.features) != zt.label)
      throw parse_error("identical subclass test: sample is not a correctly predicted instance");
    Ranking r = rank_training(metric, m, zt, cache);
    if (r.degenerate_test) degen[s] = 1;
    bool all = true;
    for (int j = 0; j < k; ++j)
      if (train.instances[static_cast<std::size_t>(r.order[j])].subclass != zt.subclass) {
        all = false;
        break;
      }
    hit[s] = all ? 1 : 0;
  });
  RateResult out;
  out.used = static_cast<int>(test_samples.size());
  for (std::size_t s = 0; s < hit.size(); ++s) {
    out.rate += hit[s];
    out.degenerate += degen[s];
  }
  out.rate /= static_cast<double>(out.used);
  return out;
}

inline RateResult identical_subclass_test(const MetricId& metric, const Model& m,
                                          const std::vector<Instance>& test_samples,
                                          const Dataset& train, const MetricCache& cache,
                                          int threads = 1) {
  return topk_identical_subclass_test(metric, m, test_samples, train, cache, 1, threads);
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 ascending edges
  std::vector<long> counts;
};

// Fixed-width bins in log10 space; non-positive values land in the first bin.
inline Histogram log_histogram(const std::vector<double>& values, int bins = 30) {
  Histogram h;
  if (values.empty() || bins < 1) return h;
  double min_pos = std::numeric_limits<double>::infinity();
  double max_v = 0.0;
  for (double v : values) {
    if (v > 0.0) min_pos = std::min(min_pos, v);
    max_v = std::max(max_v, v);
  }
  if (!std::isfinite(min_pos)) {  // all non-positive
    h.edges = {0.0, 1.0};
    h.counts = {static_cast<long>(values.size())};
    return h;
  }
  double lo = std::log10(min_pos);
  double hi = std::log10(max_v);
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  double w = (hi - lo) / bins;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = std::pow(10.0, lo + w * i);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = v <= 0.0 ? 0 : static_cast<int>((std::log10(v) - lo) / w);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

// The dot-form twin of a metric: the feature map phi for which the metric is
// (up to normalization) an inner product. Norm comparisons happen in that
// space: if/rif share H^-1/2 g, fk variants share I^-1/2 g, gradient metrics
// share g, similarity metrics share their own feature map.
inline MetricId dot_form_metric(const MetricId& metric) {
  if (is_similarity_family(metric.family)) return {MetricFamily::DotSim, metric.feature_map};
  if (needs_hessian(metric.family)) return {MetricFamily::RIF};
  if (needs_fisher(metric.family)) return {MetricFamily::CosFK};
  return {MetricFamily::GD};
}

struct NormAnalysisResult {
  std::vector<double> all_norms;       // one per training instance
  std::vector<double> selected_norms;  // rank-1 selection per test sample (multiset)
  Histogram all_hist;
  Histogram selected_hist;
};

inline NormAnalysisResult norm_analysis(const MetricId& metric, const Model& m,
                                        const std::vector<Instance>& test_samples,
                                        const Dataset& train, const MetricCache& cache,
                                        const NumericsConfig& cfg, GradientWorkspace& ws,
                                        int threads = 1) {
  if (test_samples.empty()) throw parse_error("norm analysis: no test samples");
  MetricCache phi = precompute(dot_form_metric(metric), m, train, cfg, ws);
  NormAnalysisResult out;
  out.all_norms = phi.norms;
  std::vector<int> top(test_samples.size());
  parallel_for(test_samples.size(), threads, [&](std::size_t s) {
    Instance zt = test_samples[s];
    zt.label = m.predict(zt.features);
    top[s] = rank_training(metric, m, zt, cache).order[0];
  });
  out.selected_norms.reserve(top.size());
  for (int i : top) out.selected_norms.push_back(phi.norms[static_cast<std::size_t>(i)]);
  out.all_hist = log_histogram(out.all_norms);
  out.selected_hist = log_histogram(out.selected_norms);
  return out;
}

struct ResidualAnalysisResult {
  // Paired samples: entry s of gc_* and rescos_* comes from the same pair.
  std::vector<double> gc_same, rescos_same;
  std::vector<double> gc_diff, rescos_diff;
  int skipped = 0;  // test inputs lacking a same- or different-class partner, or degenerate
};

// For each test input, pair it with one uniformly drawn training instance of
// the predicted class and one of a different class; record gradient cosine
// and residual cosine for both pairs.
inline ResidualAnalysisResult residual_cosine_analysis(const Model& m,
                                                       const std::vector<Instance>& test_samples,
                                                       const Dataset& train, std::uint64_t seed) {
  if (test_samples.empty()) throw parse_error("residual analysis: no test samples");
  std::vector<std::vector<int>> by_label(static_cast<std::size_t>(train.class_count));
  for (int i = 0; i < static_cast<int>(train.size()); ++i)
    by_label[static_cast<std::size_t>(train.instances[static_cast<std::size_t>(i)].label)].push_back(i);
  std::mt19937_64 rng(seed);
  ResidualAnalysisResult out;
  for (const auto& sample : test_samples) {
    Instance zt = sample;
    zt.label = m.predict(zt.features);
    std::vector<int> diff_pool;
    for (int c = 0; c < train.class_count; ++c)
      if (c != zt.label)
        diff_pool.insert(diff_pool.end(), by_label[static_cast<std::size_t>(c)].begin(),
                         by_label[static_cast<std::size_t>(c)].end());
    const auto& same_pool = by_label[static_cast<std::size_t>(zt.label)];
    if (same_pool.empty() || diff_pool.empty()) {
      ++out.skipped;
      continue;
    }
    int i_same = same_pool[std::uniform_int_distribution<std::size_t>(0, same_pool.size() - 1)(rng)];
    int i_diff = diff_pool[std::uniform_int_distribution<std::size_t>(0, diff_pool.size() - 1)(rng)];
    Eigen::VectorXd gt = m.loss_gradient(zt);
    Eigen::VectorXd rt = m.residual(zt);
    auto record = [&](int idx, std::vector<double>& gc_out, std::vector<double>& rc_out) {
      const Instance& zi = train.instances[static_cast<std::size_t>(idx)];
      auto gcos = cosine(gt, m.loss_gradient(zi));
      auto rcos = cosine(rt, m.residual(zi));
      if (!gcos || !rcos) return false;
      gc_out.push_back(*gcos);
      rc_out.push_back(*rcos);
      return true;
    };
    bool ok_same = record(i_same, out.gc_same, out.rescos_same);
    bool ok_diff = record(i_diff, out.gc_diff, out.rescos_diff);
    if (!ok_same || !ok_diff) ++out.skipped;
  }
  return out;
}

struct SuiteConfig {
  int repetitions = 10;
  int test_sample_size = 500;
  double train_fraction = 0.5;
  bool standardize = true;
  std::vector<MetricId> metrics;
  std::vector<TestKind> tests;
  int k = 10;  // for the top-k tests
  std::uint64_t master_seed = 0;
  ModelSpec model;
  TrainConfig train;  // the seed field is overridden per repetition
  NumericsConfig numerics;
  int threads = 0;
  std::optional<Model> pretrained;  // fixed model instead of per-repetition training
};

struct ReportCell {
  std::string metric;
  std::string test;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> values;  // one per completed repetition
  long degenerate_count = 0;
  std::string error;  // nonempty marks a failed cell
};

struct AnalysisGroup {
  std::string name;
  std::vector<double> values;
  Histogram hist;  // filled for norm analyses
};

struct ReportAnalysis {
  std::string metric;
  std::string test;
  std::vector<AnalysisGroup> groups;
  int skipped = 0;
};

struct ReportMeta {
  std::uint64_t master_seed = 0;
  std::uint64_t data_digest = 0;
  int repetitions = 0;
  int test_sample_size = 0;
  int k = 0;
  double train_fraction = 0.0;
  bool standardized = false;
  ModelSpec model_spec;
  TrainConfig train_config;
  NumericsConfig numerics;
  bool pretrained_model = false;
  std::vector<std::string> metrics;
  std::vector<std::string> tests;
  std::vector<int> realized_test_sizes;
  std::vector<int> realized_subclass_sizes;
  std::vector<double> test_accuracy;
  std::vector<double> hessian_damping;  // realized lambda per repetition (0 = unused)
  std::vector<double> fisher_damping;
};

struct EvaluationReport {
  ReportMeta meta;
  std::vector<ReportCell> cells;
  std::vector<ReportAnalysis> analyses;
};

namespace detail {

inline std::vector<int> sample_shuffled(const std::vector<int>& pool, int want, std::uint64_t seed) {
  std::vector<int> idx = pool;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (static_cast<int>(idx.size()) > want) idx.resize(static_cast<std::size_t>(want));
  return idx;
}

inline bool needs_subclass(TestKind t) {
  return t == TestKind::IdenticalSubclass || t == TestKind::TopkSubclass;
}

}  // namespace detail

// Full protocol: per repetition, re-split, optionally standardize, train (or
// reuse a pinned model), draw test samples, and fill every (metric, test)
// cell. A failing cell records its error and the suite moves on; every random
// choice draws from a named seed stream of the master seed.
inline EvaluationReport run_suite(const SuiteConfig& cfg, const Dataset& data) {
  if (cfg.repetitions < 1) throw parse_error("suite: repetitions must be >= 1");
  if (cfg.test_sample_size < 1) throw parse_error("suite: test_sample_size must be >= 1");
  if (cfg.metrics.empty()) throw parse_error("suite: no metrics configured");
  if (cfg.tests.empty()) throw parse_error("suite: no tests configured");
  if (cfg.k < 1) throw parse_error("suite: k must be >= 1");
  for (TestKind t : cfg.tests)
    if (detail::needs_subclass(t) && !data.has_subclass())
      throw parse_error("suite: subclass tests need a superclass dataset");

  ModelSpec spec = cfg.pretrained ? cfg.pretrained->spec() : cfg.model;
  if (spec.input_dim != data.dim || spec.class_count != data.class_count)
    throw parse_error("suite: model spec does not match dataset shape");

  EvaluationReport rep;
  rep.meta.master_seed = cfg.master_seed;
  rep.meta.data_digest = dataset_digest(data);
  rep.meta.repetitions = cfg.repetitions;
  rep.meta.test_sample_size = cfg.test_sample_size;
  rep.meta.k = cfg.k;
  rep.meta.train_fraction = cfg.train_fraction;
  rep.meta.standardized = cfg.standardize;
  rep.meta.model_spec = spec;
  rep.meta.train_config = cfg.train;
  rep.meta.numerics = cfg.numerics;
  rep.meta.pretrained_model = cfg.pretrained.has_value();
  for (const auto& mid : cfg.metrics) rep.meta.metrics.push_back(metric_token(mid));
  for (TestKind t : cfg.tests) rep.meta.tests.push_back(test_token(t));

  for (const auto& mid : cfg.metrics)
    for (TestKind t : cfg.tests) {
      if (t == TestKind::NormAnalysis || t == TestKind::ResidualAnalysis) continue;
      ReportCell cell;
      cell.metric = metric_token(mid);
      cell.test = test_token(t);
      rep.cells.push_back(std::move(cell));
    }
  auto cell_of = [&](const MetricId& mid, TestKind t) -> ReportCell& {
    std::string mt = metric_token(mid), tt = test_token(t);
    for (auto& c : rep.cells)
      if (c.metric == mt && c.test == tt) return c;
    throw parse_error("internal: unknown cell");
  };

  for (int r = 0; r < cfg.repetitions; ++r) {
    auto [train_ds, test_ds] = split(data, cfg.train_fraction, derive_seed(cfg.master_seed, "split", static_cast<std::uint64_t>(r)));
    if (cfg.standardize) standardize(train_ds, test_ds);

    Model trained = [&]() {
      if (cfg.pretrained) return *cfg.pretrained;
      Model start = init_random(spec, derive_seed(cfg.master_seed, "init", static_cast<std::uint64_t>(r)));
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.master_seed, "sgd", static_cast<std::uint64_t>(r));
      return train(start, train_ds, tc).model;
    }();
    Model randomized = init_random(spec, derive_seed(cfg.master_seed, "rand", static_cast<std::uint64_t>(r)));
    rep.meta.test_accuracy.push_back(accuracy(trained, test_ds));

    std::vector<int> all_test(test_ds.size());
    std::iota(all_test.begin(), all_test.end(), 0);
    std::vector<int> picked = detail::sample_shuffled(all_test, cfg.test_sample_size,
                                                      derive_seed(cfg.master_seed, "sample", static_cast<std::uint64_t>(r)));
    std::vector<Instance> samples;
    samples.reserve(picked.size());
    for (int i : picked) samples.push_back(test_ds.instances[static_cast<std::size_t>(i)]);
    rep.meta.realized_test_sizes.push_back(static_cast<int>(samples.size()));

    std::vector<Instance> correct_samples;
    bool want_subclass = false;
    for (TestKind t : cfg.tests) want_subclass = want_subclass || detail::needs_subclass(t);
    if (want_subclass) {
      std::vector<int> correct;
      for (int i = 0; i < static_cast<int>(test_ds.size()); ++i) {
        const Instance& z = test_ds.instances[static_cast<std::size_t>(i)];
        if (trained.predict(z.features) == z.label) correct.push_back(i);
      }
      std::vector<int> sub = detail::sample_shuffled(correct, cfg.test_sample_size,
                                                     derive_seed(cfg.master_seed, "sample-sub", static_cast<std::uint64_t>(r)));
      for (int i : sub) correct_samples.push_back(test_ds.instances[static_cast<std::size_t>(i)]);
      rep.meta.realized_subclass_sizes.push_back(static_cast<int>(correct_samples.size()));
    }

    GradientWorkspace ws_trained, ws_rand;
    double hess_lam = 0.0, fish_lam = 0.0;
    for (const auto& mid : cfg.metrics) {
      MetricCache cache_trained;
      bool cache_ok = false;
      std::string cache_err;
      auto ensure_cache = [&]() -> MetricCache& {
        if (!cache_ok) {
          cache_trained = precompute(mid, trained, train_ds, cfg.numerics, ws_trained);
          cache_ok = true;
          if (needs_hessian(mid.family)) hess_lam = cache_trained.damping;
          if (needs_fisher(mid.family)) fish_lam = cache_trained.damping;
        }
        return cache_trained;
      };
      for (TestKind t : cfg.tests) {
        if (t == TestKind::ResidualAnalysis) continue;
        if (t == TestKind::NormAnalysis) {
          if (r != 0) continue;
          try {
            NormAnalysisResult na = norm_analysis(mid, trained, samples, train_ds, ensure_cache(),
                                                  cfg.numerics, ws_trained, cfg.threads);
            ReportAnalysis an;
            an.metric = metric_token(mid);
            an.test = test_token(t);
            an.groups.push_back({"all", std::move(na.all_norms), std::move(na.all_hist)});
            an.groups.push_back({"selected", std::move(na.selected_norms), std::move(na.selected_hist)});
            rep.analyses.push_back(std::move(an));
          } catch (const std::exception& e) {
            ReportAnalysis an;
            an.metric = metric_token(mid);
            an.test = test_token(t);
            rep.analyses.push_back(std::move(an));
            ReportCell cell;
            cell.metric = metric_token(mid);
            cell.test = test_token(t);
            cell.error = e.what();
            rep.cells.push_back(std::move(cell));
          }
          continue;
        }
        ReportCell& cell = cell_of(mid, t);
        if (!cell.error.empty()) continue;
        try {
          switch (t) {
            case TestKind::Randomization: {
              MetricCache cache_rand = precompute(mid, randomized, train_ds, cfg.numerics, ws_rand);
              CorrelationResult c = model_randomization_test(mid, trained, randomized, samples,
                                                             ensure_cache(), cache_rand, cfg.threads);
              cell.values.push_back(c.mean);
              cell.degenerate_count += c.excluded_degenerate;
              break;
            }
            case TestKind::IdenticalClass: {
              RateResult rr = identical_class_test(mid, trained, samples, train_ds, ensure_cache(), cfg.threads);
              cell.values.push_back(rr.rate);
              cell.degenerate_count += rr.degenerate;
              break;
            }
            case TestKind::TopkClass: {
              RateResult rr = topk_identical_class_test(mid, trained, samples, train_ds, ensure_cache(),
                                                        cfg.k, cfg.threads);
              cell.values.push_back(rr.rate);
              cell.degenerate_count += rr.degenerate;
              break;
            }
            case TestKind::IdenticalSubclass: {
              RateResult rr = identical_subclass_test(mid, trained, correct_samples, train_ds,
                                                      ensure_cache(), cfg.threads);
              cell.values.push_back(rr.rate);
              cell.degenerate_count += rr.degenerate;
              break;
            }
            case TestKind::TopkSubclass: {
              RateResult rr = topk_identical_subclass_test(mid, trained, correct_samples, train_ds,
                                                           ensure_cache(), cfg.k, cfg.threads);
              cell.values.push_back(rr.rate);
              cell.degenerate_count += rr.degenerate;
              break;
            }
            default: break;
          }
        } catch (const std::exception& e) {
          cell.error = std::string(e.what()) + " (repetition " + std::to_string(r + 1) + ")";
        }
      }
    }
    rep.meta.hessian_damping.push_back(hess_lam);
    rep.meta.fisher_damping.push_back(fish_lam);

    bool want_residual = false;
    for (TestKind t : cfg.tests) want_residual = want_residual || t == TestKind::ResidualAnalysis;
    if (want_residual && r == 0) {
      ReportAnalysis an;
      an.metric = "gc";
      an.test = test_token(TestKind::ResidualAnalysis);
      try {
        ResidualAnalysisResult ra = residual_cosine_analysis(
            trained, samples, train_ds, derive_seed(cfg.master_seed, "analysis-residual", 0));
        an.groups.push_back({"gc_same", std::move(ra.gc_same), {}});
        an.groups.push_back({"rescos_same", std::move(ra.rescos_same), {}});
        an.groups.push_back({"gc_diff", std::move(ra.gc_diff), {}});
        an.groups.push_back({"rescos_diff", std::move(ra.rescos_diff), {}});
        an.skipped = ra.skipped;
      } catch (const std::exception& e) {
        ReportCell cell;
        cell.metric = an.metric;
        cell.test = an.test;
        cell.error = e.what();
        rep.cells.push_back(std::move(cell));
      }
      rep.analyses.push_back(std::move(an));
    }
  }

  for (auto& cell : rep.cells) {
    if (!cell.error.empty() || cell.values.empty()) continue;
    double n = static_cast<double>(cell.values.size());
    double mean = std::accumulate(cell.values.begin(), cell.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : cell.values) var += (v - mean) * (v - mean);
    cell.mean = mean;
    cell.stddev = std::sqrt(var / n);
  }
  return rep;
}

}  // namespace relex
