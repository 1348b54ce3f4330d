#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relex/common.hpp"
#include "relex/evaluation.hpp"
#include "relex/model_io.hpp"

namespace relex {

inline nlohmann::ordered_json numerics_to_json(const NumericsConfig& n) {
  return nlohmann::ordered_json{
      {"damping", n.damping},
      {"dense_limit", n.dense_limit},
      {"if_solver", n.if_solver == NumericsConfig::IfSolver::Dense ? "dense" : "cg"},
      {"cg_tol", n.cg_tol},
      {"cg_max_iter", n.cg_max_iter},
  };
}

inline NumericsConfig numerics_from_json(const nlohmann::json& j) {
  NumericsConfig n;
  n.damping = j.value("damping", 0.0);
  n.dense_limit = j.value("dense_limit", 4096);
  std::string solver = j.value("if_solver", "dense");
  if (solver == "dense")
    n.if_solver = NumericsConfig::IfSolver::Dense;
  else if (solver == "cg")
    n.if_solver = NumericsConfig::IfSolver::Cg;
  else
    throw parse_error("unknown if_solver '" + solver + "'");
  n.cg_tol = j.value("cg_tol", 1e-8);
  n.cg_max_iter = j.value("cg_max_iter", 1000);
  return n;
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& rep) {
  nlohmann::ordered_json meta;
  meta["master_seed"] = rep.meta.master_seed;
  meta["data_digest"] = rep.meta.data_digest;
  meta["repetitions"] = rep.meta.repetitions;
  meta["test_sample_size"] = rep.meta.test_sample_size;
  meta["k"] = rep.meta.k;
  meta["train_fraction"] = rep.meta.train_fraction;
  meta["standardized"] = rep.meta.standardized;
  meta["model_spec"] = spec_to_json(rep.meta.model_spec);
  meta["train_config"] = {{"learning_rate", rep.meta.train_config.learning_rate},
                          {"epochs", rep.meta.train_config.epochs},
                          {"batch_size", rep.meta.train_config.batch_size}};
  meta["numerics"] = numerics_to_json(rep.meta.numerics);
  meta["pretrained_model"] = rep.meta.pretrained_model;
  meta["metrics"] = rep.meta.metrics;
  meta["tests"] = rep.meta.tests;
  meta["realized_test_sizes"] = rep.meta.realized_test_sizes;
  meta["realized_subclass_sizes"] = rep.meta.realized_subclass_sizes;
  meta["test_accuracy"] = rep.meta.test_accuracy;
  meta["hessian_damping"] = rep.meta.hessian_damping;
  meta["fisher_damping"] = rep.meta.fisher_damping;

  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : rep.cells) {
    nlohmann::ordered_json jc;
    jc["metric"] = c.metric;
    jc["test"] = c.test;
    if (std::isfinite(c.mean)) {
      jc["mean"] = c.mean;
      jc["std"] = c.stddev;
    } else {
      jc["mean"] = nullptr;
      jc["std"] = nullptr;
    }
    jc["values"] = c.values;
    jc["degenerate_count"] = c.degenerate_count;
    if (!c.error.empty()) jc["error"] = c.error;
    cells.push_back(std::move(jc));
  }

  nlohmann::ordered_json analyses = nlohmann::ordered_json::array();
  for (const auto& a : rep.analyses) {
    nlohmann::ordered_json ja;
    ja["metric"] = a.metric;
    ja["test"] = a.test;
    ja["skipped"] = a.skipped;
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const auto& g : a.groups) {
      nlohmann::ordered_json jg;
      jg["name"] = g.name;
      jg["values"] = g.values;
      if (!g.hist.edges.empty()) {
        jg["hist_edges"] = g.hist.edges;
        jg["hist_counts"] = g.hist.counts;
      }
      groups.push_back(std::move(jg));
    }
    ja["groups"] = std::move(groups);
    analyses.push_back(std::move(ja));
  }

  return nlohmann::ordered_json{{"meta", std::move(meta)},
                                {"cells", std::move(cells)},
                                {"analyses", std::move(analyses)}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport rep;
  try {
    const auto& meta = j.at("meta");
    rep.meta.master_seed = meta.at("master_seed").get<std::uint64_t>();
    rep.meta.data_digest = meta.at("data_digest").get<std::uint64_t>();
    rep.meta.repetitions = meta.at("repetitions").get<int>();
    rep.meta.test_sample_size = meta.at("test_sample_size").get<int>();
    rep.meta.k = meta.at("k").get<int>();
    rep.meta.train_fraction = meta.at("train_fraction").get<double>();
    rep.meta.standardized = meta.at("standardized").get<bool>();
    rep.meta.model_spec = spec_from_json(meta.at("model_spec"));
    rep.meta.train_config.learning_rate = meta.at("train_config").at("learning_rate").get<double>();
    rep.meta.train_config.epochs = meta.at("train_config").at("epochs").get<int>();
    rep.meta.train_config.batch_size = meta.at("train_config").at("batch_size").get<int>();
    rep.meta.numerics = numerics_from_json(meta.at("numerics"));
    rep.meta.pretrained_model = meta.value("pretrained_model", false);
    rep.meta.metrics = meta.at("metrics").get<std::vector<std::string>>();
    rep.meta.tests = meta.at("tests").get<std::vector<std::string>>();
    rep.meta.realized_test_sizes = meta.at("realized_test_sizes").get<std::vector<int>>();
    rep.meta.realized_subclass_sizes = meta.at("realized_subclass_sizes").get<std::vector<int>>();
    rep.meta.test_accuracy = meta.at("test_accuracy").get<std::vector<double>>();
    rep.meta.hessian_damping = meta.at("hessian_damping").get<std::vector<double>>();
    rep.meta.fisher_damping = meta.at("fisher_damping").get<std::vector<double>>();
    for (const auto& jc : j.at("cells")) {
      ReportCell c;
      c.metric = jc.at("metric").get<std::string>();
      c.test = jc.at("test").get<std::string>();
      if (!jc.at("mean").is_null()) {
        c.mean = jc.at("mean").get<double>();
        c.stddev = jc.at("std").get<double>();
      }
      c.values = jc.at("values").get<std::vector<double>>();
      c.degenerate_count = jc.at("degenerate_count").get<long>();
      if (jc.contains("error")) c.error = jc.at("error").get<std::string>();
      rep.cells.push_back(std::move(c));
    }
    for (const auto& ja : j.value("analyses", nlohmann::json::array())) {
      ReportAnalysis a;
      a.metric = ja.at("metric").get<std::string>();
      a.test = ja.at("test").get<std::string>();
      a.skipped = ja.value("skipped", 0);
      for (const auto& jg : ja.at("groups")) {
        AnalysisGroup g;
        g.name = jg.at("name").get<std::string>();
        g.values = jg.at("values").get<std::vector<double>>();
        if (jg.contains("hist_edges")) {
          g.hist.edges = jg.at("hist_edges").get<std::vector<double>>();
          g.hist.counts = jg.at("hist_counts").get<std::vector<long>>();
        }
        a.groups.push_back(std::move(g));
      }
      rep.analyses.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("report: ") + e.what());
  }
  return rep;
}

inline void save_report(const EvaluationReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write report file '" + path + "'");
  out << report_to_json(rep).dump(2) << '\n';
}

inline EvaluationReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open report file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error("report file '" + path + "': " + e.what());
  }
  return report_from_json(j);
}

// Raw analysis samples as `value,group` rows, one file per analysis.
inline void write_analysis_csv(const ReportAnalysis& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write analysis file '" + path + "'");
  out << "value,group\n";
  for (const auto& g : a.groups)
    for (double v : g.values) out << detail::format_double(v) << ',' << g.name << '\n';
}

// One block per test; metrics sorted by descending mean (ties by token), the
// five best marked with '*', failed cells listed last. Pure function of the
// report, so rendering is reproducible.
inline std::string render_table(const EvaluationReport& rep) {
  std::ostringstream out;
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%7.3f", v);
    return std::string(buf);
  };
  for (const auto& test : rep.meta.tests) {
    if (test == "norm-analysis" || test == "residual-analysis") continue;
    std::vector<const ReportCell*> rows;
    for (const auto& c : rep.cells)
      if (c.test == test) rows.push_back(&c);
    if (rows.empty()) continue;
    std::sort(rows.begin(), rows.end(), [](const ReportCell* a, const ReportCell* b) {
      bool fa = a->error.empty() && std::isfinite(a->mean);
      bool fb = b->error.empty() && std::isfinite(b->mean);
      if (fa != fb) return fa;
      if (fa && a->mean != b->mean) return a->mean > b->mean;
      return a->metric < b->metric;
    });
    out << "test: " << test;
    if (test == "topk-class" || test == "topk-subclass") out << " (k=" << rep.meta.k << ")";
    out << "\n";
    int rank = 0;
    for (const ReportCell* c : rows) {
      bool ok = c->error.empty() && std::isfinite(c->mean);
      out << (ok && rank < 5 ? "  * " : "    ");
      out << c->metric;
      for (std::size_t pad = c->metric.size(); pad < 10; ++pad) out << ' ';
      if (ok) {
        out << fmt(c->mean) << " +- " << fmt(c->stddev) << "  n=" << c->values.size();
        if (c->degenerate_count > 0) out << "  degenerate=" << c->degenerate_count;
        ++rank;
      } else {
        out << "ERROR: " << (c->error.empty() ? "no values" : c->error);
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace relex
