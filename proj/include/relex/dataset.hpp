#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "relex/common.hpp"

namespace relex {

// A labeled point. `subclass` is the pre-relabeling class on superclass
// datasets and -1 otherwise.
struct Instance {
  Eigen::VectorXd features;
  int label = 0;
  int subclass = -1;
};

struct Dataset {
  std::vector<Instance> instances;
  int dim = 0;
  int class_count = 0;
  // Number of distinct original classes when instances carry subclasses, else -1.
  int subclass_count = -1;

  bool has_subclass() const { return subclass_count > 0; }
  std::size_t size() const { return instances.size(); }
};

// Synthetic Gaussian blobs: per class, `subclusters_per_class` centers drawn
// uniformly from a hypercube of side `center_spread`, then `per_class_count`
// points spread round-robin over the centers with isotropic noise.
struct BlobConfig {
  int classes = 2;
  int subclusters_per_class = 1;
  int dim = 2;
  int per_class_count = 100;
  double center_spread = 10.0;
  double noise_sigma = 1.0;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw parse_error("line " + std::to_string(line_no) + ": non-numeric cell '" + tok + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Reads `f0,...,f{d-1},label[,subclass]` with a header row. Label and subclass
// tokens may be arbitrary strings; both are re-indexed densely in order of
// first appearance. Line numbers in errors count from 1 including the header.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open dataset file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw parse_error("'" + path + "': empty file");
  auto header = detail::split_line(line);
  bool with_subclass = header.size() >= 2 && header.back() == "subclass";
  std::size_t label_col = with_subclass ? header.size() - 2 : header.size() - 1;
  if (header.size() < 2 || header[label_col] != "label")
    throw parse_error("'" + path + "': header must end in ...,label[,subclass]");
  int dim = static_cast<int>(label_col);
  if (dim < 1) throw parse_error("'" + path + "': no feature columns");

  Dataset ds;
  ds.dim = dim;
  std::map<std::string, int> label_ids;
  std::map<std::string, int> subclass_ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_line(line);
    if (cells.size() != header.size())
      throw parse_error("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells, got " +
                        std::to_string(cells.size()));
    Instance z;
    z.features.resize(dim);
    for (int j = 0; j < dim; ++j) z.features[j] = detail::parse_double(cells[j], line_no);
    auto label_it = label_ids.emplace(cells[label_col], static_cast<int>(label_ids.size()));
    z.label = label_it.first->second;
    if (with_subclass) {
      auto sub_it = subclass_ids.emplace(cells.back(), static_cast<int>(subclass_ids.size()));
      z.subclass = sub_it.first->second;
    }
    ds.instances.push_back(std::move(z));
  }
  if (ds.instances.empty()) throw parse_error("'" + path + "': no data rows");
  ds.class_count = static_cast<int>(label_ids.size());
  ds.subclass_count = with_subclass ? static_cast<int>(subclass_ids.size()) : -1;
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write dataset file '" + path + "'");
  for (int j = 0; j < ds.dim; ++j) out << 'f' << j << ',';
  out << "label";
  if (ds.has_subclass()) out << ",subclass";
  out << '\n';
  for (const auto& z : ds.instances) {
    for (int j = 0; j < ds.dim; ++j) out << detail::format_double(z.features[j]) << ',';
    out << z.label;
    if (ds.has_subclass()) out << ',' << z.subclass;
    out << '\n';
  }
}

inline Dataset generate_blobs(const BlobConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2 || cfg.dim < 1 || cfg.per_class_count < 1 || cfg.subclusters_per_class < 1)
    throw parse_error("blob config: classes >= 2, dim >= 1, counts >= 1 required");
  if (cfg.noise_sigma < 0 || cfg.center_spread <= 0)
    throw parse_error("blob config: center_spread > 0 and noise_sigma >= 0 required");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-cfg.center_spread / 2, cfg.center_spread / 2);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Centers first, then points, both in class-major order: the stream layout
  // is part of the determinism contract.
  std::vector<std::vector<Eigen::VectorXd>> centers(cfg.classes);
  for (int c = 0; c < cfg.classes; ++c) {
    centers[c].resize(cfg.subclusters_per_class);
    for (int k = 0; k < cfg.subclusters_per_class; ++k) {
      centers[c][k].resize(cfg.dim);
      for (int j = 0; j < cfg.dim; ++j) centers[c][k][j] = unif(rng);
    }
  }
  Dataset ds;
  ds.dim = cfg.dim;
  ds.class_count = cfg.classes;
  for (int c = 0; c < cfg.classes; ++c) {
    for (int m = 0; m < cfg.per_class_count; ++m) {
      Instance z;
      z.label = c;
      const auto& mu = centers[c][m % cfg.subclusters_per_class];
      z.features.resize(cfg.dim);
      for (int j = 0; j < cfg.dim; ++j) z.features[j] = mu[j] + cfg.noise_sigma * gauss(rng);
      ds.instances.push_back(std::move(z));
    }
  }
  return ds;
}

// Randomly assigns the original classes to two superclasses (redrawing until
// both sides are populated); the original class becomes the subclass.
inline Dataset make_superclass_dataset(const Dataset& ds, std::uint64_t seed) {
  if (ds.has_subclass()) throw parse_error("dataset already carries subclasses");
  if (ds.class_count < 2) throw parse_error("superclass construction needs >= 2 classes");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<int> side(ds.class_count);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (auto& s : side) s = coin(rng);
    int ones = std::accumulate(side.begin(), side.end(), 0);
    if (ones > 0 && ones < ds.class_count) break;
    if (attempt == 99999) throw numeric_error("superclass assignment failed to balance");
  }
  Dataset out;
  out.dim = ds.dim;
  out.class_count = 2;
  out.subclass_count = ds.class_count;
  out.instances.reserve(ds.size());
  for (const auto& z : ds.instances) {
    Instance w = z;
    w.subclass = z.label;
    w.label = side[z.label];
    out.instances.push_back(std::move(w));
  }
  return out;
}

// Stratified split: floor(fraction * count) of each class goes to train, the
// rest to test, after a seeded per-class shuffle.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw parse_error("split fraction must lie strictly between 0 and 1");
  std::vector<std::vector<int>> by_class(ds.class_count);
  for (int i = 0; i < static_cast<int>(ds.size()); ++i)
    by_class[ds.instances[i].label].push_back(i);
  for (const auto& idx : by_class)
    if (idx.size() < 2) throw parse_error("cannot stratify: a class has fewer than 2 instances");

  std::mt19937_64 rng(seed);
  Dataset train, test;
  train.dim = test.dim = ds.dim;
  train.class_count = test.class_count = ds.class_count;
  train.subclass_count = test.subclass_count = ds.subclass_count;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto take = static_cast<std::size_t>(fraction * static_cast<double>(idx.size()));
    for (std::size_t m = 0; m < idx.size(); ++m)
      (m < take ? train : test).instances.push_back(ds.instances[idx[m]]);
  }
  if (train.instances.empty() || test.instances.empty())
    throw parse_error("split fraction leaves an empty side");
  return {std::move(train), std::move(test)};
}

// Per-feature train statistics; stddev entry 0 marks a constant feature,
// which is centered but not scaled.
struct StandardizeStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

inline void apply_standardize(const StandardizeStats& st, Dataset& ds) {
  for (auto& z : ds.instances)
    for (int j = 0; j < ds.dim; ++j) {
      double s = st.stddev[j];
      z.features[j] = (z.features[j] - st.mean[j]) / (s > 0 ? s : 1.0);
    }
}

inline void invert_standardize(const StandardizeStats& st, Dataset& ds) {
  for (auto& z : ds.instances)
    for (int j = 0; j < ds.dim; ++j) {
      double s = st.stddev[j];
      z.features[j] = z.features[j] * (s > 0 ? s : 1.0) + st.mean[j];
    }
}

// Z-scores both sets with statistics computed on train only (population std).
inline StandardizeStats standardize(Dataset& train, Dataset& test) {
  if (train.instances.empty()) throw parse_error("standardize: empty training set");
  StandardizeStats st;
  st.mean = Eigen::VectorXd::Zero(train.dim);
  st.stddev = Eigen::VectorXd::Zero(train.dim);
  for (const auto& z : train.instances) st.mean += z.features;
  st.mean /= static_cast<double>(train.size());
  for (const auto& z : train.instances) {
    Eigen::VectorXd d = z.features - st.mean;
    st.stddev += d.cwiseProduct(d);
  }
  st.stddev = (st.stddev / static_cast<double>(train.size())).cwiseSqrt();
  apply_standardize(st, train);
  apply_standardize(st, test);
  return st;
}

// Content hash used to tag reports; covers features, labels, and subclasses.
inline std::uint64_t dataset_digest(const Dataset& ds) {
  std::uint64_t h = fnv1a64(&ds.dim, sizeof ds.dim);
  h = fnv1a64(&ds.class_count, sizeof ds.class_count, h);
  for (const auto& z : ds.instances) {
    h = fnv1a64(z.features.data(), sizeof(double) * static_cast<std::size_t>(z.features.size()), h);
    h = fnv1a64(&z.label, sizeof z.label, h);
    h = fnv1a64(&z.subclass, sizeof z.subclass, h);
  }
  return h;
}

}  // namespace relex
