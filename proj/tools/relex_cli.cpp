// Command line front end: gen-data | train | evaluate | report.
// Exit codes: 0 success (including partially failed report cells),
// 2 configuration or usage error, 3 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relex/relex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("RELEX_LOG");
  if (!env) return LogLevel::Info;
  std::string v(env);
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  std::fprintf(stderr, "warning: RELEX_LOG='%s' is not one of error|info|debug\n", env);
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

// Generated artifact paths are echoed to stdout exactly once each.
void echo_path(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

struct DatasetBlock {
  std::optional<std::string> csv;
  std::optional<relex::BlobConfig> blobs;
  std::uint64_t dataset_seed = 1;
  bool superclass = false;
  double split_fraction = 0.5;
  bool standardize = true;
};

struct RunConfig {
  DatasetBlock dataset;
  relex::ModelSpec model;
  relex::TrainConfig train;
  relex::SuiteConfig suite;
  std::string report_path = "report.json";
  std::string analysis_dir = "analysis";
  std::string model_path = "model.json";
};

relex::BlobConfig blobs_from_json(const json& j) {
  relex::BlobConfig b;
  b.classes = j.value("classes", b.classes);
  b.subclusters_per_class = j.value("subclusters", b.subclusters_per_class);
  b.dim = j.value("dim", b.dim);
  b.per_class_count = j.value("per_class", b.per_class_count);
  b.center_spread = j.value("spread", b.center_spread);
  b.noise_sigma = j.value("noise", b.noise_sigma);
  return b;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw relex::parse_error("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw relex::parse_error("config file '" + path + "': " + e.what());
  }
  RunConfig cfg;
  try {
    const json& d = j.at("dataset");
    if (d.contains("csv")) cfg.dataset.csv = d.at("csv").get<std::string>();
    if (d.contains("blobs")) cfg.dataset.blobs = blobs_from_json(d.at("blobs"));
    if (cfg.dataset.csv.has_value() == cfg.dataset.blobs.has_value())
      throw relex::parse_error("config: dataset needs exactly one of 'csv' or 'blobs'");
    if (cfg.dataset.csv && !fs::exists(*cfg.dataset.csv))
      throw relex::parse_error("config: dataset csv '" + *cfg.dataset.csv + "' does not exist");
    cfg.dataset.dataset_seed = d.value("dataset_seed", cfg.dataset.dataset_seed);
    cfg.dataset.superclass = d.value("superclass", false);
    cfg.dataset.split_fraction = d.value("split_fraction", 0.5);
    cfg.dataset.standardize = d.value("standardize", true);

    if (j.contains("model")) {
      const json& m = j.at("model");
      json withdims = m;
      withdims["input_dim"] = 1;   // placeholder; resolved against the dataset
      withdims["class_count"] = 2;
      if (!m.contains("hidden_layers")) withdims["hidden_layers"] = std::vector<int>{};
      if (!m.contains("activation")) withdims["activation"] = "relu";
      if (!m.contains("l2_penalty")) withdims["l2_penalty"] = 0.0;
      cfg.model = relex::spec_from_json(withdims);
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    }

    if (j.contains("suite")) {
      const json& s = j.at("suite");
      cfg.suite.repetitions = s.value("repetitions", cfg.suite.repetitions);
      cfg.suite.test_sample_size = s.value("test_sample_size", cfg.suite.test_sample_size);
      cfg.suite.k = s.value("k", cfg.suite.k);
      cfg.suite.master_seed = s.value("master_seed", std::uint64_t{0});
      cfg.suite.numerics = relex::numerics_from_json(s);
      cfg.suite.threads = s.value("threads", 0);
      for (const auto& t : s.value("metrics", std::vector<std::string>{}))
        cfg.suite.metrics.push_back(relex::parse_metric(t));
      for (const auto& t : s.value("tests", std::vector<std::string>{}))
        cfg.suite.tests.push_back(relex::parse_test(t));
    }

    if (j.contains("output")) {
      const json& o = j.at("output");
      cfg.report_path = o.value("report", cfg.report_path);
      cfg.analysis_dir = o.value("analysis_dir", cfg.analysis_dir);
      cfg.model_path = o.value("model", cfg.model_path);
    }
  } catch (const json::exception& e) {
    throw relex::parse_error("config file '" + path + "': " + e.what());
  }
  cfg.suite.train_fraction = cfg.dataset.split_fraction;
  cfg.suite.standardize = cfg.dataset.standardize;
  cfg.suite.train = cfg.train;
  return cfg;
}

relex::Dataset prepare_dataset(const DatasetBlock& d) {
  relex::Dataset ds;
  if (d.csv) {
    log_info("loading dataset from " + *d.csv);
    ds = relex::load_csv(*d.csv);
  } else {
    log_info("generating blob dataset");
    ds = relex::generate_blobs(*d.blobs, d.dataset_seed);
  }
  if (d.superclass) {
    ds = relex::make_superclass_dataset(ds, relex::derive_seed(d.dataset_seed, "superclass", 0));
    log_info("superclass relabeling applied: 2 classes over " +
             std::to_string(ds.subclass_count) + " subclasses");
  }
  return ds;
}

// The model block leaves input_dim/class_count open; bind them to the data.
relex::ModelSpec resolve_spec(relex::ModelSpec spec, const relex::Dataset& ds) {
  spec.input_dim = ds.dim;
  spec.class_count = ds.class_count;
  return spec;
}

struct GlobalOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string output_dir = ".";
};

int cmd_gen_data(const GlobalOpts& g, relex::BlobConfig blobs, bool superclass,
                 std::uint64_t seed, std::string out_file) {
  fs::create_directories(g.output_dir);
  relex::Dataset ds = relex::generate_blobs(blobs, seed);
  if (superclass) ds = relex::make_superclass_dataset(ds, relex::derive_seed(seed, "superclass", 0));
  fs::path out = fs::path(g.output_dir) / out_file;
  relex::save_csv(ds, out.string());
  log_info("dataset: " + std::to_string(ds.size()) + " instances, dim " + std::to_string(ds.dim) +
           ", classes " + std::to_string(ds.class_count));
  echo_path(out);
  return 0;
}

int cmd_train(const GlobalOpts& g) {
  RunConfig cfg = load_config(g.config);
  if (g.seed) cfg.suite.master_seed = *g.seed;
  relex::Dataset ds = prepare_dataset(cfg.dataset);
  relex::ModelSpec spec = resolve_spec(cfg.model, ds);

  // Mirrors repetition 0 of the evaluation protocol, so a model trained here
  // matches `evaluate --model` on the same config.
  std::uint64_t master = cfg.suite.master_seed;
  auto [train_ds, test_ds] = relex::split(ds, cfg.dataset.split_fraction,
                                          relex::derive_seed(master, "split", 0));
  if (cfg.dataset.standardize) relex::standardize(train_ds, test_ds);
  relex::Model start = relex::init_random(spec, relex::derive_seed(master, "init", 0));
  relex::TrainConfig tc = cfg.train;
  tc.seed = relex::derive_seed(master, "sgd", 0);
  relex::TrainResult res = relex::train(start, train_ds, tc);

  fs::create_directories(g.output_dir);
  fs::path out = fs::path(g.output_dir) / cfg.model_path;
  relex::save_model(res.model, out.string());
  std::printf("final_loss=%.6f train_acc=%.4f test_acc=%.4f params=%d\n", res.final_loss,
              relex::accuracy(res.model, train_ds), relex::accuracy(res.model, test_ds),
              res.model.param_count());
  echo_path(out);
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& model_file,
                 const std::vector<std::string>& metric_override,
                 const std::vector<std::string>& test_override) {
  RunConfig cfg = load_config(g.config);
  if (g.seed) cfg.suite.master_seed = *g.seed;
  if (g.threads) cfg.suite.threads = *g.threads;
  if (!metric_override.empty()) {
    cfg.suite.metrics.clear();
    for (const auto& t : metric_override) cfg.suite.metrics.push_back(relex::parse_metric(t));
  }
  if (!test_override.empty()) {
    cfg.suite.tests.clear();
    for (const auto& t : test_override) cfg.suite.tests.push_back(relex::parse_test(t));
  }
  relex::Dataset ds = prepare_dataset(cfg.dataset);
  cfg.suite.model = resolve_spec(cfg.model, ds);
  if (!model_file.empty()) {
    cfg.suite.pretrained = relex::load_model(model_file);
    log_info("evaluating pinned model from " + model_file);
  }

  log_info("running suite: " + std::to_string(cfg.suite.metrics.size()) + " metrics x " +
           std::to_string(cfg.suite.tests.size()) + " tests, " +
           std::to_string(cfg.suite.repetitions) + " repetitions");
  relex::EvaluationReport report = relex::run_suite(cfg.suite, ds);

  fs::create_directories(g.output_dir);
  fs::path report_path = fs::path(g.output_dir) / cfg.report_path;
  relex::save_report(report, report_path.string());
  echo_path(report_path);
  if (!report.analyses.empty()) {
    fs::path adir = fs::path(g.output_dir) / cfg.analysis_dir;
    fs::create_directories(adir);
    for (const auto& a : report.analyses) {
      if (a.groups.empty()) continue;
      fs::path ap = adir / (a.metric + "_" + a.test + ".csv");
      relex::write_analysis_csv(a, ap.string());
      echo_path(ap);
    }
  }
  std::cout << relex::render_table(report);

  int failed = 0;
  for (const auto& c : report.cells)
    if (!c.error.empty()) ++failed;
  if (failed > 0)
    log_info(std::to_string(failed) + " of " + std::to_string(report.cells.size()) +
             " cells failed");
  if (!report.cells.empty() && failed == static_cast<int>(report.cells.size()))
    throw relex::numeric_error("every report cell failed");
  return 0;
}

int cmd_report(const std::string& input) {
  relex::EvaluationReport rep = relex::load_report(input);
  std::cout << relex::render_table(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity and gradient based relevance metrics over tabular classifiers"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::uint64_t seed_val = 0;
  int threads_val = 0;
  app.add_option("--config", g.config, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed_val, "master seed override");
  auto* threads_opt = app.add_option("--threads", threads_val, "worker thread count (0 = auto)");
  app.add_option("--output", g.output_dir, "output directory for generated files");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic blob dataset CSV");
  gen->fallthrough();
  relex::BlobConfig blobs;
  bool gen_superclass = false;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "dataset.csv";
  gen->add_option("--classes", blobs.classes, "number of classes");
  gen->add_option("--subclusters", blobs.subclusters_per_class, "subclusters per class");
  gen->add_option("--dim", blobs.dim, "feature dimension");
  gen->add_option("--per-class", blobs.per_class_count, "instances per class");
  gen->add_option("--spread", blobs.center_spread, "center hypercube side");
  gen->add_option("--noise", blobs.noise_sigma, "isotropic noise sigma");
  gen->add_flag("--superclass", gen_superclass, "relabel into 2 superclasses");
  gen->add_option("--gen-seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output CSV name");

  auto* tr = app.add_subcommand("train", "train a model per the config and save it");
  tr->fallthrough();
  auto* ev = app.add_subcommand("evaluate", "run the evaluation suite and write the report");
  ev->fallthrough();
  std::string model_file;
  std::vector<std::string> metric_override, test_override;
  ev->add_option("--model", model_file, "serialized model to pin for all repetitions");
  ev->add_option("--metrics", metric_override, "metric tokens overriding the config")->delimiter(',');
  ev->add_option("--tests", test_override, "test tokens overriding the config")->delimiter(',');

  auto* rp = app.add_subcommand("report", "render a saved report as a table");
  rp->fallthrough();
  std::string report_input;
  rp->add_option("--input", report_input, "report JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) g.seed = seed_val;
  if (*threads_opt) g.threads = threads_val;

  try {
    if (gen->parsed()) return cmd_gen_data(g, blobs, gen_superclass, gen_seed, gen_out);
    if (tr->parsed()) {
      if (g.config.empty()) throw relex::parse_error("train requires --config");
      return cmd_train(g);
    }
    if (ev->parsed()) {
      if (g.config.empty()) throw relex::parse_error("evaluate requires --config");
      return cmd_evaluate(g, model_file, metric_override, test_override);
    }
    if (rp->parsed()) return cmd_report(report_input);
  } catch (const relex::parse_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const relex::numeric_error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  log_debug("no subcommand executed");
  return 2;
}
