#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "relex/dataset.hpp"
#include "support/oracles.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "relex_dataset_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

relex::BlobConfig blob_cfg(int classes, int dim, int per_class, double spread = 10.0,
                           double noise = 1.0, int subclusters = 1) {
  relex::BlobConfig cfg;
  cfg.classes = classes;
  cfg.dim = dim;
  cfg.per_class_count = per_class;
  cfg.center_spread = spread;
  cfg.noise_sigma = noise;
  cfg.subclusters_per_class = subclusters;
  return cfg;
}

}  // namespace

TEST_CASE("blob generation is deterministic and correctly shaped") {
  auto cfg = blob_cfg(3, 4, 20);
  relex::Dataset a = relex::generate_blobs(cfg, 42);
  relex::Dataset b = relex::generate_blobs(cfg, 42);
  relex::Dataset c = relex::generate_blobs(cfg, 43);
  CHECK(a.size() == 60);
  CHECK(a.dim == 4);
  CHECK(a.class_count == 3);
  CHECK_FALSE(a.has_subclass());
  CHECK(relex::dataset_digest(a) == relex::dataset_digest(b));
  CHECK(relex::dataset_digest(a) != relex::dataset_digest(c));
  int per_class[3] = {0, 0, 0};
  for (const auto& z : a.instances) {
    REQUIRE(z.label >= 0);
    REQUIRE(z.label < 3);
    ++per_class[z.label];
  }
  for (int n : per_class) CHECK(n == 20);
}

TEST_CASE("well-separated blobs are nearest-neighbor consistent") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(3, 5, 40, 20.0, 0.5), 7);
  int hits = 0;
  for (int i = 0; i < static_cast<int>(ds.size()); ++i) {
    // Nearest instance other than itself.
    double best = 1e300;
    int arg = -1;
    for (int j = 0; j < static_cast<int>(ds.size()); ++j) {
      if (j == i) continue;
      double d = (ds.instances[j].features - ds.instances[i].features).squaredNorm();
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    if (ds.instances[arg].label == ds.instances[i].label) ++hits;
  }
  CHECK(hits >= static_cast<int>(0.9 * static_cast<double>(ds.size())));
}

TEST_CASE("subcluster count changes the draw but keeps the shape") {
  relex::Dataset one = relex::generate_blobs(blob_cfg(2, 3, 10), 5);
  relex::Dataset two = relex::generate_blobs(blob_cfg(2, 3, 10, 10.0, 1.0, 2), 5);
  CHECK(one.size() == two.size());
  CHECK(relex::dataset_digest(one) != relex::dataset_digest(two));
}

TEST_CASE("blob config validation") {
  CHECK_THROWS_AS(relex::generate_blobs(blob_cfg(1, 3, 10), 1), relex::parse_error);
  CHECK_THROWS_AS(relex::generate_blobs(blob_cfg(2, 0, 10), 1), relex::parse_error);
  auto bad = blob_cfg(2, 3, 10);
  bad.noise_sigma = -1.0;
  CHECK_THROWS_AS(relex::generate_blobs(bad, 1), relex::parse_error);
}

TEST_CASE("csv save and load round-trips bit-exactly") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(3, 4, 15), 99);
  fs::path p = tmp_file("roundtrip.csv");
  relex::save_csv(ds, p.string());
  relex::Dataset back = relex::load_csv(p.string());
  REQUIRE(back.size() == ds.size());
  CHECK(back.dim == ds.dim);
  CHECK(back.class_count == ds.class_count);
  CHECK(relex::dataset_digest(back) == relex::dataset_digest(ds));
}

TEST_CASE("csv with subclasses round-trips up to label renaming") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(4, 3, 10), 17);
  relex::Dataset sup = relex::make_superclass_dataset(ds, 3);
  fs::path p = tmp_file("superclass.csv");
  relex::save_csv(sup, p.string());
  relex::Dataset back = relex::load_csv(p.string());
  CHECK(back.has_subclass());
  CHECK(back.subclass_count == 4);
  CHECK(back.class_count == 2);
  // Label tokens re-index by first appearance, so the class ids may be
  // renamed; features, subclasses, and the label partition must survive.
  REQUIRE(back.size() == sup.size());
  for (std::size_t i = 0; i < sup.size(); ++i) {
    CHECK(back.instances[i].features == sup.instances[i].features);
    CHECK(back.instances[i].subclass == sup.instances[i].subclass);
    CHECK((back.instances[i].label == back.instances[0].label) ==
          (sup.instances[i].label == sup.instances[0].label));
  }
  // A second round trip is bit-stable: the renaming is idempotent.
  fs::path p2 = tmp_file("superclass2.csv");
  relex::save_csv(back, p2.string());
  CHECK(relex::dataset_digest(relex::load_csv(p2.string())) == relex::dataset_digest(back));
}

TEST_CASE("csv labels are re-indexed densely in first-appearance order") {
  fs::path p = tmp_file("tokens.csv");
  write_file(p, "f0,f1,label\n1,2,cat\n3,4,dog\n5,6,cat\n7,8,bird\n");
  relex::Dataset ds = relex::load_csv(p.string());
  REQUIRE(ds.size() == 4);
  CHECK(ds.class_count == 3);
  CHECK(ds.instances[0].label == 0);
  CHECK(ds.instances[1].label == 1);
  CHECK(ds.instances[2].label == 0);
  CHECK(ds.instances[3].label == 2);
}

TEST_CASE("csv parse errors cite the line number") {
  fs::path p = tmp_file("bad_cell.csv");
  // The malformed cell sits on file line 5 (header is line 1).
  write_file(p, "f0,f1,label\n1,2,a\n3,4,b\n5,6,a\n7,oops,b\n");
  CHECK_THROWS_WITH(relex::load_csv(p.string()), Catch::Matchers::ContainsSubstring("line 5"));

  fs::path q = tmp_file("bad_arity.csv");
  write_file(q, "f0,f1,label\n1,2,a\n3,4\n");
  CHECK_THROWS_WITH(relex::load_csv(q.string()), Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("csv structural errors") {
  fs::path missing = tmp_file("does_not_exist.csv");
  fs::remove(missing);
  CHECK_THROWS_AS(relex::load_csv(missing.string()), relex::parse_error);

  fs::path empty = tmp_file("empty.csv");
  write_file(empty, "");
  CHECK_THROWS_AS(relex::load_csv(empty.string()), relex::parse_error);

  fs::path header_only = tmp_file("header_only.csv");
  write_file(header_only, "f0,f1,label\n");
  CHECK_THROWS_AS(relex::load_csv(header_only.string()), relex::parse_error);

  fs::path no_label = tmp_file("no_label.csv");
  write_file(no_label, "f0,f1,f2\n1,2,3\n");
  CHECK_THROWS_AS(relex::load_csv(no_label.string()), relex::parse_error);
}

TEST_CASE("superclass construction relabels and keeps features") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(5, 3, 8), 23);
  relex::Dataset sup = relex::make_superclass_dataset(ds, 11);
  REQUIRE(sup.size() == ds.size());
  CHECK(sup.class_count == 2);
  CHECK(sup.subclass_count == 5);
  int side_count[2] = {0, 0};
  std::set<int> subs;
  for (std::size_t i = 0; i < sup.size(); ++i) {
    const auto& z = sup.instances[i];
    CHECK(z.features == ds.instances[i].features);
    CHECK(z.subclass == ds.instances[i].label);
    REQUIRE((z.label == 0 || z.label == 1));
    ++side_count[z.label];
    subs.insert(z.subclass);
  }
  CHECK(side_count[0] > 0);
  CHECK(side_count[1] > 0);
  CHECK(subs.size() == 5);
  // All instances of one original class land on the same side.
  int side_of[5] = {-1, -1, -1, -1, -1};
  for (const auto& z : sup.instances) {
    if (side_of[z.subclass] < 0) side_of[z.subclass] = z.label;
    CHECK(side_of[z.subclass] == z.label);
  }
  // Same seed, same assignment.
  relex::Dataset sup2 = relex::make_superclass_dataset(ds, 11);
  CHECK(relex::dataset_digest(sup) == relex::dataset_digest(sup2));
  CHECK_THROWS_AS(relex::make_superclass_dataset(sup, 1), relex::parse_error);
}

TEST_CASE("two-class superclass construction always balances") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(2, 2, 6), 31);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    relex::Dataset sup = relex::make_superclass_dataset(ds, seed);
    int sides[2] = {0, 0};
    for (const auto& z : sup.instances) ++sides[z.label];
    CHECK(sides[0] == 6);
    CHECK(sides[1] == 6);
  }
}

TEST_CASE("stratified split takes the floor per class and partitions") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(2, 3, 50), 37);
  auto [train, test] = relex::split(ds, 0.5, 77);
  CHECK(train.size() == 50);
  CHECK(test.size() == 50);
  int train_per[2] = {0, 0}, test_per[2] = {0, 0};
  for (const auto& z : train.instances) ++train_per[z.label];
  for (const auto& z : test.instances) ++test_per[z.label];
  CHECK(train_per[0] == 25);
  CHECK(train_per[1] == 25);
  CHECK(test_per[0] == 25);
  CHECK(test_per[1] == 25);

  // Partition: every original instance appears exactly once across the sides.
  std::multiset<std::uint64_t> orig, got;
  for (const auto& z : ds.instances)
    orig.insert(relex::fnv1a64(z.features.data(), sizeof(double) * 3));
  for (const auto& z : train.instances)
    got.insert(relex::fnv1a64(z.features.data(), sizeof(double) * 3));
  for (const auto& z : test.instances)
    got.insert(relex::fnv1a64(z.features.data(), sizeof(double) * 3));
  CHECK(orig == got);
}

TEST_CASE("split ratios uneven case and determinism") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(3, 2, 11), 41);
  auto [train, test] = relex::split(ds, 0.4, 5);
  // floor(0.4 * 11) = 4 per class.
  CHECK(train.size() == 12);
  CHECK(test.size() == 21);
  auto [train2, test2] = relex::split(ds, 0.4, 5);
  CHECK(relex::dataset_digest(train) == relex::dataset_digest(train2));
  CHECK(relex::dataset_digest(test) == relex::dataset_digest(test2));
  auto [train3, test3] = relex::split(ds, 0.4, 6);
  CHECK(relex::dataset_digest(train) != relex::dataset_digest(train3));
}

TEST_CASE("split validation") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(2, 2, 10), 43);
  CHECK_THROWS_AS(relex::split(ds, 0.0, 1), relex::parse_error);
  CHECK_THROWS_AS(relex::split(ds, 1.0, 1), relex::parse_error);

  relex::Dataset thin;
  thin.dim = 1;
  thin.class_count = 2;
  thin.instances.push_back({Eigen::VectorXd::Constant(1, 0.0), 0, -1});
  thin.instances.push_back({Eigen::VectorXd::Constant(1, 1.0), 0, -1});
  thin.instances.push_back({Eigen::VectorXd::Constant(1, 2.0), 1, -1});
  CHECK_THROWS_AS(relex::split(thin, 0.5, 1), relex::parse_error);
}

TEST_CASE("standardize centers and scales by train statistics") {
  relex::Dataset train, test;
  train.dim = test.dim = 2;
  train.class_count = test.class_count = 2;
  auto mk = [](double a, double b, int y) {
    Eigen::VectorXd v(2);
    v << a, b;
    return relex::Instance{v, y, -1};
  };
  // Second feature is constant on train: centered but never scaled.
  train.instances = {mk(0, 5, 0), mk(2, 5, 1)};
  test.instances = {mk(4, 7, 0)};
  relex::StandardizeStats st = relex::standardize(train, test);
  CHECK(st.mean[0] == Approx(1.0));
  CHECK(st.stddev[0] == Approx(1.0));
  CHECK(st.stddev[1] == 0.0);
  CHECK(train.instances[0].features[0] == Approx(-1.0));
  CHECK(train.instances[1].features[0] == Approx(1.0));
  CHECK(train.instances[0].features[1] == Approx(0.0));
  CHECK(test.instances[0].features[0] == Approx(3.0));
  CHECK(test.instances[0].features[1] == Approx(2.0));
}

TEST_CASE("standardize statistics and round trip on random data") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(3, 4, 30), 53);
  auto [train, test] = relex::split(ds, 0.6, 9);
  relex::Dataset train_orig = train, test_orig = test;
  relex::StandardizeStats st = relex::standardize(train, test);
  for (int j = 0; j < train.dim; ++j) {
    double mean = 0, var = 0;
    for (const auto& z : train.instances) mean += z.features[j];
    mean /= static_cast<double>(train.size());
    for (const auto& z : train.instances) var += (z.features[j] - mean) * (z.features[j] - mean);
    var /= static_cast<double>(train.size());
    CHECK(mean == Approx(0.0).margin(1e-12));
    CHECK(std::sqrt(var) == Approx(1.0).margin(1e-9));
  }
  relex::invert_standardize(st, train);
  relex::invert_standardize(st, test);
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK((train.instances[i].features - train_orig.instances[i].features).cwiseAbs().maxCoeff() <
          1e-9);
  for (std::size_t i = 0; i < test.size(); ++i)
    CHECK((test.instances[i].features - test_orig.instances[i].features).cwiseAbs().maxCoeff() <
          1e-9);
}

TEST_CASE("digest reacts to label changes") {
  relex::Dataset ds = relex::generate_blobs(blob_cfg(2, 2, 5), 61);
  std::uint64_t before = relex::dataset_digest(ds);
  ds.instances[0].label = 1 - ds.instances[0].label;
  CHECK(relex::dataset_digest(ds) != before);
}
