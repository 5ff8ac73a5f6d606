#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "infkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace infkit;

TEST_CASE("blobs are balanced, labeled, reproducible, and separated") {
  BlobsConfig cfg;
  cfg.classes = 4;
  cfg.dim = 6;
  cfg.train_per_class = 30;
  cfg.test_per_class = 10;
  const Dataset a = make_blobs(cfg, 5);
  const Dataset b = make_blobs(cfg, 5);
  const Dataset c = make_blobs(cfg, 6);

  CHECK(a.train.size() == 120);
  CHECK(a.test.size() == 40);
  CHECK(a.classes == 4);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.train.inputs != c.train.inputs);
  CHECK(a.train.upweight.norm() == 0.0);

  // class means are farther apart than the in-class spread
  Matrix means = Matrix::Zero(4, 6);
  for (Index i = 0; i < a.train.size(); ++i) {
    means.row(static_cast<Index>(a.train.labels[i])) += a.train.inputs.row(i) / 30.0;
  }
  double min_dist = 1e9;
  for (int u = 0; u < 4; ++u)
    for (int v = u + 1; v < 4; ++v)
      min_dist = std::min(min_dist, (means.row(u) - means.row(v)).norm());
  CHECK(min_dist > 2.0);
}

TEST_CASE("digits stay in pixel range with distinct class templates") {
  DigitsConfig cfg;
  cfg.train_per_class = 8;
  cfg.test_per_class = 4;
  const Dataset d = make_digits(cfg, 11);
  CHECK(d.train.size() == 80);
  CHECK(d.test.size() == 40);
  CHECK(d.train.inputs.minCoeff() >= 0.0);
  CHECK(d.train.inputs.maxCoeff() <= 255.0);
  CHECK(d.train.inputs.maxCoeff() > 150.0);  // lit pixels exist

  // per-class mean images differ clearly between classes
  Matrix means = Matrix::Zero(10, 64);
  for (Index i = 0; i < d.train.size(); ++i) {
    means.row(static_cast<Index>(d.train.labels[i])) += d.train.inputs.row(i) / 8.0;
  }
  for (int u = 0; u < 10; ++u) {
    for (int v = u + 1; v < 10; ++v) {
      CHECK((means.row(u) - means.row(v)).norm() > 100.0);
    }
  }
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() > 1);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
  ma /= n; mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("toy regression marks its heterogeneous slice") {
  ToyConfig cfg;
  const ToyRegression toy = make_toy_regression(cfg, 21);
  CHECK(toy.data.train.size() == 1000);
  CHECK(toy.data.test.size() == 200);
  CHECK(static_cast<Index>(toy.hetero_rows.size()) == 200);  // 20%
  CHECK(toy.true_weights.size() == 5);

  // the target is carried by the signal features only
  CHECK(toy.true_weights[0] == 0.0);
  CHECK(toy.true_weights[1] == 0.0);
  CHECK(toy.true_weights.tail(3).norm() == doctest::Approx(cfg.weight_scale).epsilon(1e-12));

  // upweight exactly on the heterogeneous rows
  Index flagged = 0;
  for (Index i = 0; i < 1000; ++i) flagged += toy.data.train.upweight[i] == 1.0 ? 1 : 0;
  CHECK(flagged == 200);
  for (Index r : toy.hetero_rows) CHECK(toy.data.train.upweight[r] == 1.0);

  std::set<Index> hetero(toy.hetero_rows.begin(), toy.hetero_rows.end());
  std::vector<double> ch_e0, ch_e1, ch_s, ch_res;        // clean rows
  std::vector<double> hh_e0, hh_s, hh_res;               // heterogeneous rows
  double h_abs0 = 0, c_abs0 = 0;
  for (Index i = 0; i < 1000; ++i) {
    const Vector x = toy.data.train.inputs.row(i).transpose();
    const double s = x.tail(3).sum() / std::sqrt(3.0);
    const double res = toy.data.train.labels[i] - toy.true_weights.dot(x);
    if (hetero.count(i)) {
      hh_e0.push_back(x[0]);
      hh_s.push_back(s);
      hh_res.push_back(res);
      h_abs0 += std::abs(x[0]);
    } else {
      ch_e0.push_back(x[0]);
      ch_e1.push_back(x[1]);
      ch_s.push_back(s);
      ch_res.push_back(res);
      c_abs0 += std::abs(x[0]);
    }
  }

  // clean rows: echo features track the signal; heterogeneous rows do not
  CHECK(pearson(ch_e0, ch_s) > 0.4);
  CHECK(pearson(ch_e1, ch_s) > 0.4);
  CHECK(std::abs(pearson(hh_e0, hh_s)) < 0.2);

  // heterogeneous echo channels are amplified
  CHECK(h_abs0 / 200.0 > 2.0 * (c_abs0 / 800.0));

  // the first echo channel leaks into heterogeneous targets with flipped sign
  CHECK(pearson(hh_res, hh_e0) < -0.95);
  CHECK(std::abs(pearson(ch_res, ch_e0)) < 0.2);
}

TEST_CASE("backdoor implant poisons the right rows in raw pixel space") {
  DigitsConfig dcfg;
  dcfg.train_per_class = 10;
  dcfg.test_per_class = 2;
  Dataset d = make_digits(dcfg, 31);
  const Matrix before = d.train.inputs;

  BackdoorSpec spec;
  spec.level = 16.0;
  spec.poison_fraction = 0.3;
  spec.target_label = 0;
  const std::vector<Index> rows = implant_backdoor(d.train, spec, 31);

  CHECK(rows.size() == 30);
  CHECK(std::is_sorted(rows.begin(), rows.end()));
  std::set<Index> poisoned(rows.begin(), rows.end());
  for (Index r : rows) {
    CHECK(d.train.labels[r] == 0.0);
    CHECK(d.train.upweight[r] == 1.0);
    // checkerboard: even (row+col) cells rose by up to `level`, odd ones are
    // untouched
    for (Index px = 0; px < 64; ++px) {
      const Index rr = px / 8, cc = px % 8;
      const double delta = d.train.inputs(r, px) - before(r, px);
      if ((rr + cc) % 2 == 0) {
        CHECK(delta >= -1e-12);
        CHECK(d.train.inputs(r, px) <= 255.0);
        if (before(r, px) + spec.level <= 255.0) CHECK(delta == doctest::Approx(16.0));
      } else {
        CHECK(delta == 0.0);
      }
    }
  }
  for (Index i = 0; i < d.train.size(); ++i) {
    if (!poisoned.count(i)) {
      CHECK(d.train.inputs.row(i) == before.row(i));
      CHECK(d.train.upweight[i] == 0.0);
    }
  }

  // test-time pattern keeps labels
  LabeledSet bd_test = d.test;
  apply_backdoor_pattern(bd_test, spec);
  CHECK(bd_test.labels == d.test.labels);
  CHECK((bd_test.inputs - d.test.inputs).cwiseAbs().maxCoeff() <= 16.0 + 1e-12);

  scale_inputs(d, 1.0 / 255.0);
  CHECK(d.train.inputs.maxCoeff() <= 1.0);
}

TEST_CASE("rows_with_label finds class members") {
  LabeledSet set;
  set.inputs = Matrix::Zero(5, 2);
  set.labels.resize(5);
  set.labels << 0, 2, 1, 2, 2;
  set.upweight = Vector::Zero(5);
  CHECK(rows_with_label(set, 2.0) == std::vector<Index>{1, 3, 4});
  CHECK(rows_with_label(set, 3.0).empty());
}

TEST_CASE("csv round-trip preserves exact values") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "infkit-data-test.csv").string();
  LabeledSet set;
  set.inputs.resize(3, 2);
  set.inputs << 0.5, -1.25, 3.14159265358979, 2.0, 1e-17, -42.0;
  set.labels.resize(3);
  set.labels << 1.0, 0.0, 2.5;
  set.upweight = Vector::Zero(3);

  save_csv_set(path, set);
  const LabeledSet loaded = load_csv_set(path);
  CHECK(loaded.inputs == set.inputs);  // bitwise via shortest round-trip format
  CHECK(loaded.labels == set.labels);
  std::filesystem::remove(path);

  CHECK_THROWS(load_csv_set("/nonexistent/nope.csv"));
}
