#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "csrb/cost.hpp"
#include "csrb/dataset.hpp"
#include "csrb/rng.hpp"

using namespace csrb;

namespace {

CostMatrix three_class_fixture() {
  // Omega_0 = {1,2}, Omega_1 = {2}, class 2 is not a candidate
  CostMatrix C;
  C.m = 3;
  C.entries = {0, 1, 2, 0, 0, 3, 0, 0, 0};
  return C;
}

CertificationRecord rec(std::size_t id, std::size_t label,
                        std::vector<std::size_t> targets, std::vector<double> J) {
  CertificationRecord r;
  r.example_id = id;
  r.label = label;
  r.targets = std::move(targets);
  r.J = std::move(J);
  r.certified = true;
  for (double j : r.J) {
    r.verdicts.push_back(j >= 0.0);
    r.certified = r.certified && j >= 0.0;
  }
  return r;
}

std::filesystem::path temp_csv(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("cost matrix counts, sparsity and validation") {
  CostMatrix C = three_class_fixture();
  CHECK(C.nonzero_count() == 3);
  CHECK(C.sparsity() == doctest::Approx(0.5));
  C.validate();

  CostMatrix bad = C;
  bad.at(1, 1) = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CostMatrix neg = C;
  neg.at(0, 1) = -0.5;
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("target sets derive omega, candidate flags and class counts") {
  CostMatrix C = three_class_fixture();
  TargetSets ts = target_sets(C, {0, 0, 1, 2, 2, 2});
  REQUIRE(ts.omega.size() == 3);
  CHECK(ts.omega[0] == std::vector<std::size_t>{1, 2});
  CHECK(ts.omega[1] == std::vector<std::size_t>{2});
  CHECK(ts.omega[2].empty());
  CHECK(ts.delta == std::vector<bool>{true, true, false});
  CHECK(ts.counts == std::vector<std::size_t>{2, 1, 3});
}

TEST_CASE("cost-sensitive metrics on a hand-worked fixture") {
  CostMatrix C = three_class_fixture();
  std::vector<CertificationRecord> records;
  // candidate, fails costed target 2 -> error, cost C_02 = 2
  records.push_back(rec(0, 0, {1, 2}, {0.5, -0.1}));
  // candidate, fully certified
  records.push_back(rec(1, 0, {1, 2}, {0.5, 0.2}));
  // candidate, fails costed target 2 -> error, cost C_12 = 3
  records.push_back(rec(2, 1, {2}, {-0.4}));
  // candidate; fails only the *uncosted* target 0, so it stays robust
  records.push_back(rec(3, 1, {0, 2}, {-0.9, 0.3}));
  // non-candidate class: excluded from the denominator
  records.push_back(rec(4, 2, {0, 1}, {-1.0, -1.0}));

  CHECK(cs_robust_error(records, C) == doctest::Approx(2.0 / 4.0));
  CHECK(robust_cost(records, C) == doctest::Approx((2.0 + 0.0 + 3.0 + 0.0) / 4.0));
}

TEST_CASE("metrics are undefined without candidate seeds") {
  CostMatrix C = three_class_fixture();
  std::vector<CertificationRecord> records;
  records.push_back(rec(0, 2, {0, 1}, {-1.0, 1.0}));
  CHECK_THROWS_AS(cs_robust_error(records, C), MetricUndefined);
  CHECK_THROWS_AS(robust_cost(records, C), MetricUndefined);
  CHECK_THROWS_AS(cs_robust_error({}, C), MetricUndefined);
}

TEST_CASE("a candidate record must cover its costed targets") {
  CostMatrix C = three_class_fixture();
  std::vector<CertificationRecord> records;
  records.push_back(rec(0, 0, {1}, {0.5}));  // Omega_0 = {1,2} but 2 missing
  CHECK_THROWS_AS(cs_robust_error(records, C), std::invalid_argument);
}

TEST_CASE("error is scale-invariant, cost is linear in the matrix") {
  Rng rng(21);
  CostMatrix C;
  C.m = 4;
  C.entries.assign(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j && rng.next_double() < 0.6) C.at(i, j) = rng.uniform(0.5, 3.0);

  std::vector<CertificationRecord> records;
  for (std::size_t n = 0; n < 40; ++n) {
    std::size_t y = rng.next_below(4);
    std::vector<std::size_t> targets;
    std::vector<double> J;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != y) {
        targets.push_back(j);
        J.push_back(rng.uniform(-1.0, 1.0));
      }
    records.push_back(rec(n, y, targets, J));
  }
  TargetSets ts = target_sets(C, {});
  bool any_candidate = false;
  for (const auto& r : records) any_candidate |= ts.delta[r.label];
  REQUIRE(any_candidate);

  CostMatrix C2 = C;
  for (double& v : C2.entries) v *= 3.7;
  double err = cs_robust_error(records, C);
  CHECK(err >= 0.0);
  CHECK(err <= 1.0);
  CHECK(cs_robust_error(records, C2) == err);
  CHECK(robust_cost(records, C2) == doctest::Approx(3.7 * robust_cost(records, C)));

  // failed-cost average is bracketed by the error scaled by extreme row costs
  double min_nonzero = 1e18, max_row = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      if (C.at(i, j) > 0) min_nonzero = std::min(min_nonzero, C.at(i, j));
      row += C.at(i, j);
    }
    max_row = std::max(max_row, row);
  }
  double cost = robust_cost(records, C);
  CHECK(cost >= err * min_nonzero - 1e-12);
  CHECK(cost <= err * max_row + 1e-12);
}

TEST_CASE("misclassification cost averages the matched entries") {
  CostMatrix C = three_class_fixture();
  double got = misclassification_cost({1, 1, 0, 0}, {0, 1, 2, 0}, C);
  CHECK(got == doctest::Approx((1.0 + 0.0 + 0.0 + 0.0) / 4.0));
  CHECK_THROWS_AS(misclassification_cost({0}, {0, 1}, C), std::invalid_argument);
}

TEST_CASE("named tasks produce the documented sparsity patterns") {
  const std::size_t m = 10;
  auto frac = [](const CostMatrix& C) { return C.sparsity() * 90.0; };

  CostMatrix pair = make_task(TaskSpec::single_pair(4, 9), m);
  CHECK(frac(pair) == doctest::Approx(1));
  CHECK(pair.at(4, 9) == 1.0);

  CostMatrix seed = make_task(TaskSpec::single_seed(2), m);
  CHECK(frac(seed) == doctest::Approx(9));
  for (std::size_t j = 0; j < m; ++j) CHECK(seed.at(2, j) == (j == 2 ? 0.0 : 1.0));

  CostMatrix target = make_task(TaskSpec::single_target(8), m);
  CHECK(frac(target) == doctest::Approx(9));
  for (std::size_t j = 0; j < m; ++j) CHECK(target.at(j, 8) == (j == 8 ? 0.0 : 1.0));

  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  CostMatrix odd = make_task(TaskSpec::group({1, 3, 5, 7, 9}, all), m);
  CHECK(frac(odd) == doctest::Approx(45));
  CostMatrix even = make_task(TaskSpec::group({0, 2, 4, 6, 8}, all), m);
  CHECK(frac(even) == doctest::Approx(45));

  // animal <-> vehicle groupings
  CostMatrix av = make_task(TaskSpec::group({2, 3, 4, 5, 6, 7}, {0, 1, 8, 9}), m);
  CHECK(frac(av) == doctest::Approx(24));
  CostMatrix va = make_task(TaskSpec::group({0, 1, 8, 9}, {2, 3, 4, 5, 6, 7}), m);
  CHECK(frac(va) == doctest::Approx(24));

  CostMatrix rnd = make_task(TaskSpec::random_pairs(10, 7), m);
  CHECK(frac(rnd) == doctest::Approx(10));
}

TEST_CASE("real-valued tasks use quadratic digit-distance costs") {
  const std::size_t m = 10;
  CostMatrix sl = make_task(TaskSpec::small_large(), m);
  CHECK(sl.sparsity() * 90.0 == doctest::Approx(45));
  CHECK(sl.at(0, 9) == 81.0);
  CHECK(sl.at(1, 3) == 4.0);
  CHECK(sl.at(3, 1) == 0.0);
  CHECK(sl.at(4, 4) == 0.0);

  CostMatrix ls = make_task(TaskSpec::large_small(), m);
  CHECK(ls.sparsity() * 90.0 == doctest::Approx(45));
  CHECK(ls.at(9, 0) == 81.0);
  CHECK(ls.at(3, 1) == 4.0);
  CHECK(ls.at(1, 3) == 0.0);

  CostMatrix var = make_task(TaskSpec::small_large_variant(), m);
  CHECK(var.sparsity() == doctest::Approx(1.0));
  CHECK(var.at(3, 1) == 0.1);
  CHECK(var.at(1, 3) == 4.0);
  CHECK(var.at(5, 5) == 0.0);

  TaskSpec veh;
  veh.kind = TaskSpec::Kind::GroupWeighted;
  veh.seeds = {0, 1, 8, 9};
  veh.in_group_cost = 1.0;
  veh.out_group_cost = 10.0;
  CostMatrix vw = make_task(veh, m);
  CHECK(vw.sparsity() * 90.0 == doctest::Approx(36));
  CHECK(vw.at(0, 1) == 1.0);
  CHECK(vw.at(0, 2) == 10.0);
  CHECK(vw.at(9, 8) == 1.0);
  for (std::size_t j = 0; j < m; ++j) CHECK(vw.at(2, j) == 0.0);
}

TEST_CASE("random pair tasks are seeded draws without replacement") {
  const std::size_t m = 10;
  CostMatrix a = make_task(TaskSpec::random_pairs(10, 5), m);
  CostMatrix b = make_task(TaskSpec::random_pairs(10, 5), m);
  CHECK(a.entries == b.entries);

  CostMatrix c = make_task(TaskSpec::random_pairs(10, 6), m);
  CHECK(a.entries != c.entries);

  CHECK(a.nonzero_count() == 10);
  for (std::size_t i = 0; i < m; ++i) CHECK(a.at(i, i) == 0.0);

  CostMatrix full = make_task(TaskSpec::random_pairs(90, 3), m);
  CHECK(full.nonzero_count() == 90);
}

TEST_CASE("task construction rejects invalid classes") {
  CHECK_THROWS_AS(make_task(TaskSpec::single_pair(3, 3), 10), std::invalid_argument);
  CHECK_THROWS_AS(make_task(TaskSpec::single_pair(0, 10), 10), std::invalid_argument);
  CHECK_THROWS_AS(make_task(TaskSpec::single_seed(12), 10), std::invalid_argument);
  CHECK_THROWS_AS(make_task(TaskSpec::random_pairs(91, 0), 10), std::invalid_argument);
  CHECK_THROWS_AS(make_task(TaskSpec::group({0}, {11}), 10), std::invalid_argument);
}

TEST_CASE("explicit pair lists combine pairs and whole seed rows") {
  TaskSpec spec;
  spec.kind = TaskSpec::Kind::Pairs;
  spec.pairs = {{0, 2}, {3, 1}};
  spec.seed_rows = {5};
  CostMatrix C = make_task(spec, 10);
  CHECK(C.at(0, 2) == 1.0);
  CHECK(C.at(3, 1) == 1.0);
  for (std::size_t j = 0; j < 10; ++j) CHECK(C.at(5, j) == (j == 5 ? 0.0 : 1.0));
  CHECK(C.nonzero_count() == 11);
}

TEST_CASE("cost matrix csv round-trips exactly") {
  CostMatrix C = make_task(TaskSpec::small_large(), 6);
  auto path = temp_csv("csrb_cost_roundtrip.csv", cost_matrix_to_csv(C));
  CostMatrix back = parse_cost_matrix(path.string());
  REQUIRE(back.m == C.m);
  CHECK(back.entries == C.entries);
  std::filesystem::remove(path);
}

TEST_CASE("cost matrix parser accepts a header row and flags bad content") {
  auto single = temp_csv("csrb_cost_single.csv",
                         "0,0,1\n"
                         "0,0,0\n"
                         "0,0,0\n");
  CostMatrix C = parse_cost_matrix(single.string());
  CHECK(C.nonzero_count() == 1);
  CHECK(C.at(0, 2) == 1.0);
  std::filesystem::remove(single);

  auto with_header = temp_csv("csrb_cost_header.csv",
                              "a,b\n"
                              "0,2\n"
                              "1,0\n");
  CostMatrix H = parse_cost_matrix(with_header.string());
  CHECK(H.m == 2);
  CHECK(H.at(0, 1) == 2.0);
  std::filesystem::remove(with_header);

  auto diag = temp_csv("csrb_cost_diag.csv", "0,1\n1,1\n");
  CHECK_THROWS_AS(parse_cost_matrix(diag.string()), DataError);
  std::filesystem::remove(diag);

  auto nonsquare = temp_csv("csrb_cost_shape.csv", "0,1,0\n1,0\n");
  CHECK_THROWS_AS(parse_cost_matrix(nonsquare.string()), DataError);
  std::filesystem::remove(nonsquare);

  auto negative = temp_csv("csrb_cost_neg.csv", "0,-1\n1,0\n");
  CHECK_THROWS_AS(parse_cost_matrix(negative.string()), DataError);
  std::filesystem::remove(negative);

  auto garbled = temp_csv("csrb_cost_text.csv", "0,1\n1,oops\n");
  CHECK_THROWS_AS(parse_cost_matrix(garbled.string()), DataError);
  std::filesystem::remove(garbled);

  CHECK_THROWS_AS(parse_cost_matrix("/nonexistent/cost.csv"), DataError);
}
