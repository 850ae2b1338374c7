#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "restad/errors.hpp"
#include "restad/metrics.hpp"

using namespace restad;

namespace {

LabeledScores random_instance(std::mt19937_64& rng, std::size_t max_n = 64) {
  std::uniform_int_distribution<std::size_t> nd(2, max_n);
  const std::size_t n = nd(rng);
  std::uniform_int_distribution<int> level(0, 6);  // few levels, many ties
  std::bernoulli_distribution pos(0.3);
  LabeledScores ls;
  for (std::size_t i = 0; i < n; ++i) {
    ls.scores.push_back(level(rng) / 6.0);
    ls.labels.push_back(pos(rng) ? 1 : 0);
  }
  ls.labels[0] = 1;
  ls.labels[1] = 0;
  return ls;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("quantile_threshold examples") {
    std::vector<double> s(1000);
    for (std::size_t i = 0; i < 1000; ++i) s[i] = std::sin(static_cast<double>(i));
    CHECK(quantile_threshold(s, 0.01).flagged_count == 10);

    Threshold t = quantile_threshold(std::vector<double>{0.1, 0.9, 0.5, 0.7}, 0.5);
    CHECK(t.flagged == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(t.delta == 0.5);

    Threshold eq = quantile_threshold(std::vector<double>(10, 3.0), 0.3);
    CHECK(eq.flagged == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0, 0, 0, 0, 0});

    CHECK_THROWS_AS(quantile_threshold(s, 0.0), ContractError);
    CHECK_THROWS_AS(quantile_threshold(s, 1.0), ContractError);
  }

  TEST_CASE("quantile_threshold flags exactly floor(r n) across tie patterns") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
      std::uniform_int_distribution<std::size_t> nd(1, 500);
      std::uniform_int_distribution<int> lv(0, 1 + trial % 20);
      std::uniform_real_distribution<double> rd(0.001, 0.999);
      const std::size_t n = nd(rng);
      const double r = rd(rng);
      std::vector<double> s(n);
      for (double& v : s) v = lv(rng);
      Threshold t = quantile_threshold(s, r);
      std::size_t count = 0;
      for (auto f : t.flagged) count += f;
      CHECK(count == static_cast<std::size_t>(std::floor(r * static_cast<double>(n))));
      CHECK(t.flagged_count == count);
      // Every flagged score is >= every unflagged score.
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < n; ++i) {
        if (t.flagged[i]) {
          lo = std::min(lo, s[i]);
        } else {
          hi = std::max(hi, s[i]);
        }
      }
      if (count > 0 && count < n) CHECK(lo >= hi);
    }
  }

  TEST_CASE("f1 examples") {
    LabeledScores ls{{0.9, 0.1, 0.8, 0.2}, {1, 0, 1, 0}};
    CHECK(f1_at_threshold(ls, 0.5).f1 == 1.0);
    CHECK(f1_at_threshold(ls, 0.95).f1 == 0.0);
    F1Result r = f1_from_predictions(std::vector<int>{1, 1, 0, 0}, std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(r.true_positives == 1);
    CHECK(r.false_positives == 1);
    CHECK(r.false_negatives == 1);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == 0.5);
  }

  TEST_CASE("f1 applies no point adjustment") {
    std::vector<int> y(20, 0);
    for (std::size_t i = 5; i < 15; ++i) y[i] = 1;
    std::vector<std::uint8_t> p(20, 0);
    p[7] = 1;
    F1Result r = f1_from_predictions(y, p);
    CHECK(r.true_positives == 1);
    CHECK(r.false_negatives == 9);
  }

  TEST_CASE("auc_roc examples") {
    CHECK(auc_roc({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}}) == 0.75);
    CHECK(auc_roc({{0, 0, 1, 1}, {0, 0, 1, 1}}) == 1.0);
    CHECK(auc_roc({{0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}}) == 0.5);
    CHECK_THROWS_AS(auc_roc({{0.1, 0.2}, {1, 1}}), UndefinedMetricError);
    CHECK_THROWS_AS(auc_pr({{0.1, 0.2}, {0, 0}}), UndefinedMetricError);
  }

  TEST_CASE("auc_roc matches the Mann-Whitney oracle on 1000 instances") {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      LabeledScores ls = random_instance(rng);
      worst = std::max(worst, std::abs(auc_roc(ls) - oracle::mann_whitney(ls.scores, ls.labels)));
    }
    CHECK(worst <= 1e-9);
  }

  TEST_CASE("auc_pr examples") {
    CHECK(auc_pr({{0, 0, 1, 1}, {0, 0, 1, 1}}) == 1.0);
    CHECK(auc_pr({{0.9, 0.8, 0.7}, {1, 0, 1}}) == doctest::Approx(11.0 / 12.0).epsilon(1e-15));
  }

  TEST_CASE("auc_pr of random scores approaches the positive rate") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ud;
    std::bernoulli_distribution pos(0.1);
    LabeledScores ls;
    for (int i = 0; i < 10000; ++i) {
      ls.scores.push_back(ud(rng));
      ls.labels.push_back(pos(rng));
    }
    double p = 0.0;
    for (int y : ls.labels) p += y;
    p /= 10000.0;
    CHECK(std::abs(auc_pr(ls) - p) <= 0.05);
  }

  TEST_CASE("auc_pr matches the curve-point oracle") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 500; ++trial) {
      LabeledScores ls = random_instance(rng);
      std::vector<double> w(ls.labels.begin(), ls.labels.end());
      CHECK(std::abs(auc_pr(ls) - oracle::weighted_pr(ls.scores, w)) <= 1e-12);
      CHECK(std::abs(auc_roc(ls) - oracle::weighted_roc(ls.scores, w)) <= 1e-12);
    }
  }

  TEST_CASE("AUCs are invariant under strictly monotone transforms") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      LabeledScores ls = random_instance(rng);
      LabeledScores t = ls;
      for (double& v : t.scores) v = std::exp(3.0 * v) - 7.0;
      CHECK(auc_roc(ls) == auc_roc(t));
      CHECK(auc_pr(ls) == auc_pr(t));
    }
  }

  TEST_CASE("buffered labels decay linearly") {
    std::vector<int> y(12, 0);
    y[5] = y[6] = 1;
    auto b = buffered_labels(y, 2);
    const double third = 1.0 - 2.0 / 3.0;
    const std::vector<double> expect{0, 0, 0, third, 2.0 / 3.0, 1, 1, 2.0 / 3.0, third, 0, 0, 0};
    for (std::size_t i = 0; i < 12; ++i) CHECK(b[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    auto b0 = buffered_labels(y, 0);
    for (std::size_t i = 0; i < 12; ++i) CHECK(b0[i] == y[i]);
  }

  TEST_CASE("vus at L=0 equals the AUC") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
      LabeledScores ls = random_instance(rng);
      CHECK(std::abs(vus(ls, Curve::roc, 0) - auc_roc(ls)) <= 1e-12);
      CHECK(std::abs(vus(ls, Curve::pr, 0) - auc_pr(ls)) <= 1e-12);
    }
  }

  TEST_CASE("vus at L=2 on a 20-point fixture matches the slice oracle") {
    const std::vector<double> s{0.1, 0.3, 0.2, 0.05, 0.4, 0.6, 0.7, 0.9, 0.8, 0.65,
                                0.3, 0.2, 0.25, 0.1, 0.5, 0.15, 0.05, 0.3, 0.2, 0.1};
    std::vector<int> y(20, 0);
    for (std::size_t i = 6; i < 10; ++i) y[i] = 1;
    LabeledScores ls{s, y};
    CHECK(std::abs(vus(ls, Curve::roc, 2) - oracle::vus_roc(s, y, 2)) <= 1e-9);
    CHECK(std::abs(vus(ls, Curve::pr, 2) - oracle::vus_pr(s, y, 2)) <= 1e-9);
  }

  TEST_CASE("vus matches the slice oracle on random instances") {
    std::mt19937_64 rng(57);
    for (int trial = 0; trial < 200; ++trial) {
      LabeledScores ls = random_instance(rng, 40);
      const std::size_t L = trial % 5;
      CHECK(std::abs(vus(ls, Curve::roc, L) - oracle::vus_roc(ls.scores, ls.labels, L)) <= 1e-9);
      CHECK(std::abs(vus(ls, Curve::pr, L) - oracle::vus_pr(ls.scores, ls.labels, L)) <= 1e-9);
    }
  }

  TEST_CASE("raising scores next to an anomaly never lowers vus") {
    std::vector<double> s(30, 0.1);
    std::vector<int> y(30, 0);
    for (std::size_t i = 12; i < 16; ++i) {
      y[i] = 1;
      s[i] = 0.9;
    }
    s[3] = 0.5;
    const double before = vus({s, y}, Curve::roc, 3);
    s[16] = 0.6;
    s[11] = 0.6;
    CHECK(vus({s, y}, Curve::roc, 3) >= before);
  }

  TEST_CASE("evaluate: perfect scores and JSON round trip") {
    std::vector<int> y(200, 0);
    for (std::size_t i = 50; i < 52; ++i) y[i] = 1;
    std::vector<double> s(y.begin(), y.end());
    EvalReport r = evaluate({s, y}, 0.01, 4);
    CHECK(r.auc_roc == 1.0);
    CHECK(r.auc_pr == 1.0);
    CHECK(r.n_flagged == 2);
    CHECK(r.f1 == 1.0);
    for (double v : {r.f1, r.precision, r.recall, r.auc_roc, r.auc_pr, r.vus_roc, r.vus_pr}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    EvalReport back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
    CHECK(back == r);
    CHECK(r.to_json().at("schema_version") == 1);
    const std::string table = r.to_table("RESTAD");
    for (const char* col : {"F1-Score", "AUC-ROC", "AUC-PR", "VUS-ROC", "VUS-PR"}) {
      CHECK(table.find(col) != std::string::npos);
    }
    // r = 2% flags 4 points against 2 anomalies.
    CHECK(evaluate({s, y}, 0.02, 4).f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("evaluate random reports stay in range") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 100; ++trial) {
      LabeledScores ls = random_instance(rng);
      EvalReport r = evaluate(ls, 0.2, 3);
      for (double v : {r.f1, r.precision, r.recall, r.auc_roc, r.auc_pr, r.vus_roc, r.vus_pr}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}
