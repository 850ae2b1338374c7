#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "restad/errors.hpp"
#include "restad/metrics.hpp"
#include "restad/scoring.hpp"

using namespace restad;

TEST_SUITE("scoring") {
  TEST_CASE("reconstruction_error examples") {
    Tensor x({1, 2, 2}, {3, 4, 1, 1});
    auto e = reconstruction_error(x, Tensor::zeros({1, 2, 2}));
    CHECK(e == std::vector<double>{25, 2});
    CHECK(reconstruction_error(x, x) == std::vector<double>{0, 0});
    Tensor swapped({1, 2, 2}, {4, 3, 1, 1});
    CHECK(reconstruction_error(swapped, Tensor::zeros({1, 2, 2})) == e);
    CHECK_THROWS_AS(reconstruction_error(x, Tensor::zeros({1, 2, 3})), ContractError);
  }

  TEST_CASE("dissimilarity examples") {
    CHECK(dissimilarity(Tensor({1, 1, 3}, {1, 1, 1})) == std::vector<double>{0});
    auto e = dissimilarity(Tensor({1, 1, 2}, {1, std::exp(-1.0)}));
    CHECK(e[0] == doctest::Approx(0.3160603).epsilon(1e-7));
    auto p = dissimilarity(Tensor({1, 1, 2}, {std::exp(-1.0), 1}));
    CHECK(p[0] == e[0]);
  }

  TEST_CASE("minmax examples") {
    CHECK(minmax(std::vector<double>{2, 4, 6}).values == std::vector<double>{0, 0.5, 1});
    CHECK(minmax(std::vector<double>{5, 5, 5}).values == std::vector<double>{0, 0, 0});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> v(50);
    for (double& x : v) x = nd(rng);
    auto once = minmax(v).values;
    CHECK(minmax(once).values == once);
    CHECK_THROWS_AS(minmax(std::vector<double>{}), ContractError);
  }

  TEST_CASE("similarities below machine epsilon keep their order") {
    const std::vector<double> a{1e-40, 2e-40, 3e-40};
    const std::vector<double> eps_s{1.0 - a[0], 1.0 - a[1], 1.0 - a[2]};
    CHECK(eps_s == std::vector<double>{1, 1, 1});
    CHECK(minmax(eps_s).values == std::vector<double>{0, 0, 0});
    auto n = minmax_complement(a);
    CHECK(n.values[0] == 1.0);
    CHECK(n.values[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(n.values[2] == 0.0);
    const std::vector<double> r{0, 1, 1};
    CHECK(composite_score(r, eps_s, Criterion::s_only, a).composite == n.values);

    // Agrees with the direct form whenever 1 - a is well resolved.
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ud(0.05, 0.95);
    std::vector<double> b(30), c(30);
    for (std::size_t i = 0; i < 30; ++i) {
      b[i] = ud(rng);
      c[i] = 1.0 - b[i];
    }
    auto direct = minmax(c).values, comp = minmax_complement(b).values;
    for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(direct[i] - comp[i]) <= 1e-14);
  }

  TEST_CASE("composite criteria by hand") {
    const std::vector<double> r{0, 1}, s{1, 0};
    CHECK(composite_score(r, s, Criterion::r_times_s).composite == std::vector<double>{0, 0});
    CHECK(composite_score(r, s, Criterion::r_plus_s).composite == std::vector<double>{1, 1});
    CHECK(composite_score(r, s, Criterion::r_only).composite == std::vector<double>{0, 1});
    CHECK(composite_score(r, s, Criterion::s_only).composite == std::vector<double>{1, 0});
    CHECK(composite_score(r, {}, Criterion::r_only).composite == std::vector<double>{0, 1});
    CHECK_THROWS_AS(composite_score(r, {}, Criterion::r_times_s), ContractError);
  }

  TEST_CASE("composite properties on random channels") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> r(40), s(40);
      for (double& v : r) v = 10 * ud(rng) * ud(rng);
      for (double& v : s) v = ud(rng) * 0.999;
      ScoreTrace t = composite_score(r, s, Criterion::r_times_s);
      auto nr = minmax(r).values;
      for (std::size_t i = 0; i < 40; ++i) {
        CHECK(t.composite[i] >= 0.0);
        CHECK(t.composite[i] <= 1.0);
        if (nr[i] == 0.0) CHECK(t.composite[i] == 0.0);
      }
      // A point holding both maxima scores exactly 1.
      s[7] = *std::max_element(s.begin(), s.end());
      r[7] = *std::max_element(r.begin(), r.end());
      CHECK(composite_score(r, s, Criterion::r_times_s).composite[7] == 1.0);

      // Permuting points permutes scores.
      std::vector<std::size_t> perm(40);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> rp(40), sp(40);
      for (std::size_t i = 0; i < 40; ++i) {
        rp[i] = r[perm[i]];
        sp[i] = s[perm[i]];
      }
      auto a = composite_score(r, s, Criterion::r_plus_s).composite;
      auto b = composite_score(rp, sp, Criterion::r_plus_s).composite;
      for (std::size_t i = 0; i < 40; ++i) CHECK(b[i] == a[perm[i]]);
    }
  }

  TEST_CASE("r_only AUC equals AUC of raw eps_r") {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> ed(1.0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> r(60);
      std::vector<int> y(60, 0);
      for (double& v : r) v = std::round(ed(rng) * 20) / 7.0;
      for (std::size_t i = 0; i < 60; i += 7) y[i] = 1;
      auto t = composite_score(r, {}, Criterion::r_only);
      CHECK(auc_roc({t.composite, y}) == auc_roc({r, y}));
      CHECK(auc_pr({t.composite, y}) == auc_pr({r, y}));
    }
  }

  TEST_CASE("trace CSV layout") {
    ScoreTrace t = composite_score(std::vector<double>{1, 3}, std::vector<double>{0.5, 0.25}, Criterion::r_times_s);
    t.global_index = {100, 101};
    const auto path = std::filesystem::temp_directory_path() / "restad_trace_test.csv";
    std::vector<int> labels(102, 0);
    labels[101] = 1;
    write_trace_csv(t, labels, path);
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "global_time_index,eps_r,eps_s,composite,label\n100,1,0.5,0,0\n101,3,0.25,0,1\n");
    std::filesystem::remove(path);

    ScoreTrace r_only = composite_score(std::vector<double>{1, 3}, {}, Criterion::r_only);
    write_trace_csv(r_only, {}, path);
    std::ifstream in2(path);
    std::stringstream ss2;
    ss2 << in2.rdbuf();
    CHECK(ss2.str() == "global_time_index,eps_r,eps_s,composite,label\n0,1,,0,\n1,3,,1,\n");
    std::filesystem::remove(path);
  }

  TEST_CASE("criterion names round trip") {
    for (auto c : {Criterion::r_only, Criterion::s_only, Criterion::r_plus_s, Criterion::r_times_s}) {
      CHECK(criterion_from_string(to_string(c)) == c);
    }
    CHECK_THROWS_AS(criterion_from_string("r_minus_s"), ConfigError);
  }
}
