#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "restad/data.hpp"
#include "restad/errors.hpp"
#include "restad/init.hpp"
#include "restad/training.hpp"

using namespace restad;

namespace {

PointSet points(const std::vector<std::vector<double>>& rows) {
  PointSet p{rows.size(), rows[0].size(), {}};
  for (const auto& r : rows) p.values.insert(p.values.end(), r.begin(), r.end());
  return p;
}

std::vector<std::vector<double>> to_rows(const PointSet& p) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < p.rows; ++r) out.emplace_back(p.row(r).begin(), p.row(r).end());
  return out;
}

PointSet random_points(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  PointSet p{n, d, std::vector<double>(n * d)};
  for (double& v : p.values) v = nd(rng);
  return p;
}

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

TEST_SUITE("init") {
  TEST_CASE("random_init is deterministic per seed") {
    RbfLayer a = random_init(8, 4, 42), b = random_init(8, 4, 42), c = random_init(8, 4, 43);
    CHECK(std::equal(a.centers.values().begin(), a.centers.values().end(), b.centers.values().begin()));
    CHECK(a.gamma.item() == b.gamma.item());
    CHECK_FALSE(std::equal(a.centers.values().begin(), a.centers.values().end(), c.centers.values().begin()));
    CHECK(std::isfinite(a.gamma.item()));
    CHECK(a.centers.shape() == Shape{8, 4});
  }

  TEST_CASE("random_init moments for M=512, d_h=32") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      RbfLayer L = random_init(512, 32, seed);
      auto v = L.centers.values();
      double mu = 0.0;
      for (double x : v) mu += x;
      mu /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mu) * (x - mu);
      const double sd = std::sqrt(var / static_cast<double>(v.size()));
      CHECK(std::abs(mu) <= 0.05);
      CHECK(std::abs(sd - 1.0) <= 0.05);
    }
  }

  TEST_CASE("kmeans: M distinct points, M clusters") {
    PointSet p = points({{0, 0}, {1, 5}, {-2, 3}, {4, 4}});
    KMeansResult r = kmeans(p, 4);
    CHECK(r.inertia == 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto c = r.centers.row(r.assignments[i]);
      CHECK(c[0] == p.row(i)[0]);
      CHECK(c[1] == p.row(i)[1]);
    }
  }

  TEST_CASE("kmeans: 1-D two-cluster example matches the exhaustive partition oracle") {
    const std::vector<double> x{0, 0.1, 10, 10.1};
    double c0 = 0, c1 = 0;
    const double best = oracle::best_two_partition(x, &c0, &c1);
    CHECK(best == doctest::Approx(0.01).epsilon(1e-12));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      KMeansResult r = kmeans(points({{0}, {0.1}, {10}, {10.1}}), 2, {100, 1e-6, seed});
      double lo = std::min(r.centers.values[0], r.centers.values[1]);
      double hi = std::max(r.centers.values[0], r.centers.values[1]);
      CHECK(lo == doctest::Approx(c0).epsilon(1e-12));
      CHECK(hi == doctest::Approx(c1).epsilon(1e-12));
      CHECK(r.inertia == doctest::Approx(best).epsilon(1e-10));
    }
  }

  TEST_CASE("kmeans reaches the exhaustive optimum on small 1-D sets") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> ud(-5, 5);
    int optimal = 0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> x(8);
      for (double& v : x) v = ud(rng);
      // Two well-separated groups.
      for (std::size_t i = 4; i < 8; ++i) x[i] += 30.0;
      PointSet p{8, 1, x};
      KMeansResult r = kmeans(p, 2, {100, 1e-12, static_cast<std::uint64_t>(trial)});
      if (std::abs(r.inertia - oracle::best_two_partition(x)) < 1e-9) ++optimal;
    }
    CHECK(optimal == 50);
  }

  TEST_CASE("kmeans inertia trace is non-increasing and assignments are nearest") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      PointSet p = random_points(60, 3, rng);
      KMeansResult r = kmeans(p, 5, {100, 1e-9, static_cast<std::uint64_t>(trial)});
      for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1]);
      CHECK(r.iterations_run == r.inertia_trace.size());
      double total = 0.0;
      for (std::size_t i = 0; i < p.rows; ++i) {
        const double own = sqdist(p.row(i), r.centers.row(r.assignments[i]));
        total += own;
        for (std::size_t m = 0; m < 5; ++m) CHECK(own <= sqdist(p.row(i), r.centers.row(m)));
      }
      CHECK(total == doctest::Approx(r.inertia).epsilon(1e-12));
    }
  }

  TEST_CASE("kmeans errors and determinism") {
    CHECK_THROWS_AS(kmeans(points({{0}, {1}}), 3), ContractError);
    std::mt19937_64 rng(5);
    PointSet p = random_points(40, 2, rng);
    KMeansResult a = kmeans(p, 4, {100, 1e-6, 9}), b = kmeans(p, 4, {100, 1e-6, 9});
    CHECK(a.centers.values == b.centers.values);
    CHECK(a.assignments == b.assignments);
  }

  TEST_CASE("kmeans with duplicate points still returns M centers") {
    PointSet p = points({{1, 1}, {1, 1}, {1, 1}, {2, 2}, {2, 2}});
    KMeansResult r = kmeans(p, 3);
    CHECK(r.centers.rows == 3);
    CHECK(r.inertia == doctest::Approx(0.0));
  }

  TEST_CASE("sigma_tilde examples") {
    CHECK(sigma_tilde(points({{1, 2}, {3, 4}}), points({{1, 2}, {3, 4}})) == 0.0);
    CHECK(sigma_tilde(points({{1, 0}, {0, std::sqrt(3.0)}}), points({{0, 0}})) == doctest::Approx(2.0).epsilon(1e-15));
    // A duplicate at the mean distance leaves the mean unchanged; elsewhere it moves.
    PointSet p = points({{1, 0}, {0, std::sqrt(3.0)}, {std::sqrt(2.0), 0}});
    CHECK(sigma_tilde(p, points({{0, 0}})) == doctest::Approx(2.0).epsilon(1e-15));
    PointSet q = points({{1, 0}, {0, std::sqrt(3.0)}, {1, 0}});
    CHECK(sigma_tilde(q, points({{0, 0}})) != doctest::Approx(2.0));
  }

  TEST_CASE("sigma_tilde equals the double-loop oracle") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      PointSet p = random_points(50, 4, rng);
      PointSet c = random_points(6, 4, rng);
      CHECK(std::abs(sigma_tilde(p, c) - oracle::sigma_tilde(to_rows(p), to_rows(c))) <= 1e-12);
    }
  }

  TEST_CASE("gamma from sigma") {
    CHECK(gamma_from_sigma(2.0, GammaInitMode::paper) == 0.5);
    CHECK(std::exp(gamma_from_sigma(2.0, GammaInitMode::paper)) == doctest::Approx(1.6487212707).epsilon(1e-10));
    CHECK(std::exp(gamma_from_sigma(2.0, GammaInitMode::log_consistent)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(gamma_from_sigma(0.0, GammaInitMode::paper), InitError);
  }

  TEST_CASE("kmeans_init on an untrained base model") {
    ModelConfig c;
    c.input_dim = 2;
    c.window_len = 20;
    c.d_model = 8;
    c.n_heads = 2;
    c.ffn_dim = 16;
    c.rbf_enabled = false;
    RestadModel base(c);
    SynthSpec spec;
    spec.train_length = 200;
    spec.test_length = 200;
    RawDataset raw = normalize(generate_synthetic(spec));
    WindowedDataset w = windowize(raw.train, 20);
    KMeansInitOptions opts;
    opts.n_centers = 4;
    opts.rbf_position = 2;
    RbfLayer L = kmeans_init(base, w.windows, opts);
    CHECK(L.centers.shape() == Shape{4, 8});
    CHECK(std::isfinite(L.gamma.item()));

    // Centers lie in the bounding box of the latents.
    PointSet lat = extract_latents(base, w.windows, 2);
    CHECK(lat.rows == 200);
    for (std::size_t k = 0; k < 8; ++k) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t r = 0; r < lat.rows; ++r) {
        lo = std::min(lo, lat.row(r)[k]);
        hi = std::max(hi, lat.row(r)[k]);
      }
      for (std::size_t m = 0; m < 4; ++m) {
        CHECK(L.centers.values()[m * 8 + k] >= lo);
        CHECK(L.centers.values()[m * 8 + k] <= hi);
      }
    }
    c.rbf_enabled = true;
    CHECK_THROWS_AS(kmeans_init(RestadModel(c), w.windows, opts), ContractError);
  }

  TEST_CASE("scaling latents by s scales sigma by s^2") {
    std::mt19937_64 rng(31);
    PointSet p = random_points(40, 3, rng);
    KMeansResult r = kmeans(p, 3, {100, 1e-9, 0});
    const double s1 = sigma_tilde(p, r.centers);
    PointSet p2 = p, c2 = r.centers;
    for (double& v : p2.values) v *= 3.0;
    for (double& v : c2.values) v *= 3.0;
    CHECK(sigma_tilde(p2, c2) == doctest::Approx(9.0 * s1).epsilon(1e-12));
    CHECK(gamma_from_sigma(9.0 * s1, GammaInitMode::paper) ==
          doctest::Approx(gamma_from_sigma(s1, GammaInitMode::paper) / 9.0).epsilon(1e-12));
  }
}
