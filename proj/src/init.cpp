#include "restad/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "restad/errors.hpp"

namespace restad {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

struct Nearest {
  std::size_t index;
  double distance;
};

Nearest nearest_center(std::span<const double> point, const PointSet& centers) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centers.rows; ++c) {
    const double d = sq_dist(point, centers.row(c));
    if (d < best.distance) best = {c, d};
  }
  return best;
}

void copy_row(const PointSet& from, std::size_t r, PointSet& to, std::size_t c) {
  std::copy_n(from.values.begin() + r * from.cols, from.cols, to.values.begin() + c * to.cols);
}

PointSet kmeanspp_seeds(const PointSet& points, std::size_t k, std::mt19937_64& rng) {
  PointSet centers{k, points.cols, std::vector<double>(k * points.cols)};
  std::uniform_int_distribution<std::size_t> pick(0, points.rows - 1);
  copy_row(points, pick(rng), centers, 0);
  std::vector<double> d2(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) d2[i] = sq_dist(points.row(i), centers.row(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      chosen = points.rows - 1;
      for (std::size_t i = 0; i < points.rows; ++i) {
        running += d2[i];
        if (running > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    copy_row(points, chosen, centers, c);
    for (std::size_t i = 0; i < points.rows; ++i) d2[i] = std::min(d2[i], sq_dist(points.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace

RbfLayer random_init(std::size_t n_centers, std::size_t width, std::uint64_t seed) {
  if (n_centers == 0 || width == 0) throw ContractError("random_init: n_centers and width must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(n_centers * width);
  for (double& v : centers) v = normal(rng);
  const double gamma = normal(rng);
  return RbfLayer{Tensor({n_centers, width}, std::move(centers), true), Tensor::scalar(gamma, true)};
}

KMeansResult kmeans(const PointSet& points, std::size_t n_clusters, const KMeansOptions& options) {
  if (n_clusters == 0) throw ContractError("kmeans: number of clusters must be positive");
  if (points.rows < n_clusters) {
    throw ContractError("kmeans: need at least " + std::to_string(n_clusters) + " points, got " +
                        std::to_string(points.rows));
  }
  if (points.values.size() != points.rows * points.cols) throw DimensionError("kmeans: point buffer size mismatch");

  std::mt19937_64 rng(options.seed);
  KMeansResult result;
  result.centers = kmeanspp_seeds(points, n_clusters, rng);
  result.assignments.assign(points.rows, 0);
  std::vector<double> dist(points.rows);
  const std::size_t dim = points.cols;

  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, options.max_iter); ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
      const Nearest n = nearest_center(points.row(i), result.centers);
      result.assignments[i] = n.index;
      dist[i] = n.distance;
      inertia += n.distance;
    }
    const bool converged = !result.inertia_trace.empty() && result.inertia_trace.back() - inertia < options.tol;
    result.inertia_trace.push_back(inertia);
    result.inertia = inertia;
    result.iterations_run = iter + 1;
    if (converged || iter + 1 >= options.max_iter) break;

    std::vector<double> sums(n_clusters * dim, 0.0);
    std::vector<std::size_t> counts(n_clusters, 0);
    for (std::size_t i = 0; i < points.rows; ++i) {
      const std::size_t c = result.assignments[i];
      ++counts[c];
      auto p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += p[j];
    }
    std::vector<bool> taken(points.rows, false);
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) {
          result.centers.values[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the point farthest from its own center.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.rows; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far = i;
          far_d = dist[i];
        }
      }
      taken[far] = true;
      copy_row(points, far, result.centers, c);
    }
  }
  return result;
}

double sigma_tilde(const PointSet& points, const PointSet& centers) {
  if (points.cols != centers.cols) {
    throw DimensionError("sigma_tilde: points have width " + std::to_string(points.cols) + ", centers " +
                         std::to_string(centers.cols));
  }
  if (points.rows == 0 || centers.rows == 0) throw ContractError("sigma_tilde: empty points or centers");
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) total += nearest_center(points.row(i), centers).distance;
  return total / static_cast<double>(points.rows);
}

double gamma_from_sigma(double sigma_sq, GammaInitMode mode) {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw InitError("sigma^2 = " + std::to_string(sigma_sq) + " is degenerate; latents coincide with their centers");
  }
  return mode == GammaInitMode::paper ? 1.0 / sigma_sq : -std::log(sigma_sq);
}

PointSet extract_latents(const RestadModel& model, const Tensor& windows, std::size_t layer, std::size_t batch_size) {
  if (windows.rank() != 3) throw DimensionError("extract_latents: windows must be [N, T, d]");
  NoGradGuard no_grad;
  const std::size_t n = windows.dim(0);
  const std::size_t width = model.config().layer_width(layer == 0 ? 0 : layer - 1);
  PointSet out{0, width, {}};
  out.values.reserve(n * windows.dim(1) * width);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(n, begin + batch_size); ++i) idx.push_back(i);
    Tensor h = model.hidden_at(gather_rows(windows, idx), layer);
    auto hv = h.values();
    out.values.insert(out.values.end(), hv.begin(), hv.end());
  }
  out.rows = out.values.size() / width;
  return out;
}

RbfLayer kmeans_init(const RestadModel& base_model, const Tensor& windows, const KMeansInitOptions& options) {
  const ModelConfig& cfg = base_model.config();
  if (cfg.rbf_enabled) throw ContractError("kmeans_init: base model must not contain an RBF layer");
  if (options.rbf_position < 1 || options.rbf_position > cfg.n_layers) {
    throw ContractError("kmeans_init: rbf_position " + std::to_string(options.rbf_position) + " outside [1, " +
                        std::to_string(cfg.n_layers) + "]");
  }
  PointSet latents = extract_latents(base_model, windows, options.rbf_position, options.batch_size);
  if (latents.rows > options.max_points) {
    std::vector<std::size_t> order(latents.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(options.kmeans.seed ^ 0x5bd1e995ull);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(options.max_points);
    std::sort(order.begin(), order.end());
    PointSet sub{order.size(), latents.cols, {}};
    sub.values.reserve(order.size() * latents.cols);
    for (std::size_t r : order) {
      auto row = latents.row(r);
      sub.values.insert(sub.values.end(), row.begin(), row.end());
    }
    latents = std::move(sub);
  }
  if (latents.rows < options.n_centers) {
    throw InitError("kmeans_init: " + std::to_string(latents.rows) + " latent points cannot seed " +
                    std::to_string(options.n_centers) + " centers");
  }
  KMeansResult km = kmeans(latents, options.n_centers, options.kmeans);
  const double sigma_sq = sigma_tilde(latents, km.centers);
  const double gamma = gamma_from_sigma(sigma_sq, options.gamma_mode);
  return RbfLayer{Tensor({km.centers.rows, km.centers.cols}, std::move(km.centers.values), true),
                  Tensor::scalar(gamma, true)};
}

}  // namespace restad
