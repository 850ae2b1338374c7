#pragma once

#include <cstdint>
#include <vector>

#include "restad/model.hpp"

namespace restad {

/// Row-major point cloud, one point per row.
struct PointSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

/// Centers and gamma drawn i.i.d. from N(0, 1), deterministic per seed.
RbfLayer random_init(std::size_t n_centers, std::size_t width, std::uint64_t seed);

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  PointSet centers;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  /// Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_trace;
};

/// Lloyd iterations from k-means++ seeds. A cluster that empties is re-seeded
/// at the point farthest from its current center. Ties go to the lower index.
KMeansResult kmeans(const PointSet& points, std::size_t n_clusters, const KMeansOptions& options = {});

/// Mean over points of the squared distance to the nearest center.
double sigma_tilde(const PointSet& points, const PointSet& centers);

enum class GammaInitMode {
  paper,           // gamma = 1 / sigma^2, effective scale e^(1/sigma^2)
  log_consistent,  // gamma = ln(1 / sigma^2), effective scale 1/sigma^2
};

double gamma_from_sigma(double sigma_sq, GammaInitMode mode);

struct KMeansInitOptions {
  std::size_t n_centers = 32;
  std::size_t rbf_position = 2;
  GammaInitMode gamma_mode = GammaInitMode::paper;
  KMeansOptions kmeans;
  std::size_t max_points = 100000;
  std::size_t batch_size = 32;
};

/// Hidden states of `model` after `layer` encoder layers for every time point
/// of every window in `windows` [N, T, d], pooled into one point set.
PointSet extract_latents(const RestadModel& model, const Tensor& windows, std::size_t layer,
                         std::size_t batch_size = 32);

/// Pools base-model latents at the RBF position, clusters them, and sets the
/// centers to the cluster means and gamma from their spread.
/// Throws InitError when the latents are degenerate (sigma^2 == 0).
RbfLayer kmeans_init(const RestadModel& base_model, const Tensor& windows, const KMeansInitOptions& options);

}  // namespace restad
