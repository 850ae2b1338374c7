#pragma once

// Brute-force reference implementations used only by the tests. Each one is
// written from the definition, without sharing code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "restad/model.hpp"
#include "restad/tensor.hpp"

namespace oracle {

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ordered
/// correctly, ties counted one half.
inline double mann_whitney(const std::vector<double>& s, const std::vector<int>& y) {
  double hits = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) hits += 1.0;
      if (s[i] == s[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

/// Weighted ROC area from explicit curve points: thresholds at every distinct
/// score, descending, with a trapezoid between consecutive points.
inline double weighted_roc(const std::vector<double>& s, const std::vector<double>& w) {
  std::vector<double> th(s);
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  double P = 0.0, N = 0.0;
  for (double v : w) {
    P += v;
    N += 1.0 - v;
  }
  double area = 0.0, px = 0.0, py = 0.0;
  for (double t : th) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        tp += w[i];
        fp += 1.0 - w[i];
      }
    }
    const double x = fp / N, y = tp / P;
    area += (x - px) * (y + py) / 2.0;
    px = x;
    py = y;
  }
  return area;
}

/// PR area from explicit curve points: precision held flat from recall 0 to
/// the first point, trapezoids between successive recall levels.
inline double weighted_pr(const std::vector<double>& s, const std::vector<double>& w) {
  std::vector<double> th(s);
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  double P = 0.0;
  for (double v : w) P += v;
  double area = 0.0, pr = -1.0, pp = 0.0;
  for (double t : th) {
    double tp = 0.0, all = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        tp += w[i];
        all += 1.0;
      }
    }
    const double r = tp / P, p = tp / all;
    if (r == 0.0) continue;  // no operating point until some positive mass is recovered
    if (pr < 0.0) {
      area += r * p;
    } else if (r > pr) {
      area += (r - pr) * (p + pp) / 2.0;
    }
    if (pr < 0.0 || r > pr) {
      pr = r;
      pp = p;
    }
  }
  return area;
}

/// Smoothed labels for buffer width `l`, materialized point by point: the
/// weight at distance j from the nearest anomalous point is 1 - j/(l+1).
inline std::vector<double> smoothed_labels(const std::vector<int>& y, std::size_t l) {
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] != 1) continue;
      const std::size_t j = i > k ? i - k : k - i;
      if (j <= l) out[i] = std::max(out[i], 1.0 - static_cast<double>(j) / static_cast<double>(l + 1));
    }
  }
  return out;
}

inline double vus_roc(const std::vector<double>& s, const std::vector<int>& y, std::size_t L) {
  double total = 0.0;
  for (std::size_t l = 0; l <= L; ++l) total += weighted_roc(s, smoothed_labels(y, l));
  return total / static_cast<double>(L + 1);
}

inline double vus_pr(const std::vector<double>& s, const std::vector<int>& y, std::size_t L) {
  double total = 0.0;
  for (std::size_t l = 0; l <= L; ++l) total += weighted_pr(s, smoothed_labels(y, l));
  return total / static_cast<double>(L + 1);
}

/// Mean squared distance to the nearest center, by explicit double loop.
inline double sigma_tilde(const std::vector<std::vector<double>>& pts, const std::vector<std::vector<double>>& ctr) {
  double total = 0.0;
  for (const auto& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : ctr) {
      double d = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) d += (p[k] - c[k]) * (p[k] - c[k]);
      best = std::min(best, d);
    }
    total += best;
  }
  return total / static_cast<double>(pts.size());
}

/// Optimal 2-means inertia of 1-D points by trying every bipartition.
inline double best_two_partition(const std::vector<double>& x, double* c0 = nullptr, double* c1 = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = x.size();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    double s[2] = {0, 0};
    double cnt[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const int g = (mask >> i) & 1;
      s[g] += x[i];
      cnt[g] += 1;
    }
    const double m[2] = {s[0] / cnt[0], s[1] / cnt[1]};
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int g = (mask >> i) & 1;
      inertia += (x[i] - m[g]) * (x[i] - m[g]);
    }
    if (inertia < best) {
      best = inertia;
      if (c0) *c0 = std::min(m[0], m[1]);
      if (c1) *c1 = std::max(m[0], m[1]);
    }
  }
  return best;
}

/// Layer norm of one row, scalar loop.
inline std::vector<double> layer_norm_row(const std::vector<double>& x, const double* g, const double* b,
                                          double eps = 1e-5) {
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / std::sqrt(var + eps) * g[i] + b[i];
  return out;
}

/// Multi-head self-attention of a single sequence h[T][w] with scalar loops,
/// reading the weights straight out of the layer's tensors.
inline std::vector<std::vector<double>> attention(const restad::EncoderLayer& L,
                                                  const std::vector<std::vector<double>>& h) {
  const std::size_t T = h.size(), w = h[0].size(), H = L.n_heads, dk = w / H;
  auto proj = [&](const restad::Linear& lin, const std::vector<double>& x) {
    auto W = lin.weight.values();
    auto b = lin.bias.values();
    const std::size_t out = lin.weight.dim(1);
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * W[i * out + o];
      y[o] = acc;
    }
    return y;
  };
  std::vector<std::vector<double>> q(T), k(T), v(T);
  for (std::size_t t = 0; t < T; ++t) {
    q[t] = proj(L.query, h[t]);
    k[t] = proj(L.key, h[t]);
    v[t] = proj(L.value, h[t]);
  }
  std::vector<std::vector<double>> ctx(T, std::vector<double>(w, 0.0));
  for (std::size_t hd = 0; hd < H; ++hd) {
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> sc(T);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < T; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q[i][hd * dk + c] * k[j][hd * dk + c];
        sc[j] = dot / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, sc[j]);
      }
      double z = 0.0;
      for (double& s : sc) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t j = 0; j < T; ++j) {
        for (std::size_t c = 0; c < dk; ++c) ctx[i][hd * dk + c] += sc[j] / z * v[j][hd * dk + c];
      }
    }
  }
  std::vector<std::vector<double>> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = proj(L.attn_out, ctx[t]);
  return out;
}

/// Central finite-difference check of d loss / d p for every entry of every
/// tensor in `params`. Returns the largest relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double max_grad_error(const std::function<restad::Tensor()>& loss_fn, std::vector<restad::Tensor> params,
                             double h = 1e-5, double floor = 1e-6, std::size_t max_entries = 0) {
  for (auto& p : params) p.zero_grad();
  const double loss = loss_fn().item();
  restad::backward(loss_fn());
  // A central difference resolves a gradient only to about eps*|L|/h. Entries
  // smaller than 1e5 times that level are measured against it instead of
  // their own magnitude (e.g. key biases, whose true gradient is zero).
  constexpr double kResolve = 1e5;
  const double resolution = std::numeric_limits<double>::epsilon() * std::abs(loss) / h;
  const double denom_floor = std::max(floor, kResolve * resolution);
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto v = p.mutable_values();
    const std::size_t n = max_entries ? std::min(max_entries, v.size()) : v.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double orig = v[i];
      double lp, lm;
      {
        restad::NoGradGuard g;
        v[i] = orig + h;
        lp = loss_fn().item();
        v[i] = orig - h;
        lm = loss_fn().item();
        v[i] = orig;
      }
      const double numeric = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), denom_floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

inline restad::Tensor random_tensor(restad::Shape shape, std::mt19937_64& rng, double scale = 1.0,
                                    bool requires_grad = true) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(restad::shape_numel(shape));
  for (double& x : v) x = nd(rng);
  return restad::Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace oracle
