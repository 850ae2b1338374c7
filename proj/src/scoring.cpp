#include "restad/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "restad/errors.hpp"

namespace restad {

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::r_only:
      return "r_only";
    case Criterion::s_only:
      return "s_only";
    case Criterion::r_plus_s:
      return "r_plus_s";
    case Criterion::r_times_s:
      return "r_times_s";
  }
  return "unknown";
}

Criterion criterion_from_string(const std::string& s) {
  if (s == "r_only") return Criterion::r_only;
  if (s == "s_only") return Criterion::s_only;
  if (s == "r_plus_s") return Criterion::r_plus_s;
  if (s == "r_times_s") return Criterion::r_times_s;
  throw ConfigError("unknown criterion '" + s + "' (expected r_only, s_only, r_plus_s, r_times_s)");
}

bool needs_similarity(Criterion c) { return c != Criterion::r_only; }

std::vector<double> reconstruction_error(const Tensor& x, const Tensor& reconstruction) {
  if (x.shape() != reconstruction.shape() || x.rank() != 3) {
    throw ContractError("reconstruction_error: shapes " + shape_string(x.shape()) + " and " +
                        shape_string(reconstruction.shape()) + " must be equal [N, T, d]");
  }
  const std::size_t d = x.dim(2);
  const std::size_t points = x.size() / d;
  auto xv = x.values();
  auto rv = reconstruction.values();
  std::vector<double> out(points, 0.0);
  for (std::size_t p = 0; p < points; ++p) {
    for (std::size_t f = 0; f < d; ++f) {
      const double diff = xv[p * d + f] - rv[p * d + f];
      out[p] += diff * diff;
    }
  }
  return out;
}

std::vector<double> mean_similarity(const Tensor& z) {
  const std::size_t m = z.shape().back();
  const std::size_t points = z.size() / m;
  auto zv = z.values();
  std::vector<double> out(points);
  for (std::size_t p = 0; p < points; ++p) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) total += zv[p * m + c];
    out[p] = total / static_cast<double>(m);
  }
  return out;
}

std::vector<double> dissimilarity(const Tensor& z) {
  std::vector<double> out = mean_similarity(z);
  for (double& v : out) v = 1.0 - v;
  return out;
}

MinMaxResult minmax(std::span<const double> v) {
  if (v.empty()) throw ContractError("minmax: empty sequence");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  MinMaxResult r{std::vector<double>(v.size(), 0.0), {*lo, *hi}};
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) r.values[i] = (v[i] - *lo) / range;
  }
  return r;
}

MinMaxResult minmax_complement(std::span<const double> a) {
  if (a.empty()) throw ContractError("minmax_complement: empty sequence");
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  MinMaxResult r{std::vector<double>(a.size(), 0.0), {1.0 - *hi, 1.0 - *lo}};
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < a.size(); ++i) r.values[i] = (*hi - a[i]) / range;
  }
  return r;
}

ScoreTrace composite_score(std::span<const double> eps_r, std::span<const double> eps_s, Criterion criterion,
                           std::span<const double> similarity) {
  ScoreTrace t;
  t.criterion = criterion;
  t.eps_r.assign(eps_r.begin(), eps_r.end());
  t.eps_s.assign(eps_s.begin(), eps_s.end());
  if (eps_r.empty()) throw ContractError("composite_score: no points");
  if (needs_similarity(criterion) && eps_s.size() != eps_r.size()) {
    throw ContractError("composite_score: criterion " + to_string(criterion) + " needs a dissimilarity channel of " +
                        std::to_string(eps_r.size()) + " points, got " + std::to_string(eps_s.size()));
  }
  const MinMaxResult r = minmax(eps_r);
  t.r_bounds = r.bounds;
  MinMaxResult s;
  if (!eps_s.empty()) {
    if (eps_s.size() != eps_r.size()) throw ContractError("composite_score: channel lengths differ");
    if (similarity.empty()) {
      s = minmax(eps_s);
    } else {
      if (similarity.size() != eps_s.size()) throw ContractError("composite_score: similarity length differs");
      s = minmax_complement(similarity);
    }
    t.s_bounds = s.bounds;
  }
  t.composite.resize(eps_r.size());
  for (std::size_t i = 0; i < eps_r.size(); ++i) {
    switch (criterion) {
      case Criterion::r_only:
        t.composite[i] = r.values[i];
        break;
      case Criterion::s_only:
        t.composite[i] = s.values[i];
        break;
      case Criterion::r_plus_s:
        t.composite[i] = r.values[i] + s.values[i];
        break;
      case Criterion::r_times_s:
        t.composite[i] = r.values[i] * s.values[i];
        break;
    }
  }
  t.global_index.resize(eps_r.size());
  for (std::size_t i = 0; i < eps_r.size(); ++i) t.global_index[i] = i;
  return t;
}

ScoreChannels score_channels(const RestadModel& model, const WindowedDataset& data, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("score_channels: batch_size must be positive");
  NoGradGuard no_grad;
  ScoreChannels ch;
  const std::size_t n = data.count();
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(n, begin + batch_size); ++i) idx.push_back(i);
    Tensor x = gather_rows(data.windows, idx);
    ForwardOutput out = model.forward(x);
    auto r = reconstruction_error(x, out.reconstruction);
    ch.eps_r.insert(ch.eps_r.end(), r.begin(), r.end());
    if (out.rbf_output) {
      auto a = mean_similarity(*out.rbf_output);
      ch.similarity.insert(ch.similarity.end(), a.begin(), a.end());
      for (double v : a) ch.eps_s.push_back(1.0 - v);
    }
  }
  for (std::size_t w = 0; w < n; ++w) {
    for (std::size_t t = 0; t < data.window_len; ++t) ch.global_index.push_back(data.global_index(w, t));
  }
  return ch;
}

ScoreTrace make_trace(const ScoreChannels& channels, Criterion criterion) {
  ScoreTrace t = composite_score(channels.eps_r, channels.eps_s, criterion, channels.similarity);
  t.global_index = channels.global_index;
  return t;
}

std::vector<int> aligned_labels(const ScoreTrace& trace, std::span<const int> labels) {
  std::vector<int> out;
  out.reserve(trace.global_index.size());
  for (std::size_t g : trace.global_index) {
    if (g >= labels.size()) {
      throw DimensionError("aligned_labels: time index " + std::to_string(g) + " beyond " +
                           std::to_string(labels.size()) + " labels");
    }
    out.push_back(labels[g]);
  }
  return out;
}

void write_trace_csv(const ScoreTrace& trace, std::span<const int> labels, const std::filesystem::path& path) {
  std::string out = "global_time_index,eps_r,eps_s,composite,label\n";
  char buf[64];
  auto num = [&](double v) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
  };
  for (std::size_t i = 0; i < trace.composite.size(); ++i) {
    const std::size_t g = trace.global_index[i];
    out += std::to_string(g);
    out += ',';
    num(trace.eps_r[i]);
    out += ',';
    if (!trace.eps_s.empty()) num(trace.eps_s[i]);
    out += ',';
    num(trace.composite[i]);
    out += ',';
    if (g < labels.size()) out += std::to_string(labels[g]);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot write " + path.string());
  f << out;
}

}  // namespace restad
