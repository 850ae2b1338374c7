#include "restad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "restad/errors.hpp"

namespace restad {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
  if (!out) throw ParseError("failed writing " + path.string());
}

std::string series_csv(const Series& s) {
  std::string out;
  for (std::size_t t = 0; t < s.length; ++t) {
    for (std::size_t f = 0; f < s.dims; ++f) {
      if (f) out += ',';
      append_number(out, s.at(t, f));
    }
    out += '\n';
  }
  return out;
}

}  // namespace

void RawDataset::validate() const {
  if (train.values.size() != train.length * train.dims || test.values.size() != test.length * test.dims) {
    throw DimensionError("dataset '" + name + "': value buffers do not match declared shapes");
  }
  if (train.dims != test.dims) {
    throw DimensionError("dataset '" + name + "': train has " + std::to_string(train.dims) + " features, test has " +
                         std::to_string(test.dims));
  }
  if (test_labels.size() != test.length) {
    throw DimensionError("dataset '" + name + "': " + std::to_string(test_labels.size()) + " labels for " +
                         std::to_string(test.length) + " test points");
  }
}

Series parse_csv_series(const std::string& text, const std::string& source) {
  Series s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line = trim(std::string_view(text).substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw ParseError(source + ":" + std::to_string(line_no) + ": empty line");
    }
    std::size_t cols = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      std::string_view cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": non-numeric cell '" + std::string(cell) +
                         "' in column " + std::to_string(cols + 1));
      }
      s.values.push_back(v);
      ++cols;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (s.length == 0) {
      s.dims = cols;
    } else if (cols != s.dims) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(s.dims) +
                       " columns, found " + std::to_string(cols));
    }
    ++s.length;
  }
  if (s.length == 0) throw ParseError(source + ": file contains no data rows");
  return s;
}

RawDataset load_csv(const std::filesystem::path& dir) {
  RawDataset data;
  data.name = dir.filename().string();
  if (data.name.empty()) data.name = dir.parent_path().filename().string();
  data.train = parse_csv_series(read_file(dir / "train.csv"), "train.csv");
  data.test = parse_csv_series(read_file(dir / "test.csv"), "test.csv");
  Series labels = parse_csv_series(read_file(dir / "test_labels.csv"), "test_labels.csv");
  if (labels.dims != 1) {
    throw ParseError("test_labels.csv: expected one column, found " + std::to_string(labels.dims));
  }
  if (data.train.dims != data.test.dims) {
    throw ParseError("train.csv has " + std::to_string(data.train.dims) + " columns but test.csv has " +
                     std::to_string(data.test.dims));
  }
  if (labels.length != data.test.length) {
    throw ParseError("test_labels.csv has " + std::to_string(labels.length) + " rows but test.csv has " +
                     std::to_string(data.test.length));
  }
  data.test_labels.reserve(labels.length);
  for (std::size_t i = 0; i < labels.length; ++i) {
    const double v = labels.values[i];
    if (v != 0.0 && v != 1.0) {
      throw ParseError("test_labels.csv:" + std::to_string(i + 1) + ": label must be 0 or 1");
    }
    data.test_labels.push_back(static_cast<int>(v));
  }
  return data;
}

void write_csv(const RawDataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::filesystem::create_directories(dir);
  write_file(dir / "train.csv", series_csv(data.train));
  write_file(dir / "test.csv", series_csv(data.test));
  std::string labels;
  for (int l : data.test_labels) {
    labels += l ? '1' : '0';
    labels += '\n';
  }
  write_file(dir / "test_labels.csv", labels);
}

FeatureStats feature_stats(const Series& s) {
  FeatureStats st{std::vector<double>(s.dims, 0.0), std::vector<double>(s.dims, 0.0)};
  if (s.length == 0) return st;
  for (std::size_t t = 0; t < s.length; ++t) {
    for (std::size_t f = 0; f < s.dims; ++f) st.mean[f] += s.at(t, f);
  }
  for (double& m : st.mean) m /= static_cast<double>(s.length);
  for (std::size_t t = 0; t < s.length; ++t) {
    for (std::size_t f = 0; f < s.dims; ++f) {
      const double d = s.at(t, f) - st.mean[f];
      st.stddev[f] += d * d;
    }
  }
  for (double& v : st.stddev) v = std::sqrt(v / static_cast<double>(s.length));
  return st;
}

RawDataset normalize(const RawDataset& raw) {
  raw.validate();
  if (raw.train.length == 0) throw ContractError("normalize: train split is empty");
  const FeatureStats st = feature_stats(raw.train);
  RawDataset out = raw;
  auto apply = [&](Series& s) {
    for (std::size_t t = 0; t < s.length; ++t) {
      for (std::size_t f = 0; f < s.dims; ++f) {
        const double centered = s.at(t, f) - st.mean[f];
        s.at(t, f) = st.stddev[f] > 0.0 ? centered / st.stddev[f] : centered;
      }
    }
  };
  apply(out.train);
  apply(out.test);
  return out;
}

WindowedDataset windowize(const Series& series, std::size_t window_len) {
  if (window_len == 0) throw ContractError("windowize: window length must be positive");
  if (series.length < window_len) {
    throw ContractError("windowize: series of length " + std::to_string(series.length) +
                        " is shorter than one window of " + std::to_string(window_len));
  }
  WindowedDataset w;
  w.window_len = window_len;
  const std::size_t n = series.length / window_len;
  w.dropped_tail = series.length - n * window_len;
  for (std::size_t i = 0; i < n; ++i) w.starts.push_back(i * window_len);
  std::vector<double> values(series.values.begin(), series.values.begin() + n * window_len * series.dims);
  w.windows = Tensor({n, window_len, series.dims}, std::move(values));
  return w;
}

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::spike:
      return "spike";
    case AnomalyKind::subtle_drift:
      return "subtle_drift";
    case AnomalyKind::subsequence:
      return "subsequence";
  }
  return "unknown";
}

AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "spike") return AnomalyKind::spike;
  if (s == "subtle_drift") return AnomalyKind::subtle_drift;
  if (s == "subsequence") return AnomalyKind::subsequence;
  throw ConfigError("unknown anomaly type '" + s + "'");
}

void SynthSpec::validate() const {
  if (train_length == 0 || test_length == 0 || dims == 0) throw ConfigError("synthetic spec: lengths and dims must be positive");
  if (components.empty()) throw ConfigError("synthetic spec: at least one sinusoid component required");
  for (const auto& c : components) {
    if (!(c.period > 0.0)) throw ConfigError("synthetic spec: component period must be positive");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("synthetic spec: noise_std must be >= 0");
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& a : anomalies) {
    if (!(a.magnitude > 0.0)) throw ConfigError("synthetic spec: anomaly magnitude must be positive");
    if (a.length == 0) throw ConfigError("synthetic spec: anomaly length must be positive");
    if (a.position + a.length > test_length) {
      throw ConfigError("synthetic spec: anomaly at " + std::to_string(a.position) + " (length " +
                        std::to_string(a.length) + ") exceeds test length " + std::to_string(test_length));
    }
    spans.emplace_back(a.position, a.position + a.length);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw ConfigError("synthetic spec: anomalies at " + std::to_string(spans[i - 1].first) + " and " +
                        std::to_string(spans[i].first) + " overlap");
    }
  }
}

SynthSpec default_synth_spec(std::uint64_t seed, std::size_t test_length, std::size_t n_spikes, std::size_t n_drifts) {
  SynthSpec spec;
  spec.seed = seed;
  spec.test_length = test_length;
  std::mt19937_64 rng(seed ^ 0xa0761d6478bd642full);
  const std::size_t margin = 20;
  std::vector<std::pair<std::size_t, std::size_t>> used;
  auto place = [&](std::size_t length) {
    std::uniform_int_distribution<std::size_t> pos(margin, test_length - margin - length);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const std::size_t p = pos(rng);
      const bool clash = std::any_of(used.begin(), used.end(), [&](const auto& u) {
        return p < u.second + margin && u.first < p + length + margin;
      });
      if (!clash) {
        used.emplace_back(p, p + length);
        return p;
      }
    }
    throw ConfigError("default synthetic spec: test split too short to place anomalies");
  };
  std::uniform_real_distribution<double> spike_mag(6.0, 10.0);
  std::uniform_real_distribution<double> drift_mag(1.5, 2.5);
  for (std::size_t i = 0; i < n_spikes; ++i) {
    spec.anomalies.push_back({AnomalyKind::spike, place(1), spike_mag(rng), 1});
  }
  for (std::size_t i = 0; i < n_drifts; ++i) {
    spec.anomalies.push_back({AnomalyKind::subtle_drift, place(10), drift_mag(rng), 10});
  }
  std::sort(spec.anomalies.begin(), spec.anomalies.end(),
            [](const PlantedAnomaly& a, const PlantedAnomaly& b) { return a.position < b.position; });
  return spec;
}

RawDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(spec.dims * spec.components.size());
  for (double& p : phases) p = phase_dist(rng);
  double power = 0.0;
  for (const auto& c : spec.components) power += c.amplitude * c.amplitude / 2.0;
  const double sigma = std::sqrt(power);

  auto clean = [&](std::size_t t, std::size_t f) {
    double v = 0.0;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
      const auto& c = spec.components[k];
      v += c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period +
                                  phases[f * spec.components.size() + k]);
    }
    return v;
  };
  std::normal_distribution<double> noise(0.0, 1.0);
  auto make = [&](std::size_t length, std::size_t offset) {
    Series s{length, spec.dims, std::vector<double>(length * spec.dims)};
    for (std::size_t t = 0; t < length; ++t) {
      for (std::size_t f = 0; f < spec.dims; ++f) s.at(t, f) = clean(t + offset, f) + spec.noise_std * noise(rng);
    }
    return s;
  };

  RawDataset data;
  data.name = spec.name;
  data.train = make(spec.train_length, 0);
  data.test = make(spec.test_length, spec.train_length);
  data.test_labels.assign(spec.test_length, 0);

  std::bernoulli_distribution coin(0.5);
  for (const auto& a : spec.anomalies) {
    const double sign = coin(rng) ? 1.0 : -1.0;
    for (std::size_t t = a.position; t < a.position + a.length; ++t) {
      data.test_labels[t] = 1;
      for (std::size_t f = 0; f < spec.dims; ++f) {
        switch (a.kind) {
          case AnomalyKind::spike:
          case AnomalyKind::subtle_drift:
            data.test.at(t, f) += sign * a.magnitude * sigma;
            break;
          case AnomalyKind::subsequence: {
            const double base = clean(t + spec.train_length, f);
            const double period = spec.components.front().period / 2.5;
            const double alt = a.magnitude * sigma *
                               std::sin(2.0 * std::numbers::pi * static_cast<double>(t - a.position) / period);
            data.test.at(t, f) += alt - base;
            break;
          }
        }
      }
    }
  }
  return data;
}

}  // namespace restad
