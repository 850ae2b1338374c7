#include "restad/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <future>
#include <map>
#include <mutex>
#include <set>

#include "restad/errors.hpp"
#include "restad/io.hpp"

namespace restad {

using nlohmann::json;

namespace {

constexpr const char* kTransformer = "transformer";

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(ctx + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + ": bad value for key '" + key + "': " + e.what());
  }
}

void check_schema(const json& j, int expected, const std::string& ctx) {
  if (auto it = j.find("schema_version"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() != expected) {
      throw ConfigError(ctx + ": unsupported schema_version " + it->dump());
    }
  }
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string to_string(InitMode m) { return m == InitMode::random ? "random" : "kmeans"; }

InitMode init_mode_from_string(const std::string& s) {
  if (s == "random") return InitMode::random;
  if (s == "kmeans") return InitMode::kmeans;
  throw ConfigError("unknown init '" + s + "' (expected random or kmeans)");
}

void RunConfig::validate() const {
  if (data.path.has_value() == data.synth.has_value()) {
    throw ConfigError("run config: give exactly one of data.path or data.synth");
  }
  if (data.synth) data.synth->validate();
  model.validate();
  train.validate();
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0)) {
    throw ConfigError("run config: anomaly_ratio must lie in (0, 1), got " + fmt(anomaly_ratio));
  }
  if (threads == 0) throw ConfigError("run config: threads must be positive");
  if (needs_similarity(criterion) && !model.rbf_enabled) {
    throw ConfigError("run config: criterion " + to_string(criterion) + " needs rbf_enabled");
  }
}

json to_json(const RunConfig& c) {
  // The run seed drives both sub-configs, so emit them already synced.
  ModelConfig model = c.model;
  TrainConfig train = c.train;
  model.seed = c.seed;
  train.seed = c.seed;
  json data = json::object();
  if (c.data.path) data["path"] = c.data.path->string();
  if (c.data.synth) data["synth"] = to_json(*c.data.synth);
  return {{"schema_version", RunConfig::kSchemaVersion},
          {"data", data},
          {"model", to_json(model)},
          {"train", to_json(train)},
          {"init", to_string(c.init)},
          {"gamma_init_mode", to_string(c.gamma_mode)},
          {"criterion", to_string(c.criterion)},
          {"anomaly_ratio", c.anomaly_ratio},
          {"max_buffer", c.max_buffer},
          {"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"threads", c.threads}};
}

RunConfig run_config_from_json(const json& j) {
  const std::string ctx = "run config";
  check_keys(j,
             {"schema_version", "data", "model", "train", "init", "gamma_init_mode", "criterion", "anomaly_ratio",
              "max_buffer", "output_dir", "seed", "threads"},
             ctx);
  check_schema(j, RunConfig::kSchemaVersion, ctx);
  RunConfig c;
  if (auto it = j.find("data"); it != j.end()) {
    check_keys(*it, {"path", "synth"}, ctx + ".data");
    if (auto p = it->find("path"); p != it->end()) {
      std::string path;
      read(*it, "path", path, ctx + ".data");
      c.data.path = path;
    }
    if (auto s = it->find("synth"); s != it->end()) c.data.synth = synth_spec_from_json(*s);
  }
  if (auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it);
  if (auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
  std::string s;
  if (j.contains("init")) {
    read(j, "init", s, ctx);
    c.init = init_mode_from_string(s);
  }
  if (j.contains("gamma_init_mode")) {
    read(j, "gamma_init_mode", s, ctx);
    c.gamma_mode = gamma_mode_from_string(s);
  }
  if (j.contains("criterion")) {
    read(j, "criterion", s, ctx);
    c.criterion = criterion_from_string(s);
  }
  read(j, "anomaly_ratio", c.anomaly_ratio, ctx);
  read(j, "max_buffer", c.max_buffer, ctx);
  if (j.contains("output_dir")) {
    read(j, "output_dir", s, ctx);
    c.output_dir = s;
  }
  read(j, "seed", c.seed, ctx);
  read(j, "threads", c.threads, ctx);
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

RawDataset load_dataset(const DataSource& source) {
  if (source.path.has_value() == source.synth.has_value()) {
    throw ConfigError("data source: give exactly one of a directory or a synthetic spec");
  }
  RawDataset raw = source.path ? load_csv(*source.path) : generate_synthetic(*source.synth);
  raw.validate();
  return raw;
}

PreparedData prepare_data(const RawDataset& raw, std::size_t window_len) {
  PreparedData p;
  p.normalized = normalize(raw);
  p.train = windowize(p.normalized.train, window_len);
  p.test = windowize(p.normalized.test, window_len);
  if (p.train.count() == 0) {
    throw DimensionError("train split has " + std::to_string(raw.train.length) + " points, fewer than one window of " +
                         std::to_string(window_len));
  }
  if (p.test.count() == 0) {
    throw DimensionError("test split has " + std::to_string(raw.test.length) + " points, fewer than one window of " +
                         std::to_string(window_len));
  }
  return p;
}

TrainOutcome train_model(const RunConfig& config, const PreparedData& data) {
  ModelConfig mc = config.model;
  mc.input_dim = data.normalized.train.dims;
  mc.seed = config.seed;
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  if (config.init == InitMode::kmeans && mc.rbf_enabled) {
    TwoPhaseResult r = train_restad_kmeans(data.train.windows, mc, tc, config.gamma_mode);
    return {std::move(r.model), std::move(r.full_log), std::move(r.base_log), r.initial_gamma};
  }
  RestadModel model(mc);
  TrainLog log = fit(model, data.train.windows, tc);
  return {std::move(model), std::move(log), std::nullopt, std::nullopt};
}

std::vector<EvalOutcome> evaluate_model(const RestadModel& model, const PreparedData& data,
                                        const std::vector<Criterion>& criteria, double anomaly_ratio,
                                        std::size_t max_buffer) {
  if (criteria.empty()) throw ConfigError("evaluate: no criteria given");
  if (model.config().input_dim != data.normalized.test.dims) {
    throw DimensionError("checkpoint expects " + std::to_string(model.config().input_dim) +
                         " features, data has " + std::to_string(data.normalized.test.dims));
  }
  const ScoreChannels channels = score_channels(model, data.test);
  std::vector<EvalOutcome> out;
  for (Criterion c : criteria) {
    if (needs_similarity(c) && !channels.has_similarity()) {
      throw ConfigError("criterion " + to_string(c) + " needs a model with an RBF layer");
    }
    EvalOutcome e{c, {}, make_trace(channels, c), {}};
    e.labels = aligned_labels(e.trace, data.normalized.test_labels);
    e.report = evaluate(LabeledScores{e.trace.composite, e.labels}, anomaly_ratio, max_buffer);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::filesystem::path> cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  RawDataset raw = generate_synthetic(spec);
  write_csv(raw, out_dir);
  write_text_file(out_dir / "synth_spec.json", to_json(spec).dump(2) + "\n");
  return {out_dir / "train.csv", out_dir / "test.csv", out_dir / "test_labels.csv", out_dir / "synth_spec.json"};
}

std::vector<std::filesystem::path> cmd_train(const RunConfig& config) {
  config.validate();
  const PreparedData data = prepare_data(load_dataset(config.data), config.model.window_len);
  TrainOutcome t = train_model(config, data);
  std::vector<std::filesystem::path> written;
  const auto& dir = config.output_dir;
  if (t.base_log) {
    write_text_file(dir / "base_train_log.jsonl", t.base_log->to_json_lines());
    written.push_back(dir / "base_train_log.jsonl");
  }
  write_text_file(dir / "train_log.jsonl", t.log.to_json_lines());
  written.push_back(dir / "train_log.jsonl");
  save_checkpoint(t.model, dir / "checkpoint.json");
  written.push_back(dir / "checkpoint.json");
  json run = to_json(config);
  run["checksum"] = t.model.checksum();
  if (t.initial_gamma) run["initial_gamma"] = *t.initial_gamma;
  write_text_file(dir / "run_config.json", run.dump(2) + "\n");
  written.push_back(dir / "run_config.json");
  return written;
}

std::vector<std::filesystem::path> cmd_eval(const std::filesystem::path& checkpoint, const DataSource& data,
                                            const std::vector<Criterion>& criteria, double anomaly_ratio,
                                            std::size_t max_buffer, const std::filesystem::path& out_dir) {
  const RestadModel model = load_checkpoint(checkpoint);
  const PreparedData prepared = prepare_data(load_dataset(data), model.config().window_len);
  const auto outcomes = evaluate_model(model, prepared, criteria, anomaly_ratio, max_buffer);

  // Everything is computed before the first file is written.
  std::vector<std::filesystem::path> written;
  std::filesystem::create_directories(out_dir);
  for (const auto& e : outcomes) {
    const std::string name = to_string(e.criterion);
    json report = e.report.to_json();
    report["criterion"] = name;
    report["checksum"] = model.checksum();
    write_text_file(out_dir / ("report_" + name + ".json"), report.dump(2) + "\n");
    auto trace_path = out_dir / ("trace_" + name + ".csv");
    auto tmp = trace_path;
    tmp += ".tmp";
    write_trace_csv(e.trace, prepared.normalized.test_labels, tmp);
    std::filesystem::rename(tmp, trace_path);
    written.push_back(out_dir / ("report_" + name + ".json"));
    written.push_back(trace_path);
  }
  return written;
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::criterion:
      return "criterion";
    case AblationAxis::rbf_position:
      return "rbf_position";
    case AblationAxis::n_centers:
      return "n_centers";
  }
  return "unknown";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "criterion") return AblationAxis::criterion;
  if (s == "rbf_position") return AblationAxis::rbf_position;
  if (s == "n_centers") return AblationAxis::n_centers;
  throw ConfigError("unknown ablation axis '" + s + "' (expected criterion, rbf_position, n_centers)");
}

void AblationGrid::validate() const {
  base.validate();
  if (values.empty()) throw ConfigError("ablation grid: values must not be empty");
  if (repeats == 0) throw ConfigError("ablation grid: repeats must be positive");
  if (parallel == 0) throw ConfigError("ablation grid: parallel must be positive");
  for (const auto& v : values) {
    if (axis == AblationAxis::criterion) {
      if (v != kTransformer) criterion_from_string(v);
      continue;
    }
    std::size_t n = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), n);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw ConfigError("ablation grid: value '" + v + "' is not a non-negative integer");
    }
  }
}

json to_json(const AblationGrid& g) {
  json values = json::array();
  for (const auto& v : g.values) {
    if (g.axis == AblationAxis::criterion) {
      values.push_back(v);
    } else {
      values.push_back(std::stoull(v));
    }
  }
  return {{"schema_version", AblationGrid::kSchemaVersion},
          {"base", to_json(g.base)},
          {"axis", to_string(g.axis)},
          {"values", values},
          {"repeats", g.repeats},
          {"parallel", g.parallel}};
}

AblationGrid ablation_grid_from_json(const json& j) {
  const std::string ctx = "ablation grid";
  check_keys(j, {"schema_version", "base", "axis", "values", "repeats", "parallel"}, ctx);
  check_schema(j, AblationGrid::kSchemaVersion, ctx);
  AblationGrid g;
  if (auto it = j.find("base"); it != j.end()) g.base = run_config_from_json(*it);
  std::string axis = "criterion";
  read(j, "axis", axis, ctx);
  g.axis = ablation_axis_from_string(axis);
  auto it = j.find("values");
  if (it == j.end() || !it->is_array()) throw ConfigError(ctx + ": key 'values' must be an array");
  for (const auto& v : *it) {
    if (v.is_string()) {
      g.values.push_back(v.get<std::string>());
    } else if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
      g.values.push_back(std::to_string(v.get<unsigned long long>()));
    } else {
      throw ConfigError(ctx + ": bad entry in 'values': " + v.dump());
    }
  }
  read(j, "repeats", g.repeats, ctx);
  read(j, "parallel", g.parallel, ctx);
  return g;
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t index) {
  return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

namespace {

struct Job {
  RunConfig config;
  std::vector<std::string> values;  // criterion axis: all values sharing this model
  std::size_t repeat = 0;
};

std::vector<AblationCell> run_job(const Job& job, const PreparedData* data_cache, AblationAxis axis) {
  std::vector<AblationCell> cells;
  for (const auto& v : job.values) cells.push_back({v, job.repeat, job.config.seed, false, {}, {}});
  try {
    PreparedData local;
    if (!data_cache) local = prepare_data(load_dataset(job.config.data), job.config.model.window_len);
    const PreparedData& data = data_cache ? *data_cache : local;
    TrainOutcome t = train_model(job.config, data);
    std::vector<Criterion> criteria;
    for (const auto& v : job.values) {
      criteria.push_back(axis == AblationAxis::criterion && v != kTransformer ? criterion_from_string(v)
                         : axis == AblationAxis::criterion                    ? Criterion::r_only
                                                                              : job.config.criterion);
    }
    auto outcomes = evaluate_model(t.model, data, criteria, job.config.anomaly_ratio, job.config.max_buffer);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      cells[i].report = outcomes[i].report;
      cells[i].ok = true;
    }
  } catch (const std::exception& e) {
    for (auto& c : cells) c.error = e.what();
  }
  return cells;
}

}  // namespace

AblationResult run_ablation(const AblationGrid& grid) {
  grid.validate();
  AblationResult result;
  result.axis = grid.axis;

  std::vector<Job> jobs;
  for (std::size_t r = 0; r < grid.repeats; ++r) {
    RunConfig base = grid.base;
    if (grid.axis == AblationAxis::criterion) {
      // One seed per repeat: every criterion scores the same model.
      base.seed = cell_seed(grid.base.seed, r);
      std::vector<std::string> with_rbf;
      for (const auto& v : grid.values) {
        if (v == kTransformer) {
          RunConfig vanilla = base;
          vanilla.model.rbf_enabled = false;
          vanilla.criterion = Criterion::r_only;
          jobs.push_back({vanilla, {v}, r});
        } else {
          with_rbf.push_back(v);
        }
      }
      if (!with_rbf.empty()) {
        base.model.rbf_enabled = true;
        jobs.push_back({base, with_rbf, r});
      }
    } else {
      for (std::size_t vi = 0; vi < grid.values.size(); ++vi) {
        RunConfig cfg = base;
        cfg.seed = cell_seed(grid.base.seed, r * grid.values.size() + vi);
        const std::size_t n = std::stoull(grid.values[vi]);
        if (grid.axis == AblationAxis::rbf_position) {
          cfg.model.rbf_position = n;
        } else {
          cfg.model.n_centers = n;
        }
        cfg.model.rbf_enabled = true;
        jobs.push_back({cfg, {grid.values[vi]}, r});
      }
    }
  }

  // The dataset does not depend on the cell, so it is prepared once.
  std::optional<PreparedData> shared;
  try {
    shared = prepare_data(load_dataset(grid.base.data), grid.base.model.window_len);
  } catch (const std::exception&) {
    shared.reset();
  }
  const PreparedData* cache = shared ? &*shared : nullptr;

  std::vector<std::vector<AblationCell>> per_job(jobs.size());
  if (grid.parallel <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) per_job[i] = run_job(jobs[i], cache, grid.axis);
  } else {
    std::size_t next = 0;
    std::mutex mu;
    std::vector<std::future<void>> workers;
    for (std::size_t w = 0; w < std::min(grid.parallel, jobs.size()); ++w) {
      workers.push_back(std::async(std::launch::async, [&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= jobs.size()) return;
            i = next++;
          }
          per_job[i] = run_job(jobs[i], cache, grid.axis);
        }
      }));
    }
    for (auto& f : workers) f.get();
  }

  // Rows in (value order, repeat) order regardless of scheduling.
  std::map<std::pair<std::size_t, std::size_t>, AblationCell> by_key;
  for (auto& cells : per_job) {
    for (auto& c : cells) {
      const auto vi = static_cast<std::size_t>(
          std::find(grid.values.begin(), grid.values.end(), c.value) - grid.values.begin());
      by_key[{vi, c.repeat}] = std::move(c);
    }
  }
  for (auto& [_, c] : by_key) result.cells.push_back(std::move(c));

  for (const auto& v : grid.values) {
    AblationAggregate agg;
    agg.value = v;
    std::vector<std::array<double, 5>> rows;
    for (const auto& c : result.cells) {
      if (c.value != v) continue;
      if (!c.ok) {
        ++agg.n_failed;
        continue;
      }
      rows.push_back({c.report.f1, c.report.auc_roc, c.report.auc_pr, c.report.vus_roc, c.report.vus_pr});
    }
    agg.n_ok = rows.size();
    for (std::size_t k = 0; k < 5 && !rows.empty(); ++k) {
      double sum = 0.0;
      for (const auto& r : rows) sum += r[k];
      agg.mean[k] = sum / static_cast<double>(rows.size());
      double sq = 0.0;
      for (const auto& r : rows) sq += (r[k] - agg.mean[k]) * (r[k] - agg.mean[k]);
      agg.stddev[k] = rows.size() > 1 ? std::sqrt(sq / static_cast<double>(rows.size() - 1)) : 0.0;
    }
    result.aggregates.push_back(agg);
  }
  return result;
}

std::string AblationResult::to_csv() const {
  std::string out = "schema_version,row_type,axis,value,repeat,seed,status,f1,auc_roc,auc_pr,vus_roc,vus_pr,n_ok,error\n";
  const std::string ax = to_string(axis);
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch == '\n' ? ' ' : ch;
    }
    return q + "\"";
  };
  for (const auto& c : cells) {
    out += "1,cell," + ax + "," + c.value + "," + std::to_string(c.repeat) + "," + std::to_string(c.seed) + ",";
    if (c.ok) {
      out += "ok," + fmt(c.report.f1) + "," + fmt(c.report.auc_roc) + "," + fmt(c.report.auc_pr) + "," +
             fmt(c.report.vus_roc) + "," + fmt(c.report.vus_pr) + ",1,\n";
    } else {
      out += "failed,,,,,,0," + quote(c.error) + "\n";
    }
  }
  for (const char* kind : {"mean", "std"}) {
    for (const auto& a : aggregates) {
      const auto& vals = std::string(kind) == "mean" ? a.mean : a.stddev;
      out += std::string("1,") + kind + "," + ax + "," + a.value + ",,,";
      if (a.n_ok == 0) {
        out += "failed,,,,,,0,\n";
        continue;
      }
      out += a.n_failed ? "partial" : "ok";
      for (double v : vals) out += "," + fmt(v);
      out += "," + std::to_string(a.n_ok) + ",\n";
    }
  }
  return out;
}

std::vector<std::filesystem::path> cmd_ablate(const AblationGrid& grid, const std::filesystem::path& out_csv) {
  const AblationResult r = run_ablation(grid);
  write_text_file(out_csv, r.to_csv());
  return {out_csv};
}

}  // namespace restad
