// restad: synth | train | eval | ablate
//
// Every command exits 0 only after all of its artifacts were written.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "restad/errors.hpp"
#include "restad/io.hpp"
#include "restad/pipeline.hpp"
#include "restad/tensor.hpp"

namespace {

using restad::RunConfig;

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw restad::ConfigError("expected true or false, got '" + s + "'");
}

// Flags left unset keep the value from the config file.
struct RunOverrides {
  std::optional<std::string> data_dir;
  std::optional<std::string> synth_spec;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> init;
  std::optional<std::string> gamma_mode;
  std::optional<std::string> criterion;
  std::optional<double> anomaly_ratio;
  std::optional<std::size_t> max_buffer;

  std::optional<std::size_t> window_len, d_model, ffn_dim, n_heads, n_layers, rbf_position, n_centers;
  std::optional<std::string> rbf_enabled;
  std::optional<double> dropout;

  std::optional<double> lr;
  std::optional<std::size_t> batch_size, epochs;
  std::optional<double> beta1, beta2, adam_eps, clip;

  void add_to(CLI::App& app) {
    app.add_option("--data", data_dir, "Dataset directory with train.csv, test.csv, test_labels.csv");
    app.add_option("--synth-spec", synth_spec, "Synthetic spec JSON used as the data source");
    app.add_option("--out", out, "Output directory");
    app.add_option("--seed", seed, "Run seed (model init and batch order)");
    app.add_option("--threads", threads, "Worker threads for tensor kernels");
    app.add_option("--init", init, "RBF initialization: random or kmeans");
    app.add_option("--gamma-init-mode", gamma_mode, "paper (gamma = 1/sigma^2) or log_consistent");
    app.add_option("--criterion", criterion, "r_only, s_only, r_plus_s, r_times_s");
    app.add_option("--anomaly-ratio", anomaly_ratio, "Fraction of points flagged for F1");
    app.add_option("--max-buffer", max_buffer, "Largest VUS buffer width");
    app.add_option("--window-len", window_len);
    app.add_option("--d-model", d_model);
    app.add_option("--ffn-dim", ffn_dim);
    app.add_option("--n-heads", n_heads);
    app.add_option("--n-layers", n_layers);
    app.add_option("--rbf-enabled", rbf_enabled, "true or false");
    app.add_option("--rbf-position", rbf_position, "Encoder layer index the RBF layer follows");
    app.add_option("--n-centers", n_centers);
    app.add_option("--dropout", dropout);
    app.add_option("--lr", lr, "ADAM learning rate");
    app.add_option("--batch-size", batch_size);
    app.add_option("--epochs", epochs);
    app.add_option("--adam-beta1", beta1);
    app.add_option("--adam-beta2", beta2);
    app.add_option("--adam-eps", adam_eps);
    app.add_option("--clip-grad-norm", clip);
  }

  void apply(RunConfig& c) const {
    if (data_dir && synth_spec) throw restad::ConfigError("give either --data or --synth-spec");
    if (data_dir) {
      c.data = {};
      c.data.path = *data_dir;
    }
    if (synth_spec) {
      c.data = {};
      c.data.synth = restad::synth_spec_from_json(restad::read_json_file(*synth_spec));
    }
    if (out) c.output_dir = *out;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (init) c.init = restad::init_mode_from_string(*init);
    if (gamma_mode) c.gamma_mode = restad::gamma_mode_from_string(*gamma_mode);
    if (criterion) c.criterion = restad::criterion_from_string(*criterion);
    if (anomaly_ratio) c.anomaly_ratio = *anomaly_ratio;
    if (max_buffer) c.max_buffer = *max_buffer;
    if (window_len) c.model.window_len = *window_len;
    if (d_model) c.model.d_model = *d_model;
    if (ffn_dim) c.model.ffn_dim = *ffn_dim;
    if (n_heads) c.model.n_heads = *n_heads;
    if (n_layers) c.model.n_layers = *n_layers;
    if (rbf_enabled) c.model.rbf_enabled = parse_bool(*rbf_enabled);
    if (rbf_position) c.model.rbf_position = *rbf_position;
    if (n_centers) c.model.n_centers = *n_centers;
    if (dropout) c.model.dropout = *dropout;
    if (lr) c.train.learning_rate = *lr;
    if (batch_size) c.train.batch_size = *batch_size;
    if (epochs) c.train.epochs = *epochs;
    if (beta1) c.train.adam_beta1 = *beta1;
    if (beta2) c.train.adam_beta2 = *beta2;
    if (adam_eps) c.train.adam_eps = *adam_eps;
    if (clip) c.train.clip_grad_norm = *clip;
    if (!c.model.rbf_enabled && restad::needs_similarity(c.criterion) && !criterion) {
      c.criterion = restad::Criterion::r_only;
    }
    c.model.seed = c.seed;
    c.train.seed = c.seed;
  }
};

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  if (!path.empty()) c = restad::run_config_from_json(restad::read_json_file(path));
  return c;
}

void default_data(RunConfig& c) {
  if (!c.data.path && !c.data.synth) c.data.synth = restad::default_synth_spec(0);
}

void report_written(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RESTAD: Transformer reconstruction with an RBF similarity layer for time-series anomaly detection"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset as CSV files");
  std::string synth_spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", synth_spec_path, "Synthetic spec JSON (default benchmark layout if omitted)");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Seed of the default layout when --spec is omitted");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint.json and train_log.jsonl");
  std::string train_config;
  bool train_print = false;
  RunOverrides train_over;
  train->add_option("--config", train_config, "Run config JSON");
  train->add_flag("--print-config", train_print, "Print the effective run config and exit");
  train_over.add_to(*train);

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint and write report_<criterion>.json and trace_<criterion>.csv");
  std::string eval_ckpt, eval_config, eval_data, eval_spec, eval_out = "restad_out";
  std::vector<std::string> eval_criteria;
  std::optional<double> eval_ratio;
  std::optional<std::size_t> eval_buffer, eval_threads;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint.json written by train")->required();
  eval->add_option("--config", eval_config, "Run config JSON supplying data source and defaults");
  eval->add_option("--data", eval_data, "Dataset directory");
  eval->add_option("--synth-spec", eval_spec, "Synthetic spec JSON used as the data source");
  eval->add_option("--criterion", eval_criteria, "One or more criteria; all share one scoring pass");
  eval->add_option("--anomaly-ratio", eval_ratio);
  eval->add_option("--max-buffer", eval_buffer);
  eval->add_option("--threads", eval_threads);
  eval->add_option("--out", eval_out, "Output directory");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid and write one CSV");
  std::string grid_path, ablate_out = "ablation.csv";
  std::optional<std::size_t> ablate_parallel, ablate_repeats, ablate_threads;
  bool ablate_print = false;
  ablate->add_option("--grid", grid_path, "Ablation grid JSON")->required();
  ablate->add_option("--out", ablate_out, "Output CSV path");
  ablate->add_option("--parallel", ablate_parallel, "Cells run concurrently");
  ablate->add_option("--repeats", ablate_repeats);
  ablate->add_option("--threads", ablate_threads, "Tensor kernel threads per process");
  ablate->add_flag("--print-config", ablate_print, "Print the effective grid and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      restad::SynthSpec spec = synth_spec_path.empty()
                                   ? restad::default_synth_spec(synth_seed)
                                   : restad::synth_spec_from_json(restad::read_json_file(synth_spec_path));
      report_written(restad::cmd_synth(spec, synth_out));
    } else if (train->parsed()) {
      RunConfig c = load_run_config(train_config);
      train_over.apply(c);
      default_data(c);
      c.validate();
      if (train_print) {
        std::cout << restad::to_json(c).dump(2) << "\n";
        return 0;
      }
      restad::set_num_threads(c.threads);
      report_written(restad::cmd_train(c));
    } else if (eval->parsed()) {
      RunConfig c = load_run_config(eval_config);
      if (!eval_data.empty() && !eval_spec.empty()) throw restad::ConfigError("give either --data or --synth-spec");
      if (!eval_data.empty()) {
        c.data = {};
        c.data.path = eval_data;
      }
      if (!eval_spec.empty()) {
        c.data = {};
        c.data.synth = restad::synth_spec_from_json(restad::read_json_file(eval_spec));
      }
      default_data(c);
      if (eval_ratio) c.anomaly_ratio = *eval_ratio;
      if (eval_buffer) c.max_buffer = *eval_buffer;
      if (eval_threads) c.threads = *eval_threads;
      std::vector<restad::Criterion> criteria;
      for (const auto& s : eval_criteria) criteria.push_back(restad::criterion_from_string(s));
      if (criteria.empty()) criteria.push_back(c.criterion);
      restad::set_num_threads(c.threads);
      report_written(restad::cmd_eval(eval_ckpt, c.data, criteria, c.anomaly_ratio, c.max_buffer, eval_out));
    } else if (ablate->parsed()) {
      restad::AblationGrid g = restad::ablation_grid_from_json(restad::read_json_file(grid_path));
      if (ablate_parallel) g.parallel = *ablate_parallel;
      if (ablate_repeats) g.repeats = *ablate_repeats;
      if (ablate_threads) g.base.threads = *ablate_threads;
      default_data(g.base);
      g.validate();
      if (ablate_print) {
        std::cout << restad::to_json(g).dump(2) << "\n";
        return 0;
      }
      restad::set_num_threads(g.base.threads);
      report_written(restad::cmd_ablate(g, ablate_out));
    }
  } catch (const std::exception& e) {
    std::cerr << "restad: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
