// Python bindings. Structured values cross the boundary as JSON strings and
// arrays as numpy float64/int arrays; the restad package wraps both.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "restad/errors.hpp"
#include "restad/io.hpp"
#include "restad/metrics.hpp"
#include "restad/pipeline.hpp"
#include "restad/scoring.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace restad;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32 = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const F64& a) { return {a.data(), a.data() + a.size()}; }
std::vector<int> to_ivec(const I32& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<double> to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape = {}) {
  if (shape.empty()) shape = {static_cast<py::ssize_t>(v.size())};
  py::array_t<double> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<int> to_iarray(const std::vector<int>& v) {
  py::array_t<int> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> series_array(const Series& s) {
  return to_array(s.values, {static_cast<py::ssize_t>(s.length), static_cast<py::ssize_t>(s.dims)});
}

Series array_series(const F64& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array [time, features]");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), to_vec(a)};
}

Tensor array_tensor(const F64& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  return Tensor(std::move(shape), to_vec(a));
}

py::array_t<double> tensor_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  return to_array(t.to_vector(), shape);
}

LabeledScores labeled(const F64& scores, const I32& labels) { return {to_vec(scores), to_ivec(labels)}; }

py::dict dataset_dict(const RawDataset& d) {
  py::dict out;
  out["name"] = d.name;
  out["train"] = series_array(d.train);
  out["test"] = series_array(d.test);
  out["test_labels"] = to_iarray(d.test_labels);
  return out;
}

std::vector<std::string> path_strings(const std::vector<std::filesystem::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

std::vector<Criterion> criteria_from(const std::vector<std::string>& names) {
  std::vector<Criterion> out;
  for (const auto& n : names) out.push_back(criterion_from_string(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_restad, m) {
  m.doc() = "Transformer reconstruction with an RBF similarity layer for time-series anomaly detection";

  auto base = py::register_exception<Error>(m, "RestadError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InitError>(m, "InitError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("set_num_threads", &set_num_threads, py::arg("n"));
  m.def("num_threads", &num_threads);

  // Data.
  m.def(
      "default_synth_spec",
      [](std::uint64_t seed, std::size_t test_length, std::size_t n_spikes, std::size_t n_drifts) {
        return to_json(default_synth_spec(seed, test_length, n_spikes, n_drifts)).dump();
      },
      py::arg("seed") = 0, py::arg("test_length") = 5000, py::arg("n_spikes") = 10, py::arg("n_drifts") = 10);
  m.def(
      "generate_synthetic",
      [](const std::string& spec) { return dataset_dict(generate_synthetic(synth_spec_from_json(json::parse(spec)))); },
      py::arg("spec_json"));
  m.def(
      "load_csv", [](const std::string& dir) { return dataset_dict(load_csv(dir)); }, py::arg("directory"));
  m.def(
      "windowize",
      [](const F64& series, std::size_t window_len) {
        WindowedDataset w = windowize(array_series(series), window_len);
        return py::make_tuple(tensor_array(w.windows), w.starts, w.dropped_tail);
      },
      py::arg("series"), py::arg("window_len") = 100);

  // Model.
  py::class_<RestadModel>(m, "Model")
      .def(py::init([](const std::string& config) { return RestadModel(model_config_from_json(json::parse(config))); }),
           py::arg("config_json"))
      .def_static(
          "load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"))
      .def(
          "save", [](const RestadModel& self, const std::string& path) { save_checkpoint(self, path); },
          py::arg("path"))
      .def("config_json", [](const RestadModel& self) { return to_json(self.config()).dump(); })
      .def("checksum", &RestadModel::checksum)
      .def("parameter_count", &RestadModel::parameter_count)
      .def(
          "forward",
          [](const RestadModel& self, const F64& x) {
            NoGradGuard g;
            ForwardOutput out = self.forward(array_tensor(x));
            py::object z = py::none();
            if (out.rbf_output) z = tensor_array(*out.rbf_output);
            return py::make_tuple(tensor_array(out.reconstruction), z);
          },
          py::arg("x"), "Reconstruction [B, T, d] and RBF output [B, T, M] (None without RBF).")
      .def(
          "score",
          [](const RestadModel& self, const F64& windows) {
            WindowedDataset w;
            w.windows = array_tensor(windows);
            w.window_len = self.config().window_len;
            for (std::size_t i = 0; i < w.windows.dim(0); ++i) w.starts.push_back(i * w.window_len);
            ScoreChannels ch = score_channels(self, w);
            return py::make_tuple(to_array(ch.eps_r), ch.has_similarity() ? py::object(to_array(ch.eps_s)) : py::none());
          },
          py::arg("windows"), "Per-point eps_r and eps_s over consecutive windows.");

  // Scoring and metrics.
  m.def(
      "composite_score",
      [](const F64& eps_r, const std::optional<F64>& eps_s, const std::string& criterion) {
        std::vector<double> s = eps_s ? to_vec(*eps_s) : std::vector<double>{};
        return to_array(composite_score(to_vec(eps_r), s, criterion_from_string(criterion)).composite);
      },
      py::arg("eps_r"), py::arg("eps_s") = py::none(), py::arg("criterion") = "r_times_s");
  m.def(
      "quantile_threshold",
      [](const F64& scores, double ratio) {
        Threshold t = quantile_threshold(to_vec(scores), ratio);
        std::vector<int> flagged(t.flagged.begin(), t.flagged.end());
        return py::make_tuple(t.delta, to_iarray(flagged));
      },
      py::arg("scores"), py::arg("ratio"));
  m.def(
      "auc_roc", [](const F64& s, const I32& y) { return auc_roc(labeled(s, y)); }, py::arg("scores"),
      py::arg("labels"));
  m.def(
      "auc_pr", [](const F64& s, const I32& y) { return auc_pr(labeled(s, y)); }, py::arg("scores"),
      py::arg("labels"));
  m.def(
      "vus_roc", [](const F64& s, const I32& y, std::size_t L) { return vus(labeled(s, y), Curve::roc, L); },
      py::arg("scores"), py::arg("labels"), py::arg("max_buffer") = 4);
  m.def(
      "vus_pr", [](const F64& s, const I32& y, std::size_t L) { return vus(labeled(s, y), Curve::pr, L); },
      py::arg("scores"), py::arg("labels"), py::arg("max_buffer") = 4);
  m.def(
      "evaluate",
      [](const F64& s, const I32& y, double ratio, std::size_t L) {
        return evaluate(labeled(s, y), ratio, L).to_json().dump();
      },
      py::arg("scores"), py::arg("labels"), py::arg("anomaly_ratio") = 0.01, py::arg("max_buffer") = 4);

  // Commands.
  m.def(
      "synth",
      [](const std::string& spec, const std::string& out_dir) {
        return path_strings(cmd_synth(synth_spec_from_json(json::parse(spec)), out_dir));
      },
      py::arg("spec_json"), py::arg("out_dir"));
  m.def(
      "train",
      [](const std::string& config) {
        RunConfig c = run_config_from_json(json::parse(config));
        py::gil_scoped_release release;
        set_num_threads(c.threads);
        return path_strings(cmd_train(c));
      },
      py::arg("config_json"), "Trains per a run config and returns the files written.");
  m.def(
      "eval",
      [](const std::string& checkpoint, const std::string& data, const std::vector<std::string>& criteria,
         double ratio, std::size_t max_buffer, const std::string& out_dir) {
        RunConfig c = run_config_from_json(json{{"data", json::parse(data)}});
        const auto crit = criteria_from(criteria);
        py::gil_scoped_release release;
        return path_strings(cmd_eval(checkpoint, c.data, crit, ratio, max_buffer, out_dir));
      },
      py::arg("checkpoint"), py::arg("data_json"), py::arg("criteria"), py::arg("anomaly_ratio") = 0.01,
      py::arg("max_buffer") = 4, py::arg("out_dir") = "restad_eval");
  m.def(
      "ablate",
      [](const std::string& grid, const std::string& out_csv) {
        AblationGrid g = ablation_grid_from_json(json::parse(grid));
        py::gil_scoped_release release;
        set_num_threads(g.base.threads);
        return path_strings(cmd_ablate(g, out_csv));
      },
      py::arg("grid_json"), py::arg("out_csv"));
}
