// Python bindings for the core operations: routing, gate metrics, the
// numerics primitives they rest on, and a train/evaluate entry point.
// Matrices cross the boundary as nested lists (row-major), vectors as
// flat lists, so the module works with plain lists and numpy arrays alike.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "gatepro/config.hpp"
#include "gatepro/errors.hpp"
#include "gatepro/metrics.hpp"
#include "gatepro/metrics_log.hpp"
#include "gatepro/moe.hpp"
#include "gatepro/numerics.hpp"
#include "gatepro/rng.hpp"
#include "gatepro/router.hpp"
#include "gatepro/train.hpp"

namespace py = pybind11;
using namespace gatepro;

namespace {

Vec to_vec(const std::vector<double>& values) {
  return Vec(values);
}

Mat to_mat(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ContractViolation("matrix: no rows");
  const std::size_t cols = rows[0].size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) {
      throw ContractViolation("matrix: ragged rows");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Mat(rows.size(), cols, std::move(flat));
}

std::vector<std::vector<double>> from_mat(const Mat& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    rows[i].assign(m.row(i), m.row(i) + m.cols());
  }
  return rows;
}

py::dict decision_to_dict(const RoutingDecision& d) {
  py::dict out;
  out["selected"] = d.selected;
  out["weights"] = d.weights.data();
  out["raw_logits"] = d.raw_logits.data();
  out["suppressed_logits"] = d.suppressed_logits.data();
  std::vector<bool> mask(d.penalty_mask.begin(), d.penalty_mask.end());
  out["penalty_mask"] = mask;
  return out;
}

py::dict row_to_dict(const MetricsRow& row) {
  py::dict out;
  out["step"] = row.step;
  out["layer"] = row.layer;
  out["mode"] = row.mode;
  out["balance_loss_on"] = row.balance_loss_on;
  out["zero_token_count"] = row.zero_token_count;
  out["avg_cos_sim"] = row.avg_cos_sim;
  out["avg_angle"] = row.avg_angle;
  out["spectral_entropy"] = row.spectral_entropy;
  out["task_loss"] = row.task_loss;
  out["balance_loss"] = row.balance_loss;
  out["accuracy_estimate"] = row.accuracy_estimate;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MoE routing laboratory: competitive gate propagation vs. "
            "baseline top-k, with utilization and diversity metrics";

  py::register_exception<ContractViolation>(m, "ContractViolation",
                                            PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure",
                                           PyExc_ArithmeticError);

  py::class_<Rng>(m, "Rng", "splitmix64 stream")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &Rng::next_u64)
      .def("next_uniform", &Rng::next_uniform)
      .def("next_gaussian", &Rng::next_gaussian)
      .def_property_readonly("state", &Rng::state);

  m.def("gelu", &gelu, py::arg("x"), "tanh-approximation GELU");

  m.def(
      "top_k_indices",
      [](const std::vector<double>& values, int k) {
        return top_k_indices(to_vec(values), k);
      },
      py::arg("values"), py::arg("k"),
      "indices of the k largest entries, ascending, ties to lower index");

  m.def(
      "softmax_over",
      [](const std::vector<double>& values, const std::vector<int>& subset) {
        return softmax_over(to_vec(values), subset).data();
      },
      py::arg("values"), py::arg("subset"),
      "softmax normalized over `subset`; zero elsewhere");

  m.def(
      "softmax",
      [](const std::vector<double>& values) {
        return softmax_full(to_vec(values)).data();
      },
      py::arg("values"));

  m.def(
      "sym_eigenvalues",
      [](const std::vector<std::vector<double>>& mat) {
        return sym_eigenvalues(to_mat(mat)).data();
      },
      py::arg("matrix"),
      "eigenvalues of a symmetric matrix, descending (cyclic Jacobi)");

  m.def(
      "gate_similarity",
      [](const std::vector<std::vector<double>>& gating) {
        return from_mat(gate_similarity(GatingWeights(to_mat(gating))).s());
      },
      py::arg("gating"),
      "cosine similarity matrix of the gating rows (N x d -> N x N)");

  m.def(
      "most_similar",
      [](const std::vector<std::vector<double>>& similarity) {
        return most_similar(SimilarityMatrix(to_mat(similarity))).j_star;
      },
      py::arg("similarity"),
      "most similar counterpart per expert, lowest index on ties");

  m.def(
      "compete",
      [](const std::vector<double>& logits, const std::vector<int>& j_star,
         double lam) {
        const CompeteResult r =
            compete(to_vec(logits), CounterpartMap{j_star}, lam);
        std::vector<bool> mask(r.mask.begin(), r.mask.end());
        return py::make_tuple(r.suppressed.data(), mask);
      },
      py::arg("logits"), py::arg("j_star"), py::arg("lam"),
      "returns (suppressed_logits, penalty_mask)");

  m.def(
      "route_baseline",
      [](const std::vector<double>& x,
         const std::vector<std::vector<double>>& gating, int k) {
        return decision_to_dict(
            route_baseline(to_vec(x), GatingWeights(to_mat(gating)), k));
      },
      py::arg("x"), py::arg("gating"), py::arg("k"));

  m.def(
      "route_gatepro",
      [](const std::vector<double>& x,
         const std::vector<std::vector<double>>& gating, int k, double lam) {
        const GatingWeights g(to_mat(gating));
        GateProConfig cfg;
        cfg.k = k;
        cfg.lambda = lam;
        return decision_to_dict(route_gatepro(to_vec(x), g,
                                              gate_similarity(g), cfg));
      },
      py::arg("x"), py::arg("gating"), py::arg("k"),
      py::arg("lam") = 1e-4);

  m.def(
      "avg_cosine_similarity",
      [](const std::vector<std::vector<double>>& similarity) {
        return avg_cosine_similarity(SimilarityMatrix(to_mat(similarity)));
      },
      py::arg("similarity"));

  m.def(
      "avg_angle",
      [](const std::vector<std::vector<double>>& similarity) {
        return avg_angle(SimilarityMatrix(to_mat(similarity)));
      },
      py::arg("similarity"));

  m.def(
      "spectral_entropy",
      [](const std::vector<std::vector<double>>& similarity) {
        return spectral_entropy(SimilarityMatrix(to_mat(similarity)));
      },
      py::arg("similarity"));

  m.def("default_config",
        []() { return config_to_text(RunConfig{}); },
        "canonical text of the default run configuration");

  m.def(
      "canonical_config",
      [](const std::string& text) {
        return config_to_text(parse_config_text(text));
      },
      py::arg("text"),
      "parses a config document and echoes every field canonically");

  m.def(
      "train",
      [](const std::string& config_text) {
        const RunConfig cfg = parse_config_text(config_text);
        const TrainResult r = train(cfg);
        py::dict out;
        out["run_dir"] = r.run_dir.string();
        out["steps_run"] = r.steps_run;
        out["final_accuracy_estimate"] = r.final_accuracy_estimate;
        return out;
      },
      py::arg("config_text"),
      "runs the training loop described by a config document "
      "(out_dir must be set)");

  m.def(
      "read_metrics",
      [](std::filesystem::path path) {
        if (std::filesystem::is_directory(path)) {
          path /= "metrics.jsonl";
        }
        py::list out;
        for (const MetricsRow& row : read_metrics_log(path)) {
          out.append(row_to_dict(row));
        }
        return out;
      },
      py::arg("path"),
      "loads a metrics.jsonl file (or a run directory containing one) as a "
      "list of dicts");

  m.def(
      "eval_accuracy",
      [](const std::filesystem::path& ckpt, const std::string& config_text,
         long n_tokens, std::uint64_t seed) {
        return eval_accuracy(ckpt, parse_config_text(config_text).task,
                             n_tokens, seed);
      },
      py::arg("checkpoint"), py::arg("config_text"), py::arg("n_tokens"),
      py::arg("seed"),
      "argmax accuracy of a checkpoint on freshly drawn task tokens");
}
