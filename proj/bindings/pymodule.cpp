#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "corrbalance/experiment.hpp"
#include "corrbalance/metrics.hpp"
#include "corrbalance/model.hpp"
#include "corrbalance/serialize.hpp"

namespace py = pybind11;
using namespace corrbalance;

namespace {

Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

py::array_t<double> matrix_to_numpy(const Matrix& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), a.mutable_data());
  return a;
}

/// Wrapper keeping the trained state together with evaluation helpers.
struct PyTrainedModel {
  TrainedModel model;

  py::array_t<double> predict_scene(const Dataset& dataset, std::size_t scene_index) const {
    if (scene_index >= dataset.scenes.size()) throw InputError("scene index out of range");
    return matrix_to_numpy(predict(model.model, dataset.scenes[scene_index]));
  }

  std::string evaluate_split(const Dataset& dataset, const std::string& protocol,
                             bool validation) const {
    const std::vector<std::size_t>& indices =
        validation ? model.val_scenes : model.train_scenes;
    std::vector<Scene> scenes;
    std::vector<ScenePredictions> preds;
    for (std::size_t s : indices) {
      if (dataset.scenes[s].pairs.empty()) continue;
      scenes.push_back(dataset.scenes[s]);
      preds.push_back({dataset.scenes[s].id, predict(model.model, dataset.scenes[s])});
    }
    const EvalReport report =
        evaluate(scenes, preds, {20, 50, 100}, protocol_from_string(protocol),
                 config_hash(to_json(model.config)), model.config.seed);
    return to_json(report).dump();
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Correlation-aware long-tailed classification workbench (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<LabelError>(m, "LabelError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<StalenessError>(m, "StalenessError", PyExc_RuntimeError);

  m.def("stable_softmax", [](const Vector& logits) { return stable_softmax(logits); },
        py::arg("logits"), "Max-subtracted softmax over a vector of logits.");
  m.def("l2_distance",
        [](const Vector& a, const Vector& b) { return l2_distance(a, b); }, py::arg("a"),
        py::arg("b"));
  m.def("center_loss",
        [](const py::array_t<double>& f, const std::vector<int>& labels,
           const py::array_t<double>& centers) {
          return center_loss(matrix_from_numpy(f), labels, matrix_from_numpy(centers));
        },
        py::arg("features"), py::arg("labels"), py::arg("centers"),
        "Mean squared distance between features and their class centers.");
  m.def("center_loss_grad",
        [](const py::array_t<double>& f, const std::vector<int>& labels,
           const py::array_t<double>& centers) {
          return matrix_to_numpy(
              center_loss_grad(matrix_from_numpy(f), labels, matrix_from_numpy(centers)));
        },
        py::arg("features"), py::arg("labels"), py::arg("centers"),
        "Gradient with respect to the centers only (features are constants).");
  m.def("normalize_correlation",
        [](const Vector& u, const std::string& mode, double epsilon) {
          return normalize_correlation(u, normalization_mode_from_string(mode), epsilon);
        },
        py::arg("u"), py::arg("mode") = "minmax", py::arg("epsilon") = 1e-6);

  py::class_<ClassGraph>(m, "ClassGraph",
                         "Learnable class-center graph with distance edges and loss-weight "
                         "factors.")
      .def(py::init([](std::size_t num_classes, std::size_t dim, const std::string& mode,
                       double epsilon, std::uint64_t seed) {
             return ClassGraph(num_classes, dim, normalization_mode_from_string(mode), epsilon,
                               seed);
           }),
           py::arg("num_classes"), py::arg("dim"), py::arg("mode") = "minmax",
           py::arg("epsilon") = 1e-6, py::arg("seed") = 0)
      .def_property_readonly("num_classes", &ClassGraph::num_classes)
      .def_property_readonly("dim", &ClassGraph::dim)
      .def_property_readonly("update_count", &ClassGraph::update_count)
      .def_property_readonly("centers",
                             [](const ClassGraph& g) { return matrix_to_numpy(g.centers()); })
      .def_property_readonly("edges",
                             [](const ClassGraph& g) { return matrix_to_numpy(g.edges()); })
      .def_property_readonly("global_correlation",
                             [](const ClassGraph& g) { return g.global_correlation(); })
      .def_property_readonly("tau", [](const ClassGraph& g) { return g.tau(); })
      .def("set_centers",
           [](ClassGraph& g, const py::array_t<double>& centers) {
             g.set_centers(matrix_from_numpy(centers));
           })
      .def("update_centers_learnt",
           [](ClassGraph& g, const py::array_t<double>& f, const std::vector<int>& labels,
              double lr_c) { g.update_centers_learnt(matrix_from_numpy(f), labels, lr_c); },
           py::arg("features"), py::arg("labels"), py::arg("lr_c") = 0.5)
      .def("update_centers_average",
           [](ClassGraph& g, const py::array_t<double>& f, const std::vector<int>& labels) {
             g.update_centers_average(matrix_from_numpy(f), labels);
           })
      .def("refresh_edges", &ClassGraph::refresh_edges)
      .def("to_json", [](const ClassGraph& g) { return to_json(g).dump(); });

  py::class_<BatchLossResult>(m, "LossResult")
      .def_readonly("loss", &BatchLossResult::loss)
      .def_readonly("per_sample_weights", &BatchLossResult::per_sample_weights)
      .def_readonly("dropped_mask", &BatchLossResult::dropped_mask)
      .def_property_readonly("logit_gradient", [](const BatchLossResult& r) {
        return matrix_to_numpy(r.logit_gradient);
      });

  m.def("plain_ce",
        [](const py::array_t<double>& logits, const std::vector<int>& labels) {
          return plain_ce(matrix_from_numpy(logits), labels);
        },
        py::arg("logits"), py::arg("labels"));
  m.def("pcpl_loss",
        [](const py::array_t<double>& logits, const std::vector<int>& labels, const Vector& tau,
           bool per_sample_denominator) {
          return pcpl_loss(matrix_from_numpy(logits), labels, tau, per_sample_denominator);
        },
        py::arg("logits"), py::arg("labels"), py::arg("tau"),
        py::arg("per_sample_denominator") = false,
        "Correlation-weighted cross entropy with analytic logit gradients.");
  m.def("reweight_pow_loss",
        [](const py::array_t<double>& logits, const std::vector<int>& labels,
           const Vector& frequencies, double n) {
          return reweight_pow_loss(matrix_from_numpy(logits), labels, frequencies, n);
        },
        py::arg("logits"), py::arg("labels"), py::arg("frequencies"), py::arg("n"));
  m.def("class_balanced_loss",
        [](const py::array_t<double>& logits, const std::vector<int>& labels,
           const Vector& frequencies, double beta) {
          return class_balanced_loss(matrix_from_numpy(logits), labels, frequencies, beta);
        },
        py::arg("logits"), py::arg("labels"), py::arg("frequencies"), py::arg("beta") = 0.999);
  m.def("focal_loss",
        [](const py::array_t<double>& logits, const std::vector<int>& labels, double gamma) {
          return focal_loss(matrix_from_numpy(logits), labels, gamma);
        },
        py::arg("logits"), py::arg("labels"), py::arg("gamma") = 2.0);
  m.def("drop_mask",
        [](const py::array_t<double>& features, const std::vector<int>& labels,
           const ClassGraph& graph, double lambda, std::uint64_t token) {
          return drop_mask(matrix_from_numpy(features), labels, graph, lambda, token);
        },
        py::arg("features"), py::arg("labels"), py::arg("graph"), py::arg("lambda_") = 2.0,
        py::arg("token") = 0,
        "Noisy-sample filter; token must match graph.update_count.");

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init([](std::size_t num_layers, std::size_t num_heads, std::size_t model_dim,
                       std::size_t ff_hidden_dim, bool use_layer_norm) {
             return EncoderConfig{num_layers, num_heads, model_dim, ff_hidden_dim,
                                  use_layer_norm};
           }),
           py::arg("num_layers") = 2, py::arg("num_heads") = 4, py::arg("model_dim") = 32,
           py::arg("ff_hidden_dim") = 64, py::arg("use_layer_norm") = true)
      .def_readwrite("num_layers", &EncoderConfig::num_layers)
      .def_readwrite("num_heads", &EncoderConfig::num_heads)
      .def_readwrite("model_dim", &EncoderConfig::model_dim)
      .def_readwrite("ff_hidden_dim", &EncoderConfig::ff_hidden_dim)
      .def_readwrite("use_layer_norm", &EncoderConfig::use_layer_norm);

  py::class_<EncoderStack>(m, "EncoderStack",
                           "Stacked residual self-attention encoders with spatial fusion.")
      .def_static("create",
                  [](const EncoderConfig& config, std::size_t raw_dim, std::uint64_t seed) {
                    return make_encoder_stack(config, raw_dim, seed);
                  },
                  py::arg("config"), py::arg("raw_dim"), py::arg("seed") = 0)
      .def("forward",
           [](const EncoderStack& stack, const py::array_t<double>& features,
              const py::array_t<double>& boxes) {
             const NodeSet nodes{matrix_from_numpy(features), matrix_from_numpy(boxes)};
             return matrix_to_numpy(stack_forward(nodes, stack));
           },
           py::arg("features"), py::arg("boxes"),
           "Contextual node representations for one scene.")
      .def_property_readonly("num_params",
                             [](const EncoderStack& s) { return flatten_params(s).size(); });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_scenes", [](const Dataset& d) { return d.scenes.size(); })
      .def_property_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("total_pairs", &Dataset::total_pairs)
      .def_property_readonly("class_counts", &Dataset::class_counts)
      .def("save", [](const Dataset& d, const std::string& path) { write_dataset_jsonl(d, path); })
      .def_static("load", &read_dataset_jsonl, py::arg("path"));

  m.def("generate_dataset",
        [](const std::string& config_json) {
          return generate(generator_config_from_json(Json::parse(config_json)));
        },
        py::arg("config_json"),
        "Generate a synthetic correlated/long-tailed dataset from a JSON config string.");
  m.def("inject_label_noise",
        [](const Dataset& dataset, double flip_rate, std::uint64_t seed) {
          return inject_label_noise(dataset, flip_rate, seed);
        },
        py::arg("dataset"), py::arg("flip_rate"), py::arg("seed"));

  py::class_<PyTrainedModel>(m, "TrainedModel")
      .def_property_readonly("final_tau",
                             [](const PyTrainedModel& t) { return t.model.graph.tau(); })
      .def_property_readonly("class_frequencies",
                             [](const PyTrainedModel& t) { return t.model.class_frequencies; })
      .def_property_readonly("num_epochs",
                             [](const PyTrainedModel& t) { return t.model.log.size(); })
      .def_property_readonly("losses",
                             [](const PyTrainedModel& t) {
                               Vector losses;
                               for (const EpochLog& e : t.model.log) losses.push_back(e.mean_loss);
                               return losses;
                             })
      .def("predict", &PyTrainedModel::predict_scene, py::arg("dataset"), py::arg("scene_index"))
      .def("evaluate", &PyTrainedModel::evaluate_split, py::arg("dataset"),
           py::arg("protocol") = "constrained", py::arg("validation") = true,
           "EvalReport JSON for the chosen split and protocol.")
      .def("checkpoint_json",
           [](const PyTrainedModel& t) { return checkpoint_to_json(t.model).dump(); });

  m.def("fit",
        [](const Dataset& dataset, const std::string& train_config_json) {
          const TrainConfig config = train_config_from_json(Json::parse(train_config_json));
          validate_train_config(config);
          return PyTrainedModel{fit(dataset, config)};
        },
        py::arg("dataset"), py::arg("train_config_json"),
        "Train the desk-scale predicate classifier; returns the trained state.");

  m.def("rank_predictions",
        [](const py::array_t<double>& scores, const std::string& protocol) {
          const auto ranked =
              rank_predictions(matrix_from_numpy(scores), protocol_from_string(protocol));
          py::list out;
          for (const RankedCandidate& c : ranked) {
            out.append(py::make_tuple(c.pair, c.predicate, c.score));
          }
          return out;
        },
        py::arg("scores"), py::arg("protocol") = "constrained",
        "Ranked (pair, predicate, score) candidates for one scene.");

  m.attr("__version__") = "0.1.0";
}
