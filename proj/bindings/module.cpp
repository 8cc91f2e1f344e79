// Python bindings for the prototype-flow engine: dataset creation and I/O,
// episodic model lifecycle, meta-training, evaluation, and the bias
// diagnostics. Long-running calls release the GIL.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "protoflow/checkpoint.hpp"
#include "protoflow/dataset.hpp"
#include "protoflow/error.hpp"
#include "protoflow/metatrain.hpp"

namespace py = pybind11;
using namespace protoflow;

namespace {

FlowKind flow_from_string(const std::string& s) {
  if (s == "zero") return FlowKind::zero;
  if (s == "meangrad") return FlowKind::meangrad;
  if (s == "gradnet") return FlowKind::gradnet;
  if (s == "e2gradnet") return FlowKind::e2gradnet;
  throw ConfigError("unknown flow kind: " + s);
}

SolverKind solver_from_string(const std::string& s) {
  if (s == "euler") return SolverKind::euler;
  if (s == "rk4") return SolverKind::rk4;
  if (s == "e2") return SolverKind::e2;
  throw ConfigError("unknown solver kind: " + s);
}

const char* flow_to_string(FlowKind k) {
  switch (k) {
    case FlowKind::zero: return "zero";
    case FlowKind::meangrad: return "meangrad";
    case FlowKind::gradnet: return "gradnet";
    case FlowKind::e2gradnet: return "e2gradnet";
  }
  return "?";
}

const char* solver_to_string(SolverKind k) {
  switch (k) {
    case SolverKind::euler: return "euler";
    case SolverKind::rk4: return "rk4";
    case SolverKind::e2: return "e2";
  }
  return "?";
}

EpisodeConfig episode_config(std::size_t n_way, std::size_t k_shot,
                             std::size_t queries, bool transductive) {
  EpisodeConfig ec;
  ec.n_way = n_way;
  ec.k_shot = k_shot;
  ec.queries_per_class = queries;
  ec.mode = transductive ? EpisodeMode::transductive : EpisodeMode::inductive;
  return ec;
}

py::array_t<double> rows_to_array(
    const std::vector<std::vector<double>>& rows, std::size_t dim) {
  py::array_t<double> out({rows.size(), dim});
  double* dst = out.mutable_data();
  for (const auto& r : rows) {
    std::memcpy(dst, r.data(), dim * sizeof(double));
    dst += dim;
  }
  return out;
}

EmbeddingDataset dataset_from_arrays(
    py::array_t<double, py::array::c_style | py::array::forcecast> features,
    py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>
        labels) {
  if (features.ndim() != 2)
    throw ShapeError("features must be a 2-d array [samples x dim]");
  if (labels.ndim() != 1 ||
      labels.shape(0) != features.shape(0))
    throw ShapeError("labels must be 1-d with one entry per feature row");
  const std::size_t n = static_cast<std::size_t>(features.shape(0));
  const std::size_t d = static_cast<std::size_t>(features.shape(1));
  EmbeddingDataset ds(d, Split::train);
  const double* x = features.data();
  const std::int64_t* y = labels.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0) throw ConfigError("class labels must be non-negative");
    ds.add(static_cast<std::uint32_t>(y[i]),
           std::vector<double>(x + i * d, x + (i + 1) * d));
  }
  return ds;
}

py::dict eval_to_dict(const EvalReport& r) {
  py::dict out;
  out["accuracy"] = r.mean_accuracy;
  out["ci95"] = r.ci95;
  out["episodes"] = r.episodes;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Few-shot classification via ODE-integrated prototype flows";
  m.attr("__version__") = "1.0.0";

  py::register_exception<Error>(m, "ProtoflowError", PyExc_RuntimeError);

  py::class_<EmbeddingDataset>(m, "Dataset",
                               "Embedding vectors grouped by class id")
      .def_property_readonly("dim", &EmbeddingDataset::dim)
      .def_property_readonly("num_classes", &EmbeddingDataset::num_classes)
      .def_property_readonly("total_samples",
                             &EmbeddingDataset::total_samples)
      .def_property_readonly("class_ids", &EmbeddingDataset::class_ids)
      .def(
          "samples",
          [](const EmbeddingDataset& ds, std::uint32_t class_id) {
            return rows_to_array(ds.samples_of(class_id), ds.dim());
          },
          py::arg("class_id"), "All sample vectors of one class, [n x dim]")
      .def(
          "class_mean",
          [](const EmbeddingDataset& ds, std::uint32_t class_id) {
            const auto mean = ds.class_mean(class_id);
            py::array_t<double> out(mean.size());
            std::memcpy(out.mutable_data(), mean.data(),
                        mean.size() * sizeof(double));
            return out;
          },
          py::arg("class_id"), "Mean over every sample of the class")
      .def(
          "save",
          [](const EmbeddingDataset& ds, const std::string& path) {
            save_pfeb(ds, path);
          },
          py::arg("path"), "Write the binary dataset container")
      .def("__repr__", [](const EmbeddingDataset& ds) {
        return "Dataset(classes=" + std::to_string(ds.num_classes()) +
               ", dim=" + std::to_string(ds.dim()) +
               ", samples=" + std::to_string(ds.total_samples()) + ")";
      });

  m.def(
      "synth_dataset",
      [](std::size_t num_classes, std::size_t dim,
         std::size_t samples_per_class, double center_scale,
         double noise_sigma, std::uint64_t seed) {
        SynthConfig c;
        c.num_classes = num_classes;
        c.dim = dim;
        c.samples_per_class = samples_per_class;
        c.center_scale = center_scale;
        c.noise_sigma = noise_sigma;
        c.seed = seed;
        return synth_gaussian(c);
      },
      py::arg("num_classes") = 30, py::arg("dim") = 64,
      py::arg("samples_per_class") = 200, py::arg("center_scale") = 1.0,
      py::arg("noise_sigma") = 0.35, py::arg("seed") = 1,
      "Gaussian blobs around class centers drawn on a sphere");

  m.def("load_dataset", &load_embeddings, py::arg("path"),
        "Load a dataset (.pfeb binary or .csv)");

  m.def("dataset_from_arrays", &dataset_from_arrays, py::arg("features"),
        py::arg("labels"),
        "Build a dataset from a [n x dim] float array and integer labels");

  m.def(
      "split_dataset",
      [](const EmbeddingDataset& ds, std::size_t n_train, std::size_t n_val,
         std::size_t n_test) {
        auto s = split_by_classes(ds, n_train, n_val, n_test);
        return py::make_tuple(std::move(s[0]), std::move(s[1]),
                              std::move(s[2]));
      },
      py::arg("dataset"), py::arg("n_train"), py::arg("n_val"),
      py::arg("n_test"),
      "Partition into disjoint train/val/test class sets by ascending id");

  py::class_<Model>(m, "Model",
                    "A flow network plus ODE solver and hyperparameters")
      .def_static(
          "create",
          [](const std::string& flow, const std::string& solver,
             std::size_t n_way, std::size_t dim, std::size_t steps,
             double integral_time, std::size_t modules, std::uint64_t seed) {
            return Model::make(flow_from_string(flow),
                               solver_from_string(solver), n_way, dim, steps,
                               integral_time, modules, seed);
          },
          py::arg("flow") = "e2gradnet", py::arg("solver") = "euler",
          py::arg("n_way") = 5, py::arg("dim") = 64, py::arg("steps") = 40,
          py::arg("integral_time") = 40.0, py::arg("modules") = 4,
          py::arg("seed") = 1)
      .def_property_readonly(
          "flow", [](const Model& m_) { return flow_to_string(m_.flow_kind); })
      .def_property_readonly("solver",
                             [](const Model& m_) {
                               return solver_to_string(m_.solver_kind);
                             })
      .def_readonly("n_way", &Model::n_way)
      .def_readonly("dim", &Model::dim)
      .def_readonly("steps", &Model::steps)
      .def_readonly("integral_time", &Model::integral_time)
      .def(
          "save",
          [](const Model& m_, const std::string& path) {
            save_checkpoint(path, m_.to_checkpoint());
          },
          py::arg("path"), "Write a weight checkpoint")
      .def_static(
          "load",
          [](const std::string& path) {
            return Model::from_checkpoint(load_checkpoint(path));
          },
          py::arg("path"), "Rebuild a model from a weight checkpoint")
      .def(
          "evaluate",
          [](Model& m_, const EmbeddingDataset& ds, std::size_t episodes,
             std::uint64_t seed, std::size_t n_way, std::size_t k_shot,
             std::size_t queries, bool transductive, std::size_t threads) {
            EpisodeConfig ec =
                episode_config(n_way, k_shot, queries, transductive);
            EvalReport r;
            {
              py::gil_scoped_release release;
              r = evaluate(ds, m_, ec, episodes, seed, threads);
            }
            return eval_to_dict(r);
          },
          py::arg("dataset"), py::arg("episodes") = 600, py::arg("seed") = 1,
          py::arg("n_way") = 5, py::arg("k_shot") = 1,
          py::arg("queries") = 15, py::arg("transductive") = true,
          py::arg("threads") = 1,
          "Mean episode accuracy with a 95% confidence half-width")
      .def("__repr__", [](const Model& m_) {
        return std::string("Model(flow=") + flow_to_string(m_.flow_kind) +
               ", solver=" + solver_to_string(m_.solver_kind) +
               ", n_way=" + std::to_string(m_.n_way) +
               ", dim=" + std::to_string(m_.dim) + ")";
      });

  m.def(
      "train",
      [](const EmbeddingDataset& train_ds, const EmbeddingDataset& val_ds,
         Model& model, double lr, double weight_decay, std::size_t epochs,
         std::size_t episodes_per_epoch,
         std::vector<std::size_t> lr_decay_epochs, double lr_decay_factor,
         std::size_t batch_episodes, std::uint64_t seed,
         std::size_t val_episodes, std::size_t n_way, std::size_t k_shot,
         std::size_t queries, bool transductive, std::size_t threads) {
        MetaConfig cfg;
        cfg.lr = lr;
        cfg.weight_decay = weight_decay;
        cfg.epochs = epochs;
        cfg.episodes_per_epoch = episodes_per_epoch;
        cfg.lr_decay_epochs = std::move(lr_decay_epochs);
        cfg.lr_decay_factor = lr_decay_factor;
        cfg.batch_episodes = batch_episodes;
        cfg.seed = seed;
        cfg.val_episodes = val_episodes;
        cfg.episode = episode_config(n_way, k_shot, queries, transductive);
        cfg.train_threads = threads;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = meta_train(train_ds, val_ds, cfg, model);
        }
        py::list metrics;
        for (const EpochMetrics& em : r.metrics) {
          py::dict row;
          row["epoch"] = em.epoch;
          row["train_loss"] = em.train_loss;
          row["val_acc"] = em.val_acc;
          row["lr"] = em.lr;
          metrics.append(row);
        }
        py::dict out;
        out["metrics"] = metrics;
        out["best_val_acc"] = r.best_val_acc;
        out["diverged"] = r.diverged;
        out["best_model"] = Model::from_checkpoint(r.best);
        return out;
      },
      py::arg("train_dataset"), py::arg("val_dataset"), py::arg("model"),
      py::arg("lr") = 1e-4, py::arg("weight_decay") = 5e-4,
      py::arg("epochs") = 50, py::arg("episodes_per_epoch") = 100,
      py::arg("lr_decay_epochs") = std::vector<std::size_t>{15, 30, 40},
      py::arg("lr_decay_factor") = 0.1, py::arg("batch_episodes") = 8,
      py::arg("seed") = 1, py::arg("val_episodes") = 100,
      py::arg("n_way") = 5, py::arg("k_shot") = 1, py::arg("queries") = 15,
      py::arg("transductive") = true, py::arg("threads") = 1,
      "Episodic meta-training; updates the model in place and returns "
      "metrics plus the best-validation checkpoint as a new Model");

  m.def(
      "prototype_bias",
      [](const EmbeddingDataset& ds, Model& model, std::size_t episodes,
         std::uint64_t seed, std::size_t n_way, std::size_t k_shot,
         std::size_t queries, bool transductive) {
        EpisodeConfig ec = episode_config(n_way, k_shot, queries,
                                          transductive);
        std::pair<double, double> r;
        {
          py::gil_scoped_release release;
          r = prototype_bias(ds, model, ec, episodes, seed);
        }
        return r;
      },
      py::arg("dataset"), py::arg("model"), py::arg("episodes") = 1000,
      py::arg("seed") = 1, py::arg("n_way") = 5, py::arg("k_shot") = 1,
      py::arg("queries") = 15, py::arg("transductive") = true,
      "Cosine similarity of prototypes to all-sample class means before and "
      "after flow integration");

  m.def(
      "gradient_bias",
      [](const EmbeddingDataset& ds, Model& model, std::size_t episodes,
         std::uint64_t seed, std::size_t n_way, std::size_t k_shot,
         std::size_t queries, bool transductive) {
        EpisodeConfig ec = episode_config(n_way, k_shot, queries,
                                          transductive);
        std::pair<double, double> r;
        {
          py::gil_scoped_release release;
          r = gradient_bias(ds, model, ec, episodes, seed);
        }
        return r;
      },
      py::arg("dataset"), py::arg("model"), py::arg("episodes") = 1000,
      py::arg("seed") = 1, py::arg("n_way") = 5, py::arg("k_shot") = 1,
      py::arg("queries") = 15, py::arg("transductive") = true,
      "Cosine similarity of the support-mean gradient and the model flow to "
      "the full-population gradient at t=0");
}
