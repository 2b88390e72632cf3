#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "smaui/adapt.hpp"
#include "smaui/cli.hpp"
#include "smaui/databench.hpp"
#include "smaui/errors.hpp"
#include "smaui/gmm.hpp"
#include "smaui/nn.hpp"
#include "smaui/pca.hpp"
#include "smaui/swd.hpp"

namespace py = pybind11;
using namespace smaui;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) return Matrix(static_cast<std::size_t>(a.shape(0)), 1, {a.data(), a.data() + a.size()});
  if (a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array, got " + std::to_string(a.ndim()) + "-D");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const Labels& y) {
  if (y.ndim() != 1) throw ShapeError("labels must be a 1-D array");
  return {y.data(), y.data() + y.size()};
}

py::array_t<int> from_labels(const std::vector<int>& y) {
  return py::array_t<int>(static_cast<py::ssize_t>(y.size()), y.data());
}

Dataset make_dataset(const Array& x, const std::optional<Labels>& y) {
  Dataset ds;
  ds.features = to_matrix(x);
  if (y) ds.labels = to_labels(*y);
  ds.validate();
  return ds;
}

py::dict report_to_dict(const AdaptReport& r) {
  py::list records;
  for (const auto& rec : r.records) {
    py::dict d;
    d["iteration"] = rec.iteration;
    d["classification"] = rec.classification;
    d["alignment"] = rec.alignment;
    d["total"] = rec.total;
    d["target_accuracy"] = rec.target_accuracy;
    d["full_set_alignment"] = rec.full_set_alignment;
    records.append(d);
  }
  py::dict out;
  out["records"] = records;
  out["initial_accuracy"] = r.initial_accuracy;
  out["final_accuracy"] = r.final_accuracy;
  out["pseudo_requested"] = r.pseudo_requested;
  out["pseudo_accepted"] = r.pseudo_accepted;
  out["pseudo_attempts"] = r.pseudo_attempts;
  out["wall_seconds"] = r.wall_seconds;
  return out;
}

}  // namespace

PYBIND11_MODULE(_smaui, m) {
  m.doc() = "Source-free model adaptation through an internal Gaussian-mixture distribution";

  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<NetworkParams>(m, "Network")
      .def_property_readonly("input_dim", &NetworkParams::input_dim)
      .def_property_readonly("embedding_dim", &NetworkParams::embedding_dim)
      .def_property_readonly("num_classes", &NetworkParams::num_classes)
      .def_property_readonly("embedding_mode",
                             [](const NetworkParams& p) { return to_string(p.embedding_mode); })
      .def("tensors",
           [](const NetworkParams& p) {
             py::list out;
             for (const Matrix* t : p.tensors()) out.append(to_array(*t));
             return out;
           })
      .def("save", [](const NetworkParams& p, const std::filesystem::path& path) { save_network(p, path); })
      .def_static("load", &load_network)
      .def("__eq__", [](const NetworkParams& a, const NetworkParams& b) { return a == b; });

  py::class_<GmmModel>(m, "Gmm")
      .def_property_readonly("weights", [](const GmmModel& g) { return g.weights; })
      .def_property_readonly("means", [](const GmmModel& g) { return to_array(g.means); })
      .def_property_readonly("covariances",
                             [](const GmmModel& g) {
                               py::list out;
                               for (const auto& c : g.covariances) out.append(to_array(c));
                               return out;
                             })
      .def_readonly("reg_eps", &GmmModel::reg_eps)
      .def_readonly("source_count", &GmmModel::source_count)
      .def("logpdf", [](const GmmModel& g, const Array& z) {
        const Matrix pts = to_matrix(z);
        std::vector<double> out(pts.rows());
        for (std::size_t i = 0; i < pts.rows(); ++i) out[i] = gmm_logpdf(g, pts.row(i));
        return out;
      })
      .def("save", [](const GmmModel& g, const std::filesystem::path& path) { save_gmm(g, path); })
      .def_static("load", &load_gmm);

  m.def(
      "generate",
      [](const std::string& task, std::size_t n, double rotation, std::vector<double> offset, double noise,
         std::uint64_t seed, std::size_t num_classes) {
        ShiftSpec spec;
        spec.kind = parse_task_kind(task);
        spec.n = n;
        spec.rotation_deg = rotation;
        spec.offset = std::move(offset);
        spec.noise = noise;
        spec.seed = seed;
        spec.num_classes = num_classes;
        const DomainPair p = generate(spec);
        py::dict out;
        out["source_x"] = to_array(p.source.features);
        out["source_y"] = from_labels(*p.source.labels);
        out["target_x"] = to_array(p.target.features);
        out["target_y"] = from_labels(*p.target.labels);
        return out;
      },
      py::arg("task") = "rotated-moons", py::arg("n") = 2000, py::arg("rotation") = 40.0,
      py::arg("offset") = std::vector<double>{0.0, 0.0}, py::arg("noise") = 0.1, py::arg("seed") = 0,
      py::arg("num_classes") = 3, "Synthetic source/target pair as numpy arrays.");

  m.def(
      "train_source",
      [](const Array& x, const Labels& y, std::size_t hidden, std::size_t embedding_dim,
         const std::string& embedding_mode, int epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
        const Dataset ds = make_dataset(x, y);
        Architecture arch;
        arch.input_dim = ds.features.cols();
        arch.encoder_hidden = hidden == 0 ? std::vector<std::size_t>{} : std::vector<std::size_t>{hidden};
        arch.embedding_dim = embedding_dim;
        arch.num_classes = std::max<std::size_t>(2, ds.inferred_num_classes());
        arch.embedding_mode = parse_embedding_mode(embedding_mode);
        SourceTrainConfig cfg{epochs, batch_size, lr, seed};
        py::gil_scoped_release release;
        SourceTrainResult r = train_source(ds, arch, cfg);
        return std::make_pair(std::move(r.params), std::move(r.epoch_loss));
      },
      py::arg("x"), py::arg("y"), py::arg("hidden") = 32, py::arg("embedding_dim") = 8,
      py::arg("embedding_mode") = "pre-softmax", py::arg("epochs") = 100, py::arg("lr") = 1e-3,
      py::arg("batch_size") = 64, py::arg("seed") = 0, "Returns (network, per-epoch loss).");

  m.def("encode", [](const NetworkParams& p, const Array& x) { return to_array(encode(p, to_matrix(x))); });
  m.def("classify", [](const NetworkParams& p, const Array& z) { return to_array(classify(p, to_matrix(z))); });
  m.def("predict_proba",
        [](const NetworkParams& p, const Array& x) { return to_array(predict_proba(p, to_matrix(x))); });

  m.def(
      "estimate_gmm",
      [](const Array& z, const Labels& y, std::size_t k, std::optional<double> reg_eps) {
        return estimate_gmm(to_matrix(z), to_labels(y), k, reg_eps);
      },
      py::arg("z"), py::arg("y"), py::arg("num_classes"), py::arg("reg_eps") = py::none());

  m.def(
      "sample_gmm",
      [](const GmmModel& g, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        const GmmSamples s = sample_gmm(g, n, rng);
        return std::make_pair(to_array(s.points), from_labels(s.components));
      },
      py::arg("gmm"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "pseudo_dataset",
      [](const GmmModel& g, const NetworkParams& p, std::size_t n, double tau, std::uint64_t seed) {
        Rng rng(seed);
        const PseudoDataset pd = build_pseudo_dataset(g, p, n, tau, rng);
        py::dict out;
        out["points"] = to_array(pd.points);
        out["labels"] = from_labels(pd.labels);
        out["attempts"] = pd.attempts;
        out["acceptance_rate"] = pd.acceptance_rate();
        return out;
      },
      py::arg("gmm"), py::arg("network"), py::arg("n"), py::arg("tau") = 0.99, py::arg("seed") = 0);

  m.def(
      "swd2",
      [](const Array& x, const Array& y, std::size_t slices, std::uint64_t seed, double power) {
        const Matrix a = to_matrix(x);
        return swd2(a, to_matrix(y), sample_unit_directions(slices, a.cols(), seed), power);
      },
      py::arg("x"), py::arg("y"), py::arg("slices") = 128, py::arg("seed") = 0, py::arg("power") = 2.0);
  m.def("exact_w2_small",
        [](const Array& x, const Array& y) { return exact_w2_small(to_matrix(x), to_matrix(y)); });
  m.def(
      "wasserstein_1d",
      [](const std::vector<double>& a, const std::vector<double>& b, double power) {
        return wasserstein_1d(a, b, power);
      },
      py::arg("a"), py::arg("b"), py::arg("power") = 2.0);

  m.def(
      "adapt",
      [](const NetworkParams& p, const Array& target_x, const GmmModel& g, std::optional<Labels> target_y,
         double lambda, double tau, int iterations, std::size_t batch_size, std::size_t slices, double lr,
         std::optional<std::size_t> pseudo_size, std::uint64_t seed, int eval_every, bool freeze_encoder,
         bool freeze_classifier) {
        AdaptConfig cfg;
        cfg.lambda = lambda;
        cfg.tau = tau;
        cfg.iterations = iterations;
        cfg.batch_size = batch_size;
        cfg.slices = slices;
        cfg.lr = lr;
        cfg.pseudo_size = pseudo_size;
        cfg.seed = seed;
        cfg.eval_every = eval_every;
        cfg.freeze_encoder = freeze_encoder;
        cfg.freeze_classifier = freeze_classifier;
        // Labels, when given, are only used by the held-out accuracy callback.
        const Dataset labelled = make_dataset(target_x, target_y);
        TargetEvaluator evaluator;
        if (labelled.labeled()) evaluator = [&labelled](const NetworkParams& n) { return accuracy(n, labelled); };
        AdaptResult r;
        {
          py::gil_scoped_release release;
          r = adapt(p, strip_labels(labelled), g, cfg, evaluator);
        }
        return std::make_pair(std::move(r.params), report_to_dict(r.report));
      },
      py::arg("network"), py::arg("target_x"), py::arg("gmm"), py::arg("target_y") = py::none(),
      py::arg("lam") = 1e-3, py::arg("tau") = 0.99, py::arg("iterations") = 100, py::arg("batch_size") = 64,
      py::arg("slices") = 128, py::arg("lr") = 1e-4, py::arg("pseudo_size") = py::none(), py::arg("seed") = 0,
      py::arg("eval_every") = 1, py::arg("freeze_encoder") = false, py::arg("freeze_classifier") = false,
      "Returns (adapted network, report dict).");

  m.def("evaluate", [](const NetworkParams& p, const Array& x, const Labels& y) {
    const Metrics mt = evaluate(p, make_dataset(x, y));
    py::dict out;
    out["accuracy"] = mt.accuracy;
    out["confusion"] = mt.confusion;
    out["per_class_accuracy"] = mt.per_class_accuracy;
    return out;
  });

  m.def("pca_2d", [](const Array& z) { return to_array(pca_2d(to_matrix(z)).scores); });

  m.def(
      "cli", [](const std::vector<std::string>& args) { return cli::dispatch(args); }, py::arg("args"),
      "Runs a command line subcommand in-process and returns its exit code.");
}
