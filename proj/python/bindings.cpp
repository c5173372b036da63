#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gradlab/attacks.hpp"
#include "gradlab/datasets.hpp"
#include "gradlab/direct_inversion.hpp"
#include "gradlab/harness.hpp"
#include "gradlab/metrics.hpp"
#include "gradlab/models.hpp"
#include "gradlab/rng.hpp"

namespace py = pybind11;
using namespace gradlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Tensor::Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

std::vector<py::array_t<double>> to_arrays(const GradientBundle& g) {
    std::vector<py::array_t<double>> out;
    for (const auto& t : g.tensors) out.push_back(to_array(t));
    return out;
}

GradientBundle to_bundle(const std::vector<Array>& arrays) {
    GradientBundle g;
    for (const auto& a : arrays) g.tensors.push_back(to_tensor(a));
    return g;
}

// Accepts integer labels [B] or a target matrix [B x C].
Tensor targets_from(const py::object& y, std::size_t classes) {
    if (py::isinstance<py::list>(y) || py::isinstance<py::tuple>(y)) {
        return one_hot(y.cast<std::vector<std::size_t>>(), classes);
    }
    const auto a = py::array::ensure(y);
    if (a && a.ndim() == 1) return one_hot(y.cast<std::vector<std::size_t>>(), classes);
    return to_tensor(y.cast<Array>());
}

struct PyModel {
    Model model;
};

}  // namespace

PYBIND11_MODULE(_gradlab, m) {
    m.doc() = "gradlab core bindings";
    m.attr("__version__") = GRADLAB_VERSION;

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<DataFormatError>(m, "DataFormatError", PyExc_ValueError);
    py::register_exception<InfeasibleBatch>(m, "InfeasibleBatch", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataUnavailable>(m, "DataUnavailable", PyExc_FileNotFoundError);

    py::class_<SeededRng>(m, "Rng")
        .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
        .def("uniform", &SeededRng::uniform01)
        .def("below", &SeededRng::below);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("name", &Dataset::name)
        .def_property_readonly("images", [](const Dataset& d) { return to_array(d.images()); })
        .def_property_readonly("labels", &Dataset::labels)
        .def_property_readonly("num_classes", &Dataset::num_classes)
        .def("head", &Dataset::head, py::arg("n"))
        .def("__len__", &Dataset::size);

    py::class_<Batch>(m, "Batch")
        .def_property_readonly("inputs", [](const Batch& b) { return to_array(b.inputs); })
        .def_readonly("labels", &Batch::labels)
        .def_readonly("indices", &Batch::indices)
        .def("__len__", &Batch::size);

    m.def("load_mnist", &load_mnist_split, py::arg("directory"), py::arg("split") = "train");
    m.def(
        "make_synthetic",
        [](std::size_t classes, std::size_t per_class, std::size_t height, std::size_t width, std::uint64_t seed) {
            SeededRng rng(seed);
            return make_synthetic(classes, per_class, height, width, rng);
        },
        py::arg("classes"), py::arg("per_class") = 1, py::arg("height") = 32, py::arg("width") = 32,
        py::arg("seed") = 1);
    m.def(
        "sample_batch",
        [](const Dataset& d, const std::string& strategy, std::size_t b, SeededRng& rng) {
            return sample_batch(d, parse_strategy(strategy), b, rng);
        },
        py::arg("dataset"), py::arg("strategy"), py::arg("batch_size"), py::arg("rng"));

    py::class_<PyModel>(m, "Model")
        .def_static(
            "dense",
            [](std::size_t inputs, std::size_t classes, SeededRng* rng) {
                if (!rng) return PyModel{DenseModel::zeros(inputs, classes)};
                return PyModel{DenseModel::random(inputs, classes, *rng)};
            },
            py::arg("inputs"), py::arg("classes"), py::arg("rng") = nullptr,
            "Dense softmax regression; zero-initialised without an rng.")
        .def_static(
            "lenet",
            [](std::size_t height, std::size_t width, std::size_t channels, std::size_t classes, SeededRng& rng)
            { return PyModel{LeNetModel::random(height, width, channels, classes, rng)}; },
            py::arg("height"), py::arg("width"), py::arg("channels"), py::arg("classes"), py::arg("rng"))
        .def_property_readonly("kind", [](const PyModel& p) { return std::string(model_name(p.model)); })
        .def_property_readonly("classes", [](const PyModel& p) { return num_classes(p.model); })
        .def_property_readonly("inputs", [](const PyModel& p) { return input_size(p.model); })
        .def_property_readonly("parameters", [](const PyModel& pm) {
            std::vector<py::array_t<double>> out;
            for (const Tensor* p : parameters(pm.model)) out.push_back(to_array(*p));
            return out;
        });

    m.def(
        "forward", [](const PyModel& p, const Array& x) { return to_array(forward(p.model, to_tensor(x))); },
        py::arg("model"), py::arg("inputs"));
    m.def(
        "backward",
        [](const PyModel& p, const Array& x, const py::object& y, const std::string& loss_kind, bool per_sample) {
            const Model& mdl = p.model;
            BackwardOptions opt;
            opt.per_sample = per_sample;
            const auto r = backward(mdl, to_tensor(x), targets_from(y, num_classes(mdl)), parse_loss(loss_kind), opt);
            return py::make_tuple(r.mean_loss, to_arrays(r.gradients));
        },
        py::arg("model"), py::arg("inputs"), py::arg("targets"), py::arg("loss") = "softmax_ce",
        py::arg("per_sample") = false, "Returns (mean_loss, [parameter gradients]).");

    m.def(
        "invert_dense",
        [](const std::vector<Array>& grads, double eps) {
            const auto est = invert_dense_batch(to_bundle(grads), eps);
            return py::make_tuple(est.classes, to_array(est.estimates));
        },
        py::arg("gradients"), py::arg("eps") = kDivisorEpsilon, "Returns (classes, estimates [k x n]).");
    m.def(
        "infer_labels",
        [](const Array& grad_b, std::size_t classes, std::size_t batch_size) {
            const auto r = infer_label_distribution(to_tensor(grad_b), classes, batch_size);
            return py::make_tuple(r.labels, r.counts, r.confidence == Confidence::High ? "high" : "low");
        },
        py::arg("grad_b"), py::arg("classes"), py::arg("batch_size"),
        "Returns (labels, counts, confidence).");

    m.def(
        "run_attack",
        [](const PyModel& p, const std::vector<Array>& grads, std::size_t batch_size, std::size_t height,
           std::size_t width, const std::string& loss_kind, const std::string& attack, double lr, std::size_t iters,
           std::uint64_t seed, const std::string& label_mode) {
            const auto observed = to_bundle(grads);
            AttackProblem problem{&p.model, &observed, parse_loss(loss_kind), batch_size, height, width};
            AttackConfig cfg;
            cfg.kind = parse_attack(attack);
            cfg.lr = lr;
            cfg.max_iters = iters;
            cfg.seed = seed;
            cfg.label_mode = parse_label_mode(label_mode);
            AttackResult r;
            {
                py::gil_scoped_release release;
                r = run_attack(problem, cfg);
            }
            py::dict out;
            out["initial"] = to_array(r.initial);
            out["recovered"] = to_array(r.recovered);
            out["labels"] = r.labels;
            out["label_mode"] = std::string(to_string(r.label_mode));
            out["trace"] = r.trace;
            out["iterations"] = r.iterations;
            out["termination"] = std::string(to_string(r.termination));
            out["final_objective"] = r.final_objective;
            return out;
        },
        py::arg("model"), py::arg("gradients"), py::arg("batch_size"), py::arg("height"), py::arg("width"),
        py::arg("loss") = "softmax_ce", py::arg("attack") = "two_norm", py::arg("lr") = 0.05, py::arg("iters") = 550,
        py::arg("seed") = 0, py::arg("label_mode") = "auto");

    m.def(
        "avd", [](const Array& a, const Array& b) { return avd(to_tensor(a), to_tensor(b)); }, py::arg("source"),
        py::arg("target"));
    m.def(
        "normalized_avd",
        [](const Array& a, const Array& b, const Array& n) {
            return normalized_avd(to_tensor(a), to_tensor(b), to_tensor(n));
        },
        py::arg("source"), py::arg("target"), py::arg("init_noise"));
    m.def(
        "normalized_mse",
        [](const Array& a, const Array& b, const Array& n) {
            return normalized_mse(to_tensor(a), to_tensor(b), to_tensor(n));
        },
        py::arg("source"), py::arg("target"), py::arg("init_noise"));

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::filesystem::path& out_dir,
           const std::optional<std::filesystem::path>& data_dir) {
            const auto cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
            ExperimentResults r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg, load_experiment_data(cfg, data_dir), {out_dir, nullptr});
            }
            py::list rates;
            for (const auto& row : r.rates) {
                py::dict d;
                d["loss"] = std::string(to_string(row.cell.variant.loss));
                d["strategy"] = std::string(to_string(row.cell.variant.strategy));
                d["batch_size"] = row.cell.batch_size;
                d["channels"] = row.cell.channels;
                d["attack"] = row.attack;
                d["trials"] = row.trials;
                d["rates"] = row.rates;
                d["skipped"] = row.skipped;
                rates.append(d);
            }
            py::list direct;
            for (const auto& s : r.direct) {
                py::dict d;
                d["loss"] = std::string(to_string(s.cell.variant.loss));
                d["strategy"] = std::string(to_string(s.cell.variant.strategy));
                d["batch_size"] = s.cell.batch_size;
                d["sigma"] = s.cell.sigma;
                d["median"] = s.median;
                d["mean"] = s.mean;
                d["skipped"] = s.skipped;
                direct.append(d);
            }
            py::list train;
            for (const auto& s : r.train) {
                py::dict d;
                d["loss"] = std::string(to_string(s.cell.variant.loss));
                d["strategy"] = std::string(to_string(s.cell.variant.strategy));
                d["final_accuracy"] = s.report.final_accuracy;
                d["recovery"] = s.recovery;
                train.append(d);
            }
            py::dict out;
            out["rates"] = rates;
            out["direct"] = direct;
            out["train"] = train;
            return out;
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("data_dir") = std::nullopt,
        "Runs an experiment manifest (JSON text) and returns a summary dict.");
}
