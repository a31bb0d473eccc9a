// Python bindings for the core operations: dataset generation, training,
// evaluation, checkpoints and the gradient checker.

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uda/checkpoint.hpp"
#include "uda/data.hpp"
#include "uda/error.hpp"
#include "uda/eval.hpp"
#include "uda/gradcheck.hpp"
#include "uda/losses.hpp"
#include "uda/trainer.hpp"

namespace py = pybind11;
using namespace uda;

namespace {

py::array_t<double> tensor_to_numpy(const Tensor2& t) {
    py::array_t<double> out({t.rows, t.cols});
    std::copy(t.values.begin(), t.values.end(), out.mutable_data());
    return out;
}

Tensor2 numpy_to_tensor(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    Tensor2 t(static_cast<std::size_t>(a.shape(0)),
              static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + t.size(), t.values.begin());
    return t;
}

py::dict epoch_to_dict(const EpochRecord& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["lr"] = r.lr;
    d["alpha"] = r.alpha;
    d["beta1"] = r.beta1;
    d["beta2"] = r.beta2;
    d["loss_disc"] = r.loss_disc;
    d["loss_enc_adv"] = r.loss_enc_adv;
    d["loss_cls"] = r.loss_cls;
    d["loss_center_src"] = r.loss_center_src;
    d["loss_center_tgt"] = r.loss_center_tgt;
    d["loss_total"] = r.loss_total;
    d["phi_kept_fraction"] = r.phi_kept_fraction;
    d["center_drift"] = r.center_drift;
    d["source_test_acc"] = r.source_test_acc;
    d["target_test_acc"] = r.target_test_acc;
    return d;
}

VariantFlags flags_from_name(const std::string& name) {
    if (name == "full") return {true, true, true};
    if (name == "source_only") return {false, false, false};
    if (name == "gan_only") return {true, false, false};
    if (name == "center_only") return {false, true, false};
    if (name == "gan_center") return {true, true, false};
    throw ConfigError("unknown variant '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adversarial domain adaptation with center-based alignment";

    // translators run newest-first: register the base before the derived
    py::register_exception<Error>(m, "UdaError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<ShiftSpec>(m, "ShiftSpec")
        .def(py::init([](double rotation, std::vector<double> translation,
                         double scale, double noise_sigma) {
                 ShiftSpec s{rotation, std::move(translation), scale, noise_sigma};
                 s.validate();
                 return s;
             }),
             py::arg("rotation") = 0.0,
             py::arg("translation") = std::vector<double>{},
             py::arg("scale") = 1.0, py::arg("noise_sigma") = 0.0)
        .def_readwrite("rotation", &ShiftSpec::rotation)
        .def_readwrite("translation", &ShiftSpec::translation)
        .def_readwrite("scale", &ShiftSpec::scale)
        .def_readwrite("noise_sigma", &ShiftSpec::noise_sigma);

    py::class_<DomainDataset>(m, "DomainDataset")
        .def_property_readonly("class_count", &DomainDataset::class_count)
        .def_property_readonly("input_dim", &DomainDataset::input_dim)
        .def("source_train_features",
             [](const DomainDataset& d) { return tensor_to_numpy(d.source_train().features); })
        .def("source_train_labels",
             [](const DomainDataset& d) { return d.source_train().labels; })
        .def("source_test_features",
             [](const DomainDataset& d) { return tensor_to_numpy(d.source_test().features); })
        .def("source_test_labels",
             [](const DomainDataset& d) { return d.source_test().labels; })
        .def("target_train_features",
             [](const DomainDataset& d) { return tensor_to_numpy(d.target_train_features()); })
        .def("target_test_features",
             [](const DomainDataset& d) { return tensor_to_numpy(d.target_test().features); })
        .def("target_test_labels",
             [](const DomainDataset& d) { return d.target_test().labels; })
        .def("target_train_labels_eval_only",
             [](const DomainDataset& d) { return d.target_train_labels_eval_only(); })
        .def("limit_train_sizes", &DomainDataset::limit_train_sizes,
             py::arg("source_limit"), py::arg("target_limit"), py::arg("seed"));

    m.def("gen_blobs", &gen_blobs, py::arg("class_count"), py::arg("n_per_class"),
          py::arg("dim"), py::arg("shift") = ShiftSpec{}, py::arg("seed") = 0);
    m.def("gen_two_moons", &gen_two_moons, py::arg("n"),
          py::arg("shift") = ShiftSpec{}, py::arg("seed") = 0);
    m.def(
        "load_idx",
        [](const std::filesystem::path& images, const std::filesystem::path& labels,
           std::optional<std::size_t> downsample_to) {
            auto [features, y] = load_idx(images, labels, downsample_to);
            return py::make_tuple(tensor_to_numpy(features), y);
        },
        py::arg("images_path"), py::arg("labels_path"),
        py::arg("downsample_to") = std::nullopt);
    m.def(
        "normalize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>&
               stats_from) {
            return tensor_to_numpy(normalize(numpy_to_tensor(x),
                                             numpy_to_tensor(stats_from)));
        },
        py::arg("features"), py::arg("stats_from"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("encoder_hidden", &TrainConfig::encoder_hidden)
        .def_readwrite("feature_dim", &TrainConfig::feature_dim)
        .def_readwrite("discriminator_hidden", &TrainConfig::discriminator_hidden)
        .def_readwrite("threshold", &TrainConfig::threshold)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("patience", &TrainConfig::patience)
        .def_readwrite("min_improvement", &TrainConfig::min_improvement)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("discriminator_steps", &TrainConfig::discriminator_steps)
        .def_property(
            "variant",
            [](const TrainConfig& c) {
                if (!c.variant.adversarial && !c.variant.center) return "source_only";
                if (!c.variant.adversarial) return "center_only";
                if (!c.variant.center) return "gan_only";
                if (!c.variant.conditional) return "gan_center";
                return "full";
            },
            [](TrainConfig& c, const std::string& name) {
                c.variant = flags_from_name(name);
            })
        .def_property(
            "stages",
            [](const TrainConfig& c) {
                py::list out;
                for (const StageWeights& s : c.stages)
                    out.append(py::make_tuple(s.start_epoch, s.alpha, s.beta1, s.beta2));
                return out;
            },
            [](TrainConfig& c, const std::vector<std::tuple<std::size_t, double,
                                                            double, double>>& stages) {
                c.stages.clear();
                for (const auto& [epoch, alpha, beta1, beta2] : stages)
                    c.stages.push_back({epoch, alpha, beta1, beta2});
            })
        .def_property(
            "learning_rate",
            [](const TrainConfig& c) { return c.optimizer.learning_rate; },
            [](TrainConfig& c, double lr) { c.optimizer.learning_rate = lr; })
        .def_property(
            "optimizer",
            [](const TrainConfig& c) {
                return c.optimizer.kind == OptimizerKind::RmsProp ? "rmsprop"
                                                                  : "sgd_momentum";
            },
            [](TrainConfig& c, const std::string& kind) {
                if (kind == "rmsprop") c.optimizer.kind = OptimizerKind::RmsProp;
                else if (kind == "sgd_momentum")
                    c.optimizer.kind = OptimizerKind::SgdMomentum;
                else throw ConfigError("unknown optimizer '" + kind + "'");
            });

    py::class_<CenterTable>(m, "CenterTable")
        .def_property_readonly("initialized",
                               [](const CenterTable& t) { return t.initialized; })
        .def_property_readonly("gamma", [](const CenterTable& t) { return t.gamma; })
        .def("centers",
             [](const CenterTable& t) { return tensor_to_numpy(t.centers); });

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("feature_dim", &ModelParams::feature_dim)
        .def_property_readonly("class_count", &ModelParams::class_count)
        .def_property_readonly("has_discriminator", &ModelParams::has_discriminator)
        .def_property_readonly("param_count", &ModelParams::param_count)
        .def("encode",
             [](const ModelParams& p,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                 return tensor_to_numpy(encode_value(p, numpy_to_tensor(x)));
             })
        .def("classify_logits",
             [](const ModelParams& p,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                 return tensor_to_numpy(
                     classify_value(p, encode_value(p, numpy_to_tensor(x))));
             })
        .def("predict",
             [](const ModelParams& p,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                 return argmax_rows(
                     classify_value(p, encode_value(p, numpy_to_tensor(x))));
             });

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("params", &TrainResult::params)
        .def_readonly("centers", &TrainResult::centers)
        .def_property_readonly("epochs",
                               [](const TrainResult& r) {
                                   py::list out;
                                   for (const EpochRecord& rec : r.report.epochs)
                                       out.append(epoch_to_dict(rec));
                                   return out;
                               })
        .def_property_readonly("converged_early", [](const TrainResult& r) {
            return r.report.converged_early;
        });

    m.def("train", &train, py::arg("dataset"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("resume", &resume, py::arg("dataset"), py::arg("config"),
          py::arg("checkpoint_path"), py::arg("start_epoch"),
          py::call_guard<py::gil_scoped_release>());

    m.def(
        "evaluate",
        [](const ModelParams& params, const CenterTable& centers,
           const DomainDataset& dataset, double threshold, std::uint64_t probe_seed) {
            const EvalSummary s = evaluate(params, centers, dataset, threshold,
                                           probe_seed);
            py::dict d;
            d["source_test_acc"] = s.source_test_acc;
            d["target_test_acc"] = s.target_test_acc;
            d["per_class_acc"] = s.per_class_acc;
            d["confusion"] = s.confusion;
            d["domain_probe_acc"] = s.domain_probe_acc;
            d["phi_kept_fraction"] = s.phi_kept_fraction;
            return d;
        },
        py::arg("params"), py::arg("centers"), py::arg("dataset"),
        py::arg("threshold") = 0.99, py::arg("probe_seed") = 1);

    m.def("save_checkpoint", &save_checkpoint, py::arg("params"), py::arg("centers"),
          py::arg("path"));
    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) {
            Checkpoint c = load_checkpoint(path);
            return py::make_tuple(std::move(c.params), std::move(c.centers));
        },
        py::arg("path"));

    m.def("export_embeddings", &export_embeddings, py::arg("params"),
          py::arg("dataset"), py::arg("stem"));

    m.def(
        "filter_target",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>&
               probabilities,
           double threshold) {
            const FilteredBatch f =
                filter_target(numpy_to_tensor(probabilities), threshold);
            py::dict d;
            d["kept_rows"] = f.kept_rows;
            d["pseudo_labels"] = f.pseudo_labels;
            d["max_probabilities"] = f.max_probabilities;
            d["kept_fraction"] = f.kept_fraction();
            return d;
        },
        py::arg("probabilities"), py::arg("threshold"));

    m.def(
        "gradient_check",
        [](std::uint64_t seed, std::size_t draws) {
            GradCheckReport report;
            {
                py::gil_scoped_release release;
                report = run_gradient_checks(seed, draws);
            }
            py::dict per_check;
            for (const GradCheckResult& r : report.checks)
                per_check[r.name.c_str()] = r.max_rel_err;
            py::dict d;
            d["max_rel_err"] = report.max_rel_err;
            d["checks"] = per_check;
            return d;
        },
        py::arg("seed") = 12345, py::arg("draws") = 20);
}
