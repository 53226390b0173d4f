/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "patchgrade/backbone.hpp"
#include "patchgrade/config.hpp"
#include "patchgrade/error.hpp"
#include "patchgrade/evaluation.hpp"
#include "patchgrade/patch_embedding.hpp"
#include "patchgrade/pipeline.hpp"
#include "patchgrade/pseudo_label.hpp"
#include "patchgrade/scoring.hpp"
#include "patchgrade/synthetic.hpp"
#include "patchgrade/training.hpp"

namespace py = pybind11;
namespace pg = patchgrade;
namespace fs = std::filesystem;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

pg::Tensor3 to_tensor(const FloatArray& a) {
    if (a.ndim() == 2) {
        pg::Tensor3 t(1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
        std::copy(a.data(), a.data() + a.size(), t.data.begin());
        return t;
    }
    if (a.ndim() != 3) throw pg::ShapeError("expected a (c, h, w) or (h, w) array");
    pg::Tensor3 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::array_t<float> from_tensor(const pg::Tensor3& t) {
    py::array_t<float> out({t.channels, t.height, t.width});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

template <typename T, typename Arr>
pg::BasicPatchMap<T> to_map(const Arr& a) {
    if (a.ndim() != 3 || a.shape(0) != a.shape(1)) throw pg::ShapeError("expected a (g, g, c) patch map");
    pg::BasicPatchMap<T> m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), m.values.begin());
    return m;
}

template <typename T>
py::array_t<T> from_map(const pg::BasicPatchMap<T>& m) {
    py::array_t<T> out({m.grid, m.grid, m.channels});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

std::vector<pg::PatchEmbeddingMap> to_maps(const std::vector<FloatArray>& arrays) {
    std::vector<pg::PatchEmbeddingMap> maps;
    maps.reserve(arrays.size());
    for (const auto& a : arrays) maps.push_back(to_map<float>(a));
    return maps;
}

pg::BackboneSpec backbone_by_name(const std::string& name) {
    if (name == "compact") return pg::BackboneSpec::compact();
    if (name == "large") return pg::BackboneSpec::large();
    throw pg::SpecError("unknown backbone '" + name + "' (expected compact or large)");
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

pg::Logger py_logger(const py::object& cb) {
    if (cb.is_none()) return {};
    return [cb](const std::string& msg) {
        py::gil_scoped_acquire gil;
        cb(msg);
    };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Few-shot patch-embedding anomaly grading";

    auto base = py::register_exception<pg::Error>(m, "Error", PyExc_RuntimeError);
#define PG_EXC(Name) py::register_exception<pg::Name>(m, #Name, base.ptr())
    PG_EXC(ValidationError);
    PG_EXC(LoadError);
    PG_EXC(CapacityError);
    PG_EXC(IncompatibleError);
    PG_EXC(SpecError);
    PG_EXC(ShapeError);
    PG_EXC(ParameterError);
    PG_EXC(PairingError);
    PG_EXC(PreconditionError);
    PG_EXC(DivergenceError);
    PG_EXC(ReferenceError);
    PG_EXC(BankError);
    PG_EXC(UndefinedMetricError);
    PG_EXC(OrderingError);
    PG_EXC(ConfigError);
    PG_EXC(ScorerError);
    PG_EXC(IoError);
#undef PG_EXC

    // metrics
    m.def("midranks", [](const std::vector<double>& v) { return pg::midranks(v); }, py::arg("values"));
    m.def("srcc", [](const std::vector<double>& s, const std::vector<int>& g) { return pg::srcc(s, g); },
          py::arg("scores"), py::arg("grades"));
    m.def("auc_grade4", [](const std::vector<double>& s, const std::vector<int>& g) { return pg::auc_grade4(s, g); },
          py::arg("scores"), py::arg("grades"));
    m.def(
        "mean_std",
        [](const std::vector<double>& v) {
            const auto r = pg::mean_std(v);
            return py::make_tuple(r.mean, r.stddev);
        },
        py::arg("values"));

    // patch embedding, loss and scoring
    m.def("patch_count", &pg::patch_count, py::arg("h"), py::arg("w"), py::arg("window"));
    m.def(
        "patch_embedding",
        [](const FloatArray& fm, int window) {
            return from_map(pg::to_patch_embedding_map(pg::FeatureMap{to_tensor(fm), {}}, window));
        },
        py::arg("feature_map"), py::arg("window") = 3, "(c, h, w) feature map to a (g, g, c) patch map.");
    m.def(
        "bce_patch_loss",
        [](const DoubleArray& a, const DoubleArray& b, int y, double eps) {
            const auto r = pg::bce_patch_loss_with_grad(to_map<double>(a), to_map<double>(b), y, eps);
            return py::make_tuple(r.loss, from_map(r.grad_a), from_map(r.grad_b));
        },
        py::arg("a"), py::arg("b"), py::arg("y"), py::arg("clamp_epsilon") = 1e-6,
        "Loss and gradients with respect to both (g, g, c) maps.");
    m.def(
        "pair_score", [](const FloatArray& a, const FloatArray& b) { return pg::pair_score(to_map<float>(a), to_map<float>(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "pairwise_baseline", [](const std::vector<FloatArray>& maps) { return pg::pairwise_baseline(to_maps(maps)); },
        py::arg("maps"));
    m.def(
        "anomaly_score",
        [](const std::vector<FloatArray>& refs, const FloatArray& query) {
            return 1.0 - pg::mean_similarity(to_maps(refs), to_map<float>(query));
        },
        py::arg("references"), py::arg("query"));

    // feature extraction
    m.def(
        "extract_features",
        [](const FloatArray& input, const std::string& backbone) {
            const auto bb = pg::Backbone::build(backbone_by_name(backbone));
            return from_tensor(bb.extract(to_tensor(input)).values);
        },
        py::arg("input"), py::arg("backbone") = "compact", "Truncated-backbone features of a (3, s, s) input.");
    m.def(
        "feature_dims", [](const std::string& backbone, int side) {
            return pg::Backbone::build(backbone_by_name(backbone)).output_dims(side);
        },
        py::arg("backbone"), py::arg("side"));

    // pseudo labels
    m.def(
        "select_candidates",
        [](const std::vector<std::string>& ids, const std::vector<double>& scores, double baseline, double multiplier) {
            if (ids.size() != scores.size()) throw pg::ValidationError("ids and scores differ in length");
            std::vector<pg::ScoreRecord> recs;
            for (std::size_t i = 0; i < ids.size(); ++i) recs.push_back({ids[i], scores[i], std::nullopt, false, false});
            std::vector<std::string> out;
            for (const auto& r : pg::select_candidates(recs, baseline, multiplier)) out.push_back(r.id);
            return out;
        },
        py::arg("ids"), py::arg("scores"), py::arg("baseline"), py::arg("multiplier") = 2.0);

    // synthetic corpus
    m.def(
        "generate_synthetic",
        [](const fs::path& root, std::uint64_t seed, const py::object& spec) {
            pg::SynthSpec s;
            if (!spec.is_none()) {
                nlohmann::json merged = s;
                merged.merge_patch(from_py(spec));
                s = merged.get<pg::SynthSpec>();
            }
            s.validate();
            const auto summary = pg::generate(s, seed, root);
            return py::make_tuple(summary.images, summary.confounders);
        },
        py::arg("root"), py::arg("seed") = 1, py::arg("spec") = py::none(),
        "Writes images, labels.csv, meta.csv and split.json under root; returns (images, confounders).");

    // configuration and stages
    py::class_<pg::RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_static(
            "from_dict",
            [](const py::object& d, const fs::path& base_dir) { return pg::config_from_json(from_py(d), base_dir); },
            py::arg("data"), py::arg("base_dir") = fs::path())
        .def_static("load", &pg::load_config, py::arg("path"))
        .def("to_dict", [](const pg::RunConfig& c) { return to_py(pg::to_json(c)); })
        .def("save", [](const pg::RunConfig& c, const fs::path& p) { pg::write_config(p, c); }, py::arg("path"))
        .def("validate", &pg::RunConfig::validate)
        .def_property_readonly("digest", &pg::RunConfig::digest)
        .def_readwrite("seeds", &pg::RunConfig::seeds)
        .def_readwrite("run_dir", &pg::RunConfig::run_dir)
        .def_readwrite("dataset_root", &pg::RunConfig::dataset_root);

    const auto gil = py::call_guard<py::gil_scoped_release>();
    auto model = [](const std::string& s) { return pg::model_from_string(s); };
    m.def(
        "run_synth",
        [](const pg::RunConfig& c, const py::object& log) {
            const auto s = pg::run_synth(c, py_logger(log));
            return py::make_tuple(s.images, s.confounders);
        },
        py::arg("config"), py::arg("log") = py::none());
    m.def(
        "run_pretrain", [](const pg::RunConfig& c, std::uint64_t seed, const py::object& log) {
            auto l = py_logger(log);
            py::gil_scoped_release r;
            pg::run_pretrain(c, seed, l);
        },
        py::arg("config"), py::arg("seed"), py::arg("log") = py::none());
    m.def(
        "run_score", [model](const pg::RunConfig& c, std::uint64_t seed, const std::string& which) {
            pg::run_score(c, seed, model(which));
        },
        py::arg("config"), py::arg("seed"), py::arg("model") = "pretrain", gil);
    m.def(
        "run_pseudo_label",
        [](const pg::RunConfig& c, std::uint64_t seed) { return to_py(nlohmann::json(pg::run_pseudo_label(c, seed))); },
        py::arg("config"), py::arg("seed"));
    m.def(
        "run_denoise",
        [](const pg::RunConfig& c, std::uint64_t seed) {
            const auto scorer = pg::make_scorer(c);
            return to_py(nlohmann::json(pg::run_denoise(c, seed, *scorer)));
        },
        py::arg("config"), py::arg("seed"));
    m.def(
        "run_retrain", [](const pg::RunConfig& c, std::uint64_t seed, const py::object& log) {
            auto l = py_logger(log);
            py::gil_scoped_release r;
            pg::run_retrain(c, seed, l);
        },
        py::arg("config"), py::arg("seed"), py::arg("log") = py::none());
    m.def(
        "run_evaluate",
        [model](const pg::RunConfig& c, std::uint64_t seed, const std::string& which) {
            return to_py(nlohmann::json(pg::run_evaluate(c, seed, model(which))));
        },
        py::arg("config"), py::arg("seed"), py::arg("model") = "pretrain");
    m.def(
        "run_report",
        [](const pg::RunConfig& c, const std::optional<fs::path>& baseline_csv, bool force) {
            const auto out = pg::run_report(c, {baseline_csv, force});
            return py::make_tuple(out.metrics_json, out.table_text);
        },
        py::arg("config"), py::arg("baseline_csv") = py::none(), py::arg("force") = false);
    m.def(
        "run_pipeline",
        [](const pg::RunConfig& c, const py::object& log) {
            auto l = py_logger(log);
            const auto scorer = pg::make_scorer(c);
            pg::ReportOutputs out;
            {
                py::gil_scoped_release r;
                out = pg::run_pipeline(c, *scorer, {}, l);
            }
            return py::make_tuple(out.metrics_json, out.table_text);
        },
        py::arg("config"), py::arg("log") = py::none());
}
