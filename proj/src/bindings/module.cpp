#include <optional>
#include <utility>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bdma/dictionary.hpp"
#include "bdma/embeddings.hpp"
#include "bdma/errors.hpp"
#include "bdma/losses.hpp"
#include "bdma/mapper.hpp"
#include "bdma/retrieval.hpp"
#include "bdma/synth.hpp"
#include "bdma/trainer.hpp"

namespace py = pybind11;
using namespace bdma;

namespace {

RcslsPools pools_from(const std::optional<Matrix>& src, const std::optional<Matrix>& tgt) {
    RcslsPools pools;
    if (src) pools.source = &*src;
    if (tgt) pools.target = &*tgt;
    return pools;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bidirectional embedding alignment toolkit";
    m.attr("__version__") = "1.0.0";
    m.attr("MODEL_FORMAT_VERSION") = kModelFormatVersion;

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<EmbeddingSet>(m, "EmbeddingSet")
        .def(py::init<std::vector<std::string>, Matrix, std::string>(), py::arg("words"),
             py::arg("matrix"), py::arg("meta") = "")
        .def("__len__", &EmbeddingSet::size)
        .def_property_readonly("dim", &EmbeddingSet::dim)
        .def_property_readonly("words", &EmbeddingSet::words)
        .def_property_readonly("matrix", &EmbeddingSet::matrix,
                               py::return_value_policy::reference_internal)
        .def("lookup", &EmbeddingSet::lookup, py::arg("token"));

    m.def(
        "load_vec",
        [](const std::string& path, int max_vocab) {
            VecParseResult r = load_vec(path, max_vocab);
            return py::make_tuple(std::move(r.embeddings), r.duplicates_skipped);
        },
        py::arg("path"), py::arg("max_vocab") = kDefaultMaxVocab,
        "Returns (embeddings, duplicates_skipped).");
    m.def("save_vec", &save_vec, py::arg("embeddings"), py::arg("path"));
    m.def("preprocess", &preprocess, py::arg("embeddings"));

    py::class_<BilingualDictionary>(m, "BilingualDictionary")
        .def(py::init<>())
        .def(py::init([](std::vector<std::pair<std::string, std::string>> pairs) {
                 BilingualDictionary d;
                 d.pairs = std::move(pairs);
                 return d;
             }),
             py::arg("pairs"))
        .def_readwrite("pairs", &BilingualDictionary::pairs)
        .def("__len__", [](const BilingualDictionary& d) { return d.pairs.size(); });

    py::class_<IndexedPairs>(m, "IndexedPairs")
        .def_readonly("pairs", &IndexedPairs::pairs)
        .def_readonly("dropped_source_oov", &IndexedPairs::dropped_source_oov)
        .def_readonly("dropped_target_oov", &IndexedPairs::dropped_target_oov);

    py::class_<EvalGroups>(m, "EvalGroups")
        .def_readonly("groups", &EvalGroups::groups)
        .def_readonly("dropped_source_oov", &EvalGroups::dropped_source_oov)
        .def_readonly("dropped_target_oov", &EvalGroups::dropped_target_oov);

    m.def("load_dictionary", &load_dictionary, py::arg("path"));
    m.def("save_dictionary", &save_dictionary, py::arg("dictionary"), py::arg("path"));
    m.def("filter_unique", &filter_unique, py::arg("dictionary"));
    m.def("sample_pairs", &sample_pairs, py::arg("dictionary"),
          py::arg("cap") = std::size_t{kDefaultMaxPairs}, py::arg("random") = false,
          py::arg("seed") = 0);
    m.def("bind", &bind, py::arg("dictionary"), py::arg("src"), py::arg("tgt"));
    m.def("eval_groups", &eval_groups, py::arg("dictionary"), py::arg("src"), py::arg("tgt"));

    py::enum_<MapperKind>(m, "MapperKind")
        .value("LINEAR", MapperKind::Linear)
        .value("FFN", MapperKind::Ffn);
    py::enum_<Sharing>(m, "Sharing")
        .value("SHARED_TRANSPOSE", Sharing::SharedTranspose)
        .value("INDEPENDENT", Sharing::Independent);

    py::class_<Mapper>(m, "Mapper")
        .def(py::init<MapperKind, Sharing, int, int, std::vector<Matrix>>(), py::arg("kind"),
             py::arg("sharing"), py::arg("dim"), py::arg("hidden"), py::arg("params"))
        .def_static("init_linear", &Mapper::init_linear, py::arg("dim"),
                    py::arg("sharing") = Sharing::SharedTranspose)
        .def_static("init_ffn", &Mapper::init_ffn, py::arg("dim"), py::arg("hidden"),
                    py::arg("seed"), py::arg("sharing") = Sharing::SharedTranspose)
        .def_property_readonly("kind", &Mapper::kind)
        .def_property_readonly("sharing", &Mapper::sharing)
        .def_property_readonly("dim", &Mapper::dim)
        .def_property_readonly("hidden", &Mapper::hidden)
        .def_property_readonly("params",
                               [](const Mapper& mp) { return mp.params(); })
        .def("forward", &Mapper::forward, py::arg("x"))
        .def("reverse", &Mapper::reverse, py::arg("y"))
        .def("save", &Mapper::save, py::arg("path"))
        .def_static("load", &Mapper::load, py::arg("path"))
        .def("__eq__", [](const Mapper& a, const Mapper& b) { return a == b; });

    py::enum_<LossKind>(m, "LossKind")
        .value("MSE", LossKind::Mse)
        .value("COSINE", LossKind::Cosine)
        .value("RCSLS", LossKind::Rcsls)
        .value("COSINE_PLUS_RCSLS", LossKind::CosinePlusRcsls);

    py::class_<LossSpec>(m, "LossSpec")
        .def(py::init<>())
        .def(py::init([](LossKind kind, int rcsls_k) {
                 return LossSpec{kind, rcsls_k};
             }),
             py::arg("kind"), py::arg("rcsls_k") = 10)
        .def_readwrite("kind", &LossSpec::kind)
        .def_readwrite("rcsls_k", &LossSpec::rcsls_k);

    m.def(
        "ccl",
        [](const Mapper& mp, const Matrix& xs, const Matrix& xt, const LossSpec& spec,
           const std::optional<Matrix>& pool_src, const std::optional<Matrix>& pool_tgt) {
            LossOutput out = ccl(mp, xs, xt, spec, pools_from(pool_src, pool_tgt));
            return py::make_tuple(out.total, std::move(out.grads));
        },
        py::arg("mapper"), py::arg("xs"), py::arg("xt"), py::arg("spec"),
        py::arg("pool_src") = std::nullopt, py::arg("pool_tgt") = std::nullopt,
        "Returns (total, grads).");
    m.def(
        "orthogonal_penalty",
        [](const Mapper& mp, double beta) {
            LossOutput out = orthogonal_penalty(mp, beta);
            return py::make_tuple(out.total, std::move(out.grads));
        },
        py::arg("mapper"), py::arg("beta"));

    py::class_<GradCheckReport>(m, "GradCheckReport")
        .def_readonly("max_rel_err", &GradCheckReport::max_rel_err)
        .def_readonly("worst_tensor", &GradCheckReport::worst_tensor)
        .def_readonly("tolerance", &GradCheckReport::tolerance)
        .def_readonly("passed", &GradCheckReport::passed);

    m.def(
        "grad_check",
        [](const Mapper& mp, const Matrix& xs, const Matrix& xt, const LossSpec& spec,
           const std::optional<Matrix>& pool_src, const std::optional<Matrix>& pool_tgt,
           double epsilon, double tolerance, bool include_ortho, double map_beta) {
            GradCheckConfig cfg{epsilon, tolerance, include_ortho, map_beta};
            return grad_check(mp, xs, xt, spec, pools_from(pool_src, pool_tgt), cfg);
        },
        py::arg("mapper"), py::arg("xs"), py::arg("xt"), py::arg("spec"),
        py::arg("pool_src") = std::nullopt, py::arg("pool_tgt") = std::nullopt,
        py::arg("epsilon") = 1e-5, py::arg("tolerance") = 1e-5, py::arg("include_ortho") = true,
        py::arg("map_beta") = 1e-3);

    py::enum_<RetrievalKind>(m, "RetrievalKind")
        .value("NN", RetrievalKind::NearestNeighbor)
        .value("CSLS", RetrievalKind::Csls);
    py::enum_<Direction>(m, "Direction")
        .value("FORWARD", Direction::Forward)
        .value("REVERSE", Direction::Reverse);

    py::class_<RetrievalMethod>(m, "RetrievalMethod")
        .def(py::init([](RetrievalKind kind, int k) {
                 return RetrievalMethod{kind, k};
             }),
             py::arg("kind") = RetrievalKind::Csls, py::arg("k") = 10)
        .def_readwrite("kind", &RetrievalMethod::kind)
        .def_readwrite("k", &RetrievalMethod::k);

    m.def("nn_retrieve", &nn_retrieve, py::arg("queries"), py::arg("targets"), py::arg("k"),
          py::arg("threads") = 1);
    m.def("csls_retrieve", &csls_retrieve, py::arg("queries"), py::arg("targets"),
          py::arg("source_pool"), py::arg("k"), py::arg("top_k") = -1, py::arg("threads") = 1);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("direction", &EvalReport::direction)
        .def_readonly("method", &EvalReport::method)
        .def_readonly("k", &EvalReport::k)
        .def_readonly("p1", &EvalReport::p1)
        .def_readonly("p5", &EvalReport::p5)
        .def_readonly("p10", &EvalReport::p10)
        .def_readonly("queries", &EvalReport::queries)
        .def_readonly("dropped_source_oov", &EvalReport::dropped_source_oov)
        .def_readonly("dropped_target_oov", &EvalReport::dropped_target_oov);

    m.def("precision_at_k", &precision_at_k, py::arg("mapper"), py::arg("direction"),
          py::arg("groups"), py::arg("src"), py::arg("tgt"), py::arg("method"),
          py::arg("threads") = 1);

    py::class_<Translation>(m, "Translation")
        .def_readonly("word", &Translation::word)
        .def_readonly("candidates", &Translation::candidates);

    m.def("translate", &translate, py::arg("mapper"), py::arg("words"), py::arg("direction"),
          py::arg("src"), py::arg("tgt"), py::arg("method"), py::arg("top_k"),
          py::arg("threads") = 1);

    py::class_<TrainingConfig>(m, "TrainingConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainingConfig::batch_size)
        .def_readwrite("learning_rate", &TrainingConfig::learning_rate)
        .def_readwrite("lr_decay", &TrainingConfig::lr_decay)
        .def_readwrite("lr_shrink", &TrainingConfig::lr_shrink)
        .def_readwrite("map_beta", &TrainingConfig::map_beta)
        .def_readwrite("ortho", &TrainingConfig::ortho)
        .def_readwrite("epochs", &TrainingConfig::epochs)
        .def_readwrite("loss", &TrainingConfig::loss)
        .def_readwrite("rcsls_k", &TrainingConfig::rcsls_k)
        .def_readwrite("csls_k", &TrainingConfig::csls_k)
        .def_readwrite("arch", &TrainingConfig::arch)
        .def_readwrite("hidden", &TrainingConfig::hidden)
        .def_readwrite("sharing", &TrainingConfig::sharing)
        .def_readwrite("seed", &TrainingConfig::seed)
        .def_readwrite("direction_label", &TrainingConfig::direction_label);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("loss", &EpochStats::loss)
        .def_readonly("val_p1", &EpochStats::val_p1)
        .def_readonly("lr", &EpochStats::lr);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("epochs", &TrainReport::epochs)
        .def_readonly("best_epoch", &TrainReport::best_epoch)
        .def_readonly("best_val_p1", &TrainReport::best_val_p1)
        .def_readonly("direction_label", &TrainReport::direction_label);

    m.def("report_jsonl", &report_jsonl, py::arg("report"));
    m.def("train", &train, py::arg("src"), py::arg("tgt"), py::arg("pairs"), py::arg("val"),
          py::arg("config"), "Returns (mapper, report).");

    py::enum_<TransformKind>(m, "TransformKind")
        .value("IDENTITY", TransformKind::Identity)
        .value("ORTHOGONAL", TransformKind::Orthogonal)
        .value("GENERAL_LINEAR", TransformKind::GeneralLinear)
        .value("NONLINEAR", TransformKind::Nonlinear);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("n", &SynthSpec::n)
        .def_readwrite("d", &SynthSpec::d)
        .def_readwrite("kind", &SynthSpec::kind)
        .def_readwrite("noise", &SynthSpec::noise)
        .def_readwrite("seed", &SynthSpec::seed)
        .def_readwrite("train_frac", &SynthSpec::train_frac)
        .def_readwrite("val_frac", &SynthSpec::val_frac)
        .def_readwrite("test_frac", &SynthSpec::test_frac);

    py::class_<SynthData>(m, "SynthData")
        .def_readonly("source", &SynthData::source)
        .def_readonly("target", &SynthData::target)
        .def_readonly("train", &SynthData::train)
        .def_readonly("val", &SynthData::val)
        .def_readonly("test", &SynthData::test)
        .def_readonly("truth", &SynthData::truth);

    m.def("generate", &generate, py::arg("spec"));
}
