#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bdma/dictionary.hpp"
#include "bdma/embeddings.hpp"
#include "bdma/errors.hpp"
#include "bdma/losses.hpp"
#include "bdma/mapper.hpp"
#include "bdma/retrieval.hpp"
#include "bdma/rng.hpp"
#include "bdma/synth.hpp"
#include "bdma/trainer.hpp"

namespace {

constexpr const char* kToolkitVersion = "1.0.0";

using json = nlohmann::json;

void log_line(const std::string& msg) { std::cerr << "[bdma] " << msg << "\n"; }

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int default_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

bdma::EmbeddingSet load_embeddings(const std::string& path, int max_vocab, bool raw) {
    bdma::VecParseResult res = bdma::load_vec(path, max_vocab);
    if (res.duplicates_skipped > 0)
        log_line(path + ": skipped " + std::to_string(res.duplicates_skipped) +
                 " duplicate tokens");
    log_line(path + ": " + std::to_string(res.embeddings.size()) + " words, dim " +
             std::to_string(res.embeddings.dim()));
    if (raw) return std::move(res.embeddings);
    return bdma::preprocess(res.embeddings);
}

// Merges a flat key = value config file under the parsed command line: every
// key must name a long option of the subcommand, and options given explicit
// flags keep their command-line value.
void apply_config(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw bdma::DataError("cannot open config: " + path);
    auto trim = [](const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string entry = trim(line.substr(0, line.find('#')));
        if (entry.empty()) continue;
        auto where = path + ":" + std::to_string(lineno);
        auto eq = entry.find('=');
        if (eq == std::string::npos) throw bdma::DataError(where + ": expected key = value");
        std::string key = trim(entry.substr(0, eq));
        std::string value = trim(entry.substr(eq + 1));
        if (key.empty() || value.empty()) throw bdma::DataError(where + ": expected key = value");
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config")
            throw bdma::DataError(where + ": unknown key \"" + key + "\"");
        if (opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

void wire_config(CLI::App* sub, std::string& path) {
    sub->add_option("--config", path, "Flat key = value file; flags take precedence");
}

struct PreprocessOpts {
    std::string in, out;
    int max_vocab = bdma::kDefaultMaxVocab;
};

void run_preprocess(const PreprocessOpts& o) {
    Stopwatch timer;
    bdma::VecParseResult res = bdma::load_vec(o.in, o.max_vocab);
    bdma::EmbeddingSet processed = bdma::preprocess(res.embeddings);
    bdma::save_vec(processed, o.out);
    json j;
    j["dim"] = processed.dim();
    j["duplicates_skipped"] = res.duplicates_skipped;
    j["out"] = o.out;
    j["words"] = processed.size();
    emit(j);
    log_line("preprocess finished in " + std::to_string(timer.seconds()) + "s");
}

struct SynthOpts {
    bdma::SynthSpec spec;
    std::string kind = "orthogonal";
    std::string out_dir;
};

void run_synth(SynthOpts o) {
    Stopwatch timer;
    o.spec.kind = bdma::transform_kind_from_string(o.kind);
    bdma::SynthData data = bdma::generate(o.spec);

    namespace fs = std::filesystem;
    fs::create_directories(o.out_dir);
    auto at = [&](const char* name) { return (fs::path(o.out_dir) / name).string(); };
    bdma::save_vec(data.source, at("src.vec"));
    bdma::save_vec(data.target, at("tgt.vec"));
    bdma::save_dictionary(data.train, at("train.dict"));
    bdma::save_dictionary(data.val, at("val.dict"));
    bdma::save_dictionary(data.test, at("test.dict"));
    data.truth.save(at("truth.model"));

    json j;
    j["d"] = o.spec.d;
    j["kind"] = to_string(o.spec.kind);
    j["n"] = o.spec.n;
    j["out_dir"] = o.out_dir;
    j["test_pairs"] = data.test.pairs.size();
    j["train_pairs"] = data.train.pairs.size();
    j["val_pairs"] = data.val.pairs.size();
    emit(j);
    log_line("synth finished in " + std::to_string(timer.seconds()) + "s");
}

struct TrainOpts {
    std::string src_emb, tgt_emb, train_dict, val_dict, model_out, report_out;
    std::string loss = "cos+rcsls", arch = "linear", sharing = "shared", ortho = "on";
    bdma::TrainingConfig cfg;
    int max_pairs = bdma::kDefaultMaxPairs;
    int max_vocab = bdma::kDefaultMaxVocab;
    bool no_preprocess = false;
};

void run_train(TrainOpts o) {
    Stopwatch timer;
    o.cfg.loss = bdma::loss_kind_from_string(o.loss);
    o.cfg.arch = o.arch == "ffn" ? bdma::MapperKind::Ffn : bdma::MapperKind::Linear;
    o.cfg.sharing =
        o.sharing == "independent" ? bdma::Sharing::Independent : bdma::Sharing::SharedTranspose;
    o.cfg.ortho = o.ortho == "on";
    o.cfg.validate();

    bdma::EmbeddingSet src = load_embeddings(o.src_emb, o.max_vocab, o.no_preprocess);
    bdma::EmbeddingSet tgt = load_embeddings(o.tgt_emb, o.max_vocab, o.no_preprocess);

    bdma::BilingualDictionary dict = bdma::load_dictionary(o.train_dict);
    std::size_t before = dict.pairs.size();
    dict = bdma::filter_unique(dict);
    log_line("unique-pair filter kept " + std::to_string(dict.pairs.size()) + " of " +
             std::to_string(before) + " pairs");
    dict = bdma::sample_pairs(dict, static_cast<std::size_t>(o.max_pairs));

    bdma::BilingualDictionary train_part = dict;
    bdma::EvalGroups val;
    if (!o.val_dict.empty()) {
        val = bdma::eval_groups(bdma::load_dictionary(o.val_dict), src, tgt);
    } else {
        // Held-out savepoint signal: last 10% of the sampled pairs.
        std::size_t n = dict.pairs.size();
        if (n < 2)
            throw bdma::DataError("need at least 2 training pairs to hold out validation; "
                                  "pass --val-dict");
        std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                         std::llround(0.1 * double(n))));
        bdma::BilingualDictionary val_part;
        val_part.pairs.assign(dict.pairs.end() - static_cast<std::ptrdiff_t>(n_val),
                              dict.pairs.end());
        train_part.pairs.resize(n - n_val);
        val = bdma::eval_groups(val_part, src, tgt);
        log_line("held out " + std::to_string(n_val) + " pairs for validation");
    }

    bdma::IndexedPairs pairs = bdma::bind(train_part, src, tgt);
    if (pairs.dropped_source_oov + pairs.dropped_target_oov > 0)
        log_line("dropped " + std::to_string(pairs.dropped_source_oov) + " source-oov and " +
                 std::to_string(pairs.dropped_target_oov) + " target-oov pairs");
    log_line("training on " + std::to_string(pairs.pairs.size()) + " pairs");

    auto [mapper, report] = bdma::train(src, tgt, pairs, val, o.cfg);
    mapper.save(o.model_out);
    if (!o.report_out.empty()) {
        std::ofstream out(o.report_out);
        if (!out) throw bdma::DataError("cannot open for writing: " + o.report_out);
        out << bdma::report_jsonl(report);
    }

    json j;
    j["best_epoch"] = report.best_epoch;
    j["best_val_p1"] = report.best_val_p1;
    j["direction"] = report.direction_label;
    j["epochs"] = report.epochs.size();
    j["model_out"] = o.model_out;
    emit(j);
    log_line("train finished in " + std::to_string(timer.seconds()) + "s");
}

struct EvaluateOpts {
    std::string model, src_emb, tgt_emb, eval_dict;
    std::string direction = "fwd", method = "csls";
    int k = 10;
    bool no_unique_filter = false;
    int max_vocab = bdma::kDefaultMaxVocab;
    bool no_preprocess = false;
    int threads = default_threads();
};

void run_evaluate(const EvaluateOpts& o) {
    Stopwatch timer;
    bdma::Mapper mapper = bdma::Mapper::load(o.model);
    bdma::EmbeddingSet src = load_embeddings(o.src_emb, o.max_vocab, o.no_preprocess);
    bdma::EmbeddingSet tgt = load_embeddings(o.tgt_emb, o.max_vocab, o.no_preprocess);

    bdma::BilingualDictionary dict = bdma::load_dictionary(o.eval_dict);
    if (!o.no_unique_filter) {
        std::size_t before = dict.pairs.size();
        dict = bdma::filter_unique(dict);
        log_line("unique-pair filter kept " + std::to_string(dict.pairs.size()) + " of " +
                 std::to_string(before) + " pairs");
    }

    bdma::Direction direction = bdma::direction_from_string(o.direction);
    bdma::EvalGroups groups;
    if (direction == bdma::Direction::Forward) {
        groups = bdma::eval_groups(dict, src, tgt);
    } else {
        bdma::BilingualDictionary swapped;
        for (const auto& [s, t] : dict.pairs) swapped.pairs.emplace_back(t, s);
        groups = bdma::eval_groups(swapped, tgt, src);
    }

    bdma::RetrievalMethod method{bdma::retrieval_kind_from_string(o.method), o.k};
    bdma::EvalReport report =
        bdma::precision_at_k(mapper, direction, groups, src, tgt, method, o.threads);

    json j;
    j["direction"] = report.direction;
    j["dropped_source_oov"] = report.dropped_source_oov;
    j["dropped_target_oov"] = report.dropped_target_oov;
    j["k"] = report.k;
    j["method"] = report.method;
    j["p1"] = report.p1;
    j["p10"] = report.p10;
    j["p5"] = report.p5;
    j["queries"] = report.queries;
    emit(j);
    log_line("evaluate finished in " + std::to_string(timer.seconds()) + "s");
}

struct TranslateOpts {
    std::string model, src_emb, tgt_emb;
    std::string direction = "fwd", method = "csls";
    int k = 10;
    int top_k = 10;
    std::vector<std::string> words;
    int max_vocab = bdma::kDefaultMaxVocab;
    bool no_preprocess = false;
    int threads = default_threads();
};

void run_translate(const TranslateOpts& o) {
    bdma::Mapper mapper = bdma::Mapper::load(o.model);
    bdma::EmbeddingSet src = load_embeddings(o.src_emb, o.max_vocab, o.no_preprocess);
    bdma::EmbeddingSet tgt = load_embeddings(o.tgt_emb, o.max_vocab, o.no_preprocess);

    bdma::RetrievalMethod method{bdma::retrieval_kind_from_string(o.method), o.k};
    std::vector<bdma::Translation> results =
        bdma::translate(mapper, o.words, bdma::direction_from_string(o.direction), src, tgt,
                        method, o.top_k, o.threads);
    if (results.size() < o.words.size())
        log_line("skipped " + std::to_string(o.words.size() - results.size()) +
                 " out-of-vocabulary words");

    json items = json::array();
    for (const bdma::Translation& t : results) {
        json item;
        item["candidates"] = t.candidates;
        item["word"] = t.word;
        items.push_back(std::move(item));
    }
    json j;
    j["translations"] = std::move(items);
    emit(j);
}

struct GradcheckOpts {
    std::string loss = "cos+rcsls", arch = "linear", sharing = "shared", ortho = "on";
    int d = 5;
    int hidden = 6;
    int batch = 7;
    int rcsls_k = 3;
    double map_beta = 1e-3;
    double epsilon = 1e-5;
    double tolerance = 1e-5;
    std::uint64_t seed = 42;
};

void run_gradcheck(const GradcheckOpts& o) {
    bdma::Sharing sharing =
        o.sharing == "independent" ? bdma::Sharing::Independent : bdma::Sharing::SharedTranspose;
    bdma::Mapper mapper = o.arch == "ffn"
                              ? bdma::Mapper::init_ffn(o.d, o.hidden, o.seed, sharing)
                              : bdma::Mapper::init_linear(o.d, sharing);
    // A generic point: identity (or glorot) init plus a seeded perturbation.
    bdma::Rng rng(o.seed, /*stream=*/0x6C);
    for (bdma::Matrix& p : mapper.params())
        p += 0.1 * bdma::gaussian_matrix(p.rows(), p.cols(), rng);

    bdma::Matrix Xs = bdma::gaussian_matrix(o.batch, o.d, rng);
    bdma::Matrix Xt = bdma::gaussian_matrix(o.batch, o.d, rng);
    bdma::LossSpec spec{bdma::loss_kind_from_string(o.loss), o.rcsls_k};
    bdma::RcslsPools pools{&Xs, &Xt};
    bdma::GradCheckConfig cfg{o.epsilon, o.tolerance, o.ortho == "on", o.map_beta};

    bdma::GradCheckReport report = bdma::grad_check(mapper, Xs, Xt, spec, pools, cfg);
    json j;
    j["loss"] = to_string(spec.kind);
    j["max_rel_err"] = report.max_rel_err;
    j["passed"] = report.passed;
    j["tolerance"] = report.tolerance;
    j["worst_tensor"] = report.worst_tensor;
    emit(j);
    if (!report.passed)
        throw bdma::NumericError("gradient check failed: max rel err " +
                                 std::to_string(report.max_rel_err) + " exceeds tolerance");
    log_line("max rel err " + std::to_string(report.max_rel_err));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bidirectional embedding alignment toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("bdma ") + kToolkitVersion +
                                          " (model format " +
                                          std::to_string(bdma::kModelFormatVersion) + ")");
    std::string config_path;

    PreprocessOpts pre;
    CLI::App* sub_pre = app.add_subcommand("preprocess", "Normalize and center a .vec file");
    wire_config(sub_pre, config_path);
    sub_pre->add_option("--in", pre.in, "Input .vec file")->required();
    sub_pre->add_option("--out", pre.out, "Output .vec file")->required();
    sub_pre->add_option("--max-vocab", pre.max_vocab, "Keep at most this many rows");
    sub_pre->callback([&] {
        apply_config(sub_pre, config_path);
        run_preprocess(pre);
    });

    SynthOpts syn;
    CLI::App* sub_syn = app.add_subcommand("synth", "Generate a synthetic aligned benchmark");
    wire_config(sub_syn, config_path);
    sub_syn->add_option("--n", syn.spec.n, "Vocabulary size");
    sub_syn->add_option("--d", syn.spec.d, "Dimension");
    sub_syn->add_option("--kind", syn.kind, "Transform kind")
        ->check(CLI::IsMember({"identity", "orthogonal", "linear", "general", "nonlinear"}));
    sub_syn->add_option("--noise", syn.spec.noise, "Target-side Gaussian noise stddev");
    sub_syn->add_option("--seed", syn.spec.seed, "Random seed");
    sub_syn->add_option("--train-frac", syn.spec.train_frac, "Training split fraction");
    sub_syn->add_option("--val-frac", syn.spec.val_frac, "Validation split fraction");
    sub_syn->add_option("--test-frac", syn.spec.test_frac, "Test split fraction");
    sub_syn->add_option("--out-dir", syn.out_dir, "Output directory")->required();
    sub_syn->callback([&] {
        apply_config(sub_syn, config_path);
        run_synth(syn);
    });

    TrainOpts tr;
    CLI::App* sub_tr = app.add_subcommand("train", "Train a bidirectional mapper");
    wire_config(sub_tr, config_path);
    sub_tr->add_option("--src-emb", tr.src_emb, "Source .vec file")->required();
    sub_tr->add_option("--tgt-emb", tr.tgt_emb, "Target .vec file")->required();
    sub_tr->add_option("--train-dict", tr.train_dict, "Training dictionary")->required();
    sub_tr->add_option("--val-dict", tr.val_dict,
                       "Validation dictionary (default: 10% tail of training pairs)");
    sub_tr->add_option("--loss", tr.loss, "Training loss")
        ->check(CLI::IsMember({"mse", "cos", "cosine", "rcsls", "cos+rcsls", "cosine+rcsls"}));
    sub_tr->add_option("--arch", tr.arch, "Mapper architecture")
        ->check(CLI::IsMember({"linear", "ffn"}));
    sub_tr->add_option("--hidden", tr.cfg.hidden, "Hidden units for the ffn mapper");
    sub_tr->add_option("--sharing", tr.sharing, "Reverse-flow parameter sharing")
        ->check(CLI::IsMember({"shared", "independent"}));
    sub_tr->add_option("--epochs", tr.cfg.epochs, "Training epochs");
    sub_tr->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size");
    sub_tr->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate");
    sub_tr->add_option("--lr-decay", tr.cfg.lr_decay, "Per-epoch learning-rate decay");
    sub_tr->add_option("--lr-shrink", tr.cfg.lr_shrink,
                       "Learning-rate factor on stalled validation");
    sub_tr->add_option("--map-beta", tr.cfg.map_beta, "Orthogonal penalty weight");
    sub_tr->add_option("--ortho", tr.ortho, "Orthogonal penalty on/off")
        ->check(CLI::IsMember({"on", "off"}));
    sub_tr->add_option("--rcsls-k", tr.cfg.rcsls_k, "Neighborhood size in the rcsls loss");
    sub_tr->add_option("--csls-k", tr.cfg.csls_k, "Neighborhood size for validation retrieval");
    sub_tr->add_option("--max-pairs", tr.max_pairs, "Cap on training pairs");
    sub_tr->add_option("--max-vocab", tr.max_vocab, "Keep at most this many rows per side");
    sub_tr->add_option("--seed", tr.cfg.seed, "Random seed");
    sub_tr->add_flag("--no-preprocess", tr.no_preprocess, "Skip normalize/center on load");
    sub_tr->add_option("--model-out", tr.model_out, "Model output path")->required();
    sub_tr->add_option("--report-out", tr.report_out, "Per-epoch JSONL report path");
    sub_tr->callback([&] {
        apply_config(sub_tr, config_path);
        run_train(tr);
    });

    EvaluateOpts ev;
    CLI::App* sub_ev = app.add_subcommand("evaluate", "Precision@k against a gold dictionary");
    wire_config(sub_ev, config_path);
    sub_ev->add_option("--model", ev.model, "Trained model file")->required();
    sub_ev->add_option("--src-emb", ev.src_emb, "Source .vec file")->required();
    sub_ev->add_option("--tgt-emb", ev.tgt_emb, "Target .vec file")->required();
    sub_ev->add_option("--eval-dict", ev.eval_dict, "Evaluation dictionary")->required();
    sub_ev->add_option("--direction", ev.direction, "Translation direction")
        ->check(CLI::IsMember({"fwd", "rev", "forward", "reverse"}));
    sub_ev->add_option("--method", ev.method, "Retrieval method")
        ->check(CLI::IsMember({"nn", "csls"}));
    sub_ev->add_option("--k", ev.k, "csls neighborhood size");
    sub_ev->add_flag("--no-unique-filter", ev.no_unique_filter,
                     "Evaluate with polysemous pairs kept");
    sub_ev->add_option("--max-vocab", ev.max_vocab, "Keep at most this many rows per side");
    sub_ev->add_flag("--no-preprocess", ev.no_preprocess, "Skip normalize/center on load");
    sub_ev->add_option("--threads", ev.threads, "Worker thread cap");
    sub_ev->callback([&] {
        apply_config(sub_ev, config_path);
        run_evaluate(ev);
    });

    TranslateOpts tl;
    CLI::App* sub_tl = app.add_subcommand("translate", "Rank translation candidates for words");
    wire_config(sub_tl, config_path);
    sub_tl->add_option("--model", tl.model, "Trained model file")->required();
    sub_tl->add_option("--src-emb", tl.src_emb, "Source .vec file")->required();
    sub_tl->add_option("--tgt-emb", tl.tgt_emb, "Target .vec file")->required();
    sub_tl->add_option("--direction", tl.direction, "Translation direction")
        ->check(CLI::IsMember({"fwd", "rev", "forward", "reverse"}));
    sub_tl->add_option("--method", tl.method, "Retrieval method")
        ->check(CLI::IsMember({"nn", "csls"}));
    sub_tl->add_option("--k", tl.k, "csls neighborhood size");
    sub_tl->add_option("--top-k", tl.top_k, "Candidates per word");
    sub_tl->add_option("--words", tl.words, "Comma-separated words")
        ->required()
        ->delimiter(',');
    sub_tl->add_option("--max-vocab", tl.max_vocab, "Keep at most this many rows per side");
    sub_tl->add_flag("--no-preprocess", tl.no_preprocess, "Skip normalize/center on load");
    sub_tl->add_option("--threads", tl.threads, "Worker thread cap");
    sub_tl->callback([&] {
        apply_config(sub_tl, config_path);
        run_translate(tl);
    });

    GradcheckOpts gc;
    CLI::App* sub_gc = app.add_subcommand(
        "gradcheck", "Compare analytic loss gradients against central differences");
    wire_config(sub_gc, config_path);
    sub_gc->add_option("--loss", gc.loss, "Loss to check")
        ->check(CLI::IsMember({"mse", "cos", "cosine", "rcsls", "cos+rcsls", "cosine+rcsls"}));
    sub_gc->add_option("--arch", gc.arch, "Mapper architecture")
        ->check(CLI::IsMember({"linear", "ffn"}));
    sub_gc->add_option("--sharing", gc.sharing, "Reverse-flow parameter sharing")
        ->check(CLI::IsMember({"shared", "independent"}));
    sub_gc->add_option("--ortho", gc.ortho, "Include the orthogonal penalty")
        ->check(CLI::IsMember({"on", "off"}));
    sub_gc->add_option("--d", gc.d, "Dimension");
    sub_gc->add_option("--hidden", gc.hidden, "Hidden units for the ffn mapper");
    sub_gc->add_option("--batch", gc.batch, "Batch rows");
    sub_gc->add_option("--rcsls-k", gc.rcsls_k, "Neighborhood size in the rcsls loss");
    sub_gc->add_option("--map-beta", gc.map_beta, "Orthogonal penalty weight");
    sub_gc->add_option("--epsilon", gc.epsilon, "Finite-difference step");
    sub_gc->add_option("--tolerance", gc.tolerance, "Max relative error allowed");
    sub_gc->add_option("--seed", gc.seed, "Random seed");
    sub_gc->callback([&] {
        apply_config(sub_gc, config_path);
        run_gradcheck(gc);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    } catch (const bdma::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const bdma::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
