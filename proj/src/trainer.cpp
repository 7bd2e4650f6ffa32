#include "bdma/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "bdma/errors.hpp"
#include "bdma/retrieval.hpp"
#include "bdma/rng.hpp"

namespace bdma {

void TrainingConfig::validate() const {
    if (batch_size < 1) throw DataError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw DataError("lr_decay must be in (0, 1]");
    if (!(lr_shrink > 0.0 && lr_shrink <= 1.0)) throw DataError("lr_shrink must be in (0, 1]");
    if (map_beta < 0.0) throw DataError("map_beta must be non-negative");
    if (epochs < 1) throw DataError("epochs must be at least 1");
    if (rcsls_k < 1) throw DataError("rcsls_k must be at least 1");
    if (csls_k < 1) throw DataError("csls_k must be at least 1");
    if (arch == MapperKind::Ffn && hidden < 1) throw DataError("hidden must be at least 1");
}

AdamState AdamState::for_params(const std::vector<Matrix>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Matrix& p : params) {
        s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
        s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
    return s;
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DataError("adam_step tensor counts disagree");
    for (const Matrix& g : grads)
        if (!g.allFinite()) throw NumericError("non-finite gradient in adam_step");

    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        state.m[t] = state.beta1 * state.m[t] + (1.0 - state.beta1) * grads[t];
        state.v[t] = state.beta2 * state.v[t] + (1.0 - state.beta2) * grads[t].cwiseProduct(grads[t]);
        Matrix m_hat = state.m[t] / bc1;
        Matrix denom = (state.v[t] / bc2).cwiseSqrt();
        denom.array() += state.epsilon;
        params[t] -= lr * m_hat.cwiseQuotient(denom);
    }
}

std::vector<Eigen::Index> shuffle_epoch(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<Eigen::Index> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Eigen::Index>(i);
    if (n < 2) return idx;
    Rng rng(seed, 0xE70C0000ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    return idx;
}

std::string report_jsonl(const TrainReport& report) {
    std::string out;
    for (const EpochStats& e : report.epochs) {
        nlohmann::json j;
        j["epoch"] = e.epoch;
        j["loss"] = e.loss;
        j["val_p1"] = e.val_p1;
        j["lr"] = e.lr;
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace {

// Validation fixture: forward P@1 with csls over the bound validation
// target pool, the mapped validation queries doubling as the source pool.
struct Validator {
    Matrix queries_raw;
    Matrix targets;
    std::vector<std::vector<Eigen::Index>> valid_local;
    int k;

    Validator(const EmbeddingSet& src, const EmbeddingSet& tgt, const EvalGroups& val, int csls_k) {
        std::vector<Eigen::Index> pool;
        for (const auto& [key, valid] : val.groups)
            pool.insert(pool.end(), valid.begin(), valid.end());
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

        targets.resize(static_cast<Eigen::Index>(pool.size()), tgt.dim());
        for (std::size_t i = 0; i < pool.size(); ++i)
            targets.row(static_cast<Eigen::Index>(i)) = tgt.matrix().row(pool[i]);

        queries_raw.resize(static_cast<Eigen::Index>(val.groups.size()), src.dim());
        Eigen::Index r = 0;
        for (const auto& [key, valid] : val.groups) {
            queries_raw.row(r++) = src.matrix().row(key);
            std::vector<Eigen::Index> locals;
            for (Eigen::Index g : valid) {
                auto it = std::lower_bound(pool.begin(), pool.end(), g);
                locals.push_back(static_cast<Eigen::Index>(it - pool.begin()));
            }
            valid_local.push_back(std::move(locals));
        }
        k = static_cast<int>(std::min<Eigen::Index>(
            {static_cast<Eigen::Index>(csls_k), targets.rows(), queries_raw.rows()}));
    }

    double p1(const Mapper& m) const {
        Matrix mapped = m.forward(queries_raw);
        auto ranked = csls_retrieve(mapped, targets, mapped, k, /*top_k=*/1);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < ranked.size(); ++i)
            if (std::binary_search(valid_local[i].begin(), valid_local[i].end(), ranked[i][0]))
                ++hits;
        return static_cast<double>(hits) / static_cast<double>(ranked.size());
    }
};

// Nearest orthogonal matrix (polar factor). Adam wanders off the manifold
// faster than the penalty can pull back, so linear savepoint candidates are
// snapped onto it; that keeps the transpose reverse flow an exact inverse.
Matrix polar_factor(const Matrix& W) {
    Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

// Mean signed cosine between corresponding rows; zero-norm rows score 0.
double mean_row_cosine(const Matrix& U, const Matrix& V) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        double nu = U.row(i).norm();
        double nv = V.row(i).norm();
        if (nu > 0.0 && nv > 0.0) total += U.row(i).dot(V.row(i)) / (nu * nv);
    }
    return total / static_cast<double>(U.rows());
}

// The unsigned cosine term cannot tell a flow from its negation, but signed
// retrieval can, and a net started in the negative basin stays there.
// Negating the first tensor of a flow's parameter set flips that flow (tanh
// is odd), so candidates anti-correlated with their targets are flipped onto
// the positive sheet. Shared parameters flip both flows together.
void sign_calibrate(Mapper& m, const Matrix& Xs, const Matrix& Xt) {
    if (m.sharing() == Sharing::SharedTranspose) {
        double c = mean_row_cosine(m.forward(Xs), Xt) + mean_row_cosine(m.reverse(Xt), Xs);
        if (c < 0.0) m.params()[0] = -m.params()[0];
    } else {
        std::size_t half = m.params().size() / 2;
        if (mean_row_cosine(m.forward(Xs), Xt) < 0.0) m.params()[0] = -m.params()[0];
        if (mean_row_cosine(m.reverse(Xt), Xs) < 0.0) m.params()[half] = -m.params()[half];
    }
}

}  // namespace

std::pair<Mapper, TrainReport> train(const EmbeddingSet& src, const EmbeddingSet& tgt,
                                     const IndexedPairs& pairs, const EvalGroups& val,
                                     const TrainingConfig& cfg) {
    cfg.validate();
    if (src.dim() != tgt.dim())
        throw DataError("source and target embedding dims differ");
    if (pairs.pairs.empty()) throw DataError("no training pairs");
    if (val.groups.empty()) throw DataError("no validation groups");

    auto start = std::chrono::steady_clock::now();
    const int d = static_cast<int>(src.dim());
    const std::size_t n = pairs.pairs.size();

    Mapper mapper = cfg.arch == MapperKind::Linear
                        ? Mapper::init_linear(d, cfg.sharing)
                        : Mapper::init_ffn(d, cfg.hidden, cfg.seed, cfg.sharing);

    Matrix Xs(static_cast<Eigen::Index>(n), d), Xt(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        Xs.row(static_cast<Eigen::Index>(i)) = src.matrix().row(pairs.pairs[i].first);
        Xt.row(static_cast<Eigen::Index>(i)) = tgt.matrix().row(pairs.pairs[i].second);
    }
    RcslsPools pools{&Xs, &Xt};
    LossSpec lspec{cfg.loss, cfg.rcsls_k};
    Validator validator(src, tgt, val, cfg.csls_k);

    AdamState state = AdamState::for_params(mapper.params());
    double lr = cfg.learning_rate;
    TrainReport report;
    report.direction_label = cfg.direction_label;
    double best_p1 = -1.0;
    std::vector<Matrix> best_params = mapper.params();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<Eigen::Index> perm = shuffle_epoch(n, cfg.seed, epoch);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t len = std::min(static_cast<std::size_t>(cfg.batch_size), n - begin);
            Matrix bs(static_cast<Eigen::Index>(len), d), bt(static_cast<Eigen::Index>(len), d);
            for (std::size_t i = 0; i < len; ++i) {
                bs.row(static_cast<Eigen::Index>(i)) = Xs.row(perm[begin + i]);
                bt.row(static_cast<Eigen::Index>(i)) = Xt.row(perm[begin + i]);
            }
            LossOutput out = ccl(mapper, bs, bt, lspec, pools);
            if (cfg.ortho) {
                LossOutput ortho = orthogonal_penalty(mapper, cfg.map_beta);
                out.total += ortho.total;
                for (std::size_t t = 0; t < out.grads.size(); ++t) out.grads[t] += ortho.grads[t];
            }
            if (!std::isfinite(out.total))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batches + 1));
            adam_step(mapper.params(), out.grads, state, lr);
            loss_sum += out.total;
            ++batches;
        }

        // The savepoint candidate is the current parameters, orthogonalized
        // for penalized linear mappers and sign-calibrated, and is what
        // validation scores.
        std::vector<Matrix> snapped = mapper.params();
        if (cfg.ortho && cfg.arch == MapperKind::Linear)
            for (Matrix& w : snapped) w = polar_factor(w);
        Mapper candidate(cfg.arch, cfg.sharing, d, mapper.hidden(), std::move(snapped));
        sign_calibrate(candidate, Xs, Xt);
        double val_p1 = validator.p1(candidate);
        report.epochs.push_back({epoch, loss_sum / batches, val_p1, lr});
        if (val_p1 > best_p1) {
            best_p1 = val_p1;
            best_params = candidate.params();
            report.best_epoch = epoch;
        } else {
            lr *= cfg.lr_shrink;
        }
        lr *= cfg.lr_decay;
    }

    report.best_val_p1 = best_p1;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Mapper best(cfg.arch, cfg.sharing, d, mapper.hidden(), std::move(best_params));
    return {std::move(best), std::move(report)};
}

}  // namespace bdma
