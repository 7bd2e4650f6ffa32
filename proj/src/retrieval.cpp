#include "bdma/retrieval.hpp"

#include <chrono>

#include "bdma/errors.hpp"
#include "bdma/topk.hpp"

namespace bdma {

std::string to_string(RetrievalKind k) {
    return k == RetrievalKind::NearestNeighbor ? "nn" : "csls";
}
std::string to_string(Direction d) { return d == Direction::Forward ? "fwd" : "rev"; }

RetrievalKind retrieval_kind_from_string(const std::string& name) {
    if (name == "nn") return RetrievalKind::NearestNeighbor;
    if (name == "csls") return RetrievalKind::Csls;
    throw DataError("unknown retrieval method: " + name);
}

Direction direction_from_string(const std::string& name) {
    if (name == "fwd" || name == "forward") return Direction::Forward;
    if (name == "rev" || name == "reverse") return Direction::Reverse;
    throw DataError("unknown direction: " + name);
}

namespace {

constexpr Eigen::Index kBlockRows = 4096;

Vector inverse_norms(const Matrix& m) {
    Vector inv(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double norm = m.row(i).norm();
        inv(i) = norm == 0.0 ? 0.0 : 1.0 / norm;
    }
    return inv;
}

Matrix normalized_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double norm = out.row(i).norm();
        if (norm != 0.0) out.row(i) /= norm;
    }
    return out;
}

void check_common(const Matrix& Q, const Matrix& T, int k) {
    if (Q.rows() == 0) throw DataError("retrieval needs at least one query");
    if (Q.cols() != T.cols()) throw DataError("query and candidate dims differ");
    if (k < 1) throw DataError("retrieval k must be at least 1");
    if (static_cast<Eigen::Index>(k) > T.rows())
        throw DataError("retrieval k exceeds candidate count");
}

// Per row of Qn (rows pre-normalized): the k largest cosines against T,
// scanned in blocks so the full score matrix never materializes.
void blocked_cosine_topk(const Matrix& Qn, const Matrix& T, const Vector& invT, int threads,
                         std::vector<TopK>& out) {
    parallel_chunks(static_cast<std::size_t>(Qn.rows()), threads,
                    [&](std::size_t begin, std::size_t end) {
                        Eigen::Index qb = static_cast<Eigen::Index>(begin);
                        Eigen::Index qn = static_cast<Eigen::Index>(end - begin);
                        for (Eigen::Index tb = 0; tb < T.rows(); tb += kBlockRows) {
                            Eigen::Index tn = std::min(kBlockRows, T.rows() - tb);
                            Matrix scores =
                                Qn.middleRows(qb, qn) * T.middleRows(tb, tn).transpose();
                            for (Eigen::Index i = 0; i < qn; ++i) {
                                TopK& top = out[static_cast<std::size_t>(qb + i)];
                                for (Eigen::Index j = 0; j < tn; ++j)
                                    top.offer(scores(i, j) * invT(tb + j), tb + j);
                            }
                        }
                    });
}

// Mean cosine of each row of A to its k nearest rows of B.
Vector mean_topk_cosine(const Matrix& A, const Matrix& B, int k, int threads) {
    Matrix An = normalized_rows(A);
    Vector invB = inverse_norms(B);
    std::vector<TopK> tops(static_cast<std::size_t>(A.rows()), TopK(k));
    blocked_cosine_topk(An, B, invB, threads, tops);
    Vector means(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        auto ranked = tops[static_cast<std::size_t>(i)].sorted();
        double sum = 0.0;
        for (const auto& [score, idx] : ranked) sum += score;
        means(i) = sum / static_cast<double>(k);
    }
    return means;
}

std::vector<std::vector<Eigen::Index>> collect(const std::vector<TopK>& tops, int top_k) {
    std::vector<std::vector<Eigen::Index>> out(tops.size());
    for (std::size_t i = 0; i < tops.size(); ++i) {
        auto ranked = tops[i].sorted();
        out[i].reserve(static_cast<std::size_t>(top_k));
        for (const auto& [score, idx] : ranked) out[i].push_back(idx);
    }
    return out;
}

}  // namespace

std::vector<std::vector<Eigen::Index>> nn_retrieve(const Matrix& Q, const Matrix& T, int k,
                                                   int threads) {
    check_common(Q, T, k);
    Matrix Qn = normalized_rows(Q);
    Vector invT = inverse_norms(T);
    std::vector<TopK> tops(static_cast<std::size_t>(Q.rows()), TopK(k));
    blocked_cosine_topk(Qn, T, invT, threads, tops);
    return collect(tops, k);
}

std::vector<std::vector<Eigen::Index>> csls_retrieve(const Matrix& Q, const Matrix& T,
                                                     const Matrix& Spool, int k, int top_k,
                                                     int threads) {
    if (top_k < 0) top_k = k;
    check_common(Q, T, k);
    if (static_cast<Eigen::Index>(top_k) > T.rows() || top_k < 1)
        throw DataError("retrieval top_k exceeds candidate count");
    if (Spool.cols() != T.cols()) throw DataError("source pool dim differs from candidates");
    if (static_cast<Eigen::Index>(k) > Spool.rows())
        throw DataError("retrieval k exceeds source pool size");

    // Hubness penalties: r_T per query, r_S per candidate (computed once).
    Vector r_t = mean_topk_cosine(Q, T, k, threads);
    Vector r_s = mean_topk_cosine(T, Spool, k, threads);

    Matrix Qn = normalized_rows(Q);
    Vector invT = inverse_norms(T);
    std::vector<TopK> tops;
    tops.reserve(static_cast<std::size_t>(Q.rows()));
    for (Eigen::Index i = 0; i < Q.rows(); ++i) tops.emplace_back(top_k);
    parallel_chunks(static_cast<std::size_t>(Qn.rows()), threads,
                    [&](std::size_t begin, std::size_t end) {
                        Eigen::Index qb = static_cast<Eigen::Index>(begin);
                        Eigen::Index qn = static_cast<Eigen::Index>(end - begin);
                        for (Eigen::Index tb = 0; tb < T.rows(); tb += kBlockRows) {
                            Eigen::Index tn = std::min(kBlockRows, T.rows() - tb);
                            Matrix scores =
                                Qn.middleRows(qb, qn) * T.middleRows(tb, tn).transpose();
                            for (Eigen::Index i = 0; i < qn; ++i) {
                                TopK& top = tops[static_cast<std::size_t>(qb + i)];
                                for (Eigen::Index j = 0; j < tn; ++j) {
                                    double cos = scores(i, j) * invT(tb + j);
                                    double s = 2.0 * cos - r_t(qb + i) - r_s(tb + j);
                                    top.offer(s, tb + j);
                                }
                            }
                        }
                    });
    return collect(tops, top_k);
}

namespace {

struct EvalInputs {
    Matrix queries;         // mapped group keys
    const Matrix* candidates;
    Matrix source_pool;     // mapped full query-side matrix (csls only)
};

EvalInputs eval_inputs(const Mapper& m, Direction direction, const EvalGroups& groups,
                       const EmbeddingSet& src, const EmbeddingSet& tgt, bool need_pool) {
    const EmbeddingSet& query_side = direction == Direction::Forward ? src : tgt;
    EvalInputs in;
    Matrix raw(static_cast<Eigen::Index>(groups.groups.size()), query_side.dim());
    Eigen::Index r = 0;
    for (const auto& [key, valid] : groups.groups) {
        if (key < 0 || key >= query_side.size())
            throw DataError("evaluation group key out of range");
        raw.row(r++) = query_side.matrix().row(key);
    }
    if (direction == Direction::Forward) {
        in.queries = m.forward(raw);
        in.candidates = &tgt.matrix();
        if (need_pool) in.source_pool = m.forward(src.matrix());
    } else {
        in.queries = m.reverse(raw);
        in.candidates = &src.matrix();
        if (need_pool) in.source_pool = m.reverse(tgt.matrix());
    }
    return in;
}

}  // namespace

EvalReport precision_at_k(const Mapper& m, Direction direction, const EvalGroups& groups,
                          const EmbeddingSet& src, const EmbeddingSet& tgt,
                          const RetrievalMethod& method, int threads) {
    auto start = std::chrono::steady_clock::now();
    bool csls = method.kind == RetrievalKind::Csls;
    EvalInputs in = eval_inputs(m, direction, groups, src, tgt, csls);

    int top_k = static_cast<int>(std::min<Eigen::Index>(10, in.candidates->rows()));
    std::vector<std::vector<Eigen::Index>> ranked =
        csls ? csls_retrieve(in.queries, *in.candidates, in.source_pool, method.k, top_k, threads)
             : nn_retrieve(in.queries, *in.candidates, top_k, threads);

    std::size_t hits1 = 0, hits5 = 0, hits10 = 0;
    std::size_t qi = 0;
    for (const auto& [key, valid] : groups.groups) {
        const auto& cands = ranked[qi++];
        for (std::size_t rank = 0; rank < cands.size(); ++rank) {
            if (std::binary_search(valid.begin(), valid.end(), cands[rank])) {
                if (rank < 1) ++hits1;
                if (rank < 5) ++hits5;
                if (rank < 10) ++hits10;
                break;
            }
        }
    }

    EvalReport report;
    report.direction = to_string(direction);
    report.method = to_string(method.kind);
    report.k = method.k;
    report.queries = groups.groups.size();
    double n = static_cast<double>(report.queries);
    report.p1 = static_cast<double>(hits1) / n;
    report.p5 = static_cast<double>(hits5) / n;
    report.p10 = static_cast<double>(hits10) / n;
    report.dropped_source_oov = groups.dropped_source_oov;
    report.dropped_target_oov = groups.dropped_target_oov;
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (report.p1 > report.p5 || report.p5 > report.p10)
        throw NumericError("precision@k must be monotone in k");
    return report;
}

std::vector<Translation> translate(const Mapper& m, const std::vector<std::string>& words,
                                   Direction direction, const EmbeddingSet& src,
                                   const EmbeddingSet& tgt, const RetrievalMethod& method,
                                   int top_k, int threads) {
    const EmbeddingSet& query_side = direction == Direction::Forward ? src : tgt;
    const EmbeddingSet& result_side = direction == Direction::Forward ? tgt : src;

    std::vector<std::string> found;
    Matrix raw(static_cast<Eigen::Index>(words.size()), query_side.dim());
    Eigen::Index r = 0;
    for (const auto& w : words) {
        Eigen::Index idx = query_side.lookup(w);
        if (idx < 0) continue;  // OOV words produce no entry
        raw.row(r++) = query_side.matrix().row(idx);
        found.push_back(w);
    }
    std::vector<Translation> out;
    if (r == 0) return out;
    raw.conservativeResize(r, Eigen::NoChange);

    Matrix queries = direction == Direction::Forward ? m.forward(raw) : m.reverse(raw);
    const Matrix& candidates = result_side.matrix();
    std::vector<std::vector<Eigen::Index>> ranked;
    if (method.kind == RetrievalKind::Csls) {
        Matrix pool = direction == Direction::Forward ? m.forward(src.matrix())
                                                      : m.reverse(tgt.matrix());
        ranked = csls_retrieve(queries, candidates, pool, method.k, top_k, threads);
    } else {
        ranked = nn_retrieve(queries, candidates, top_k, threads);
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
        Translation t;
        t.word = found[i];
        for (Eigen::Index idx : ranked[i])
            t.candidates.push_back(result_side.words()[static_cast<std::size_t>(idx)]);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace bdma
