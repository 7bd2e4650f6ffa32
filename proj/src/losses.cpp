#include "bdma/losses.hpp"

#include <cmath>

#include "bdma/errors.hpp"
#include "bdma/topk.hpp"

namespace bdma {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::Mse: return "mse";
        case LossKind::Cosine: return "cosine";
        case LossKind::Rcsls: return "rcsls";
        case LossKind::CosinePlusRcsls: return "cos+rcsls";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "mse") return LossKind::Mse;
    if (name == "cos" || name == "cosine") return LossKind::Cosine;
    if (name == "rcsls") return LossKind::Rcsls;
    if (name == "cos+rcsls" || name == "cosine+rcsls" || name == "cosine_rcsls")
        return LossKind::CosinePlusRcsls;
    throw DataError("unknown loss kind: " + name);
}

namespace {

bool uses_rcsls(LossKind k) { return k == LossKind::Rcsls || k == LossKind::CosinePlusRcsls; }
bool uses_cosine(LossKind k) { return k == LossKind::Cosine || k == LossKind::CosinePlusRcsls; }

void check_batch(const Mapper& m, const Matrix& Xs, const Matrix& Xt) {
    if (Xs.rows() != Xt.rows())
        throw DataError("batch sides disagree: " + std::to_string(Xs.rows()) + " vs " +
                        std::to_string(Xt.rows()) + " rows");
    if (Xs.rows() == 0) throw DataError("empty batch");
    if (Xs.cols() != m.dim() || Xt.cols() != m.dim())
        throw DataError("batch column count does not match mapper dim");
}

void check_pools(const Mapper& m, const RcslsPools& pools, int k) {
    if (k < 1) throw DataError("rcsls k must be at least 1");
    if (pools.source == nullptr || pools.target == nullptr)
        throw DataError("rcsls loss needs source and target candidate pools");
    if (pools.source->cols() != m.dim() || pools.target->cols() != m.dim())
        throw DataError("rcsls pool column count does not match mapper dim");
    if (pools.source->rows() < k || pools.target->rows() < k)
        throw DataError("rcsls pool smaller than k");
}

// Neighbor indices of each row of Q within pool, by largest dot product.
std::vector<std::vector<Eigen::Index>> dot_neighbors(const Matrix& Q, const Matrix& pool, int k) {
    Matrix scores = Q * pool.transpose();
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(Q.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        TopK top(k);
        for (Eigen::Index j = 0; j < scores.cols(); ++j) top.offer(scores(i, j), j);
        auto ranked = top.sorted();
        auto& dst = out[static_cast<std::size_t>(i)];
        dst.reserve(ranked.size());
        for (const auto& [score, j] : ranked) dst.push_back(j);
    }
    return out;
}

// Accumulates sum_i (1 - |cos(u_i, v_i)|) and the gradient with respect to
// U. With c = (u.v)/(|u||v|), d(1 - |c|)/du = -sign(c) (v/(|u||v|) - c u/|u|^2).
double cosine_terms(const Matrix& U, const Matrix& V, Matrix& Gu) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        double nu = U.row(i).norm();
        double nv = V.row(i).norm();
        if (nu == 0.0 || nv == 0.0) {
            total += 1.0;  // cosine defined as 0; gradient vanishes with sign(0)
            continue;
        }
        double c = U.row(i).dot(V.row(i)) / (nu * nv);
        total += 1.0 - std::abs(c);
        double s = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
        Gu.row(i) += -s * (V.row(i) / (nu * nv) - (c / (nu * nu)) * U.row(i));
    }
    return total;
}

}  // namespace

RcslsNeighborhoods rcsls_neighborhoods(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                                       const RcslsPools& pools, int k) {
    check_batch(m, Xs, Xt);
    check_pools(m, pools, k);
    RcslsNeighborhoods nbh;
    nbh.target = dot_neighbors(m.forward(Xs), *pools.target, k);
    nbh.source = dot_neighbors(m.reverse(Xt), *pools.source, k);
    return nbh;
}

LossOutput ccl_frozen(const Mapper& m, const Matrix& Xs, const Matrix& Xt, const LossSpec& spec,
                      const RcslsPools& pools, const RcslsNeighborhoods* nbh) {
    check_batch(m, Xs, Xt);
    const Eigen::Index B = Xs.rows();

    FlowCache fa = m.forward_cached(Xs);
    FlowCache fb = m.reverse_cached(Xt);
    Matrix Gf = Matrix::Zero(B, m.dim());
    Matrix Gr = Matrix::Zero(B, m.dim());
    double total = 0.0;

    if (spec.kind == LossKind::Mse) {
        Matrix da = fa.output - Xt;
        Matrix db = fb.output - Xs;
        total = da.squaredNorm() + db.squaredNorm();
        Gf = 2.0 * da;
        Gr = 2.0 * db;
    }
    if (uses_cosine(spec.kind)) {
        total += cosine_terms(fa.output, Xt, Gf);
        total += cosine_terms(fb.output, Xs, Gr);
    }
    if (uses_rcsls(spec.kind)) {
        check_pools(m, pools, spec.rcsls_k);
        if (nbh == nullptr || nbh->target.size() != static_cast<std::size_t>(B) ||
            nbh->source.size() != static_cast<std::size_t>(B))
            throw DataError("rcsls loss needs one neighborhood per batch row");
        const Matrix& S = *pools.source;
        const Matrix& T = *pools.target;
        const double inv_b = 1.0 / static_cast<double>(B);
        const double inv_k = 1.0 / static_cast<double>(spec.rcsls_k);
        double rc = 0.0;
        for (Eigen::Index i = 0; i < B; ++i) {
            double acc = -2.0 * fa.output.row(i).dot(Xt.row(i));
            Gf.row(i) += (inv_b * -2.0) * Xt.row(i);
            for (Eigen::Index j : nbh->target[static_cast<std::size_t>(i)]) {
                acc += inv_k * fa.output.row(i).dot(T.row(j));
                Gf.row(i) += (inv_b * inv_k) * T.row(j);
            }
            for (Eigen::Index j : nbh->source[static_cast<std::size_t>(i)]) {
                acc += inv_k * S.row(j).dot(fb.output.row(i));
                Gr.row(i) += (inv_b * inv_k) * S.row(j);
            }
            rc += inv_b * acc;
        }
        total += rc;
    }

    LossOutput out;
    out.total = total;
    out.grads = m.zero_grads();
    m.backprop_forward(Xs, fa, Gf, out.grads);
    m.backprop_reverse(Xt, fb, Gr, out.grads);
    return out;
}

LossOutput ccl(const Mapper& m, const Matrix& Xs, const Matrix& Xt, const LossSpec& spec,
               const RcslsPools& pools) {
    if (!uses_rcsls(spec.kind)) return ccl_frozen(m, Xs, Xt, spec, pools, nullptr);
    RcslsNeighborhoods nbh = rcsls_neighborhoods(m, Xs, Xt, pools, spec.rcsls_k);
    return ccl_frozen(m, Xs, Xt, spec, pools, &nbh);
}

LossOutput orthogonal_penalty(const Mapper& m, double beta) {
    LossOutput out;
    out.grads = m.zero_grads();
    double total = 0.0;
    for (std::size_t t = 0; t < m.params().size(); ++t) {
        const Matrix& w = m.params()[t];
        // The smaller Gram product keeps the penalty O(min(a, b)^2).
        if (w.rows() <= w.cols()) {
            Matrix D = w * w.transpose() - Matrix::Identity(w.rows(), w.rows());
            total += D.squaredNorm();
            out.grads[t] = beta * 4.0 * D * w;
        } else {
            Matrix D = w.transpose() * w - Matrix::Identity(w.cols(), w.cols());
            total += D.squaredNorm();
            out.grads[t] = beta * 4.0 * w * D;
        }
    }
    out.total = beta * total;
    return out;
}

std::vector<Matrix> numeric_gradients(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                                      const LossSpec& spec, const RcslsPools& pools,
                                      const RcslsNeighborhoods* nbh, const GradCheckConfig& cfg) {
    Mapper probe = m;
    auto objective = [&]() {
        double v = ccl_frozen(probe, Xs, Xt, spec, pools, nbh).total;
        if (cfg.include_ortho) v += orthogonal_penalty(probe, cfg.map_beta).total;
        return v;
    };
    std::vector<Matrix> numeric = m.zero_grads();
    for (std::size_t t = 0; t < probe.params().size(); ++t) {
        Matrix& p = probe.params()[t];
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.cols(); ++j) {
                double orig = p(i, j);
                p(i, j) = orig + cfg.epsilon;
                double up = objective();
                p(i, j) = orig - cfg.epsilon;
                double down = objective();
                p(i, j) = orig;
                numeric[t](i, j) = (up - down) / (2.0 * cfg.epsilon);
            }
        }
    }
    return numeric;
}

GradCheckReport compare_gradients(const std::vector<Matrix>& analytic,
                                  const std::vector<Matrix>& numeric, double tolerance) {
    if (analytic.size() != numeric.size())
        throw DataError("gradient tensor counts differ in comparison");
    GradCheckReport report;
    report.tolerance = tolerance;
    for (std::size_t t = 0; t < analytic.size(); ++t) {
        const Matrix& a = analytic[t];
        const Matrix& n = numeric[t];
        if (a.rows() != n.rows() || a.cols() != n.cols())
            throw DataError("gradient tensor shapes differ in comparison");
        GradCheckReport::TensorReport tr;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                double diff = std::abs(a(i, j) - n(i, j));
                double denom = std::max(std::abs(a(i, j)), std::abs(n(i, j)));
                double rel = denom > 1e-8 ? diff / denom : diff;
                if (rel > tr.max_rel_err) {
                    tr.max_rel_err = rel;
                    tr.worst_row = i;
                    tr.worst_col = j;
                }
            }
        }
        if (tr.max_rel_err > report.max_rel_err) {
            report.max_rel_err = tr.max_rel_err;
            report.worst_tensor = static_cast<int>(t);
        }
        report.tensors.push_back(tr);
    }
    report.passed = report.max_rel_err <= tolerance;
    return report;
}

GradCheckReport grad_check(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                           const LossSpec& spec, const RcslsPools& pools,
                           const GradCheckConfig& cfg) {
    RcslsNeighborhoods nbh;
    const RcslsNeighborhoods* frozen = nullptr;
    if (uses_rcsls(spec.kind)) {
        nbh = rcsls_neighborhoods(m, Xs, Xt, pools, spec.rcsls_k);
        frozen = &nbh;
    }
    LossOutput analytic = ccl_frozen(m, Xs, Xt, spec, pools, frozen);
    if (cfg.include_ortho) {
        LossOutput ortho = orthogonal_penalty(m, cfg.map_beta);
        for (std::size_t t = 0; t < analytic.grads.size(); ++t)
            analytic.grads[t] += ortho.grads[t];
    }
    std::vector<Matrix> numeric = numeric_gradients(m, Xs, Xt, spec, pools, frozen, cfg);
    return compare_gradients(analytic.grads, numeric, cfg.tolerance);
}

}  // namespace bdma
