#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bdma/errors.hpp"
#include "bdma/losses.hpp"
#include "test_util.hpp"

using namespace bdma;

namespace {

Mapper perturbed(Mapper m, std::uint64_t seed) {
    Rng rng(seed, 2);
    for (Matrix& p : m.params()) p += 0.1 * gaussian_matrix(p.rows(), p.cols(), rng);
    return m;
}

Mapper make_mapper(MapperKind kind, Sharing sharing, int d, int h, std::uint64_t seed) {
    Mapper m = kind == MapperKind::Linear ? Mapper::init_linear(d, sharing)
                                          : Mapper::init_ffn(d, h, seed, sharing);
    return perturbed(std::move(m), seed);
}

double naive_dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
    return s;
}

double naive_norm(const Vector& a) { return std::sqrt(naive_dot(a, a)); }

// Reference loss totals computed per sample with sorted-scan neighborhoods.
double naive_mse(const Matrix& Fa, const Matrix& Fb, const Matrix& Xs, const Matrix& Xt) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
        Vector da = Fa.row(i) - Xt.row(i);
        Vector db = Fb.row(i) - Xs.row(i);
        total += naive_dot(da, da) + naive_dot(db, db);
    }
    return total;
}

double naive_cosine(const Matrix& Fa, const Matrix& Fb, const Matrix& Xs, const Matrix& Xt) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
        Vector fa = Fa.row(i), y = Xt.row(i), fb = Fb.row(i), x = Xs.row(i);
        total += 1.0 - std::abs(naive_dot(fa, y) / (naive_norm(fa) * naive_norm(y)));
        total += 1.0 - std::abs(naive_dot(fb, x) / (naive_norm(fb) * naive_norm(x)));
    }
    return total;
}

std::vector<Eigen::Index> naive_topk_dots(const Vector& q, const Matrix& pool, int k) {
    std::vector<std::pair<double, Eigen::Index>> scored;
    for (Eigen::Index j = 0; j < pool.rows(); ++j)
        scored.emplace_back(naive_dot(q, pool.row(j)), j);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<Eigen::Index> out;
    for (int j = 0; j < k; ++j) out.push_back(scored[static_cast<std::size_t>(j)].second);
    return out;
}

double naive_rcsls(const Matrix& Fa, const Matrix& Fb, const Matrix& Xs, const Matrix& Xt,
                   const Matrix& pool_src, const Matrix& pool_tgt, int k) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
        Vector fa = Fa.row(i), fb = Fb.row(i);
        double term = -2.0 * naive_dot(fa, Xt.row(i));
        for (Eigen::Index j : naive_topk_dots(fa, pool_tgt, k))
            term += naive_dot(fa, pool_tgt.row(j)) / k;
        for (Eigen::Index j : naive_topk_dots(fb, pool_src, k))
            term += naive_dot(pool_src.row(j), fb) / k;
        total += term;
    }
    return total / static_cast<double>(Xs.rows());
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("loss kind names round-trip") {
    for (LossKind k :
         {LossKind::Mse, LossKind::Cosine, LossKind::Rcsls, LossKind::CosinePlusRcsls})
        CHECK(loss_kind_from_string(to_string(k)) == k);
    CHECK(loss_kind_from_string("cos") == LossKind::Cosine);
    CHECK_THROWS_AS(loss_kind_from_string("hinge"), DataError);
}

TEST_CASE("mse total matches the per-sample oracle") {
    for (MapperKind kind : {MapperKind::Linear, MapperKind::Ffn}) {
        Mapper m = make_mapper(kind, Sharing::SharedTranspose, 5, 4, 31);
        Matrix Xs = testutil::random_matrix(9, 5, 32);
        Matrix Xt = testutil::random_matrix(9, 5, 33);
        LossOutput out = ccl(m, Xs, Xt, {LossKind::Mse, 10});
        double want = naive_mse(m.forward(Xs), m.reverse(Xt), Xs, Xt);
        CHECK(out.total == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("mse is zero when both flows already align the batch") {
    Mapper m = Mapper::init_linear(4);
    Matrix X = testutil::random_matrix(6, 4, 34);
    LossOutput out = ccl(m, X, X, {LossKind::Mse, 10});
    CHECK(out.total == 0.0);
    for (const Matrix& g : out.grads) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mse micro-fixture pins total and gradient") {
    Matrix W(2, 2);
    W << 1, 1, 0, 1;
    Mapper m(MapperKind::Linear, Sharing::SharedTranspose, 2, 0, {W});
    Matrix Xs(1, 2), Xt(1, 2);
    Xs << 1, 0;
    Xt << 0, 1;
    // f_a(x) = (1,0), f_b(y) = (0,1): both residuals have squared norm 2.
    LossOutput out = ccl(m, Xs, Xt, {LossKind::Mse, 1});
    CHECK(out.total == doctest::Approx(4.0));
    Matrix want(2, 2);
    want << 2, 0, -4, 2;
    CHECK((out.grads[0] - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cosine total matches the per-sample oracle and stays in range") {
    for (MapperKind kind : {MapperKind::Linear, MapperKind::Ffn}) {
        Mapper m = make_mapper(kind, Sharing::Independent, 5, 4, 35);
        Matrix Xs = testutil::random_matrix(8, 5, 36);
        Matrix Xt = testutil::random_matrix(8, 5, 37);
        LossOutput out = ccl(m, Xs, Xt, {LossKind::Cosine, 10});
        double want = naive_cosine(m.forward(Xs), m.reverse(Xt), Xs, Xt);
        CHECK(out.total == doctest::Approx(want).epsilon(1e-12));
        CHECK(out.total >= 0.0);
        CHECK(out.total <= 2.0 * 8);
    }
}

TEST_CASE("cosine treats anti-aligned pairs as aligned") {
    Mapper m = Mapper::init_linear(3);
    Matrix Xs(1, 3), Xt(1, 3);
    Xs << 1, 0, 0;
    Xt << -1, 0, 0;
    LossOutput out = ccl(m, Xs, Xt, {LossKind::Cosine, 1});
    CHECK(out.total == doctest::Approx(0.0));
    CHECK(out.grads[0].cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rcsls total matches the brute-force oracle") {
    Mapper m = make_mapper(MapperKind::Linear, Sharing::SharedTranspose, 4, 0, 38);
    Matrix Xs = testutil::random_matrix(6, 4, 39);
    Matrix Xt = testutil::random_matrix(6, 4, 40);
    Matrix pool_src = testutil::random_matrix(15, 4, 41);
    Matrix pool_tgt = testutil::random_matrix(15, 4, 42);
    RcslsPools pools{&pool_src, &pool_tgt};
    for (int k : {1, 3, 15}) {
        LossOutput out = ccl(m, Xs, Xt, {LossKind::Rcsls, k}, pools);
        double want = naive_rcsls(m.forward(Xs), m.reverse(Xt), Xs, Xt, pool_src, pool_tgt, k);
        CHECK(out.total == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("combined loss is the sum of its parts") {
    Mapper m = make_mapper(MapperKind::Ffn, Sharing::SharedTranspose, 4, 3, 43);
    Matrix Xs = testutil::random_matrix(7, 4, 44);
    Matrix Xt = testutil::random_matrix(7, 4, 45);
    RcslsPools pools{&Xs, &Xt};
    LossOutput combined = ccl(m, Xs, Xt, {LossKind::CosinePlusRcsls, 3}, pools);
    LossOutput cos_only = ccl(m, Xs, Xt, {LossKind::Cosine, 3});
    LossOutput rcsls_only = ccl(m, Xs, Xt, {LossKind::Rcsls, 3}, pools);
    CHECK(combined.total ==
          doctest::Approx(cos_only.total + rcsls_only.total).epsilon(1e-12));
    for (std::size_t t = 0; t < combined.grads.size(); ++t)
        CHECK((combined.grads[t] - cos_only.grads[t] - rcsls_only.grads[t])
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
}

TEST_CASE("neighborhoods use the k largest dot products with ascending tie-break") {
    Mapper m = Mapper::init_linear(2);
    Matrix Xs(1, 2), Xt(1, 2);
    Xs << 1, 0;
    Xt << 1, 0;
    Matrix pool(3, 2);
    pool << 1, 0, 0.5, 0, 1, 0;  // rows 0 and 2 tie
    RcslsPools pools{&pool, &pool};
    RcslsNeighborhoods nbh = rcsls_neighborhoods(m, Xs, Xt, pools, 2);
    CHECK(nbh.target[0] == std::vector<Eigen::Index>{0, 2});
    CHECK(nbh.source[0] == std::vector<Eigen::Index>{0, 2});
    nbh = rcsls_neighborhoods(m, Xs, Xt, pools, 1);
    CHECK(nbh.target[0] == std::vector<Eigen::Index>{0});
}

TEST_CASE("ccl recomputes neighborhoods; frozen call honors the caller's") {
    Mapper m = make_mapper(MapperKind::Linear, Sharing::SharedTranspose, 3, 0, 46);
    Matrix Xs = testutil::random_matrix(5, 3, 47);
    Matrix Xt = testutil::random_matrix(5, 3, 48);
    RcslsPools pools{&Xs, &Xt};
    LossSpec spec{LossKind::Rcsls, 2};
    RcslsNeighborhoods nbh = rcsls_neighborhoods(m, Xs, Xt, pools, spec.rcsls_k);
    LossOutput a = ccl(m, Xs, Xt, spec, pools);
    LossOutput b = ccl_frozen(m, Xs, Xt, spec, pools, &nbh);
    CHECK(a.total == b.total);
    for (std::size_t t = 0; t < a.grads.size(); ++t)
        CHECK(testutil::bitwise_equal(a.grads[t], b.grads[t]));
}

TEST_CASE("analytic gradients pass central-difference checks across the full matrix") {
    Matrix Xs = testutil::random_matrix(5, 4, 50);
    Matrix Xt = testutil::random_matrix(5, 4, 51);
    Matrix pool_src = testutil::random_matrix(8, 4, 52);
    Matrix pool_tgt = testutil::random_matrix(8, 4, 53);
    RcslsPools pools{&pool_src, &pool_tgt};

    int run = 0;
    for (LossKind kind :
         {LossKind::Mse, LossKind::Cosine, LossKind::Rcsls, LossKind::CosinePlusRcsls}) {
        for (MapperKind arch : {MapperKind::Linear, MapperKind::Ffn}) {
            for (Sharing sharing : {Sharing::SharedTranspose, Sharing::Independent}) {
                for (bool ortho : {false, true}) {
                    Mapper m = make_mapper(arch, sharing, 4, 3,
                                           60 + static_cast<std::uint64_t>(run++));
                    GradCheckConfig cfg;
                    cfg.include_ortho = ortho;
                    GradCheckReport report = grad_check(m, Xs, Xt, {kind, 2}, pools, cfg);
                    INFO("loss ", to_string(kind), " arch ", to_string(arch), " sharing ",
                         to_string(sharing), " ortho ", ortho);
                    CHECK(report.passed);
                    CHECK(report.max_rel_err < 1e-5);
                }
            }
        }
    }
}

TEST_CASE("the checker rejects corrupted gradients") {
    Mapper m = make_mapper(MapperKind::Linear, Sharing::SharedTranspose, 3, 0, 70);
    Matrix Xs = testutil::random_matrix(4, 3, 71);
    Matrix Xt = testutil::random_matrix(4, 3, 72);
    LossSpec spec{LossKind::Mse, 1};
    GradCheckConfig cfg;

    LossOutput analytic = ccl(m, Xs, Xt, spec);
    LossOutput ortho = orthogonal_penalty(m, cfg.map_beta);
    for (std::size_t t = 0; t < analytic.grads.size(); ++t)
        analytic.grads[t] += ortho.grads[t];
    std::vector<Matrix> numeric = numeric_gradients(m, Xs, Xt, spec, {}, nullptr, cfg);

    GradCheckReport clean = compare_gradients(analytic.grads, numeric, cfg.tolerance);
    CHECK(clean.passed);

    analytic.grads[0](1, 2) += 0.5;
    GradCheckReport broken = compare_gradients(analytic.grads, numeric, cfg.tolerance);
    CHECK_FALSE(broken.passed);
    CHECK(broken.worst_tensor == 0);
    CHECK(broken.tensors[0].worst_row == 1);
    CHECK(broken.tensors[0].worst_col == 2);
}

TEST_CASE("orthogonal penalty pins hand-computed values") {
    SUBCASE("square: W = 2I, d = 3, beta = 0.001 gives 0.027") {
        Mapper m(MapperKind::Linear, Sharing::SharedTranspose, 3, 0,
                 {2.0 * Matrix::Identity(3, 3)});
        LossOutput out = orthogonal_penalty(m, 0.001);
        CHECK(out.total == doctest::Approx(0.027));
        // grad = 4 beta D W with D = 3I: diagonal 4(0.001)(3)(2) = 0.024.
        CHECK(out.grads[0](0, 0) == doctest::Approx(0.024));
        CHECK(out.grads[0](0, 1) == doctest::Approx(0.0));
    }
    SUBCASE("identity is a zero of the penalty") {
        Mapper m = Mapper::init_linear(4);
        LossOutput out = orthogonal_penalty(m, 0.5);
        CHECK(out.total == 0.0);
        CHECK(out.grads[0].cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("wide tensors use the row Gram") {
        Matrix W(2, 3);
        W << 1, 0, 0, 0, 2, 0;
        Mapper m(MapperKind::Ffn, Sharing::SharedTranspose, 3, 2, {W, Matrix::Zero(3, 2)});
        LossOutput out = orthogonal_penalty(m, 0.001);
        // First tensor: W W^T = diag(1,4), D = diag(0,3), |D|_F^2 = 9.
        // Second tensor (zero): D = -I (2x2), |D|_F^2 = 2.
        CHECK(out.total == doctest::Approx(0.001 * (9 + 2)));
        CHECK(out.grads[0](1, 1) == doctest::Approx(4 * 0.001 * 3 * 2));
        CHECK(out.grads[0](0, 0) == doctest::Approx(0.0));
    }
    SUBCASE("tall tensors use the column Gram") {
        Matrix W(3, 2);
        W << 1, 0, 0, 2, 0, 0;
        Mapper m(MapperKind::Ffn, Sharing::SharedTranspose, 2, 3, {W, Matrix::Zero(2, 3)});
        LossOutput out = orthogonal_penalty(m, 0.01);
        CHECK(out.total == doctest::Approx(0.01 * (9 + 2)));
        CHECK(out.grads[0](1, 1) == doctest::Approx(4 * 0.01 * 2 * 3));
    }
}

TEST_CASE("orthogonal penalty gradient matches finite differences directly") {
    Mapper m = make_mapper(MapperKind::Ffn, Sharing::Independent, 4, 3, 80);
    double beta = 0.37;
    LossOutput out = orthogonal_penalty(m, beta);
    double eps = 1e-6;
    for (std::size_t t = 0; t < m.params().size(); ++t) {
        for (Eigen::Index i = 0; i < m.params()[t].rows(); ++i) {
            for (Eigen::Index j = 0; j < m.params()[t].cols(); ++j) {
                Mapper probe = m;
                probe.params()[t](i, j) += eps;
                double hi = orthogonal_penalty(probe, beta).total;
                probe.params()[t](i, j) -= 2 * eps;
                double lo = orthogonal_penalty(probe, beta).total;
                CHECK(out.grads[t](i, j) == doctest::Approx((hi - lo) / (2 * eps)).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("ccl rejects malformed batches and pools") {
    Mapper m = Mapper::init_linear(3);
    Matrix X = testutil::random_matrix(4, 3, 90);
    Matrix Y5 = testutil::random_matrix(5, 3, 91);
    Matrix wide = testutil::random_matrix(4, 2, 92);
    CHECK_THROWS_AS(ccl(m, X, Y5, {LossKind::Mse, 1}), DataError);
    CHECK_THROWS_AS(ccl(m, X, wide, {LossKind::Mse, 1}), DataError);
    CHECK_THROWS_AS(ccl(m, Matrix(0, 3), Matrix(0, 3), {LossKind::Mse, 1}), DataError);
    CHECK_THROWS_AS(ccl(m, X, X, {LossKind::Rcsls, 1}), DataError);  // pools missing
    Matrix tiny_pool = testutil::random_matrix(2, 3, 93);
    RcslsPools pools{&tiny_pool, &tiny_pool};
    CHECK_THROWS_AS(ccl(m, X, X, {LossKind::Rcsls, 5}, pools), DataError);  // k > pool
    CHECK_THROWS_AS(ccl(m, X, X, {LossKind::Rcsls, 0}, pools), DataError);
}

TEST_CASE("losses are deterministic") {
    Mapper m = make_mapper(MapperKind::Ffn, Sharing::SharedTranspose, 4, 3, 94);
    Matrix Xs = testutil::random_matrix(6, 4, 95);
    Matrix Xt = testutil::random_matrix(6, 4, 96);
    RcslsPools pools{&Xs, &Xt};
    LossOutput a = ccl(m, Xs, Xt, {LossKind::CosinePlusRcsls, 3}, pools);
    LossOutput b = ccl(m, Xs, Xt, {LossKind::CosinePlusRcsls, 3}, pools);
    CHECK(a.total == b.total);
    for (std::size_t t = 0; t < a.grads.size(); ++t)
        CHECK(testutil::bitwise_equal(a.grads[t], b.grads[t]));
}

}  // TEST_SUITE
