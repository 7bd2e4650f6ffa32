#include <doctest.h>

#include <Eigen/SVD>

#include <set>
#include <string>

#include "bdma/errors.hpp"
#include "bdma/retrieval.hpp"
#include "bdma/synth.hpp"
#include "test_util.hpp"

using namespace bdma;

namespace {

SynthSpec small_spec(TransformKind kind, double noise = 0.0, std::uint64_t seed = 7) {
    SynthSpec s;
    s.n = 40;
    s.d = 4;
    s.kind = kind;
    s.noise = noise;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("kind names round-trip and accept aliases") {
    for (TransformKind k : {TransformKind::Identity, TransformKind::Orthogonal,
                            TransformKind::GeneralLinear, TransformKind::Nonlinear})
        CHECK(transform_kind_from_string(to_string(k)) == k);
    CHECK(transform_kind_from_string("linear") == TransformKind::GeneralLinear);
    CHECK(transform_kind_from_string("general") == TransformKind::GeneralLinear);
    CHECK_THROWS_AS(transform_kind_from_string("affine"), DataError);
}

TEST_CASE("generation is deterministic per spec") {
    SynthData a = generate(small_spec(TransformKind::Orthogonal, 0.1));
    SynthData b = generate(small_spec(TransformKind::Orthogonal, 0.1));
    CHECK(testutil::bitwise_equal(a.source.matrix(), b.source.matrix()));
    CHECK(testutil::bitwise_equal(a.target.matrix(), b.target.matrix()));
    CHECK(a.truth == b.truth);
    SynthData c = generate(small_spec(TransformKind::Orthogonal, 0.1, 8));
    CHECK_FALSE(testutil::bitwise_equal(a.source.matrix(), c.source.matrix()));
}

TEST_CASE("identity without noise yields equal sides") {
    SynthData data = generate(small_spec(TransformKind::Identity));
    CHECK(testutil::bitwise_equal(data.source.matrix(), data.target.matrix()));
    Matrix mapped = data.truth.forward(data.source.matrix());
    CHECK((mapped - data.source.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("splits are contiguous, disjoint and covering") {
    SynthData data = generate(small_spec(TransformKind::Identity));
    CHECK(data.train.pairs.size() == 32);  // round(0.8 * 40)
    CHECK(data.val.pairs.size() == 4);
    CHECK(data.test.pairs.size() == 4);
    std::set<std::string> seen;
    int i = 0;
    for (const auto* split : {&data.train, &data.val, &data.test}) {
        for (const auto& [s, t] : split->pairs) {
            CHECK(s == "s" + std::to_string(i));
            CHECK(t == "t" + std::to_string(i));
            seen.insert(s);
            ++i;
        }
    }
    CHECK(seen.size() == 40);
    CHECK(data.source.words().size() == 40);
    CHECK(data.target.words().size() == 40);
}

TEST_CASE("preprocessing commutes with an orthogonal transform") {
    // Row norms and the row mean transform covariantly under an isometry,
    // so the generating map stays exact after both sides are preprocessed.
    SynthData data = generate(small_spec(TransformKind::Orthogonal));
    Matrix mapped = data.truth.forward(data.source.matrix());
    CHECK((mapped - data.target.matrix()).cwiseAbs().maxCoeff() < 1e-9);

    const Matrix& S = data.source.matrix();
    const Matrix& T = data.target.matrix();
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = i + 1; j < 10; ++j) {
            double cs = S.row(i).dot(S.row(j)) / (S.row(i).norm() * S.row(j).norm());
            double ct = T.row(i).dot(T.row(j)) / (T.row(i).norm() * T.row(j).norm());
            CHECK(cs == doctest::Approx(ct).epsilon(1e-9));
        }

    const Matrix& W = data.truth.params()[0];
    CHECK((W * W.transpose() - Matrix::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("the truth mapper scores perfectly in both directions") {
    SynthData data = generate(small_spec(TransformKind::Orthogonal));
    EvalGroups fwd = eval_groups(data.test, data.source, data.target);
    EvalReport rf = precision_at_k(data.truth, Direction::Forward, fwd, data.source, data.target,
                                   {RetrievalKind::Csls, 4});
    CHECK(rf.p1 == doctest::Approx(1.0));

    BilingualDictionary swapped;
    for (const auto& [s, t] : data.test.pairs) swapped.pairs.emplace_back(t, s);
    EvalGroups rev = eval_groups(swapped, data.target, data.source);
    EvalReport rr = precision_at_k(data.truth, Direction::Reverse, rev, data.source, data.target,
                                   {RetrievalKind::Csls, 4});
    CHECK(rr.p1 == doctest::Approx(1.0));
}

TEST_CASE("noise perturbs only the target side") {
    SynthData clean = generate(small_spec(TransformKind::Orthogonal, 0.0));
    SynthData noisy = generate(small_spec(TransformKind::Orthogonal, 0.35));
    CHECK(testutil::bitwise_equal(clean.source.matrix(), noisy.source.matrix()));
    CHECK_FALSE(testutil::bitwise_equal(clean.target.matrix(), noisy.target.matrix()));
}

TEST_CASE("general linear transforms are well-conditioned") {
    SynthData data = generate(small_spec(TransformKind::GeneralLinear));
    const Matrix& A = data.truth.params()[0];
    Eigen::JacobiSVD<Matrix> svd(A);
    double cond = svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    CHECK(cond <= 4.0 + 1e-9);
    CHECK(svd.singularValues().minCoeff() > 0.0);
}

TEST_CASE("nonlinear generation uses a two-layer truth mapper") {
    SynthData data = generate(small_spec(TransformKind::Nonlinear));
    CHECK(data.truth.kind() == MapperKind::Ffn);
    CHECK(data.truth.hidden() == 8);  // 2 * d
    CHECK(data.truth.params()[0].rows() == 8);
    CHECK(data.truth.params()[0].cols() == 4);
    CHECK(data.truth.params()[1].rows() == 4);
    CHECK(data.truth.params()[1].cols() == 8);
    CHECK(data.source.dim() == 4);
    CHECK(data.target.dim() == 4);
}

TEST_CASE("spec validation rejects degenerate requests") {
    auto expect_throw = [](auto mutate) {
        SynthSpec s = small_spec(TransformKind::Identity);
        mutate(s);
        CHECK_THROWS_AS(s.validate(), DataError);
    };
    expect_throw([](SynthSpec& s) { s.n = 29; });
    expect_throw([](SynthSpec& s) { s.d = 1; });
    expect_throw([](SynthSpec& s) { s.noise = -0.1; });
    expect_throw([](SynthSpec& s) { s.train_frac = 0.0; s.val_frac = 0.9; s.test_frac = 0.1; });
    expect_throw([](SynthSpec& s) { s.train_frac = 0.5; s.val_frac = 0.2; s.test_frac = 0.2; });
    expect_throw([](SynthSpec& s) {
        // Splits that round one side down to zero rows are rejected.
        s.n = 30;
        s.train_frac = 0.97;
        s.val_frac = 0.02;
        s.test_frac = 0.01;
    });
    CHECK_NOTHROW(small_spec(TransformKind::Identity).validate());
}

}  // TEST_SUITE
