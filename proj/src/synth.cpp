#include "bdma/synth.hpp"

#include <cmath>
#include <utility>

#include <Eigen/QR>

#include "bdma/errors.hpp"
#include "bdma/rng.hpp"

namespace bdma {

std::string to_string(TransformKind k) {
    switch (k) {
        case TransformKind::Identity: return "identity";
        case TransformKind::Orthogonal: return "orthogonal";
        case TransformKind::GeneralLinear: return "linear";
        case TransformKind::Nonlinear: return "nonlinear";
    }
    throw DataError("unknown transform kind");
}

TransformKind transform_kind_from_string(const std::string& name) {
    if (name == "identity") return TransformKind::Identity;
    if (name == "orthogonal") return TransformKind::Orthogonal;
    if (name == "linear" || name == "general") return TransformKind::GeneralLinear;
    if (name == "nonlinear") return TransformKind::Nonlinear;
    throw DataError("unknown transform kind: " + name);
}

namespace {

constexpr std::uint64_t kSourceStream = 0x51;
constexpr std::uint64_t kTransformStream = 0x52;
constexpr std::uint64_t kNoiseStream = 0x53;

struct Splits {
    Eigen::Index train = 0;
    Eigen::Index val = 0;
    Eigen::Index test = 0;
};

Splits split_sizes(const SynthSpec& spec) {
    Splits s;
    s.train = static_cast<Eigen::Index>(std::llround(spec.train_frac * spec.n));
    s.val = static_cast<Eigen::Index>(std::llround(spec.val_frac * spec.n));
    s.test = spec.n - s.train - s.val;
    return s;
}

// Haar-ish rotation: QR of a Gaussian matrix with the signs of diag(R)
// folded into Q so the factorization is unique.
Matrix random_orthogonal(int d, Rng& rng) {
    Matrix g = gaussian_matrix(d, d, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, d);
    for (int j = 0; j < d; ++j)
        if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

}  // namespace

void SynthSpec::validate() const {
    if (n < 30) throw DataError("n must be at least 30");
    if (d < 2) throw DataError("d must be at least 2");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw DataError("noise must be non-negative");
    if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
        throw DataError("split fractions must be positive");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1");
    Splits s = split_sizes(*this);
    if (s.train < 1 || s.val < 1 || s.test < 1)
        throw DataError("each split must receive at least one row");
}

SynthData generate(const SynthSpec& spec) {
    spec.validate();
    const int n = spec.n;
    const int d = spec.d;

    Rng src_rng(spec.seed, kSourceStream);
    Matrix S0 = gaussian_matrix(n, d, src_rng);

    Rng map_rng(spec.seed, kTransformStream);
    Matrix T0;
    std::vector<Matrix> truth_params;
    MapperKind truth_kind = MapperKind::Linear;
    int truth_hidden = d;
    switch (spec.kind) {
        case TransformKind::Identity: {
            T0 = S0;
            truth_params.push_back(Matrix::Identity(d, d));
            break;
        }
        case TransformKind::Orthogonal: {
            Matrix Q = random_orthogonal(d, map_rng);
            T0 = S0 * Q.transpose();
            truth_params.push_back(Q);
            break;
        }
        case TransformKind::GeneralLinear: {
            // Controlled spectrum keeps the map invertible: singular values
            // uniform in [0.5, 2].
            Matrix u = random_orthogonal(d, map_rng);
            Matrix v = random_orthogonal(d, map_rng);
            Vector sv(d);
            for (int j = 0; j < d; ++j) sv(j) = map_rng.uniform(0.5, 2.0);
            Matrix A = u * sv.asDiagonal() * v.transpose();
            T0 = S0 * A.transpose();
            truth_params.push_back(A);
            break;
        }
        case TransformKind::Nonlinear: {
            truth_kind = MapperKind::Ffn;
            truth_hidden = 2 * d;
            Matrix A = gaussian_matrix(truth_hidden, d, map_rng) / std::sqrt(double(d));
            Matrix B = gaussian_matrix(d, truth_hidden, map_rng) / std::sqrt(double(truth_hidden));
            T0 = ((S0 * A.transpose()).array().tanh().matrix()) * B.transpose();
            truth_params.push_back(A);
            truth_params.push_back(B);
            break;
        }
    }
    Mapper truth(truth_kind, Sharing::SharedTranspose, d, truth_hidden, std::move(truth_params));

    if (spec.noise > 0.0) {
        Rng noise_rng(spec.seed, kNoiseStream);
        T0 += spec.noise * gaussian_matrix(n, d, noise_rng);
    }

    std::vector<std::string> src_tokens(n), tgt_tokens(n);
    for (int i = 0; i < n; ++i) {
        src_tokens[i] = "s" + std::to_string(i);
        tgt_tokens[i] = "t" + std::to_string(i);
    }

    SynthData data{
        preprocess(EmbeddingSet(std::move(src_tokens), std::move(S0))),
        preprocess(EmbeddingSet(std::move(tgt_tokens), std::move(T0))),
        {}, {}, {},
        std::move(truth),
    };

    Splits s = split_sizes(spec);
    auto pair_at = [&](Eigen::Index i) {
        return std::make_pair(data.source.words()[i], data.target.words()[i]);
    };
    for (Eigen::Index i = 0; i < s.train; ++i) data.train.pairs.push_back(pair_at(i));
    for (Eigen::Index i = s.train; i < s.train + s.val; ++i) data.val.pairs.push_back(pair_at(i));
    for (Eigen::Index i = s.train + s.val; i < n; ++i) data.test.pairs.push_back(pair_at(i));
    return data;
}

}  // namespace bdma
