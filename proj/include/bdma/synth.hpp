#pragma once

#include <cstdint>
#include <string>

#include "bdma/dictionary.hpp"
#include "bdma/embeddings.hpp"
#include "bdma/mapper.hpp"

namespace bdma {

enum class TransformKind { Identity, Orthogonal, GeneralLinear, Nonlinear };

std::string to_string(TransformKind k);
TransformKind transform_kind_from_string(const std::string& name);

struct SynthSpec {
    int n = 2000;
    int d = 50;
    TransformKind kind = TransformKind::Orthogonal;
    double noise = 0.0;  // stddev of additive Gaussian noise on the target side
    std::uint64_t seed = 7;
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;

    void validate() const;
};

struct SynthData {
    EmbeddingSet source;
    EmbeddingSet target;
    BilingualDictionary train;
    BilingualDictionary val;
    BilingualDictionary test;
    Mapper truth;  // the generating transform as a mapper
};

// Source rows are i.i.d. Gaussian; target row i is transform(source row i)
// plus noise. Both sides then go through the standard preprocess pipeline.
// Tokens are "s<i>" and "t<i>"; the gold dictionary pairs them in order and
// is split train/val/test contiguously, disjoint and covering all n.
SynthData generate(const SynthSpec& spec);

}  // namespace bdma
