#pragma once

#include <string>
#include <vector>

#include "bdma/dictionary.hpp"
#include "bdma/mapper.hpp"

namespace bdma {

enum class RetrievalKind { NearestNeighbor, Csls };
enum class Direction { Forward, Reverse };

std::string to_string(RetrievalKind k);
std::string to_string(Direction d);
RetrievalKind retrieval_kind_from_string(const std::string& name);
Direction direction_from_string(const std::string& name);

struct RetrievalMethod {
    RetrievalKind kind = RetrievalKind::Csls;
    int k = 10;  // csls neighborhood size
};

// Top-k target row indices per query by cosine similarity. Ties break toward
// the smaller index. k must not exceed the candidate count.
std::vector<std::vector<Eigen::Index>> nn_retrieve(const Matrix& Q, const Matrix& T, int k,
                                                   int threads = 1);

// Top-k by the similarity score
//   score(q, t) = 2 cos(q, t) - r_T(q) - r_S(t)
// where r_T(q) is the mean cosine of q to its k nearest rows of T and r_S(t)
// the mean cosine of t to its k nearest rows of Spool. r_S is computed once
// per call. top_k defaults to the neighborhood k.
std::vector<std::vector<Eigen::Index>> csls_retrieve(const Matrix& Q, const Matrix& T,
                                                     const Matrix& Spool, int k, int top_k = -1,
                                                     int threads = 1);

struct EvalReport {
    std::string direction;
    std::string method;
    int k = 10;
    double p1 = 0.0;
    double p5 = 0.0;
    double p10 = 0.0;
    std::size_t queries = 0;
    std::size_t dropped_source_oov = 0;
    std::size_t dropped_target_oov = 0;
    double elapsed_seconds = 0.0;  // logged, never serialized into reports
};

// Precision@{1,5,10} with any valid target counting as a hit. Forward maps
// group keys (source rows) into the target space and retrieves over the full
// target matrix with the forward-mapped source matrix as the csls source
// pool. Reverse maps group keys (target-set rows) with the reverse flow and
// retrieves over the source matrix.
EvalReport precision_at_k(const Mapper& m, Direction direction, const EvalGroups& groups,
                          const EmbeddingSet& src, const EmbeddingSet& tgt,
                          const RetrievalMethod& method, int threads = 1);

// Ranked candidate tokens for each word; words missing from the query-side
// vocabulary produce no entry.
struct Translation {
    std::string word;
    std::vector<std::string> candidates;
};
std::vector<Translation> translate(const Mapper& m, const std::vector<std::string>& words,
                                   Direction direction, const EmbeddingSet& src,
                                   const EmbeddingSet& tgt, const RetrievalMethod& method,
                                   int top_k, int threads = 1);

}  // namespace bdma
