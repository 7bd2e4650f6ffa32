#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdma/linalg.hpp"

namespace bdma {

// An immutable vocabulary with one row per token. Tokens are unique and
// case-sensitive; the matrix is n x d with n >= 1.
class EmbeddingSet {
public:
    EmbeddingSet(std::vector<std::string> words, Matrix matrix, std::string meta = "");

    Eigen::Index size() const { return matrix_.rows(); }
    Eigen::Index dim() const { return matrix_.cols(); }
    const std::vector<std::string>& words() const { return words_; }
    const Matrix& matrix() const { return matrix_; }
    const std::string& meta() const { return meta_; }

    // Row index for a token, or -1 when absent.
    Eigen::Index lookup(const std::string& token) const;

private:
    std::vector<std::string> words_;
    Matrix matrix_;
    std::string meta_;
    std::unordered_map<std::string, Eigen::Index> index_;
};

struct VecParseResult {
    EmbeddingSet embeddings;
    std::size_t duplicates_skipped = 0;
};

inline constexpr int kDefaultMaxVocab = 200000;

// Parses the textual .vec format: a "<count> <dim>" header line, then one
// "<token> <v1> ... <vd>" line per word. Keeps the first occurrence of a
// duplicate token and counts the rest. Reads at most max_vocab rows.
VecParseResult parse_vec(std::istream& in, int max_vocab = kDefaultMaxVocab);
VecParseResult load_vec(const std::string& path, int max_vocab = kDefaultMaxVocab);

// Writes the same format with 6 significant digits per value.
void write_vec(const EmbeddingSet& set, std::ostream& out);
void save_vec(const EmbeddingSet& set, const std::string& path);

// Unit-normalizes rows, mean-centers columns, then unit-normalizes rows
// again, in that order. A row with zero norm at either normalization step is
// an error naming the token.
EmbeddingSet preprocess(const EmbeddingSet& set);

}  // namespace bdma
