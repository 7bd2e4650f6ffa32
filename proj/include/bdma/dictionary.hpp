#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bdma/embeddings.hpp"

namespace bdma {

// An ordered list of (source token, target token) pairs. Exact duplicate
// pairs are collapsed at parse time; order of first occurrence is kept.
struct BilingualDictionary {
    std::vector<std::pair<std::string, std::string>> pairs;
};

// Dictionary pairs resolved to row indices in a source/target EmbeddingSet.
struct IndexedPairs {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    std::size_t dropped_source_oov = 0;
    std::size_t dropped_target_oov = 0;
};

// Evaluation view: each source row maps to every target row that counts as a
// correct translation. Keys iterate in ascending row order.
struct EvalGroups {
    std::map<Eigen::Index, std::vector<Eigen::Index>> groups;
    std::size_t dropped_source_oov = 0;
    std::size_t dropped_target_oov = 0;
};

// Each line is "<src><ws><tgt>"; any run of ASCII whitespace separates the
// two fields. Blank lines are skipped; any other field count is an error.
BilingualDictionary parse_dictionary(std::istream& in);
BilingualDictionary load_dictionary(const std::string& path);
void write_dictionary(const BilingualDictionary& d, std::ostream& out);
void save_dictionary(const BilingualDictionary& d, const std::string& path);

// Keeps pairs whose source token appears exactly once among all source
// tokens and whose target token appears exactly once among all target
// tokens. Order preserved; idempotent.
BilingualDictionary filter_unique(const BilingualDictionary& d);

// First min(cap, |d|) pairs in order. The seeded random alternative draws a
// subset without replacement and keeps input order.
inline constexpr int kDefaultMaxPairs = 5000;
BilingualDictionary sample_pairs(const BilingualDictionary& d, std::size_t cap = kDefaultMaxPairs,
                                 bool random = false, std::uint64_t seed = 0);

// Resolves tokens to row indices; pairs with an OOV token on either side are
// dropped and counted (source side counted first). Empty result is an error.
IndexedPairs bind(const BilingualDictionary& d, const EmbeddingSet& src, const EmbeddingSet& tgt);

// Same drop rules as bind, grouped by source row. Values are sorted and
// deduplicated. Empty result is an error.
EvalGroups eval_groups(const BilingualDictionary& d, const EmbeddingSet& src, const EmbeddingSet& tgt);

}  // namespace bdma
