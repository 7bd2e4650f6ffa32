#include "bdma/dictionary.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "bdma/errors.hpp"
#include "bdma/rng.hpp"

namespace bdma {

BilingualDictionary parse_dictionary(std::istream& in) {
    BilingualDictionary d;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string src, tgt, extra;
        if (!(fields >> src)) continue;  // blank line
        if (!(fields >> tgt) || (fields >> extra))
            throw DataError("dictionary line " + std::to_string(line_no) +
                            " does not have exactly 2 fields: \"" + line + "\"");
        if (seen.emplace(src, tgt).second) d.pairs.emplace_back(std::move(src), std::move(tgt));
    }
    return d;
}

BilingualDictionary load_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dictionary file: " + path);
    return parse_dictionary(in);
}

void write_dictionary(const BilingualDictionary& d, std::ostream& out) {
    for (const auto& [src, tgt] : d.pairs) out << src << ' ' << tgt << '\n';
}

void save_dictionary(const BilingualDictionary& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    write_dictionary(d, out);
    if (!out) throw DataError("failed writing dictionary file: " + path);
}

BilingualDictionary filter_unique(const BilingualDictionary& d) {
    std::unordered_map<std::string, int> src_count, tgt_count;
    for (const auto& [src, tgt] : d.pairs) {
        ++src_count[src];
        ++tgt_count[tgt];
    }
    BilingualDictionary out;
    for (const auto& pair : d.pairs)
        if (src_count[pair.first] == 1 && tgt_count[pair.second] == 1) out.pairs.push_back(pair);
    return out;
}

BilingualDictionary sample_pairs(const BilingualDictionary& d, std::size_t cap, bool random,
                                 std::uint64_t seed) {
    std::size_t take = std::min(cap, d.pairs.size());
    BilingualDictionary out;
    out.pairs.reserve(take);
    if (!random || take == d.pairs.size()) {
        out.pairs.assign(d.pairs.begin(), d.pairs.begin() + static_cast<std::ptrdiff_t>(take));
        return out;
    }
    // Seeded draw without replacement, selection kept in input order.
    std::vector<std::size_t> idx(d.pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed, /*stream=*/0x5A3B);
    for (std::size_t i = idx.size() - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.below(i + 1)]);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) out.pairs.push_back(d.pairs[i]);
    return out;
}

IndexedPairs bind(const BilingualDictionary& d, const EmbeddingSet& src, const EmbeddingSet& tgt) {
    IndexedPairs out;
    out.pairs.reserve(d.pairs.size());
    for (const auto& [s, t] : d.pairs) {
        Eigen::Index si = src.lookup(s);
        if (si < 0) {
            ++out.dropped_source_oov;
            continue;
        }
        Eigen::Index ti = tgt.lookup(t);
        if (ti < 0) {
            ++out.dropped_target_oov;
            continue;
        }
        out.pairs.emplace_back(si, ti);
    }
    if (out.pairs.empty()) throw DataError("no dictionary pair is covered by both vocabularies");
    return out;
}

EvalGroups eval_groups(const BilingualDictionary& d, const EmbeddingSet& src,
                       const EmbeddingSet& tgt) {
    EvalGroups out;
    std::map<Eigen::Index, std::set<Eigen::Index>> groups;
    for (const auto& [s, t] : d.pairs) {
        Eigen::Index si = src.lookup(s);
        if (si < 0) {
            ++out.dropped_source_oov;
            continue;
        }
        Eigen::Index ti = tgt.lookup(t);
        if (ti < 0) {
            ++out.dropped_target_oov;
            continue;
        }
        groups[si].insert(ti);
    }
    if (groups.empty()) throw DataError("no dictionary pair is covered by both vocabularies");
    for (auto& [si, tis] : groups)
        out.groups.emplace(si, std::vector<Eigen::Index>(tis.begin(), tis.end()));
    return out;
}

}  // namespace bdma
