#include "bdma/embeddings.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <utility>

#include "bdma/errors.hpp"

namespace bdma {

EmbeddingSet::EmbeddingSet(std::vector<std::string> words, Matrix matrix, std::string meta)
    : words_(std::move(words)), matrix_(std::move(matrix)), meta_(std::move(meta)) {
    if (matrix_.rows() == 0 || matrix_.cols() == 0)
        throw DataError("embedding set must have at least one row and one column");
    if (static_cast<Eigen::Index>(words_.size()) != matrix_.rows())
        throw DataError("embedding set token count does not match matrix rows");
    if (!matrix_.allFinite()) throw DataError("embedding set contains non-finite values");
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (words_[i].empty()) throw DataError("embedding set contains an empty token");
        auto [it, inserted] = index_.emplace(words_[i], static_cast<Eigen::Index>(i));
        if (!inserted) throw DataError("duplicate token in embedding set: " + words_[i]);
    }
}

Eigen::Index EmbeddingSet::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

namespace {

bool parse_positive_int(const std::string& field, long& out) {
    if (field.empty()) return false;
    char* end = nullptr;
    long v = std::strtol(field.c_str(), &end, 10);
    if (end != field.c_str() + field.size() || v <= 0) return false;
    out = v;
    return true;
}

}  // namespace

VecParseResult parse_vec(std::istream& in, int max_vocab) {
    if (max_vocab <= 0) throw DataError("max_vocab must be positive");

    std::string line;
    if (!std::getline(in, line)) throw DataError("vec input is empty");
    std::istringstream header(line);
    std::string count_field, dim_field, extra;
    long count = 0, dim = 0;
    if (!(header >> count_field >> dim_field) || (header >> extra) ||
        !parse_positive_int(count_field, count) || !parse_positive_int(dim_field, dim))
        throw DataError("malformed vec header: expected \"<count> <dim>\", got \"" + line + "\"");

    std::vector<std::string> words;
    std::vector<double> values;
    words.reserve(static_cast<std::size_t>(std::min<long>(count, max_vocab)));
    values.reserve(words.capacity() * static_cast<std::size_t>(dim));
    std::size_t duplicates = 0;
    std::unordered_map<std::string, bool> seen;
    std::size_t line_no = 1;

    while (static_cast<long>(words.size()) < max_vocab && std::getline(in, line)) {
        ++line_no;
        const char* p = line.c_str();
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (*p == '\0') continue;  // blank line

        const char* tok_begin = p;
        while (*p != '\0' && *p != ' ' && *p != '\t') ++p;
        std::string token(tok_begin, p);

        bool duplicate = !seen.emplace(token, true).second;

        long got = 0;
        double row_buf = 0.0;
        std::size_t row_start = values.size();
        bool bad_value = false;
        while (true) {
            while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
            if (*p == '\0') break;
            char* end = nullptr;
            row_buf = std::strtod(p, &end);
            if (end == p) {
                bad_value = true;
                break;
            }
            p = end;
            ++got;
            if (!duplicate) values.push_back(row_buf);
            if (!std::isfinite(row_buf))
                throw DataError("non-finite value for token \"" + token + "\" at line " +
                                std::to_string(line_no));
        }
        if (bad_value || got != dim) {
            throw DataError("token \"" + token + "\" at line " + std::to_string(line_no) +
                            " has " + std::to_string(got) + " values, expected " +
                            std::to_string(dim));
        }
        if (duplicate) {
            ++duplicates;
            values.resize(row_start);
            continue;
        }
        words.push_back(std::move(token));
    }

    if (words.empty()) throw DataError("vec input has no usable rows");

    Matrix m(static_cast<Eigen::Index>(words.size()), dim);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < dim; ++j)
            m(i, j) = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                             static_cast<std::size_t>(j)];

    return {EmbeddingSet(std::move(words), std::move(m)), duplicates};
}

VecParseResult load_vec(const std::string& path, int max_vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vec file: " + path);
    auto result = parse_vec(in, max_vocab);
    return result;
}

void write_vec(const EmbeddingSet& set, std::ostream& out) {
    out << set.size() << ' ' << set.dim() << '\n';
    char buf[64];
    const Matrix& m = set.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << set.words()[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6g", m(i, j));
            out << ' ' << buf;
        }
        out << '\n';
    }
}

void save_vec(const EmbeddingSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    write_vec(set, out);
    if (!out) throw DataError("failed writing vec file: " + path);
}

namespace {

void normalize_rows(Matrix& m, const std::vector<std::string>& words) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double norm = m.row(i).norm();
        if (norm == 0.0)
            throw DataError("zero-norm row for token \"" + words[static_cast<std::size_t>(i)] +
                            "\" during preprocessing");
        m.row(i) /= norm;
    }
}

}  // namespace

EmbeddingSet preprocess(const EmbeddingSet& set) {
    Matrix m = set.matrix();
    normalize_rows(m, set.words());
    m.rowwise() -= m.colwise().mean();
    normalize_rows(m, set.words());
    return EmbeddingSet(set.words(), std::move(m), set.meta());
}

}  // namespace bdma
