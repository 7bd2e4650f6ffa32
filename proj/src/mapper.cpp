#include "bdma/mapper.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "bdma/errors.hpp"
#include "bdma/rng.hpp"

namespace bdma {

std::string to_string(MapperKind k) { return k == MapperKind::Linear ? "linear" : "ffn"; }
std::string to_string(Sharing s) {
    return s == Sharing::SharedTranspose ? "shared" : "independent";
}

namespace {

int flow_param_count(MapperKind kind) { return kind == MapperKind::Linear ? 1 : 2; }

void check_param_shapes(MapperKind kind, Sharing sharing, int dim, int hidden,
                        const std::vector<Matrix>& params) {
    if (dim <= 0) throw DataError("mapper dim must be positive");
    int per_flow = flow_param_count(kind);
    int expected = per_flow * (sharing == Sharing::Independent ? 2 : 1);
    if (static_cast<int>(params.size()) != expected)
        throw DataError("mapper expects " + std::to_string(expected) + " parameter tensors, got " +
                        std::to_string(params.size()));
    for (int set = 0; set * per_flow < static_cast<int>(params.size()); ++set) {
        const Matrix& first = params[static_cast<std::size_t>(set * per_flow)];
        if (kind == MapperKind::Linear) {
            if (first.rows() != dim || first.cols() != dim)
                throw DataError("linear mapper weight must be d x d");
        } else {
            if (hidden <= 0) throw DataError("ffn mapper hidden size must be positive");
            const Matrix& second = params[static_cast<std::size_t>(set * per_flow + 1)];
            if (first.rows() != hidden || first.cols() != dim)
                throw DataError("ffn first layer must be h x d");
            if (second.rows() != dim || second.cols() != hidden)
                throw DataError("ffn second layer must be d x h");
        }
    }
}

}  // namespace

Mapper::Mapper(MapperKind kind, Sharing sharing, int dim, int hidden, std::vector<Matrix> params)
    : kind_(kind),
      sharing_(sharing),
      dim_(dim),
      hidden_(kind == MapperKind::Linear ? 0 : hidden),
      params_(std::move(params)) {
    check_param_shapes(kind_, sharing_, dim_, hidden_, params_);
}

Mapper Mapper::init_linear(int dim, Sharing sharing) {
    std::vector<Matrix> params{Matrix::Identity(dim, dim)};
    if (sharing == Sharing::Independent) params.push_back(Matrix::Identity(dim, dim));
    return Mapper(MapperKind::Linear, sharing, dim, 0, std::move(params));
}

Mapper Mapper::init_ffn(int dim, int hidden, std::uint64_t seed, Sharing sharing) {
    if (dim <= 0 || hidden <= 0) throw DataError("ffn mapper needs positive dim and hidden");
    double a = std::sqrt(6.0 / (dim + hidden));
    Rng rng(seed, /*stream=*/0x11A7);
    int sets = sharing == Sharing::Independent ? 2 : 1;
    std::vector<Matrix> params;
    for (int s = 0; s < sets; ++s) {
        params.push_back(uniform_matrix(hidden, dim, -a, a, rng));
        params.push_back(uniform_matrix(dim, hidden, -a, a, rng));
    }
    return Mapper(MapperKind::Ffn, sharing, dim, hidden, std::move(params));
}

void Mapper::check_input(const Matrix& X, const char* flow) const {
    if (X.cols() != dim_)
        throw DataError(std::string(flow) + " input has " + std::to_string(X.cols()) +
                        " columns, mapper dim is " + std::to_string(dim_));
}

Matrix Mapper::forward(const Matrix& X) const { return forward_cached(X).output; }
Matrix Mapper::reverse(const Matrix& Y) const { return reverse_cached(Y).output; }

FlowCache Mapper::forward_cached(const Matrix& X) const {
    check_input(X, "forward");
    FlowCache cache;
    if (kind_ == MapperKind::Linear) {
        cache.output = X * params_[0].transpose();
    } else {
        cache.activation = (X * params_[0].transpose()).array().tanh();
        cache.output = cache.activation * params_[1].transpose();
    }
    return cache;
}

FlowCache Mapper::reverse_cached(const Matrix& Y) const {
    check_input(Y, "reverse");
    FlowCache cache;
    if (sharing_ == Sharing::SharedTranspose) {
        if (kind_ == MapperKind::Linear) {
            cache.output = Y * params_[0];
        } else {
            cache.activation = (Y * params_[1]).array().tanh();
            cache.output = cache.activation * params_[0];
        }
    } else {
        std::size_t base = static_cast<std::size_t>(flow_param_count(kind_));
        if (kind_ == MapperKind::Linear) {
            cache.output = Y * params_[base].transpose();
        } else {
            cache.activation = (Y * params_[base].transpose()).array().tanh();
            cache.output = cache.activation * params_[base + 1].transpose();
        }
    }
    return cache;
}

void Mapper::backprop_forward(const Matrix& X, const FlowCache& cache, const Matrix& G,
                              std::vector<Matrix>& grads) const {
    if (kind_ == MapperKind::Linear) {
        grads[0] += G.transpose() * X;  // d/dW of X W^T
    } else {
        const Matrix& Z = cache.activation;
        grads[1] += G.transpose() * Z;  // d/dW2 of Z W2^T
        Matrix Gh = (G * params_[1]).cwiseProduct((1.0 - Z.array().square()).matrix());
        grads[0] += Gh.transpose() * X;  // d/dW1 through tanh
    }
}

void Mapper::backprop_reverse(const Matrix& Y, const FlowCache& cache, const Matrix& G,
                              std::vector<Matrix>& grads) const {
    if (sharing_ == Sharing::SharedTranspose) {
        if (kind_ == MapperKind::Linear) {
            grads[0] += Y.transpose() * G;  // d/dW of Y W
        } else {
            const Matrix& Z = cache.activation;
            grads[0] += Z.transpose() * G;  // d/dW1 of Z W1
            Matrix Gh = (G * params_[0].transpose())
                            .cwiseProduct((1.0 - Z.array().square()).matrix());
            grads[1] += Y.transpose() * Gh;  // d/dW2 of Y W2 through tanh
        }
        return;
    }
    std::size_t base = static_cast<std::size_t>(flow_param_count(kind_));
    if (kind_ == MapperKind::Linear) {
        grads[base] += G.transpose() * Y;
    } else {
        const Matrix& Z = cache.activation;
        grads[base + 1] += G.transpose() * Z;
        Matrix Gh = (G * params_[base + 1]).cwiseProduct((1.0 - Z.array().square()).matrix());
        grads[base] += Gh.transpose() * Y;
    }
}

std::vector<Matrix> Mapper::zero_grads() const {
    std::vector<Matrix> grads;
    grads.reserve(params_.size());
    for (const Matrix& p : params_) grads.push_back(Matrix::Zero(p.rows(), p.cols()));
    return grads;
}

namespace {

void append_u32le(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
    buf.push_back(static_cast<char>((v >> 16) & 0xFF));
    buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void Mapper::save(const std::string& path) const {
    std::string buf;
    buf += "BDMA";
    buf.push_back(static_cast<char>(kModelFormatVersion));
    buf.push_back(static_cast<char>(kind_));
    buf.push_back(static_cast<char>(sharing_));
    append_u32le(buf, static_cast<std::uint32_t>(dim_));
    append_u32le(buf, static_cast<std::uint32_t>(hidden_));
    for (const Matrix& p : params_) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.cols(); ++j) {
                double v = p(i, j);
                char raw[sizeof(double)];
                std::memcpy(raw, &v, sizeof(double));
                buf.append(raw, sizeof(double));
            }
        }
    }
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    append_u32le(buf, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing model file: " + path);
}

Mapper Mapper::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    constexpr std::size_t header_size = 4 + 1 + 1 + 1 + 4 + 4;
    if (buf.size() < header_size + 4) throw DataError("model file is truncated: " + path);
    if (buf.compare(0, 4, "BDMA") != 0) throw DataError("bad model magic in " + path);

    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    std::uint8_t version = p[4];
    if (version != kModelFormatVersion)
        throw DataError("unsupported model format version " + std::to_string(version));
    std::uint8_t kind_byte = p[5];
    std::uint8_t sharing_byte = p[6];
    if (kind_byte > 1) throw DataError("bad mapper kind byte in " + path);
    if (sharing_byte > 1) throw DataError("bad sharing byte in " + path);
    MapperKind kind = static_cast<MapperKind>(kind_byte);
    Sharing sharing = static_cast<Sharing>(sharing_byte);
    int dim = static_cast<int>(read_u32le(p + 7));
    int hidden = static_cast<int>(read_u32le(p + 11));
    if (dim <= 0) throw DataError("bad mapper dim in " + path);
    if (kind == MapperKind::Ffn && hidden <= 0) throw DataError("bad ffn hidden size in " + path);

    int per_flow = flow_param_count(kind);
    int sets = sharing == Sharing::Independent ? 2 : 1;
    std::size_t doubles = 0;
    if (kind == MapperKind::Linear) {
        doubles = static_cast<std::size_t>(sets) * static_cast<std::size_t>(dim) *
                  static_cast<std::size_t>(dim);
    } else {
        doubles = static_cast<std::size_t>(sets) * 2u * static_cast<std::size_t>(dim) *
                  static_cast<std::size_t>(hidden);
    }
    std::size_t expected = header_size + doubles * sizeof(double) + 4;
    if (buf.size() != expected)
        throw DataError("model file size mismatch (truncated or corrupt): " + path);

    std::uint32_t stored_crc = read_u32le(p + buf.size() - 4);
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (crc != stored_crc) throw DataError("model file checksum mismatch: " + path);

    std::size_t offset = header_size;
    auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                double v;
                std::memcpy(&v, buf.data() + offset, sizeof(double));
                offset += sizeof(double);
                m(i, j) = v;
            }
        }
        return m;
    };

    std::vector<Matrix> params;
    params.reserve(static_cast<std::size_t>(per_flow * sets));
    for (int s = 0; s < sets; ++s) {
        if (kind == MapperKind::Linear) {
            params.push_back(read_matrix(dim, dim));
        } else {
            params.push_back(read_matrix(hidden, dim));
            params.push_back(read_matrix(dim, hidden));
        }
    }
    return Mapper(kind, sharing, dim, hidden, std::move(params));
}

bool Mapper::operator==(const Mapper& other) const {
    if (kind_ != other.kind_ || sharing_ != other.sharing_ || dim_ != other.dim_ ||
        hidden_ != other.hidden_ || params_.size() != other.params_.size())
        return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].rows() != other.params_[i].rows() ||
            params_[i].cols() != other.params_[i].cols())
            return false;
        if (std::memcmp(params_[i].data(), other.params_[i].data(),
                        sizeof(double) * static_cast<std::size_t>(params_[i].size())) != 0)
            return false;
    }
    return true;
}

}  // namespace bdma
