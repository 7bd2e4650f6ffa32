#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bdma/linalg.hpp"

namespace bdma {

enum class MapperKind : std::uint8_t { Linear = 0, Ffn = 1 };
enum class Sharing : std::uint8_t { SharedTranspose = 0, Independent = 1 };

std::string to_string(MapperKind k);
std::string to_string(Sharing s);

// Intermediates of one flow application, kept for backpropagation.
struct FlowCache {
    Matrix activation;  // tanh outputs for the ffn kinds; unused for linear
    Matrix output;
};

// A single invertible-by-construction mapping between embedding spaces.
//
// Forward flow on a batch X (rows are vectors):
//   linear: X * W^T                     with W on d x d
//   ffn:    tanh(X * W1^T) * W2^T       with W1 on h x d, W2 on d x h
// Reverse flow with shared parameters applies each layer transposed, in
// reverse order:
//   linear: Y * W
//   ffn:    tanh(Y * W2) * W1
// With independent sharing a second parameter set is used by the reverse
// flow with the forward formulas.
class Mapper {
public:
    Mapper(MapperKind kind, Sharing sharing, int dim, int hidden, std::vector<Matrix> params);

    // Linear mapper starts at the identity.
    static Mapper init_linear(int dim, Sharing sharing = Sharing::SharedTranspose);
    // Ffn layers start uniform in +-sqrt(6 / (fan_in + fan_out)).
    static Mapper init_ffn(int dim, int hidden, std::uint64_t seed,
                           Sharing sharing = Sharing::SharedTranspose);

    MapperKind kind() const { return kind_; }
    Sharing sharing() const { return sharing_; }
    int dim() const { return dim_; }
    int hidden() const { return hidden_; }

    std::vector<Matrix>& params() { return params_; }
    const std::vector<Matrix>& params() const { return params_; }

    Matrix forward(const Matrix& X) const;
    Matrix reverse(const Matrix& Y) const;

    FlowCache forward_cached(const Matrix& X) const;
    FlowCache reverse_cached(const Matrix& Y) const;

    // Accumulates d(loss)/d(params) into grads given G = d(loss)/d(output).
    // grads must hold one zero-initialized matrix per parameter tensor.
    void backprop_forward(const Matrix& X, const FlowCache& cache, const Matrix& G,
                          std::vector<Matrix>& grads) const;
    void backprop_reverse(const Matrix& Y, const FlowCache& cache, const Matrix& G,
                          std::vector<Matrix>& grads) const;

    std::vector<Matrix> zero_grads() const;

    // Binary model format, fixed layout, trailing crc32:
    //   "BDMA" | version u8 | kind u8 | sharing u8 | d u32le | h u32le |
    //   row-major f64le per parameter tensor | crc32 u32le
    void save(const std::string& path) const;
    static Mapper load(const std::string& path);

    bool operator==(const Mapper& other) const;

private:
    void check_input(const Matrix& X, const char* flow) const;

    MapperKind kind_;
    Sharing sharing_;
    int dim_;
    int hidden_;
    std::vector<Matrix> params_;
};

inline constexpr std::uint8_t kModelFormatVersion = 1;

}  // namespace bdma
