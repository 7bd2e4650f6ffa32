#pragma once

#include <string>
#include <vector>

#include "bdma/mapper.hpp"

namespace bdma {

enum class LossKind { Mse, Cosine, Rcsls, CosinePlusRcsls };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& name);

struct LossSpec {
    LossKind kind = LossKind::CosinePlusRcsls;
    int rcsls_k = 10;
};

// Candidate pools for the relaxed-similarity neighborhoods. Rows are raw
// embedding vectors; typically the bound training matrices.
struct RcslsPools {
    const Matrix* source = nullptr;
    const Matrix* target = nullptr;
};

// Per-sample neighbor indices into the pools, fixed at evaluation time and
// treated as constants under differentiation.
struct RcslsNeighborhoods {
    std::vector<std::vector<Eigen::Index>> target;  // neighbors of f_a(x_i) in the target pool
    std::vector<std::vector<Eigen::Index>> source;  // neighbors of f_b(y_i) in the source pool
};

struct LossOutput {
    double total = 0.0;
    std::vector<Matrix> grads;
};

// Cycle-consistency loss over an aligned batch (row i of Xs pairs with row i
// of Xt):
//   mse:    sum_i |f_a(x_i) - y_i|^2 + |f_b(y_i) - x_i|^2
//   cosine: sum_i (1 - |cos(f_a(x_i), y_i)|) + (1 - |cos(f_b(y_i), x_i)|)
//   rcsls:  mean_i -2 f_a(x_i).y_i
//                  + 1/k sum_{y_j in N_t(f_a(x_i))} f_a(x_i).y_j
//                  + 1/k sum_{x_j in N_s(f_b(y_i))} x_j.f_b(y_i)
//   cosine_rcsls: cosine + rcsls
// Neighborhoods N are the k largest dot products within the pools and are
// recomputed from the current parameters on every call.
LossOutput ccl(const Mapper& m, const Matrix& Xs, const Matrix& Xt, const LossSpec& spec,
               const RcslsPools& pools = {});

// Same loss with the neighborhoods supplied by the caller (finite-difference
// checks hold them fixed while parameters move).
LossOutput ccl_frozen(const Mapper& m, const Matrix& Xs, const Matrix& Xt, const LossSpec& spec,
                      const RcslsPools& pools, const RcslsNeighborhoods* nbh);

RcslsNeighborhoods rcsls_neighborhoods(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                                       const RcslsPools& pools, int k);

// beta * sum over parameter tensors w of |G - I|_F^2, where G is the smaller
// Gram product (w w^T when rows <= cols, else w^T w).
LossOutput orthogonal_penalty(const Mapper& m, double beta);

struct GradCheckConfig {
    double epsilon = 1e-5;
    double tolerance = 1e-5;
    bool include_ortho = true;
    double map_beta = 1e-3;
};

struct GradCheckReport {
    struct TensorReport {
        double max_rel_err = 0.0;
        Eigen::Index worst_row = -1;
        Eigen::Index worst_col = -1;
    };
    std::vector<TensorReport> tensors;
    double max_rel_err = 0.0;
    int worst_tensor = -1;
    double tolerance = 0.0;
    bool passed = false;
};

// Central-difference check of the analytic gradients of
// ccl (+ orthogonal penalty) at the mapper's current parameters.
GradCheckReport grad_check(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                           const LossSpec& spec, const RcslsPools& pools = {},
                           const GradCheckConfig& cfg = {});

// Pieces of grad_check, exposed so tests can inject faults between them.
std::vector<Matrix> numeric_gradients(const Mapper& m, const Matrix& Xs, const Matrix& Xt,
                                      const LossSpec& spec, const RcslsPools& pools,
                                      const RcslsNeighborhoods* nbh, const GradCheckConfig& cfg);
GradCheckReport compare_gradients(const std::vector<Matrix>& analytic,
                                  const std::vector<Matrix>& numeric, double tolerance);

}  // namespace bdma
