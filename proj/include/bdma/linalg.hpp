#pragma once

#include <Eigen/Core>

namespace bdma {

// Embedding and parameter matrices are dense doubles; row i of an embedding
// matrix is the vector for token i.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace bdma
