#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <vector>

namespace coupler {

// min 1/2 l^T Q l + c^T l  subject to  l >= 0, Q symmetric PSD.
//
// Active-set method in the style of Lawson-Hanson NNLS: the passive set
// grows by the most negative reduced gradient and shrinks by a ratio test
// whenever the unconstrained subproblem leaves the orthant. Dependent rows
// of Q are handled with a small ridge on the passive block.
struct NonnegativeQpResult {
  Eigen::VectorXd solution;
  int iterations = 0;
  bool converged = false;
};

NonnegativeQpResult solve_nonnegative_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, int max_iterations = -1);

// min 1/2 w^T Q w + c^T w  subject to  lower <= w <= upper and w_i = value_i
// for every pinned i. Q sparse symmetric and positive definite on the
// unpinned block. Primal-dual active-set iterations with a fallback to a
// one-change-per-iteration primal active-set when the fast iteration cycles.
struct BoxQpResult {
  Eigen::VectorXd solution;
  int iterations = 0;
  bool converged = false;
};

BoxQpResult solve_box_qp(const Eigen::SparseMatrix<double>& Q, const Eigen::VectorXd& c, double lower, double upper,
                         const std::vector<std::pair<int, double>>& pinned, int max_iterations = 200);

}  // namespace coupler
