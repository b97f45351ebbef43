#pragma once

#include "cirnn/linalg.hpp"

#include <Eigen/Sparse>

#include <vector>

namespace cirnn::detail {

using SpMat = Eigen::SparseMatrix<double>;

/// minimize ||R x - r||^2  subject to  smat(F_b x + f_b) >= 0 for each block b.
/// Each block is given in svec form: lower triangle, column by column, with
/// off-diagonal entries scaled by sqrt(2) so the Euclidean norm of the svec
/// equals the Frobenius norm of the matrix.
struct LmiLeastSquares {
  SpMat R;
  Vec r;
  SpMat F;  // all blocks stacked
  Vec f;
  std::vector<int> block_sizes;
};

struct AdmmOptions {
  double rho = 1.0;
  double sigma = 1e-6;
  double relaxation = 1.6;
  int max_iter = 20000;
  double eps_abs = 1e-8;
  double eps_rel = 1e-6;
};

struct AdmmResult {
  Vec x;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

int svec_size(int m);
int svec_index(int m, int i, int j);  // i >= j
Vec svec(const Mat& s);
Mat smat(const Eigen::Ref<const Vec>& v, int m);

AdmmResult solve_lmi_least_squares(const LmiLeastSquares& prob, const Vec& x0,
                                   const AdmmOptions& opts);

}  // namespace cirnn::detail
