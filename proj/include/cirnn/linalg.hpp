#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cirnn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a linear solve hits a (numerically) singular matrix. `layer`
/// is the layer index of the offending E matrix, or -1 when not applicable.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, int layer)
      : std::runtime_error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (M + M^T) / 2
Mat symmetrize(const Mat& m);

/// Smallest eigenvalue of the symmetric part of `m`.
double min_sym_eig(const Mat& m);
double max_sym_eig(const Mat& m);

double spectral_norm(const Mat& m);
double spectral_radius(const Mat& m);

/// Euclidean projection of a symmetric matrix onto the PSD cone.
Mat project_psd(const Mat& s);

/// Lower-triangular L with L L^T ~= S. Negative eigenvalues are clipped to
/// zero first; if Cholesky still fails, a diagonal shift growing from machine
/// precision is added until it succeeds.
Mat psd_lower_factor(const Mat& s);

void require_dims(bool ok, const std::string& what);

bool all_finite(const Mat& m);

}  // namespace cirnn
