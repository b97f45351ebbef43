#include "cirnn/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace cirnn {

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

double min_sym_eig(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_sym_eig(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double spectral_radius(const Mat& m) {
  require_dims(m.rows() == m.cols(), "spectral_radius: matrix must be square");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat project_psd(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s));
  const Vec clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

Mat psd_lower_factor(const Mat& s) {
  Eigen::LLT<Mat> llt(symmetrize(s));
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const Mat clipped = project_psd(s);
  const double scale = std::max(1.0, clipped.diagonal().cwiseAbs().maxCoeff());
  double shift = 0.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Mat shifted = clipped;
    shifted.diagonal().array() += shift;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    shift = shift == 0.0 ? std::numeric_limits<double>::epsilon() * scale : 2.0 * shift;
  }
  throw SolverError("psd_lower_factor: Cholesky failed after diagonal shifts");
}

void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace cirnn
