#include "lmi_projection.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace cirnn::detail {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

Vec project_blocks(const Vec& v, const std::vector<int>& sizes) {
  Vec out(v.size());
  Eigen::Index off = 0;
  for (int m : sizes) {
    const int len = svec_size(m);
    out.segment(off, len) = svec(project_psd(smat(v.segment(off, len), m)));
    off += len;
  }
  return out;
}

}  // namespace

int svec_size(int m) { return m * (m + 1) / 2; }

int svec_index(int m, int i, int j) {
  // column j starts after sum_{c<j} (m - c) entries
  return j * m - j * (j - 1) / 2 + (i - j);
}

Vec svec(const Mat& s) {
  const int m = static_cast<int>(s.rows());
  Vec v(svec_size(m));
  int k = 0;
  for (int j = 0; j < m; ++j)
    for (int i = j; i < m; ++i) v(k++) = i == j ? s(i, j) : kSqrt2 * s(i, j);
  return v;
}

Mat smat(const Eigen::Ref<const Vec>& v, int m) {
  Mat s(m, m);
  int k = 0;
  for (int j = 0; j < m; ++j)
    for (int i = j; i < m; ++i) {
      const double x = i == j ? v(k) : v(k) / kSqrt2;
      s(i, j) = s(j, i) = x;
      ++k;
    }
  return s;
}

AdmmResult solve_lmi_least_squares(const LmiLeastSquares& prob, const Vec& x0,
                                   const AdmmOptions& opts) {
  const Eigen::Index n = prob.F.cols();
  const Eigen::Index m = prob.F.rows();
  require_dims(prob.R.cols() == n && x0.size() == n && prob.f.size() == m,
               "solve_lmi_least_squares: inconsistent problem shapes");

  const SpMat RtR = 2.0 * SpMat(prob.R.transpose() * prob.R);
  const SpMat FtF = SpMat(prob.F.transpose() * prob.F);
  const Vec Rtr = 2.0 * (prob.R.transpose() * prob.r);
  SpMat eye(n, n);
  eye.setIdentity();

  double rho = opts.rho;
  Eigen::SimplicialLLT<SpMat> chol;
  auto factor = [&] {
    chol.compute(RtR + rho * FtF + opts.sigma * eye);
    if (chol.info() != Eigen::Success) throw SolverError("ADMM: KKT factorization failed");
  };
  factor();

  Vec x = x0;
  Vec z = project_blocks(prob.F * x + prob.f, prob.block_sizes);
  Vec u = Vec::Zero(m);

  AdmmResult res;
  for (int it = 1; it <= opts.max_iter; ++it) {
    x = chol.solve(Rtr + rho * (prob.F.transpose() * (z - u - prob.f)) + opts.sigma * x);
    const Vec Fx = prob.F * x + prob.f;
    const Vec v = opts.relaxation * Fx + (1.0 - opts.relaxation) * z;
    const Vec z_prev = z;
    z = project_blocks(v + u, prob.block_sizes);
    u += v - z;

    res.iterations = it;
    if (it % 10 != 0 && it != opts.max_iter) continue;

    res.primal_residual = (Fx - z).norm();
    res.dual_residual = rho * (prob.F.transpose() * (z - z_prev)).norm();
    const double eps_p = opts.eps_abs * std::sqrt(static_cast<double>(m)) +
                         opts.eps_rel * std::max({Fx.norm(), z.norm(), prob.f.norm()});
    const double eps_d = opts.eps_abs * std::sqrt(static_cast<double>(n)) +
                         opts.eps_rel * rho * (prob.F.transpose() * u).norm();
    if (res.primal_residual <= eps_p && res.dual_residual <= eps_d) {
      res.converged = true;
      break;
    }
    if (it % 50 == 0) {
      // Residual balancing on normalized residuals; u is the scaled dual y / rho.
      const double rp = res.primal_residual / std::max({Fx.norm(), z.norm(), 1e-12});
      const double rd = res.dual_residual / std::max(rho * (prob.F.transpose() * u).norm(), 1e-12);
      const double scale = std::clamp(std::sqrt(rp / std::max(rd, 1e-300)), 0.1, 10.0);
      if ((scale > 2.0 || scale < 0.5) && rho * scale > 1e-6 && rho * scale < 1e8) {
        rho *= scale;
        u /= scale;
        factor();
      }
    }
  }
  res.x = x;
  res.objective = (prob.R * x - prob.r).squaredNorm();
  return res;
}

}  // namespace cirnn::detail
