#include "cirnn/init.hpp"

#include "lmi_projection.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <stdexcept>

namespace cirnn {

void InitConfig::validate() const {
  dims.validate();
  if (!(alpha >= 0.0)) throw std::invalid_argument("InitConfig: alpha must be nonnegative");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("InitConfig: epsilon must be nonnegative");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("InitConfig: lambda must lie in (0, 1]");
}

namespace {

Mat gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double variance) {
  Mat m(rows, cols);
  if (variance == 0.0) return Mat::Zero(rows, cols);
  std::normal_distribution<double> dist(0.0, std::sqrt(variance));
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

void sample_io(std::mt19937_64& rng, const LayerDims& d, std::vector<Mat>& B, std::vector<Vec>& b,
               Mat& C, Mat& D) {
  B.clear();
  b.clear();
  for (int l = 0; l < d.layers(); ++l) {
    B.push_back(d.n_u > 0 ? gaussian(rng, d.widths[l + 1], d.n_u, 1.0 / d.n_u)
                          : Mat(d.widths[l + 1], 0));
    b.push_back(Vec::Zero(d.widths[l + 1]));
  }
  C = gaussian(rng, d.n_y, d.n_x, 1.0 / d.n_x);
  D = Mat::Zero(d.n_y, d.n_u);
}

}  // namespace

ExplicitParams sample_explicit(const InitConfig& cfg) {
  cfg.validate();
  const LayerDims& d = cfg.dims;
  std::mt19937_64 rng(cfg.seed);
  ExplicitParams p;
  for (int l = 0; l < d.layers(); ++l) {
    const double n = d.widths[l];
    p.A.push_back(gaussian(rng, d.widths[l + 1], d.widths[l], cfg.alpha * cfg.alpha / n));
  }
  sample_io(rng, d, p.B, p.b, p.C, p.D);
  return p;
}

ImplicitParams sample_uniform_implicit(const InitConfig& cfg) {
  cfg.validate();
  const LayerDims& d = cfg.dims;
  std::mt19937_64 rng(cfg.seed);
  ImplicitParams p = ImplicitParams::identity(d);
  for (int l = 0; l < d.layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat& W = p.W[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = dist(rng);
  }
  sample_io(rng, d, p.B, p.b, p.C, p.D);
  return p;
}

Mat clip_spectral(const Mat& A) {
  if (A.size() == 0) return A;
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(0) <= 1.0) return A;
  const Vec s = svd.singularValues().cwiseMin(1.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

double projection_objective(const ExplicitParams& e, const ImplicitParams& p) {
  double total = 0.0;
  for (std::size_t l = 0; l < e.A.size(); ++l) total += (e.A[l] * p.E[l] - p.W[l]).squaredNorm();
  return total;
}

namespace {

// Variable layout per layer l < L: E_l (column-major), W_l (column-major), p_l.
struct Layout {
  std::vector<Eigen::Index> e_off, w_off, p_off;
  Eigen::Index size = 0;

  explicit Layout(const LayerDims& d) {
    for (int l = 0; l < d.layers(); ++l) {
      const Eigen::Index n0 = d.widths[l], n1 = d.widths[l + 1];
      e_off.push_back(size);
      size += n0 * n0;
      w_off.push_back(size);
      size += n1 * n0;
      p_off.push_back(size);
      size += n0;
    }
  }
};

detail::LmiLeastSquares build_problem(const ExplicitParams& e, const LayerDims& d, const Layout& lay,
                                      double lambda, double margin) {
  using Trip = Eigen::Triplet<double>;
  const int L = d.layers();
  const double root2 = std::sqrt(2.0);

  std::vector<Trip> r_trips;
  Eigen::Index row = 0;
  for (int l = 0; l < L; ++l) {
    const Mat& A = e.A[static_cast<std::size_t>(l)];
    const Eigen::Index n0 = d.widths[l], n1 = d.widths[l + 1];
    for (Eigen::Index j = 0; j < n0; ++j)
      for (Eigen::Index i = 0; i < n1; ++i) {
        for (Eigen::Index k = 0; k < n0; ++k)
          if (A(i, k) != 0.0) r_trips.emplace_back(row, lay.e_off[l] + j * n0 + k, A(i, k));
        r_trips.emplace_back(row, lay.w_off[l] + j * n1 + i, -1.0);
        ++row;
      }
  }

  detail::LmiLeastSquares prob;
  prob.R.resize(row, lay.size);
  prob.R.setFromTriplets(r_trips.begin(), r_trips.end());
  prob.r = Vec::Zero(row);

  std::vector<Trip> f_trips;
  std::vector<double> f_const;
  Eigen::Index base = 0;
  for (int l = 0; l < L; ++l) {
    const int n0 = d.widths[l], n1 = d.widths[l + 1];
    const int m = n0 + n1;
    prob.block_sizes.push_back(m);
    const Eigen::Index next_p = (l + 1 == L) ? lay.p_off[0] : lay.p_off[l + 1];
    const double next_scale = (l + 1 == L) ? lambda : 1.0;
    for (int j = 0; j < m; ++j)
      for (int i = j; i < m; ++i) {
        const Eigen::Index r = base + detail::svec_index(m, i, j);
        if (i < n0) {
          // top-left: E(i, j) + E(j, i) - delta_ij p_l(i)
          if (i == j) {
            f_trips.emplace_back(r, lay.e_off[l] + j * n0 + i, 2.0);
            f_trips.emplace_back(r, lay.p_off[l] + i, -1.0);
          } else {
            f_trips.emplace_back(r, lay.e_off[l] + j * n0 + i, root2);
            f_trips.emplace_back(r, lay.e_off[l] + i * n0 + j, root2);
          }
        } else if (j < n0) {
          // bottom-left: W(i - n0, j)
          f_trips.emplace_back(r, lay.w_off[l] + j * n1 + (i - n0), root2);
        } else if (i == j) {
          f_trips.emplace_back(r, next_p + (i - n0), next_scale);
        }
      }
    const int len = detail::svec_size(m);
    f_const.resize(static_cast<std::size_t>(base + len), 0.0);
    for (int i = 0; i < m; ++i) f_const[static_cast<std::size_t>(base + detail::svec_index(m, i, i))] = -margin;
    base += len;
  }
  prob.F.resize(base, lay.size);
  prob.F.setFromTriplets(f_trips.begin(), f_trips.end());
  prob.f = Eigen::Map<const Vec>(f_const.data(), static_cast<Eigen::Index>(f_const.size()));
  return prob;
}

Vec start_point(const ExplicitParams& e, const LayerDims& d, const Layout& lay, std::uint64_t restart_seed) {
  Vec x = Vec::Zero(lay.size);
  for (int l = 0; l < d.layers(); ++l) {
    const Mat& A = e.A[static_cast<std::size_t>(l)];
    const Eigen::Index n0 = d.widths[l], n1 = d.widths[l + 1];
    const double a2 = std::pow(spectral_norm(A), 2.0);
    Eigen::Map<Mat>(x.data() + lay.e_off[l], n0, n0).setIdentity();
    Eigen::Map<Mat>(x.data() + lay.w_off[l], n1, n0) = A;
    x.segment(lay.p_off[l], n0).setConstant(1.0 / std::max(1.0, a2));
  }
  if (restart_seed != 0) {
    std::mt19937_64 rng(restart_seed);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += dist(rng);
  }
  return x;
}

}  // namespace

ProjectionResult project_ci(const ExplicitParams& e, const InitConfig& cfg, ProjectionOptions opts) {
  cfg.validate();
  e.validate();
  const LayerDims d = e.dims();
  require_dims(d == cfg.dims || (d.widths == cfg.dims.widths),
               "project_ci: weight dims do not match the configuration");
  const Layout lay(d);
  const double scale = std::max(1.0, cfg.epsilon);
  const auto prob = build_problem(e, d, lay, cfg.lambda, scale);

  detail::AdmmOptions admm;
  admm.max_iter = opts.max_iter;
  const auto sol = detail::solve_lmi_least_squares(prob, start_point(e, d, lay, opts.restart_seed), admm);

  ProjectionResult res;
  res.iterations = sol.iterations;
  res.converged = sol.converged;
  res.params = ImplicitParams::identity(d);
  std::vector<Vec> free_p;
  for (int l = 0; l < d.layers(); ++l) {
    const Eigen::Index n0 = d.widths[l], n1 = d.widths[l + 1];
    res.params.E[static_cast<std::size_t>(l)] = Eigen::Map<const Mat>(sol.x.data() + lay.e_off[l], n0, n0);
    res.params.W[static_cast<std::size_t>(l)] = Eigen::Map<const Mat>(sol.x.data() + lay.w_off[l], n1, n0);
    free_p.push_back(sol.x.segment(lay.p_off[l], n0));
  }
  res.params.B = e.B;
  res.params.b = e.b;
  res.params.C = e.C;
  res.params.D = e.D;
  res.certificate = Certificate::linked(std::move(free_p), cfg.lambda, cfg.epsilon);
  res.objective = projection_objective(e, res.params);

  for (const auto& p : res.certificate.P) {
    if (!(p.array() > 0.0).all())
      throw SolverError("project_ci: solver returned a non-positive metric");
  }
  res.report = verify_certificate(res.params, res.certificate, opts.tol);
  if (!res.report.meets_margin) {
    throw SolverError("project_ci: no iterate verifies at margin " + std::to_string(cfg.epsilon) +
                      " after " + std::to_string(sol.iterations) + " iterations");
  }
  return res;
}

}  // namespace cirnn
