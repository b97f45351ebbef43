#pragma once

#include "cirnn/contraction.hpp"
#include "cirnn/models.hpp"

#include <cstdint>

namespace cirnn {

struct InitConfig {
  double alpha = 1.2;  // target spectral radius of the sampled A_l
  std::uint64_t seed = 0;
  LayerDims dims;
  double epsilon = 1e-4;  // LMI margin
  double lambda = 1.0;    // contraction rate

  void validate() const;
};

/// A_l entries ~ N(0, alpha^2 / n) with n the column count of A_l.
/// B_l ~ N(0, 1 / n_u), C ~ N(0, 1 / n_x), b = 0, D = 0.
ExplicitParams sample_explicit(const InitConfig& cfg);

/// E_l = I and W_l ~ U[-1/sqrt(n), 1/sqrt(n)] with n the column count of W_l.
/// B, b, C, D follow sample_explicit.
ImplicitParams sample_uniform_implicit(const InitConfig& cfg);

struct ProjectionOptions {
  int max_iter = 20000;
  /// When nonzero, the solver start point is randomly perturbed with this seed.
  std::uint64_t restart_seed = 0;
  double tol = 1e-6;
};

struct ProjectionResult {
  ImplicitParams params;
  Certificate certificate;
  double objective = 0.0;  // sum_l ||A_l E_l - W_l||_F^2 at the returned point
  int iterations = 0;
  bool converged = false;
  CertReport report;
};

/// Projects explicit weights onto the contracting implicit set:
///   min sum_l ||A_l E_l - W_l||_F^2  s.t. every LMI block >= s I,
/// with s = max(1, epsilon). The objective is homogeneous of degree two and
/// the blocks of degree one, so the problem at margin epsilon is the same
/// problem scaled by epsilon / s; solving at unit scale keeps E, W, P of
/// order one. B, b, C, D are carried over and E_L = I.
///
/// Throws SolverError if no iterate verifies at margin epsilon.
ProjectionResult project_ci(const ExplicitParams& explicit_params, const InitConfig& cfg,
                            ProjectionOptions opts = {});

double projection_objective(const ExplicitParams& explicit_params, const ImplicitParams& p);

/// Clamps every singular value of A to at most one.
Mat clip_spectral(const Mat& A);

}  // namespace cirnn
