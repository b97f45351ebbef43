#pragma once

#include "cirnn/models.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cirnn {

/// How the diagonal vectors of a Certificate are read.
///  - inverse: P_l of the implicit LMIs; the state metric is P_0^{-1}.
///  - direct:  M_l of an explicit model; the state metric is M_0 and the
///             layer conditions are A_l^T M_{l+1} A_l <= M_l.
enum class MetricForm { inverse, direct };

/// Diagonal metrics P_0..P_L and contraction rate lambda, linked by
/// P_L = lambda * P_0 (inverse form). For the direct form the link reads
/// M_L = M_0 / lambda, which is the same condition on P = M^{-1}.
struct Certificate {
  std::vector<Vec> P;
  double lambda = 1.0;
  double margin = 0.0;
  MetricForm form = MetricForm::inverse;

  int layers() const { return static_cast<int>(P.size()) - 1; }

  /// Builds P_0..P_L from the free P_0..P_{L-1}, appending the linked last entry.
  static Certificate linked(std::vector<Vec> free_p, double lambda, double margin = 0.0,
                            MetricForm form = MetricForm::inverse);
  void validate() const;
};

struct LmiBlock {
  Mat M;
  int layer = 0;
};

struct CertReport {
  std::vector<double> block_min_eig;
  /// Inverse form: min eig of E_l + E_l^T - P_l for l < L and of E_L + E_L^T.
  std::vector<double> e_min_eig;
  /// Explicit-metric check only: max eig of A^T M A - lambda M.
  double max_eig = 0.0;
  bool feasible = false;
  bool meets_margin = false;
  double tol = 1e-9;
  double margin = 0.0;
  double lambda = 1.0;
};

inline constexpr double kDefaultEigTol = 1e-9;

/// [[E_l + E_l^T - P_l, W_l^T], [W_l, P_{l+1}]] with P_L replaced by lambda * P_0.
LmiBlock assemble_lmi(const ImplicitParams& p, const Certificate& c, int layer);

/// [[I, A^T], [A, I]]: PSD iff ||A||_2 <= 1.
LmiBlock assemble_spectral_lmi(const Mat& A, int layer);

/// Min eig of E_l + E_l^T - P_l - W_l^T P_{l+1}^{-1} W_l.
double schur_min_eig(const ImplicitParams& p, const Certificate& c, int layer);

CertReport verify_certificate(const ImplicitParams& p, const Certificate& c,
                              double tol = kDefaultEigTol);

/// Checks A^T M A - lambda M <= 0 for a diagonal metric given by its entries.
CertReport verify_explicit_metric(const Mat& A, const Vec& metric, double lambda,
                                  double tol = kDefaultEigTol);

/// Layered check for explicit models with a direct-form certificate:
/// M_l - A_l^T M_{l+1} A_l >= 0 for every layer, M_L = M_0 / lambda.
CertReport verify_explicit_layers(const ExplicitParams& p, const Certificate& c,
                                  double tol = kDefaultEigTol);

/// Dispatches on the model form: inverse-form LMIs for implicit models,
/// direct-form layer checks for explicit models.
CertReport verify_model(const Model& m, const Certificate& c, double tol = kDefaultEigTol);

struct MetricSearchOptions {
  double tol = kDefaultEigTol;
  int max_newton_steps = 2000;
};

struct MetricSearchResult {
  bool feasible = false;
  Vec metric;            // diagonal entries, trace normalized to n
  double max_eig = 0.0;  // of A^T M A - lambda M at the returned metric
  double lower_bound = 0.0;
  int newton_steps = 0;
};

/// Log-barrier Newton method for min_{M diagonal, tr M = n} lambda_max(A^T M A - lambda M).
/// Returns a verified metric, or `feasible = false` once the duality bound
/// proves the optimum exceeds `tol`. Throws SolverError if neither happens
/// within the Newton step budget.
MetricSearchResult find_certificate_explicit(const Mat& A, double lambda,
                                             MetricSearchOptions opts = {});

/// vec(M - eps I - L L^T), column-major.
Vec bm_residual(const LmiBlock& block, const Mat& factor, double eps);

struct ContractionTrace {
  std::vector<double> ratios;  // V_{k+1} / V_k while the difference is resolvable
  double max_ratio = 0.0;
  bool diverged = false;
  bool passes(double lambda, double rel_tol) const {
    return !diverged && max_ratio <= lambda * (1.0 + rel_tol);
  }
};

/// Relative size below which a state difference is treated as round-off.
inline constexpr double kContractionFloor = 1e-6;

/// Simulates two initial states under the same inputs and reports the ratios
/// of V_k = d_k^T Q d_k, with Q = P_0^{-1} (inverse form) or M_0 (direct form).
/// A ratio is recorded while ||d_k|| > floor * max(1, ||x_k||).
ContractionTrace empirical_contraction_test(const Model& m, const Certificate& c,
                                            const Mat& inputs, const Vec& x0_a, const Vec& x0_b,
                                            double floor = kContractionFloor);
ContractionTrace empirical_contraction_test(const ImplicitParams& p, Activation a,
                                            const Certificate& c, const Mat& inputs,
                                            const Vec& x0_a, const Vec& x0_b,
                                            double floor = kContractionFloor);

std::string certificate_to_json(const Certificate& c);
Certificate certificate_from_json(const std::string& text);
void save_certificate(const Certificate& c, const std::filesystem::path& path);
Certificate load_certificate(const std::filesystem::path& path);

std::string report_to_json(const CertReport& r);

}  // namespace cirnn
