#include "cirnn/contraction.hpp"

#include "cirnn/checkpoint.hpp"
#include "json_io.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cirnn {

Certificate Certificate::linked(std::vector<Vec> free_p, double lambda, double margin,
                                MetricForm form) {
  require_dims(!free_p.empty(), "Certificate: need at least P_0");
  Certificate c;
  c.lambda = lambda;
  c.margin = margin;
  c.form = form;
  c.P = std::move(free_p);
  if (form == MetricForm::inverse) {
    c.P.push_back(lambda * c.P.front());
  } else {
    c.P.push_back(c.P.front() / lambda);
  }
  return c;
}

void Certificate::validate() const {
  require_dims(P.size() >= 2, "Certificate: need P_0..P_L with L >= 1");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("Certificate: lambda must lie in (0, 1]");
  for (const auto& p : P) {
    if (!(p.size() > 0 && (p.array() > 0.0).all()))
      throw std::invalid_argument("Certificate: diagonal entries must be strictly positive");
  }
  require_dims(P.front().size() == P.back().size(), "Certificate: dim(P_0) must equal dim(P_L)");
}

namespace {

// P_{l+1} with the rate linkage substituted at the last layer.
Vec next_metric(const Certificate& c, int layer, int L) {
  if (layer + 1 == L) {
    return c.form == MetricForm::inverse ? Vec(c.lambda * c.P.front()) : Vec(c.P.front() / c.lambda);
  }
  return c.P[static_cast<std::size_t>(layer) + 1];
}

void check_cert_dims(const LayerDims& d, const Certificate& c) {
  require_dims(static_cast<int>(c.P.size()) == d.layers() + 1, "certificate layer count mismatch");
  for (int l = 0; l <= d.layers(); ++l) {
    require_dims(c.P[l].size() == d.widths[l], "certificate P_" + std::to_string(l) + " has wrong size");
  }
}

}  // namespace

LmiBlock assemble_lmi(const ImplicitParams& p, const Certificate& c, int layer) {
  const LayerDims d = p.dims();
  check_cert_dims(d, c);
  const int L = d.layers();
  require_dims(layer >= 0 && layer < L, "assemble_lmi: layer index out of range");
  const auto l = static_cast<std::size_t>(layer);
  const Eigen::Index n0 = d.widths[l];
  const Eigen::Index n1 = d.widths[l + 1];
  const Mat& E = p.E[l];
  const Mat& W = p.W[l];

  LmiBlock b;
  b.layer = layer;
  b.M.resize(n0 + n1, n0 + n1);
  b.M.topLeftCorner(n0, n0) = E + E.transpose();
  b.M.topLeftCorner(n0, n0).diagonal() -= c.P[l];
  b.M.topRightCorner(n0, n1) = W.transpose();
  b.M.bottomLeftCorner(n1, n0) = W;
  b.M.bottomRightCorner(n1, n1) = next_metric(c, layer, L).asDiagonal();
  b.M = symmetrize(b.M);
  return b;
}

LmiBlock assemble_spectral_lmi(const Mat& A, int layer) {
  const Eigen::Index n0 = A.cols();
  const Eigen::Index n1 = A.rows();
  LmiBlock b;
  b.layer = layer;
  b.M = Mat::Identity(n0 + n1, n0 + n1);
  b.M.topRightCorner(n0, n1) = A.transpose();
  b.M.bottomLeftCorner(n1, n0) = A;
  return b;
}

double schur_min_eig(const ImplicitParams& p, const Certificate& c, int layer) {
  const LayerDims d = p.dims();
  check_cert_dims(d, c);
  require_dims(layer >= 0 && layer < d.layers(), "schur_min_eig: layer index out of range");
  const auto l = static_cast<std::size_t>(layer);
  const Vec next = next_metric(c, layer, d.layers());
  Mat S = p.E[l] + p.E[l].transpose();
  S.diagonal() -= c.P[l];
  S -= p.W[l].transpose() * next.cwiseInverse().asDiagonal() * p.W[l];
  return min_sym_eig(S);
}

CertReport verify_certificate(const ImplicitParams& p, const Certificate& c, double tol) {
  const LayerDims d = p.dims();
  check_cert_dims(d, c);
  const int L = d.layers();
  CertReport r;
  r.tol = tol;
  r.margin = c.margin;
  r.lambda = c.lambda;
  for (int l = 0; l < L; ++l) {
    r.block_min_eig.push_back(min_sym_eig(assemble_lmi(p, c, l).M));
    Mat top = p.E[l] + p.E[l].transpose();
    top.diagonal() -= c.P[l];
    r.e_min_eig.push_back(min_sym_eig(top));
  }
  r.e_min_eig.push_back(min_sym_eig(p.E[L] + p.E[L].transpose()));

  const bool blocks_ok = std::all_of(r.block_min_eig.begin(), r.block_min_eig.end(),
                                     [&](double e) { return e >= -tol; });
  const bool tops_ok = std::all_of(r.e_min_eig.begin(), r.e_min_eig.end() - 1,
                                   [&](double e) { return e >= -tol; });
  const bool positive = (c.P.size() == static_cast<std::size_t>(L) + 1) &&
                        std::all_of(c.P.begin(), c.P.end(), [](const Vec& v) { return (v.array() > 0.0).all(); });
  r.feasible = blocks_ok && tops_ok && r.e_min_eig.back() > 0.0 && positive &&
               c.lambda > 0.0 && c.lambda <= 1.0;
  r.meets_margin = r.feasible && std::all_of(r.block_min_eig.begin(), r.block_min_eig.end(),
                                             [&](double e) { return e >= c.margin - tol; });
  return r;
}

CertReport verify_explicit_metric(const Mat& A, const Vec& metric, double lambda, double tol) {
  require_dims(A.rows() == A.cols(), "verify_explicit_metric: A must be square");
  require_dims(metric.size() == A.rows(), "verify_explicit_metric: metric size mismatch");
  CertReport r;
  r.tol = tol;
  r.lambda = lambda;
  Mat S = A.transpose() * metric.asDiagonal() * A;
  S.diagonal() -= lambda * metric;
  r.max_eig = max_sym_eig(S);
  r.block_min_eig.push_back(-r.max_eig);
  r.feasible = (metric.array() > 0.0).all() && r.max_eig <= tol;
  r.meets_margin = r.feasible;
  return r;
}

CertReport verify_explicit_layers(const ExplicitParams& p, const Certificate& c, double tol) {
  const LayerDims d = p.dims();
  check_cert_dims(d, c);
  CertReport r;
  r.tol = tol;
  r.margin = c.margin;
  r.lambda = c.lambda;
  const int L = d.layers();
  for (int l = 0; l < L; ++l) {
    const Vec next = next_metric(c, l, L);
    Mat S = -(p.A[l].transpose() * next.asDiagonal() * p.A[l]);
    S.diagonal() += c.P[l];
    r.block_min_eig.push_back(min_sym_eig(S));
  }
  r.max_eig = -*std::min_element(r.block_min_eig.begin(), r.block_min_eig.end());
  const bool positive =
      std::all_of(c.P.begin(), c.P.end(), [](const Vec& v) { return (v.array() > 0.0).all(); });
  r.feasible = positive && c.lambda > 0.0 && c.lambda <= 1.0 &&
               std::all_of(r.block_min_eig.begin(), r.block_min_eig.end(), [&](double e) { return e >= -tol; });
  r.meets_margin = r.feasible && std::all_of(r.block_min_eig.begin(), r.block_min_eig.end(),
                                             [&](double e) { return e >= c.margin - tol; });
  return r;
}

CertReport verify_model(const Model& m, const Certificate& c, double tol) {
  if (const auto* p = std::get_if<ImplicitParams>(&m.params)) {
    if (c.form != MetricForm::inverse)
      throw std::invalid_argument("implicit models need an inverse-form certificate");
    return verify_certificate(*p, c, tol);
  }
  if (c.form != MetricForm::direct)
    throw std::invalid_argument("explicit models need a direct-form certificate");
  return verify_explicit_layers(m.explicit_params(), c, tol);
}

namespace {

// Barrier state for min t s.t. t I - S(m) > 0, m > 0, sum(m) = n, where
// S(m) = A^T diag(m) A - lambda diag(m).
struct BarrierProblem {
  const Mat& A;
  double lambda;
  Eigen::Index n;

  Mat S(const Vec& m) const {
    Mat s = A.transpose() * m.asDiagonal() * A;
    s.diagonal() -= lambda * m;
    return s;
  }

  // tau * t - log det(t I - S(m)) - sum log m; +inf outside the domain.
  double value(const Vec& m, double t, double tau) const {
    if ((m.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
    Mat F = -S(m);
    F.diagonal().array() += t;
    Eigen::LLT<Mat> llt(F);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(logdet)) return std::numeric_limits<double>::infinity();
    return tau * t - logdet - m.array().log().sum();
  }
};

}  // namespace

MetricSearchResult find_certificate_explicit(const Mat& A, double lambda, MetricSearchOptions opts) {
  require_dims(A.rows() == A.cols() && A.rows() > 0, "find_certificate_explicit: A must be square");
  if (!(lambda > 0.0)) throw std::invalid_argument("find_certificate_explicit: lambda must be positive");
  const Eigen::Index n = A.rows();
  const BarrierProblem prob{A, lambda, n};

  MetricSearchResult res;
  Vec m = Vec::Ones(n);
  double t = max_sym_eig(prob.S(m)) + 1.0;
  // m inequality constraints plus an n x n LMI: barrier parameter 2n.
  const double barrier_degree = 2.0 * static_cast<double>(n);
  double tau = barrier_degree / std::max(1.0, std::abs(t));

  auto finish = [&](bool feasible) {
    res.feasible = feasible;
    res.metric = m * (static_cast<double>(n) / m.sum());
    res.max_eig = max_sym_eig(prob.S(res.metric));
    res.lower_bound = t - barrier_degree / tau;
    return res;
  };

  // Rank-two pieces of S: G_i = a_i a_i^T - lambda e_i e_i^T with a_i = A(i, :)^T.
  const Eigen::Index dim = n + 1;
  while (res.newton_steps < opts.max_newton_steps) {
    // Centering.
    for (;;) {
      if (++res.newton_steps > opts.max_newton_steps) break;
      Mat F = -prob.S(m);
      F.diagonal().array() += t;
      Eigen::LLT<Mat> llt(F);
      const Mat Y = llt.solve(Mat::Identity(n, n));
      std::vector<Mat> YG(static_cast<std::size_t>(n));
      Vec grad(dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vec a = A.row(i).transpose();
        Mat yg = (Y * a) * a.transpose();
        yg.col(i) -= lambda * Y.col(i);
        grad(i) = yg.trace() - 1.0 / m(i);
        YG[static_cast<std::size_t>(i)] = std::move(yg);
      }
      grad(n) = tau - Y.trace();

      Mat H(dim, dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Mat& gi = YG[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i; j < n; ++j) {
          const Mat& gj = YG[static_cast<std::size_t>(j)];
          H(i, j) = H(j, i) = gi.cwiseProduct(gj.transpose()).sum();
        }
        H(i, i) += 1.0 / (m(i) * m(i));
        // d/dt d/dm_i: tr(Y * I * Y * (-G_i)) = -tr(Y * YG_i)
        H(i, n) = H(n, i) = -(Y.cwiseProduct(gi.transpose())).sum();
      }
      H(n, n) = Y.squaredNorm();

      // Equality-constrained Newton step: sum of dm = 0.
      Mat K = Mat::Zero(dim + 1, dim + 1);
      K.topLeftCorner(dim, dim) = H;
      K.block(0, dim, n, 1).setOnes();
      K.block(dim, 0, 1, n).setOnes();
      Vec rhs = Vec::Zero(dim + 1);
      rhs.head(dim) = -grad;
      const Vec sol = K.fullPivLu().solve(rhs);
      const Vec step = sol.head(dim);
      const double decrement = -grad.dot(step);
      if (!(decrement > 1e-12) || !step.allFinite()) break;

      const double f0 = prob.value(m, t, tau);
      double s = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec m_new = m + s * step.head(n);
        const double t_new = t + s * step(n);
        if (prob.value(m_new, t_new, tau) <= f0 - 0.25 * s * decrement) {
          m = m_new;
          t = t_new;
          moved = true;
          break;
        }
        s *= 0.5;
      }
      if (!moved || decrement < 1e-10) break;
    }

    const double gap = barrier_degree / tau;
    const double worst = max_sym_eig(prob.S(m * (static_cast<double>(n) / m.sum())));
    if (t - gap > opts.tol) return finish(false);
    if (worst <= opts.tol && (worst < -opts.tol || gap < opts.tol)) return finish(true);
    if (gap < 1e-14 * std::max(1.0, std::abs(t))) break;
    tau *= 10.0;
  }
  const double worst = max_sym_eig(prob.S(m * (static_cast<double>(n) / m.sum())));
  if (worst <= opts.tol) return finish(true);
  throw SolverError("find_certificate_explicit: iteration budget exhausted after " +
                    std::to_string(res.newton_steps) + " Newton steps");
}

Vec bm_residual(const LmiBlock& block, const Mat& factor, double eps) {
  require_dims(factor.rows() == block.M.rows() && factor.cols() == block.M.cols(),
               "bm_residual: factor shape must match the block");
  Mat R = block.M - factor * factor.transpose();
  R.diagonal().array() -= eps;
  return Eigen::Map<const Vec>(R.data(), R.size());
}

ContractionTrace empirical_contraction_test(const Model& m, const Certificate& c, const Mat& inputs,
                                            const Vec& x0_a, const Vec& x0_b, double floor) {
  require_dims(!c.P.empty() && c.P.front().size() == x0_a.size() && x0_a.size() == x0_b.size(),
               "empirical_contraction_test: state size mismatch");
  const Vec weight = c.form == MetricForm::inverse ? Vec(c.P.front().cwiseInverse()) : c.P.front();
  const Trajectory ta = simulate(m, inputs, x0_a);
  const Trajectory tb = simulate(m, inputs, x0_b);

  ContractionTrace out;
  out.diverged = ta.diverged || tb.diverged;
  const Eigen::Index T = std::min(ta.states.cols(), tb.states.cols());
  auto state_at = [&](const Trajectory& tr, Eigen::Index k) -> Vec {
    return k < tr.states.cols() ? Vec(tr.states.col(k)) : tr.final_state;
  };
  for (Eigen::Index k = 0; k < T; ++k) {
    const Vec xa = state_at(ta, k);
    const Vec d = xa - state_at(tb, k);
    if (!(d.norm() > floor * std::max(1.0, xa.norm()))) continue;
    const Vec dn = state_at(ta, k + 1) - state_at(tb, k + 1);
    if (!dn.allFinite()) {
      out.diverged = true;
      break;
    }
    const double v = d.dot(weight.asDiagonal() * d);
    const double vn = dn.dot(weight.asDiagonal() * dn);
    const double ratio = vn / v;
    out.ratios.push_back(ratio);
    out.max_ratio = std::max(out.max_ratio, ratio);
  }
  return out;
}

ContractionTrace empirical_contraction_test(const ImplicitParams& p, Activation a,
                                            const Certificate& c, const Mat& inputs,
                                            const Vec& x0_a, const Vec& x0_b, double floor) {
  Model m;
  m.kind = ModelKind::cirnn;
  m.activation = a;
  m.params = p;
  return empirical_contraction_test(m, c, inputs, x0_a, x0_b, floor);
}

namespace {
using detail::json;
constexpr int kCertificateVersion = 1;
}  // namespace

std::string certificate_to_json(const Certificate& c) {
  json j;
  j["format"] = "cirnn-certificate";
  j["version"] = kCertificateVersion;
  j["lambda"] = c.lambda;
  j["margin"] = c.margin;
  j["metric_form"] = c.form == MetricForm::inverse ? "inverse" : "direct";
  j["P"] = detail::vectors_to_json(c.P);
  return detail::dump(j);
}

Certificate certificate_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "cirnn-certificate")
      throw FormatError("certificate: unexpected format tag");
    if (j.at("version").get<int>() != kCertificateVersion)
      throw FormatError("certificate: unsupported version");
    Certificate c;
    c.lambda = j.at("lambda").get<double>();
    c.margin = j.value("margin", 0.0);
    const auto form = j.value("metric_form", std::string("inverse"));
    if (form == "inverse") {
      c.form = MetricForm::inverse;
    } else if (form == "direct") {
      c.form = MetricForm::direct;
    } else {
      throw FormatError("certificate: unknown metric_form '" + form + "'");
    }
    c.P = detail::vectors_from_json(j.at("P"));
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  }
}

void save_certificate(const Certificate& c, const std::filesystem::path& path) {
  write_text_file(path, certificate_to_json(c));
}

Certificate load_certificate(const std::filesystem::path& path) {
  return certificate_from_json(read_text_file(path));
}

std::string report_to_json(const CertReport& r) {
  json j;
  j["feasible"] = r.feasible;
  j["meets_margin"] = r.meets_margin;
  j["tolerance"] = r.tol;
  j["margin"] = r.margin;
  j["lambda"] = r.lambda;
  j["block_min_eig"] = r.block_min_eig;
  j["e_min_eig"] = r.e_min_eig;
  j["max_eig"] = r.max_eig;
  return detail::dump(j);
}

}  // namespace cirnn
