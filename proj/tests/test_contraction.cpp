#include "cirnn/contraction.hpp"
#include "cirnn/init.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace cirnn;
using testing::gaussian;

namespace {

// Oracle values computed with numpy.linalg.
constexpr double kExample1Sigma = 1.4433981132056606;
constexpr double kExample1DiagMaxEig = -0.10362795727317956;
constexpr double kExample1IdentityMaxEig = 1.0833981132056605;

Certificate unit_certificate(const LayerDims& d, double lambda = 1.0) {
  std::vector<Vec> p;
  for (int l = 0; l < d.layers(); ++l) p.push_back(Vec::Ones(d.widths[l]));
  return Certificate::linked(p, lambda);
}

ImplicitParams identity_E_with(const Mat& W) {
  auto p = ImplicitParams::identity(LayerDims::uniform(static_cast<int>(W.rows()), 1, 1, 1,
                                                       static_cast<int>(W.rows())));
  p.W[0] = W;
  return p;
}

}  // namespace

TEST_CASE("example 1 oracle values") {
  const Mat A = testing::example1_matrix();
  CHECK(spectral_norm(A) == doctest::Approx(kExample1Sigma).epsilon(1e-12));
  Vec p(2);
  p << 1.0, 10.0;
  const auto r = verify_explicit_metric(A, p, 1.0);
  CHECK(r.feasible);
  CHECK(r.max_eig == doctest::Approx(kExample1DiagMaxEig).epsilon(1e-10));
  const auto ri = verify_explicit_metric(A, Vec::Ones(2), 1.0);
  CHECK_FALSE(ri.feasible);
  CHECK(ri.max_eig == doctest::Approx(kExample1IdentityMaxEig).epsilon(1e-10));
}

TEST_CASE("layered explicit check on example 1") {
  const auto m = testing::example1_model();
  CHECK(verify_model(m, testing::example1_certificate()).feasible);
  const auto bad = verify_model(m, testing::example1_certificate(1.0, 1.0));
  CHECK_FALSE(bad.feasible);
  CHECK(bad.max_eig == doctest::Approx(kExample1IdentityMaxEig).epsilon(1e-10));
  CHECK_THROWS_AS(verify_model(m, Certificate::linked({Vec::Ones(2)}, 1.0)), std::invalid_argument);
}

TEST_CASE("assemble_lmi examples") {
  const auto p = identity_E_with(1.5 * Mat::Identity(2, 2));
  const auto c = unit_certificate(p.dims());
  const auto blk = assemble_lmi(p, c, 0);
  CHECK(blk.M.rows() == 4);
  CHECK(blk.M.isApprox(blk.M.transpose()));
  CHECK(min_sym_eig(blk.M) == doctest::Approx(-0.5).epsilon(1e-12));

  Mat W(2, 2);
  W << 0.3, 0.4, 0.0, 0.2;
  const auto q = identity_E_with(W);
  CHECK(min_sym_eig(assemble_lmi(q, c, 0).M) == doctest::Approx(0.4736885068474743).epsilon(1e-12));
  CHECK(min_sym_eig(assemble_lmi(q, c, 0).M) == doctest::Approx(1.0 - spectral_norm(W)).epsilon(1e-12));
  CHECK(assemble_lmi(q, c, 0).M == assemble_spectral_lmi(W, 0).M);
}

TEST_CASE("rate linkage uses lambda P_0 in the last block") {
  const auto p = identity_E_with(Mat::Zero(3, 3));
  Vec p0(3);
  p0 << 1.0, 2.0, 3.0;
  const auto c = Certificate::linked({p0}, 0.5);
  REQUIRE(c.P.size() == 2);
  CHECK(c.P[1] == 0.5 * p0);
  const Mat M = assemble_lmi(p, c, 0).M;
  CHECK(Vec(M.bottomRightCorner(3, 3).diagonal()) == 0.5 * p0);
  CHECK(Vec(M.topLeftCorner(3, 3).diagonal()) == Vec::Constant(3, 2.0) - p0);
}

TEST_CASE("block PSD agrees with its Schur complement") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 100; ++t) {
    const int L = testing::uniform_int(rng, 1, 3);
    auto d = testing::random_dims(rng, L, 2, 8);
    auto p = testing::random_implicit(rng, d);
    for (auto& W : p.W) W *= 0.7;
    std::vector<Vec> ps;
    std::uniform_real_distribution<double> u(0.2, 1.5);
    for (int l = 0; l < L; ++l) ps.push_back(Vec::NullaryExpr(d.widths[l], [&] { return u(rng); }));
    const auto c = Certificate::linked(ps, 1.0);
    for (int l = 0; l < L; ++l) {
      const double blk = min_sym_eig(assemble_lmi(p, c, l).M);
      const double sch = schur_min_eig(p, c, l);
      if (std::abs(blk) > 1e-8 && std::abs(sch) > 1e-8) CHECK((blk >= 0) == (sch >= 0));
    }
  }
}

TEST_CASE("with E = I and P = I the constraint reduces to a spectral norm bound") {
  std::mt19937_64 rng(2);
  int disagreements = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = testing::uniform_int(rng, 2, 20);
    Mat W = gaussian(rng, n, n, 1.0 / std::sqrt(n));
    W /= spectral_norm(W);
    W *= std::uniform_real_distribution<double>(0.8, 1.2)(rng);
    const auto p = identity_E_with(W);
    const bool lmi = verify_certificate(p, unit_certificate(p.dims()), 1e-8).feasible;
    if (lmi != (spectral_norm(W) <= 1.0 + 1e-8)) ++disagreements;
  }
  CHECK(disagreements == 0);
}

TEST_CASE("feasible certificate implies invertible E and positive E + E^T") {
  std::mt19937_64 rng(17);
  InitConfig cfg;
  cfg.dims = LayerDims::uniform(6, 2, 2, 2, 5);
  for (int s = 0; s < 4; ++s) {
    cfg.seed = 100 + s;
    cfg.alpha = 1.2;
    const auto res = project_ci(sample_explicit(cfg), cfg);
    const auto rep = verify_certificate(res.params, res.certificate);
    REQUIRE(rep.feasible);
    for (std::size_t l = 0; l + 1 < res.params.E.size(); ++l) {
      const Mat& E = res.params.E[l];
      CHECK(min_sym_eig(E + E.transpose()) > 0.0);
      CHECK(std::abs(E.determinant()) > 0.0);
    }
  }
}

TEST_CASE("verify_certificate rejects bad P and lambda") {
  const auto p = identity_E_with(0.5 * Mat::Identity(2, 2));
  auto c = unit_certificate(p.dims());
  CHECK(verify_certificate(p, c).feasible);
  c.P[0](0) = -1.0;
  CHECK_FALSE(verify_certificate(p, c).feasible);
  const auto fast = Certificate::linked({Vec::Ones(2)}, 1.5);
  CHECK_FALSE(verify_certificate(p, fast).feasible);
  CHECK_THROWS(fast.validate());
  CHECK_THROWS(Certificate::linked({Vec::Zero(2)}, 1.0).validate());
}

TEST_CASE("verify_explicit_metric examples") {
  CHECK(verify_explicit_metric(Mat::Zero(3, 3), Vec::Ones(3), 1.0).feasible);
  CHECK(verify_explicit_metric(0.5 * Mat::Identity(2, 2), Vec::Ones(2), 0.25).feasible);
  CHECK_FALSE(verify_explicit_metric(0.5 * Mat::Identity(2, 2), Vec::Ones(2), 0.2).feasible);
  CHECK_THROWS_AS(verify_explicit_metric(Mat::Zero(2, 3), Vec::Ones(2), 1.0), DimensionError);
}

TEST_CASE("find_certificate_explicit examples") {
  const auto r1 = find_certificate_explicit(testing::example1_matrix(), 1.0);
  CHECK(r1.feasible);
  CHECK(r1.metric.sum() == doctest::Approx(2.0));
  CHECK(verify_explicit_metric(testing::example1_matrix(), r1.metric, 1.0).feasible);

  CHECK(find_certificate_explicit(Mat::Zero(3, 3), 1.0).feasible);

  const auto r3 = find_certificate_explicit(1.01 * Mat::Identity(3, 3), 1.0);
  CHECK_FALSE(r3.feasible);
  CHECK(r3.lower_bound > 0.0);
}

TEST_CASE("find_certificate_explicit result verifies on random certifiable matrices") {
  std::mt19937_64 rng(44);
  for (int t = 0; t < 20; ++t) {
    const int n = testing::uniform_int(rng, 2, 10);
    Mat A = gaussian(rng, n, n);
    A *= 0.9 / std::max(spectral_norm(A), 1e-12);
    const auto r = find_certificate_explicit(A, 1.0);
    REQUIRE(r.feasible);
    CHECK(verify_explicit_metric(A, r.metric, 1.0).feasible);
  }
}

TEST_CASE("bm_residual examples") {
  LmiBlock b{2.0 * Mat::Identity(2, 2), 0};
  CHECK(bm_residual(b, Mat::Zero(2, 2), 0.0) == Vec(Mat(2.0 * Mat::Identity(2, 2)).reshaped()));
  const Mat L = std::sqrt(2.0 - 0.1) * Mat::Identity(2, 2);
  CHECK(bm_residual(b, L, 0.1).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(bm_residual(b, Mat::Zero(3, 3), 0.0), DimensionError);
}

TEST_CASE("zero BM residual implies the margin") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const int n = testing::uniform_int(rng, 2, 12);
    const Mat L = gaussian(rng, n, n).triangularView<Eigen::Lower>();
    const double eps = 1e-3;
    Mat M = L * L.transpose();
    M.diagonal().array() += eps;
    CHECK(bm_residual(LmiBlock{M, 0}, L, eps).cwiseAbs().maxCoeff() <= 1e-10 * M.norm());
    CHECK(min_sym_eig(M) >= eps - 1e-10);
  }
}

TEST_CASE("empirical contraction test examples") {
  auto p = ExplicitParams::zeros(LayerDims::uniform(2, 1, 1, 1, 2));
  p.A[0] = 0.5 * Mat::Identity(2, 2);
  Model m;
  m.kind = ModelKind::rnn;
  m.activation = Activation::identity;
  m.params = p;
  const auto c = Certificate::linked({Vec::Ones(2)}, 0.25, 0.0, MetricForm::direct);
  const auto tr = empirical_contraction_test(m, c, Mat::Zero(1, 10), Vec::Ones(2), Vec::Zero(2));
  REQUIRE_FALSE(tr.ratios.empty());
  for (double r : tr.ratios) CHECK(r == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(tr.passes(0.25, 1e-9));

  const auto same = empirical_contraction_test(m, c, Mat::Zero(1, 10), Vec::Ones(2), Vec::Ones(2));
  CHECK(same.ratios.empty());
  CHECK(same.passes(0.25, 0.0));
}

TEST_CASE("projected models contract empirically") {
  InitConfig cfg;
  cfg.dims = LayerDims::uniform(10, 2, 2, 2, 10);
  cfg.alpha = 1.2;
  cfg.seed = 3;
  const auto res = project_ci(sample_explicit(cfg), cfg);
  std::mt19937_64 rng(8);
  for (int pair = 0; pair < 5; ++pair) {
    const Mat u = gaussian(rng, 2, 300);
    const auto tr = empirical_contraction_test(res.params, Activation::relu, res.certificate, u,
                                               gaussian(rng, 10, 1, 3.0), gaussian(rng, 10, 1, 3.0));
    CHECK(tr.passes(res.certificate.lambda, 1e-6));
  }
}

TEST_CASE("certificate json round-trip") {
  Vec a(3), b(2);
  a << 1.0, 0.1, 1.0 / 3.0;
  b << 7.0, 1e-9;
  const auto c = Certificate::linked({a, b}, 0.95, 1e-4);
  const auto r = certificate_from_json(certificate_to_json(c));
  REQUIRE(r.P.size() == c.P.size());
  for (std::size_t l = 0; l < c.P.size(); ++l) CHECK(r.P[l] == c.P[l]);
  CHECK(r.lambda == c.lambda);
  CHECK(r.margin == c.margin);
  CHECK(r.form == c.form);
  const auto d = testing::example1_certificate();
  CHECK(certificate_from_json(certificate_to_json(d)).form == MetricForm::direct);
  CHECK_THROWS(certificate_from_json("{\"format\": \"cirnn-model\"}"));
}
