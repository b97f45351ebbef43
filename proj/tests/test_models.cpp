#include "cirnn/checkpoint.hpp"
#include "cirnn/models.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace cirnn;
using testing::gaussian;

TEST_CASE("activation values") {
  Vec z(3);
  z << -1.0, 0.0, 2.0;
  Vec expect(3);
  expect << 0.0, 0.0, 2.0;
  CHECK(activation_apply(Activation::relu, z) == expect);
  CHECK(activation_apply(Activation::identity, z) == z);
  CHECK(activation_apply(Activation::tanh, Vec::Zero(1))(0) == 0.0);
}

TEST_CASE("activation slopes") {
  Vec z(2);
  z << -1.0, 2.0;
  const Vec relu = activation_slope(Activation::relu, z).diagonal();
  CHECK(relu(0) == 0.0);
  CHECK(relu(1) == 1.0);
  CHECK(activation_slope_vector(Activation::relu, Vec::Zero(1))(0) == 0.0);
  CHECK(activation_slope_vector(Activation::tanh, Vec::Zero(1))(0) == 1.0);
  CHECK(activation_slope_vector(Activation::identity, z) == Vec::Ones(2));
}

TEST_CASE("slope bound and Lipschitz property over random points") {
  std::mt19937_64 rng(11);
  for (auto a : {Activation::relu, Activation::tanh, Activation::identity}) {
    for (int t = 0; t < 50; ++t) {
      const Vec z1 = gaussian(rng, 20, 1, 3.0);
      const Vec z2 = gaussian(rng, 20, 1, 3.0);
      const Vec s = activation_slope_vector(a, z1);
      CHECK(s.minCoeff() >= 0.0);
      CHECK(s.maxCoeff() <= 1.0);
      const Vec d = activation_apply(a, z1) - activation_apply(a, z2);
      CHECK((d.cwiseAbs().array() <= (z1 - z2).cwiseAbs().array() + 1e-15).all());
    }
  }
}

TEST_CASE("activation names round-trip") {
  for (auto a : {Activation::relu, Activation::tanh, Activation::identity})
    CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS(parse_activation("sigmoid"));
  for (auto k : {ModelKind::rnn, ModelKind::srnn, ModelKind::implicit, ModelKind::cirnn})
    CHECK(parse_model_kind(to_string(k)) == k);
}

TEST_CASE("layer dims validation") {
  CHECK_NOTHROW(LayerDims::uniform(3, 1, 1, 2, 5));
  LayerDims bad{3, 1, 1, {3, 4, 2}};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  LayerDims none{3, 1, 1, {3}};
  CHECK_THROWS_AS(none.validate(), DimensionError);
}

TEST_CASE("explicit step examples") {
  auto p = ExplicitParams::zeros(LayerDims::uniform(2, 1, 1, 1, 2));
  p.A[0] = 0.5 * Mat::Identity(2, 2);
  Vec x(2), u = Vec::Zero(1);
  x << 2.0, 4.0;
  const Vec next = step_explicit(p, Activation::identity, x, u).next_state;
  CHECK(next(0) == 1.0);
  CHECK(next(1) == 2.0);

  // Example 1 matrix under relu from (1, 1).
  auto e1 = ExplicitParams::zeros(LayerDims::uniform(2, 0, 2, 1, 2));
  e1.A[0] = testing::example1_matrix();
  const Vec r = step_explicit(e1, Activation::relu, Vec::Ones(2), Vec::Zero(0)).next_state;
  CHECK(r(0) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(r(1) == doctest::Approx(0.8).epsilon(1e-15));

  std::mt19937_64 rng(3);
  auto q = ExplicitParams::zeros(LayerDims::uniform(4, 2, 1, 2, 6));
  for (auto& A : q.A) A = gaussian(rng, A.rows(), A.cols());
  CHECK(step_explicit(q, Activation::relu, Vec::Zero(4), Vec::Zero(2)).next_state == Vec::Zero(4));
}

TEST_CASE("dimension mismatch is reported") {
  auto p = ExplicitParams::zeros(LayerDims::uniform(2, 1, 1, 1, 2));
  CHECK_THROWS_AS(step_explicit(p, Activation::relu, Vec::Zero(3), Vec::Zero(1)), DimensionError);
}

TEST_CASE("implicit step with identity E matches explicit step exactly") {
  std::mt19937_64 rng(5);
  const auto d = testing::random_dims(rng, 2, 2, 6);
  auto p = testing::random_implicit(rng, d);
  for (auto& E : p.E) E = Mat::Identity(E.rows(), E.cols());
  ExplicitParams e;
  e.A = p.W;
  e.B = p.B;
  e.b = p.b;
  e.C = p.C;
  e.D = p.D;
  const Vec x = gaussian(rng, d.n_x, 1), u = gaussian(rng, d.n_u, 1);
  CHECK(step_implicit(p, Activation::relu, x, u).next_state ==
        step_explicit(e, Activation::relu, x, u).next_state);
}

TEST_CASE("implicit constant layer") {
  auto p = ImplicitParams::identity(LayerDims::uniform(2, 1, 1, 1, 2));
  p.E[0] = 2.0 * Mat::Identity(2, 2);
  p.E[1] << 3.0, 1.0, 0.0, 2.0;
  p.b[0] << 0.7, -0.4;
  const Vec next = step_implicit(p, Activation::tanh, Vec::Ones(2), Vec::Zero(1)).next_state;
  CHECK(next(0) == doctest::Approx(std::tanh(0.7)));
  CHECK(next(1) == doctest::Approx(std::tanh(-0.4)));
}

TEST_CASE("singular E reports its layer") {
  auto p = ImplicitParams::identity(LayerDims::uniform(2, 1, 1, 2, 3));
  p.E[1].setZero();
  try {
    step_implicit(p, Activation::relu, Vec::Ones(2), Vec::Zero(1));
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& e) {
    CHECK(e.layer() == 1);
  }
  CHECK_THROWS_AS(to_explicit(p), SingularMatrixError);
}

TEST_CASE("to_explicit examples") {
  std::mt19937_64 rng(8);
  auto p = testing::random_implicit(rng, LayerDims::uniform(3, 1, 1, 2, 4));
  for (auto& E : p.E) E = Mat::Identity(E.rows(), E.cols());
  auto e = to_explicit(p);
  for (std::size_t l = 0; l < p.W.size(); ++l) CHECK(e.A[l].isApprox(p.W[l], 1e-15));
  for (auto& E : p.E) E = 2.0 * Mat::Identity(E.rows(), E.cols());
  e = to_explicit(p);
  for (std::size_t l = 0; l < p.W.size(); ++l) CHECK(e.A[l].isApprox(p.W[l] / 2.0, 1e-15));
}

TEST_CASE("implicit and explicit forms simulate identically") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int L = testing::uniform_int(rng, 1, 3);
    const auto d = testing::random_dims(rng, L, 2, 12);
    const auto p = testing::random_implicit(rng, d);
    const auto e = to_explicit(p);
    const Mat u = gaussian(rng, d.n_u, 100);
    const Vec x0 = gaussian(rng, d.n_x, 1);
    const auto ti = simulate(p, Activation::tanh, u, x0);
    const auto te = simulate(e, Activation::tanh, u, x0);
    REQUIRE_FALSE(ti.diverged);
    const double scale = std::max(1.0, ti.outputs.cwiseAbs().maxCoeff());
    CHECK((ti.outputs - te.outputs).cwiseAbs().maxCoeff() / scale <= 1e-8);
    CHECK((ti.states - te.states).cwiseAbs().maxCoeff() / std::max(1.0, ti.states.cwiseAbs().maxCoeff()) <=
          1e-8);
  }
}

TEST_CASE("simulate examples") {
  auto z = ExplicitParams::zeros(LayerDims::uniform(3, 2, 2, 2, 4));
  const auto t0 = simulate(z, Activation::relu, Mat::Ones(2, 10), Vec::Zero(3));
  CHECK(t0.outputs.isZero(0.0));
  CHECK(t0.steps() == 10);

  auto s = ExplicitParams::zeros(LayerDims::uniform(1, 1, 1, 1, 1));
  s.A[0](0, 0) = 0.5;
  s.C(0, 0) = 1.0;
  const auto t = simulate(s, Activation::identity, Mat::Zero(1, 12), Vec::Ones(1));
  for (int k = 0; k < 12; ++k) CHECK(t.outputs(0, k) == std::pow(0.5, k));
  CHECK(t.final_state(0) == std::pow(0.5, 12));

  const auto m = testing::example1_model();
  const auto te = simulate(m, Mat::Zero(1, 500), Vec::Ones(2));
  CHECK_FALSE(te.diverged);
  CHECK(te.states.cwiseAbs().maxCoeff() < 10.0);
}

TEST_CASE("simulate flags divergence and keeps the finite prefix") {
  auto s = ExplicitParams::zeros(LayerDims::uniform(1, 1, 1, 1, 1));
  s.A[0](0, 0) = 1e100;
  s.C(0, 0) = 1.0;
  const auto t = simulate(s, Activation::identity, Mat::Zero(1, 20), Vec::Ones(1));
  CHECK(t.diverged);
  CHECK(t.steps() < 20);
  CHECK(t.outputs.allFinite());
}

TEST_CASE("simulate is deterministic") {
  std::mt19937_64 rng(4);
  const auto d = testing::random_dims(rng, 2, 3, 8);
  const auto p = testing::random_implicit(rng, d);
  const Mat u = gaussian(rng, d.n_u, 50);
  const Vec x0 = gaussian(rng, d.n_x, 1);
  const auto a = simulate(p, Activation::relu, u, x0);
  const auto b = simulate(p, Activation::relu, u, x0);
  CHECK(a.outputs == b.outputs);
  CHECK(a.states == b.states);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  std::mt19937_64 rng(9);
  const auto d = testing::random_dims(rng, 2, 2, 5);
  Model m;
  m.kind = ModelKind::cirnn;
  m.activation = Activation::tanh;
  m.params = testing::random_implicit(rng, d);
  const Model r = model_from_json(model_to_json(m));
  CHECK(r.kind == m.kind);
  CHECK(r.activation == m.activation);
  const auto& a = m.implicit_params();
  const auto& b = r.implicit_params();
  for (std::size_t l = 0; l < a.E.size(); ++l) CHECK(a.E[l] == b.E[l]);
  for (std::size_t l = 0; l < a.W.size(); ++l) {
    CHECK(a.W[l] == b.W[l]);
    CHECK(a.B[l] == b.B[l]);
    CHECK(a.b[l] == b.b[l]);
  }
  CHECK(a.C == b.C);
  CHECK(a.D == b.D);

  const auto dir = testing::scratch_dir("checkpoint");
  Model e = testing::example1_model();
  save_model(e, dir / "m.json");
  CHECK(load_model(dir / "m.json").explicit_params().A[0] == e.explicit_params().A[0]);
}

TEST_CASE("checkpoint rejects malformed input") {
  CHECK_THROWS_AS(model_from_json("{\"format\": \"other\"}"), FormatError);
  CHECK_THROWS(model_from_json("not json"));
  std::string text = model_to_json(testing::example1_model());
  const auto pos = text.find("\"shape\"");
  text.replace(pos, 7, "\"shapeX\"");
  CHECK_THROWS(model_from_json(text));
}
