#include "cirnn/models.hpp"

#include <cmath>
#include <stdexcept>

namespace cirnn {

namespace {

constexpr double kSingularRcond = 1e-13;

Eigen::PartialPivLU<Mat> factorize(const Mat& e, int layer) {
  Eigen::PartialPivLU<Mat> lu(e);
  if (!(lu.rcond() > kSingularRcond)) {
    throw SingularMatrixError("E_" + std::to_string(layer) + " is singular (rcond " +
                                  std::to_string(lu.rcond()) + ")",
                              layer);
  }
  return lu;
}

void check_layer_shapes(const std::vector<Mat>& mats, const std::vector<int>& widths,
                        const char* name) {
  const auto layers = widths.size() - 1;
  require_dims(mats.size() == layers, std::string(name) + ": expected one matrix per layer");
  for (std::size_t l = 0; l < layers; ++l) {
    require_dims(mats[l].rows() == widths[l + 1] && mats[l].cols() == widths[l],
                 std::string(name) + "_" + std::to_string(l) + " has wrong shape");
  }
}

void check_io_shapes(const std::vector<Mat>& B, const std::vector<Vec>& b, const Mat& C,
                     const Mat& D, const LayerDims& d) {
  const auto layers = static_cast<std::size_t>(d.layers());
  require_dims(B.size() == layers && b.size() == layers, "B/b: expected one entry per layer");
  for (std::size_t l = 0; l < layers; ++l) {
    require_dims(B[l].rows() == d.widths[l + 1] && B[l].cols() == d.n_u,
                 "B_" + std::to_string(l) + " has wrong shape");
    require_dims(b[l].size() == d.widths[l + 1], "b_" + std::to_string(l) + " has wrong size");
  }
  require_dims(C.rows() == d.n_y && C.cols() == d.n_x, "C has wrong shape");
  require_dims(D.rows() == d.n_y && D.cols() == d.n_u, "D has wrong shape");
}

template <class Stepper>
Trajectory run(const Stepper& step, const Mat& C, const Mat& D, const Mat& inputs, const Vec& x0,
               SimulateOptions opts) {
  require_dims(inputs.cols() > 0, "simulate: input sequence is empty");
  require_dims(x0.size() == C.cols(), "simulate: x0 has wrong size");
  require_dims(inputs.rows() == D.cols(), "simulate: input channel count mismatch");

  const Eigen::Index T = inputs.cols();
  Trajectory traj;
  traj.inputs = inputs;
  traj.states.resize(x0.size(), T);
  traj.outputs.resize(C.rows(), T);
  if (opts.keep_hidden) traj.hidden.reserve(static_cast<std::size_t>(T));

  Vec x = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    const Vec u = inputs.col(k);
    const Vec y = C * x + D * u;
    if (!x.allFinite() || !y.allFinite()) {
      traj.diverged = true;
      traj.states.conservativeResize(Eigen::NoChange, k);
      traj.outputs.conservativeResize(Eigen::NoChange, k);
      traj.inputs.conservativeResize(Eigen::NoChange, k);
      traj.final_state = k > 0 ? Vec(traj.states.col(k - 1)) : Vec();
      return traj;
    }
    traj.states.col(k) = x;
    traj.outputs.col(k) = y;
    StepResult r = step(x, u);
    if (opts.keep_hidden) traj.hidden.push_back(std::move(r.hidden));
    x = std::move(r.next_state);
  }
  traj.final_state = x;
  if (!x.allFinite()) traj.diverged = true;
  return traj;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Vec activation_apply(Activation a, const Vec& z) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::identity: return z;
  }
  return z;
}

Vec activation_slope_vector(Activation a, const Vec& z) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::identity: return Vec::Ones(z.size());
  }
  return Vec::Ones(z.size());
}

Eigen::DiagonalMatrix<double, Eigen::Dynamic> activation_slope(Activation a, const Vec& z) {
  return Eigen::DiagonalMatrix<double, Eigen::Dynamic>(activation_slope_vector(a, z));
}

void LayerDims::validate() const {
  require_dims(widths.size() >= 2, "LayerDims: need at least one layer");
  require_dims(n_x > 0 && n_u >= 0 && n_y > 0, "LayerDims: n_x and n_y must be positive");
  for (int w : widths) require_dims(w > 0, "LayerDims: widths must be positive");
  require_dims(widths.front() == n_x && widths.back() == n_x,
               "LayerDims: first and last widths must equal n_x");
}

LayerDims LayerDims::uniform(int n_x, int n_u, int n_y, int layers, int hidden) {
  LayerDims d{n_x, n_u, n_y, {}};
  d.widths.assign(static_cast<std::size_t>(layers) + 1, hidden);
  d.widths.front() = n_x;
  d.widths.back() = n_x;
  d.validate();
  return d;
}

ExplicitParams ExplicitParams::zeros(const LayerDims& d) {
  d.validate();
  ExplicitParams p;
  for (int l = 0; l < d.layers(); ++l) {
    p.A.push_back(Mat::Zero(d.widths[l + 1], d.widths[l]));
    p.B.push_back(Mat::Zero(d.widths[l + 1], d.n_u));
    p.b.push_back(Vec::Zero(d.widths[l + 1]));
  }
  p.C = Mat::Zero(d.n_y, d.n_x);
  p.D = Mat::Zero(d.n_y, d.n_u);
  return p;
}

LayerDims ExplicitParams::dims() const {
  require_dims(!A.empty(), "ExplicitParams: no layers");
  LayerDims d;
  d.n_x = static_cast<int>(A.front().cols());
  d.n_u = static_cast<int>(D.cols());
  d.n_y = static_cast<int>(C.rows());
  d.widths.push_back(static_cast<int>(A.front().cols()));
  for (const auto& a : A) d.widths.push_back(static_cast<int>(a.rows()));
  return d;
}

void ExplicitParams::validate() const {
  const LayerDims d = dims();
  d.validate();
  check_layer_shapes(A, d.widths, "A");
  check_io_shapes(B, b, C, D, d);
}

ImplicitParams ImplicitParams::identity(const LayerDims& d) {
  d.validate();
  ImplicitParams p;
  for (int l = 0; l <= d.layers(); ++l) p.E.push_back(Mat::Identity(d.widths[l], d.widths[l]));
  for (int l = 0; l < d.layers(); ++l) {
    p.W.push_back(Mat::Zero(d.widths[l + 1], d.widths[l]));
    p.B.push_back(Mat::Zero(d.widths[l + 1], d.n_u));
    p.b.push_back(Vec::Zero(d.widths[l + 1]));
  }
  p.C = Mat::Zero(d.n_y, d.n_x);
  p.D = Mat::Zero(d.n_y, d.n_u);
  return p;
}

LayerDims ImplicitParams::dims() const {
  require_dims(!W.empty(), "ImplicitParams: no layers");
  LayerDims d;
  d.n_x = static_cast<int>(W.front().cols());
  d.n_u = static_cast<int>(D.cols());
  d.n_y = static_cast<int>(C.rows());
  d.widths.push_back(static_cast<int>(W.front().cols()));
  for (const auto& w : W) d.widths.push_back(static_cast<int>(w.rows()));
  return d;
}

void ImplicitParams::validate() const {
  const LayerDims d = dims();
  d.validate();
  check_layer_shapes(W, d.widths, "W");
  require_dims(E.size() == W.size() + 1, "E: expected L + 1 matrices");
  for (std::size_t l = 0; l < E.size(); ++l) {
    require_dims(E[l].rows() == d.widths[l] && E[l].cols() == d.widths[l],
                 "E_" + std::to_string(l) + " has wrong shape");
  }
  check_io_shapes(B, b, C, D, d);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::rnn: return "rnn";
    case ModelKind::srnn: return "s-rnn";
    case ModelKind::implicit: return "implicit-rnn";
    case ModelKind::cirnn: return "ci-rnn";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "rnn") return ModelKind::rnn;
  if (name == "s-rnn" || name == "srnn") return ModelKind::srnn;
  if (name == "implicit-rnn" || name == "implicit") return ModelKind::implicit;
  if (name == "ci-rnn" || name == "cirnn") return ModelKind::cirnn;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

bool is_implicit(ModelKind k) { return k == ModelKind::implicit || k == ModelKind::cirnn; }

LayerDims Model::dims() const {
  return std::visit([](const auto& p) { return p.dims(); }, params);
}

StepResult step_explicit(const ExplicitParams& p, Activation a, const Vec& x, const Vec& u) {
  const int L = static_cast<int>(p.A.size());
  require_dims(L > 0 && x.size() == p.A.front().cols(), "step_explicit: state size mismatch");
  require_dims(u.size() == p.D.cols(), "step_explicit: input size mismatch");
  StepResult r;
  r.hidden.reserve(static_cast<std::size_t>(L) + 1);
  r.hidden.push_back(x);
  for (int l = 0; l < L; ++l) {
    require_dims(p.A[l].cols() == r.hidden.back().size(), "step_explicit: layer width mismatch");
    r.hidden.push_back(activation_apply(a, p.A[l] * r.hidden.back() + p.B[l] * u + p.b[l]));
  }
  r.next_state = r.hidden.back();
  return r;
}

ImplicitStepper::ImplicitStepper(ImplicitParams p, Activation a)
    : params_(std::move(p)), activation_(a) {
  params_.validate();
  lu_.reserve(params_.E.size());
  for (std::size_t l = 0; l < params_.E.size(); ++l) {
    lu_.push_back(factorize(params_.E[l], static_cast<int>(l)));
  }
}

StepResult ImplicitStepper::step(const Vec& x, const Vec& u) const {
  const auto L = params_.W.size();
  require_dims(x.size() == params_.E.front().rows(), "step_implicit: state size mismatch");
  require_dims(u.size() == params_.D.cols(), "step_implicit: input size mismatch");
  StepResult r;
  r.hidden.reserve(L + 1);
  r.hidden.push_back(lu_[0].solve(x));
  Vec z;
  for (std::size_t l = 0; l < L; ++l) {
    z = activation_apply(activation_, params_.W[l] * r.hidden.back() + params_.B[l] * u + params_.b[l]);
    r.hidden.push_back(lu_[l + 1].solve(z));
  }
  r.next_state = std::move(z);
  return r;
}

StepResult step_implicit(const ImplicitParams& p, Activation a, const Vec& x, const Vec& u) {
  return ImplicitStepper(p, a).step(x, u);
}

ExplicitParams to_explicit(const ImplicitParams& p) {
  p.validate();
  ExplicitParams e;
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    // A = W E^{-1}  <=>  E^T A^T = W^T
    const auto lu_t = factorize(p.E[l].transpose(), static_cast<int>(l));
    e.A.push_back(lu_t.solve(p.W[l].transpose()).transpose());
  }
  factorize(p.E.back(), static_cast<int>(p.E.size()) - 1);
  e.B = p.B;
  e.b = p.b;
  e.C = p.C;
  e.D = p.D;
  return e;
}

Trajectory simulate(const ExplicitParams& p, Activation a, const Mat& inputs, const Vec& x0,
                    SimulateOptions opts) {
  p.validate();
  auto step = [&](const Vec& x, const Vec& u) { return step_explicit(p, a, x, u); };
  return run(step, p.C, p.D, inputs, x0, opts);
}

Trajectory simulate(const ImplicitParams& p, Activation a, const Mat& inputs, const Vec& x0,
                    SimulateOptions opts) {
  const ImplicitStepper stepper(p, a);
  auto step = [&](const Vec& x, const Vec& u) { return stepper.step(x, u); };
  return run(step, p.C, p.D, inputs, x0, opts);
}

Trajectory simulate(const Model& m, const Mat& inputs, const Vec& x0, SimulateOptions opts) {
  return std::visit([&](const auto& p) { return simulate(p, m.activation, inputs, x0, opts); },
                    m.params);
}

}  // namespace cirnn
