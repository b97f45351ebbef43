#pragma once

#include "cirnn/linalg.hpp"

#include <Eigen/LU>

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cirnn {

/// Scalar nonlinearity applied elementwise. All supported kinds have slope
/// in [0, 1].
enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

Vec activation_apply(Activation a, const Vec& z);

/// Diagonal of the derivative. ReLU uses slope 0 at the origin.
Vec activation_slope_vector(Activation a, const Vec& z);
Eigen::DiagonalMatrix<double, Eigen::Dynamic> activation_slope(Activation a, const Vec& z);

/// Widths n_0..n_L of the layer stack. n_0 and n_L are the state dimension.
struct LayerDims {
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  std::vector<int> widths;

  int layers() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;

  static LayerDims uniform(int n_x, int n_u, int n_y, int layers, int hidden);

  bool operator==(const LayerDims&) const = default;
};

/// z^{l+1} = phi(A_l z^l + B_l u + b_l), z^0 = x, f(x, u) = z^L; y = C x + D u.
struct ExplicitParams {
  std::vector<Mat> A;
  std::vector<Mat> B;
  std::vector<Vec> b;
  Mat C;
  Mat D;

  static ExplicitParams zeros(const LayerDims& dims);
  LayerDims dims() const;
  void validate() const;
};

/// E_0 h^0 = x, E_{l+1} h^{l+1} = phi(W_l h^l + B_l u + b_l), f(x, u) = E_L h^L.
struct ImplicitParams {
  std::vector<Mat> E;  // L + 1 square matrices
  std::vector<Mat> W;  // L matrices, W_l is n_{l+1} x n_l
  std::vector<Mat> B;
  std::vector<Vec> b;
  Mat C;
  Mat D;

  /// E_l = I, W_l = 0, everything else zero.
  static ImplicitParams identity(const LayerDims& dims);
  LayerDims dims() const;
  void validate() const;
};

enum class ModelKind { rnn, srnn, implicit, cirnn };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view name);
bool is_implicit(ModelKind k);

struct Model {
  ModelKind kind = ModelKind::rnn;
  Activation activation = Activation::relu;
  std::variant<ExplicitParams, ImplicitParams> params;

  LayerDims dims() const;
  const ExplicitParams& explicit_params() const { return std::get<ExplicitParams>(params); }
  const ImplicitParams& implicit_params() const { return std::get<ImplicitParams>(params); }
};

struct StepResult {
  Vec next_state;
  std::vector<Vec> hidden;  // z^0..z^L (explicit) or h^0..h^L (implicit)
};

StepResult step_explicit(const ExplicitParams& p, Activation a, const Vec& x, const Vec& u);
StepResult step_implicit(const ImplicitParams& p, Activation a, const Vec& x, const Vec& u);

/// Holds LU factorizations of every E_l so repeated steps with the same
/// parameters do not refactorize. Throws SingularMatrixError on construction
/// if any E_l is singular.
///
/// The returned next state is phi(W_{L-1} h^{L-1} + ...), which equals
/// E_L h^L exactly in exact arithmetic; h^L is still solved for the hidden
/// stack.
class ImplicitStepper {
 public:
  ImplicitStepper(ImplicitParams p, Activation a);
  StepResult step(const Vec& x, const Vec& u) const;
  const ImplicitParams& params() const { return params_; }

 private:
  ImplicitParams params_;
  Activation activation_;
  std::vector<Eigen::PartialPivLU<Mat>> lu_;
};

/// A_l = W_l E_l^{-1}. The output map is unchanged because both forms share
/// the state x.
ExplicitParams to_explicit(const ImplicitParams& p);

/// Inputs, states and outputs are stored column-per-time-step. states(:, k)
/// is x_k, outputs(:, k) = C x_k + D u_k. `final_state` is x_T.
struct Trajectory {
  Mat inputs;
  Mat states;
  Mat outputs;
  std::vector<std::vector<Vec>> hidden;
  Vec final_state;
  bool diverged = false;
  int steps() const { return static_cast<int>(outputs.cols()); }
};

struct SimulateOptions {
  bool keep_hidden = false;
};

/// Iterates the model over the columns of `inputs` starting from x0. If a
/// non-finite value appears the trajectory is truncated to its finite
/// prefix and flagged as diverged.
Trajectory simulate(const ExplicitParams& p, Activation a, const Mat& inputs, const Vec& x0,
                    SimulateOptions opts = {});
Trajectory simulate(const ImplicitParams& p, Activation a, const Mat& inputs, const Vec& x0,
                    SimulateOptions opts = {});
Trajectory simulate(const Model& m, const Mat& inputs, const Vec& x0, SimulateOptions opts = {});

}  // namespace cirnn
