#pragma once

#include "cirnn/contraction.hpp"
#include "cirnn/data.hpp"
#include "cirnn/models.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cirnn {

struct TrainConfig {
  double lr0 = 0.5e-3;
  double lr_decay = 0.96;
  double mu0 = 500.0;
  double viol_tol = 1e-3;
  double penalty_factor = 10.0;
  int patience = 20;
  double epsilon = 1e-4;
  ModelKind model_kind = ModelKind::cirnn;
  std::uint64_t seed = 0;
  int max_epochs = 200;
  int washout = 0;  // validation steps excluded from the metric
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double p_floor = 1e-8;

  double lr_at(int epoch) const;
  void validate() const;
};

/// Every trainable tensor of a run. Explicit kinds use A; implicit kinds use
/// W and E (E_L is carried but not trained since it cancels out of the
/// dynamics). P and `factors` exist for the constrained kinds only.
struct Bundle {
  ModelKind kind = ModelKind::rnn;
  Activation activation = Activation::relu;
  double lambda = 1.0;
  double epsilon = 1e-4;

  std::vector<Mat> A;  // explicit A_l or implicit W_l
  std::vector<Mat> E;  // implicit only, L + 1 entries
  std::vector<Mat> B;
  std::vector<Vec> b;
  Mat C;
  Mat D;
  std::vector<Vec> P;        // ci-rnn: P_0..P_{L-1}; P_L = lambda P_0
  std::vector<Mat> factors;  // one lower-triangular factor per constraint block
  std::vector<Vec> x0;       // one initial state per training sequence

  int layers() const { return static_cast<int>(A.size()); }
  bool constrained() const { return kind == ModelKind::cirnn || kind == ModelKind::srnn; }

  /// Same shapes, all entries zero.
  Bundle zeros_like() const;
  Model model() const;
  /// Certificate for ci-rnn (inverse form) and s-rnn (direct form, M = I).
  std::optional<Certificate> certificate() const;
};

/// Calls f(t, rest...) for each trainable tensor t of `first` together with
/// the matching tensors of the other bundles, in a fixed order.
template <class F, class First, class... Rest>
void zip_tensors(F&& f, First& first, Rest&... rest) {
  for (std::size_t l = 0; l < first.A.size(); ++l) f(first.A[l], rest.A[l]...);
  if (!first.E.empty())
    for (std::size_t l = 0; l + 1 < first.E.size(); ++l) f(first.E[l], rest.E[l]...);
  for (std::size_t l = 0; l < first.B.size(); ++l) f(first.B[l], rest.B[l]...);
  for (std::size_t l = 0; l < first.b.size(); ++l) f(first.b[l], rest.b[l]...);
  f(first.C, rest.C...);
  f(first.D, rest.D...);
  for (std::size_t l = 0; l < first.P.size(); ++l) f(first.P[l], rest.P[l]...);
  for (std::size_t l = 0; l < first.factors.size(); ++l) f(first.factors[l], rest.factors[l]...);
  for (std::size_t l = 0; l < first.x0.size(); ++l) f(first.x0[l], rest.x0[l]...);
}

/// Builds the trainable bundle from an initialized model. For ci-rnn the
/// certificate is required; factors are lower Cholesky factors of
/// (block - eps I), so the initial residual is zero up to round-off.
Bundle make_bundle(const Model& m, const std::optional<Certificate>& cert, int n_train_sequences,
                   double epsilon);

/// LMI blocks whose BM residuals form the constraint vector c.
std::vector<LmiBlock> constraint_blocks(const Bundle& bundle);
/// Stacked residuals vec(M - eps I - L L^T) of every block.
Vec constraint_residual(const Bundle& bundle);

struct ObjectiveValue {
  double total = 0.0;
  double mse = 0.0;
  double penalty = 0.0;  // mu * c^T c
  double c_inf = 0.0;
  bool diverged = false;
};

/// J = MSE over the batch + mu * c^T c. `batch` holds indices into `seqs`,
/// which also select the trainable initial state x0[i]. The MSE is the mean
/// over every scored output entry of the batch.
ObjectiveValue objective(const Bundle& bundle, const std::vector<Sequence>& seqs,
                         const std::vector<int>& batch, double mu);

/// Reverse-mode gradient of `objective`; `grad` is overwritten with the
/// same shapes as `bundle`. On divergence `grad` is zero.
ObjectiveValue gradient(const Bundle& bundle, const std::vector<Sequence>& seqs,
                        const std::vector<int>& batch, double mu, Bundle& grad);

/// Mean squared output error from x0 = 0, skipping the first `washout` steps.
/// Returns +inf if the simulation diverges.
double sequence_mse(const Model& m, const std::vector<Sequence>& seqs, int washout);

struct AdamState {
  Bundle m;
  Bundle v;
  long step = 0;
};

AdamState adam_init(const Bundle& params);
void adam_step(Bundle& params, AdamState& state, const Bundle& grad, double lr,
               const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double c_inf = 0.0;
  double mu = 0.0;
  double lr = 0.0;
  int skipped_batches = 0;
};

struct TrainHooks {
  /// Called after the epoch's parameter updates and before the epoch-end
  /// violation check; may modify the bundle.
  std::function<void(int epoch, Bundle&)> on_epoch_end;
};

struct TrainResult {
  Bundle best;
  bool has_best = false;
  int best_epoch = -1;
  double best_val_mse = 0.0;
  Bundle last;
  std::vector<EpochRecord> history;
  std::vector<std::string> events;
  bool early_stopped = false;
};

/// ADAM on full-sequence batches in shuffled order, lr = lr0 * decay^epoch,
/// penalty escalation at epoch end when ||c||_inf > viol_tol, early stop once
/// `patience` + 1 epochs pass without a better feasible validation MSE.
/// Throws SolverError if every epoch diverged.
TrainResult train(const TrainConfig& cfg, const SeqDataset& data, Bundle init,
                  const TrainHooks& hooks = {});

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace cirnn
