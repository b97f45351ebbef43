#pragma once

#include "cirnn/contraction.hpp"
#include "cirnn/data.hpp"
#include "cirnn/models.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cirnn {

/// NSE above this value is classified as unbounded.
inline constexpr double kNseOverflow = 1e6;

/// sum_t |y_t - ytilde_t|^2 / sum_t |ytilde_t|^2 for each output channel
/// (rows). Throws DataError on shape mismatch or a zero denominator.
Vec nse(const Mat& y, const Mat& y_meas);

struct ContractionSummary {
  bool tested = false;
  double max_ratio = 0.0;
  double lambda = 1.0;
  bool passes = false;
};

struct EvalReport {
  std::string model_kind;
  int layers = 0;
  int fold = 0;
  std::uint64_t seed = 0;
  std::string split = "test";
  Vec channel_nse;
  double mean_nse = 0.0;
  double mse = 0.0;
  bool diverged = false;  // non-finite simulation or NSE above kNseOverflow
  ContractionSummary contraction;
};

struct EvalOptions {
  int washout = 0;
  std::string model_kind;  // overrides to_string(model.kind) when set
  int fold = 0;
  std::uint64_t seed = 0;
};

/// Simulates every sequence of `split` from x0 = 0. NSE is computed on
/// denormalized outputs when the dataset carries normalization stats.
/// Sums of the NSE numerator and denominator run over all sequences.
EvalReport evaluate(const Model& m, const SeqDataset& ds, Split split, const EvalOptions& opts = {});

struct StressSummary {
  int n_pairs = 0;
  int horizon = 0;
  double max_growth_rate = 0.0;  // max over pairs of (|d_T| / |d_0|)^(1/T)
  double max_distance_ratio = 0.0;
  bool diverged = false;
  std::optional<double> max_v_ratio;  // with a certificate
  double lambda = 1.0;
};

/// Perturbation norm 1e-2 relative to the state scale; divergence means a
/// non-finite state or a distance growing by more than 1e6.
StressSummary stability_stress(const Model& m, const std::optional<Certificate>& cert, int n_pairs,
                               int horizon, std::uint64_t seed);

struct KindSummary {
  std::string model_kind;
  int layers = 0;
  int count = 0;
  int unstable = 0;
  std::optional<double> q1, median, q3;
  std::vector<std::string> unstable_runs;
};

struct ComparisonTable {
  std::vector<KindSummary> rows;  // sorted by (kind, layers)
  /// ci-rnn vs s-rnn per layer count, over runs paired by (layers, fold, seed).
  struct WinRate {
    int layers = 0;
    int pairs = 0;
    std::optional<double> rate;
  };
  std::vector<WinRate> win_rates;
  /// Mean NSE per (fold, kind, layers) over seeds; unbounded if any run diverged.
  struct FoldCell {
    int fold = 0;
    std::string model_kind;
    int layers = 0;
    int runs = 0;
    double mean_nse = 0.0;
    bool unbounded = false;
  };
  std::vector<FoldCell> per_fold;  // sorted by (fold, kind, layers)
};

/// Linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

ComparisonTable compare(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
std::string comparison_to_text(const ComparisonTable& t);
/// One row per report keyed by (model_kind, layers, fold, seed).
std::string reports_csv(const std::vector<EvalReport>& reports);
std::string stress_to_json(const StressSummary& s);

}  // namespace cirnn
