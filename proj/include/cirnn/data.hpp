#pragma once

#include "cirnn/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cirnn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One measured experiment: inputs (n_u x T) and outputs (n_y x T), one
/// column per time step.
struct Sequence {
  std::string name;
  Mat inputs;
  Mat outputs;
  Split split = Split::train;

  int length() const { return static_cast<int>(outputs.cols()); }
};

/// Per-channel standardization computed from training sequences only.
struct NormStats {
  Vec u_mean, u_scale;
  Vec y_mean, y_scale;
  std::vector<std::string> warnings;
};

struct SeqDataset {
  std::vector<Sequence> sequences;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::optional<NormStats> stats;

  int n_u() const { return static_cast<int>(input_names.size()); }
  int n_y() const { return static_cast<int>(output_names.size()); }
  std::vector<int> indices(Split s) const;
  std::vector<Sequence> subset(Split s) const;
  void validate() const;
};

struct ChenConfig {
  int T = 250;
  int n_seq = 4;
  double noise_variance = 0.5;
  double input_variance = 1.0;
  double gain = 1.4;
  std::uint64_t seed = 0;

  static ChenConfig desk();   // 4 x 250
  static ChenConfig paper();  // 20 x 500
};

/// One step of the modified Chen system given x_{k-1}, x_{k-2}, u_{k-1},
/// u_{k-2} and the process noise w_k.
double chen_step(double gain, double x1, double x2, double u1, double u2, double w);

/// Runs the modified Chen system from zero history. Output y_k = x_k; all
/// sequences are labelled train.
SeqDataset generate_chen(const ChenConfig& cfg);

/// Reads a comma-separated file with a header row of channel names, one time
/// step per row, and selects the named channels.
SeqDataset load_timeseries(const std::filesystem::path& path,
                           const std::vector<std::string>& input_channels,
                           const std::vector<std::string>& output_channels);

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> val;
};

/// k contiguous folds over the non-test sequences (indices into ds.sequences).
std::vector<FoldSplit> kfold(const SeqDataset& ds, int k);

/// Relabels the sequences of a fold as train/val; test sequences keep their label.
SeqDataset apply_fold(const SeqDataset& ds, const FoldSplit& fold);

/// Marks the last max(1, round(fraction * n)) train sequences as validation.
void hold_out_validation(SeqDataset& ds, double fraction);

/// Standardizes every channel with statistics of the train split. Constant
/// channels get scale 1e-12 floor and a recorded warning.
SeqDataset normalize(const SeqDataset& ds);
NormStats compute_norm_stats(const SeqDataset& ds);
SeqDataset apply_norm(const SeqDataset& ds, const NormStats& stats);
SeqDataset denormalize(const SeqDataset& ds);
Mat denormalize_outputs(const NormStats& stats, const Mat& y);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

/// Manifest: JSON listing sequence CSV files (relative to the manifest), their
/// split labels and the channel names.
struct Manifest {
  SeqDataset dataset;
  bool normalize = true;
};

void save_dataset(const SeqDataset& ds, const std::filesystem::path& dir, bool normalize_flag = true);
Manifest load_manifest(const std::filesystem::path& manifest_path);

void write_sequence_csv(const Sequence& s, const std::vector<std::string>& input_names,
                        const std::vector<std::string>& output_names,
                        const std::filesystem::path& path);

}  // namespace cirnn
