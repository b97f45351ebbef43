#pragma once

#include "cirnn/data.hpp"
#include "cirnn/init.hpp"
#include "cirnn/models.hpp"
#include "cirnn/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cirnn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How initial weights are produced.
///  - sample:  A_l ~ N(0, alpha^2 / n), left as is
///  - spectral: sample, then clip singular values at one
///  - project: sample, then project onto the contracting implicit set
///  - uniform: E_l = I, W_l ~ U[-1/sqrt(n), 1/sqrt(n)]
enum class InitScheme { sample, spectral, project, uniform };

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

struct ModelSection {
  ModelKind kind = ModelKind::cirnn;
  Activation activation = Activation::relu;
  int n_x = 20;
  int hidden = 20;
  int layers = 2;
};

struct InitSection {
  InitScheme scheme = InitScheme::project;
  double alpha = 1.2;
  double epsilon = 1e-4;
  double lambda = 1.0;
};

struct DataSection {
  ChenConfig chen;
  std::string manifest;  // empty: generate Chen data in-process
  double validation_fraction = 0.1;
  double test_fraction = 0.0;  // generate: trailing share labelled test
  bool normalize = true;
};

struct EvalSection {
  std::string split = "test";
  int washout = 0;
  int stress_pairs = 0;  // 0 disables the stress test
  int stress_horizon = 1000;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  ModelSection model;
  InitSection init;
  TrainConfig train;
  DataSection data;
  EvalSection eval;
  std::vector<std::string> presets;

  /// Layer widths [n_x, hidden, ..., hidden, n_x] with n_u, n_y from the data.
  LayerDims dims(int n_u, int n_y) const;
  InitConfig init_config(int n_u, int n_y) const;
  void validate() const;
};

/// Preset names: A-E (model families), desk and paper (data and model scale).
std::vector<std::string> preset_names();
void apply_preset(RunConfig& cfg, const std::string& name);

/// Applies the keys present in `text` (JSON) on top of `cfg`. Unknown keys
/// are rejected.
void apply_config_text(RunConfig& cfg, const std::string& text);
std::string config_to_json(const RunConfig& cfg);

}  // namespace cirnn
