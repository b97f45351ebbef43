#pragma once

#include "cirnn/config.hpp"
#include "cirnn/contraction.hpp"
#include "cirnn/models.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cirnn {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitSolver = 4,
  kExitVerification = 5,
};

class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File arguments shared by the subcommands; which ones are required depends
/// on the command.
struct CommandArgs {
  RunConfig cfg;
  std::string model;
  std::string certificate;
  std::string data;     // dataset manifest
  std::string reports;  // glob for compare
  int fold = 0;
};

struct InitOutcome {
  Model model;
  std::optional<Certificate> certificate;
  std::optional<double> projection_objective;
  int projection_iterations = 0;
};

/// Samples and projects according to cfg.init and cfg.model.
InitOutcome initialize(const RunConfig& cfg, int n_u, int n_y);

/// Loads the manifest named by cfg.data.manifest, or generates Chen data.
SeqDataset load_or_generate(const RunConfig& cfg);

void cmd_generate(const CommandArgs& a, std::ostream& out);
void cmd_init(const CommandArgs& a, std::ostream& out);
void cmd_train(const CommandArgs& a, std::ostream& out);
/// Throws VerificationFailure when the certificate does not verify.
void cmd_verify(const CommandArgs& a, std::ostream& out);
void cmd_eval(const CommandArgs& a, std::ostream& out);
void cmd_compare(const CommandArgs& a, std::ostream& out);

/// Files matching a pattern with * and ? wildcards; * also matches across
/// directory separators. Sorted.
std::vector<std::filesystem::path> glob_files(const std::string& pattern);

/// Runs a subcommand by name and maps exceptions to exit codes, printing the
/// message to `err`.
int run_command(const std::string& name, const CommandArgs& a, std::ostream& out, std::ostream& err);

}  // namespace cirnn
