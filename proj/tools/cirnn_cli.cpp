#include "cirnn/checkpoint.hpp"
#include "cirnn/commands.hpp"
#include "cirnn/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

std::vector<std::string> split_presets(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::stringstream ss(r);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contracting implicit RNNs: data generation, initialization, training, verification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> presets;
  cirnn::CommandArgs args;
  std::optional<std::string> split;

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--preset", presets, "named preset (A-E, desk, paper); repeat or comma-separate")
      ->allow_extra_args(false);

  auto* gen = app.add_subcommand("generate", "write a Chen dataset and manifest");
  auto* init = app.add_subcommand("init", "sample and project an initial model");
  init->add_option("--data", args.data, "dataset manifest (sets input and output sizes)");
  auto* trn = app.add_subcommand("train", "train a model");
  trn->add_option("--data", args.data, "dataset manifest");
  trn->add_option("--model", args.model, "initial model file");
  trn->add_option("--certificate", args.certificate, "initial certificate file");
  auto* ver = app.add_subcommand("verify", "check a certificate against a model");
  ver->add_option("--model", args.model, "model file")->required();
  ver->add_option("--certificate", args.certificate, "certificate file")->required();
  auto* ev = app.add_subcommand("eval", "simulate a model on a dataset split");
  ev->add_option("--model", args.model, "model file")->required();
  ev->add_option("--data", args.data, "dataset manifest");
  ev->add_option("--certificate", args.certificate, "certificate for the stress test");
  ev->add_option("--split", split, "train, val or test");
  ev->add_option("--fold", args.fold, "fold identifier recorded in the report");
  auto* cmp = app.add_subcommand("compare", "aggregate evaluation reports");
  cmp->add_option("--reports", args.reports, "glob of eval.json files")->required();
  (void)gen;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cirnn::kExitOk : cirnn::kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    cirnn::RunConfig& cfg = args.cfg;
    for (const auto& p : split_presets(presets)) cirnn::apply_preset(cfg, p);
    if (!config_path.empty()) cirnn::apply_config_text(cfg, cirnn::read_text_file(config_path));
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (split) cfg.eval.split = *split;
    if (!args.data.empty() && name != "eval") cfg.data.manifest = args.data;
    if (name == "verify" && out_dir.empty()) cfg.out.clear();
  } catch (const cirnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cirnn::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cirnn::kExitConfig;
  }
  return cirnn::run_command(name, args, std::cout, std::cerr);
}
