#include "cirnn/commands.hpp"

#include "cirnn/checkpoint.hpp"
#include "cirnn/eval.hpp"
#include "cirnn/init.hpp"
#include "cirnn/training.hpp"
#include "json_io.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace cirnn {

namespace fs = std::filesystem;
using detail::json;

namespace {

fs::path out_dir(const CommandArgs& a) { return fs::path(a.cfg.out); }

void echo_config(const CommandArgs& a) {
  write_text_file(out_dir(a) / "config.json", config_to_json(a.cfg));
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what + " path");
  if (!fs::exists(value)) throw DataError(std::string(what) + " not found: " + value);
  return value;
}

// Train/val labels for training: manifests without a validation split get
// the configured hold-out.
SeqDataset prepare_training_data(const RunConfig& cfg, std::optional<NormStats>& stats) {
  SeqDataset ds = load_or_generate(cfg);
  if (ds.indices(Split::val).empty()) hold_out_validation(ds, cfg.data.validation_fraction);
  if (cfg.data.normalize) {
    ds = normalize(ds);
    stats = ds.stats;
  }
  return ds;
}

json stress_json(const StressSummary& s) { return json::parse(stress_to_json(s)); }

}  // namespace

InitOutcome initialize(const RunConfig& cfg, int n_u, int n_y) {
  cfg.validate();
  const InitConfig ic = cfg.init_config(n_u, n_y);
  ic.validate();
  InitOutcome o;
  o.model.kind = cfg.model.kind;
  o.model.activation = cfg.model.activation;
  switch (cfg.init.scheme) {
    case InitScheme::sample:
      o.model.params = sample_explicit(ic);
      break;
    case InitScheme::spectral: {
      ExplicitParams p = sample_explicit(ic);
      for (auto& A : p.A) A = clip_spectral(A);
      o.model.params = std::move(p);
      std::vector<Vec> ones;
      for (const auto& A : std::get<ExplicitParams>(o.model.params).A) ones.push_back(Vec::Ones(A.cols()));
      o.certificate = Certificate::linked(std::move(ones), 1.0, 0.0, MetricForm::direct);
      break;
    }
    case InitScheme::project: {
      auto r = project_ci(sample_explicit(ic), ic);
      o.model.params = std::move(r.params);
      o.certificate = std::move(r.certificate);
      o.projection_objective = r.objective;
      o.projection_iterations = r.iterations;
      break;
    }
    case InitScheme::uniform:
      o.model.params = sample_uniform_implicit(ic);
      break;
  }
  return o;
}

SeqDataset load_or_generate(const RunConfig& cfg) {
  if (!cfg.data.manifest.empty()) {
    if (!fs::exists(cfg.data.manifest)) throw DataError("manifest not found: " + cfg.data.manifest);
    return load_manifest(cfg.data.manifest).dataset;
  }
  ChenConfig c = cfg.data.chen;
  c.seed = cfg.seed;
  return generate_chen(c);
}

void cmd_generate(const CommandArgs& a, std::ostream& out) {
  a.cfg.validate();
  ChenConfig c = a.cfg.data.chen;
  c.seed = a.cfg.seed;
  SeqDataset ds = generate_chen(c);
  const auto n = static_cast<int>(ds.sequences.size());
  const int n_test = static_cast<int>(std::ceil(a.cfg.data.test_fraction * n));
  if (n_test >= n) throw ConfigError("data: test_fraction leaves no training sequences");
  for (int i = n - n_test; i < n; ++i) ds.sequences[i].split = Split::test;
  save_dataset(ds, out_dir(a), a.cfg.data.normalize);
  echo_config(a);
  out << "wrote " << ds.sequences.size() << " sequences x " << c.T << " steps to "
      << (out_dir(a) / "manifest.json").string() << '\n';
}

void cmd_init(const CommandArgs& a, std::ostream& out) {
  a.cfg.validate();
  int n_u = 1, n_y = 1;
  if (!a.cfg.data.manifest.empty()) {
    const auto ds = load_or_generate(a.cfg);
    n_u = ds.n_u();
    n_y = ds.n_y();
  }
  const InitOutcome o = initialize(a.cfg, n_u, n_y);
  const fs::path dir = out_dir(a);
  save_model(o.model, dir / "model.json");
  json summary = {{"model_kind", to_string(o.model.kind)}, {"scheme", to_string(a.cfg.init.scheme)}};
  if (o.certificate) {
    save_certificate(*o.certificate, dir / "certificate.json");
    const auto report = verify_model(o.model, *o.certificate);
    summary["certificate"] = json::parse(report_to_json(report));
  }
  if (o.projection_objective) {
    summary["projection_objective"] = *o.projection_objective;
    summary["projection_iterations"] = o.projection_iterations;
  }
  write_text_file(dir / "init_report.json", detail::dump(summary));
  echo_config(a);
  out << "wrote " << to_string(o.model.kind) << " model to " << (dir / "model.json").string() << '\n';
}

void cmd_train(const CommandArgs& a, std::ostream& out) {
  RunConfig cfg = a.cfg;
  cfg.train.seed = cfg.seed;
  cfg.train.model_kind = cfg.model.kind;
  cfg.validate();

  std::optional<NormStats> stats;
  const SeqDataset ds = prepare_training_data(cfg, stats);

  Model init_model;
  std::optional<Certificate> cert;
  if (!a.model.empty()) {
    init_model = load_model(require_path(a.model, "model"));
    if (!a.certificate.empty()) cert = load_certificate(require_path(a.certificate, "certificate"));
    if (init_model.kind == ModelKind::cirnn && !cert)
      throw ConfigError("ci-rnn training from a model file needs --certificate");
  } else {
    auto o = initialize(cfg, ds.n_u(), ds.n_y());
    init_model = std::move(o.model);
    cert = std::move(o.certificate);
  }
  cfg.train.model_kind = init_model.kind;
  const int n_train = static_cast<int>(ds.indices(Split::train).size());
  Bundle bundle = make_bundle(init_model, init_model.kind == ModelKind::cirnn ? cert : std::nullopt,
                              n_train, cfg.train.epsilon);
  const TrainResult res = train(cfg.train, ds, std::move(bundle));

  const fs::path dir = out_dir(a);
  const Model best = res.best.model();
  save_model(best, dir / "model.json");
  json summary = {{"model_kind", to_string(best.kind)},
                  {"epochs", res.history.size()},
                  {"early_stopped", res.early_stopped},
                  {"has_feasible_best", res.has_best},
                  {"best_epoch", res.best_epoch},
                  {"best_val_mse", finite_or_null(res.best_val_mse)},
                  {"final_c_infnorm", res.history.empty() ? 0.0 : res.history.back().c_inf},
                  {"events", res.events}};
  if (auto c = res.best.certificate()) {
    save_certificate(*c, dir / "certificate.json");
    const auto report = verify_model(best, *c);
    summary["certificate"] = json::parse(report_to_json(report));
  }
  write_text_file(dir / "history.csv", history_csv(res.history));
  if (stats) write_text_file(dir / "normalization.json", norm_stats_to_json(*stats));
  write_text_file(dir / "train_summary.json", detail::dump(summary));
  echo_config(a);
  out << "trained " << to_string(best.kind) << " for " << res.history.size()
      << " epochs; best epoch " << res.best_epoch << ", val MSE " << res.best_val_mse << '\n';
}

void cmd_verify(const CommandArgs& a, std::ostream& out) {
  const Model m = load_model(require_path(a.model, "model"));
  const Certificate c = load_certificate(require_path(a.certificate, "certificate"));
  CertReport report;
  try {
    report = verify_model(m, c);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  // Empirical check with random inputs and initial-state pairs.
  const LayerDims d = m.dims();
  std::mt19937_64 rng(a.cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index cols) {
    return Mat(Mat::NullaryExpr(r, cols, [&] { return normal(rng); }));
  };
  double max_ratio = 0.0;
  bool diverged = false;
  constexpr int kPairs = 10, kHorizon = 200;
  for (int p = 0; p < kPairs; ++p) {
    const Mat u = gaussian(d.n_u, kHorizon);
    const Vec xa = gaussian(d.n_x, 1), xb = gaussian(d.n_x, 1);
    const auto t = empirical_contraction_test(m, c, u, xa, xb);
    diverged = diverged || t.diverged;
    max_ratio = std::max(max_ratio, t.max_ratio);
  }
  const bool passes = !diverged && max_ratio <= c.lambda * (1.0 + 1e-6);

  json j = json::parse(report_to_json(report));
  j["model_kind"] = to_string(m.kind);
  j["metric_form"] = c.form == MetricForm::inverse ? "inverse" : "direct";
  double min_eig = std::numeric_limits<double>::infinity();
  for (double v : report.block_min_eig) min_eig = std::min(min_eig, v);
  j["min_eig"] = finite_or_null(min_eig);
  j["contraction"] = {{"pairs", kPairs},
                      {"horizon", kHorizon},
                      {"max_ratio", finite_or_null(max_ratio)},
                      {"diverged", diverged},
                      {"passes", passes}};
  const std::string text = detail::dump(j);
  out << text;
  if (!a.cfg.out.empty()) write_text_file(out_dir(a) / "verify.json", text);
  if (!report.feasible)
    throw VerificationFailure("certificate does not verify (min eig " + std::to_string(min_eig) + ")");
}

void cmd_eval(const CommandArgs& a, std::ostream& out) {
  a.cfg.validate();
  const fs::path model_path = require_path(a.model, "model");
  const Model m = load_model(model_path);
  const std::string manifest = a.data.empty() ? a.cfg.data.manifest : a.data;
  const Manifest man = load_manifest(require_path(manifest, "manifest"));
  SeqDataset ds = man.dataset;

  const fs::path norm = model_path.parent_path() / "normalization.json";
  if (fs::exists(norm))
    ds = apply_norm(ds, norm_stats_from_json(read_text_file(norm)));
  else if (man.normalize)
    ds = normalize(ds);

  const Split split = parse_split(a.cfg.eval.split);
  EvalOptions opts;
  opts.washout = a.cfg.eval.washout;
  opts.fold = a.fold;
  opts.seed = a.cfg.seed;
  EvalReport r = evaluate(m, ds, split, opts);

  std::optional<Certificate> cert;
  if (!a.certificate.empty()) cert = load_certificate(require_path(a.certificate, "certificate"));
  const fs::path dir = out_dir(a);
  if (a.cfg.eval.stress_pairs > 0) {
    const auto s = stability_stress(m, cert, a.cfg.eval.stress_pairs, a.cfg.eval.stress_horizon, a.cfg.seed);
    if (s.max_v_ratio) {
      r.contraction.tested = true;
      r.contraction.max_ratio = *s.max_v_ratio;
      r.contraction.lambda = s.lambda;
      r.contraction.passes = *s.max_v_ratio <= s.lambda * (1.0 + 1e-6);
    }
    write_text_file(dir / "stress.json", detail::dump(stress_json(s)));
  }
  write_text_file(dir / "eval.json", report_to_json(r));

  // Plot source: measured and simulated outputs per sequence.
  std::ostringstream csv;
  csv.precision(17);
  csv << "sequence,step,channel,simulated,measured\n";
  for (const auto& s : ds.sequences) {
    if (s.split != split) continue;
    const auto tr = simulate(m, s.inputs, Vec::Zero(m.dims().n_x));
    Mat y = tr.outputs, ym = s.outputs.leftCols(tr.steps());
    if (ds.stats) {
      y = denormalize_outputs(*ds.stats, y);
      ym = denormalize_outputs(*ds.stats, ym);
    }
    for (int k = 0; k < tr.steps(); ++k)
      for (Eigen::Index c = 0; c < y.rows(); ++c)
        csv << s.name << ',' << k << ',' << ds.output_names[c] << ',' << y(c, k) << ',' << ym(c, k) << '\n';
  }
  write_text_file(dir / "predictions.csv", csv.str());
  echo_config(a);
  out << "mean NSE " << r.mean_nse << (r.diverged ? " (unbounded NSE)" : "") << '\n';
}

std::vector<fs::path> glob_files(const std::string& pattern) {
  const fs::path p(pattern);
  fs::path base;
  for (const auto& part : p) {
    if (part.string().find_first_of("*?[") != std::string::npos) break;
    base /= part;
  }
  std::vector<fs::path> out;
  if (base == p) {
    if (fs::is_regular_file(p)) out.push_back(p);
    return out;
  }
  if (base.empty()) base = ".";
  if (!fs::is_directory(base)) return out;
  const std::string pat = p.lexically_normal().generic_string();
  for (const auto& e : fs::recursive_directory_iterator(base)) {
    if (!e.is_regular_file()) continue;
    std::string cand = e.path().lexically_normal().generic_string();
    if (pattern.rfind("./", 0) != 0 && cand.rfind("./", 0) == 0) cand = cand.substr(2);
    if (fnmatch(pat.c_str(), cand.c_str(), 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_compare(const CommandArgs& a, std::ostream& out) {
  if (a.reports.empty()) throw ConfigError("missing --reports pattern");
  const auto files = glob_files(a.reports);
  if (files.empty()) throw DataError("no reports matched '" + a.reports + "'");
  std::vector<EvalReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_text_file(f)));
  const auto table = compare(reports);
  const std::string text = comparison_to_text(table);
  const fs::path dir = out_dir(a);
  write_text_file(dir / "comparison.txt", text);
  write_text_file(dir / "reports.csv", reports_csv(reports));
  echo_config(a);
  out << text;
}

int run_command(const std::string& name, const CommandArgs& a, std::ostream& out, std::ostream& err) {
  try {
    if (name == "generate")
      cmd_generate(a, out);
    else if (name == "init")
      cmd_init(a, out);
    else if (name == "train")
      cmd_train(a, out);
    else if (name == "verify")
      cmd_verify(a, out);
    else if (name == "eval")
      cmd_eval(a, out);
    else if (name == "compare")
      cmd_compare(a, out);
    else
      throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << '\n';
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace cirnn
