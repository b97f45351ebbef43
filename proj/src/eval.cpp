#include "cirnn/eval.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <sstream>

namespace cirnn {

using detail::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

}  // namespace

Vec nse(const Mat& y, const Mat& y_meas) {
  if (y.rows() != y_meas.rows() || y.cols() != y_meas.cols())
    throw DataError("nse: predicted and measured sequences differ in shape");
  const Vec den = y_meas.rowwise().squaredNorm();
  if ((den.array() <= 0).any()) throw DataError("nse: measured output has zero energy");
  return (y - y_meas).rowwise().squaredNorm().cwiseQuotient(den);
}

EvalReport evaluate(const Model& m, const SeqDataset& ds, Split split, const EvalOptions& opts) {
  EvalReport r;
  r.model_kind = opts.model_kind.empty() ? to_string(m.kind) : opts.model_kind;
  r.layers = m.dims().layers();
  r.fold = opts.fold;
  r.seed = opts.seed;
  r.split = to_string(split);

  const auto seqs = ds.subset(split);
  if (seqs.empty()) throw DataError("evaluate: split '" + r.split + "' has no sequences");
  const int n_y = ds.n_y();
  Vec num = Vec::Zero(n_y), den = Vec::Zero(n_y);
  double sse = 0.0;
  long count = 0;
  const Vec x0 = Vec::Zero(m.dims().n_x);
  for (const auto& s : seqs) {
    const auto tr = simulate(m, s.inputs, x0);
    if (tr.diverged) {
      r.diverged = true;
      break;
    }
    const int w = std::min(opts.washout, s.length());
    const int T = s.length() - w;
    Mat y = tr.outputs.rightCols(T);
    Mat ym = s.outputs.rightCols(T);
    if (ds.stats) {
      y = denormalize_outputs(*ds.stats, y);
      ym = denormalize_outputs(*ds.stats, ym);
    }
    num += (y - ym).rowwise().squaredNorm();
    den += ym.rowwise().squaredNorm();
    sse += (y - ym).squaredNorm();
    count += static_cast<long>(T) * n_y;
  }
  if (r.diverged) {
    r.channel_nse = Vec::Constant(n_y, kInf);
    r.mean_nse = r.mse = kInf;
    return r;
  }
  if ((den.array() <= 0).any()) throw DataError("nse: measured output has zero energy");
  r.channel_nse = num.cwiseQuotient(den);
  r.mean_nse = r.channel_nse.mean();
  r.mse = count > 0 ? sse / static_cast<double>(count) : 0.0;
  if (!std::isfinite(r.mean_nse) || r.channel_nse.maxCoeff() > kNseOverflow) r.diverged = true;
  return r;
}

StressSummary stability_stress(const Model& m, const std::optional<Certificate>& cert, int n_pairs,
                               int horizon, std::uint64_t seed) {
  const LayerDims d = m.dims();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    return Mat(Mat::NullaryExpr(r, c, [&] { return normal(rng); }));
  };

  StressSummary s;
  s.n_pairs = n_pairs;
  s.horizon = horizon;
  if (cert) s.lambda = cert->lambda;
  for (int p = 0; p < n_pairs; ++p) {
    const Mat u = gaussian(d.n_u, horizon);
    const Vec xa = gaussian(d.n_x, 1);
    Vec dir = gaussian(d.n_x, 1);
    dir *= 1e-2 * std::max(1.0, xa.norm()) / std::max(dir.norm(), 1e-300);
    const Vec xb = xa + dir;

    const auto ta = simulate(m, u, xa);
    const auto tb = simulate(m, u, xb);
    const double d0 = dir.norm();
    if (ta.diverged || tb.diverged) {
      s.diverged = true;
      s.max_growth_rate = kInf;
      s.max_distance_ratio = kInf;
      continue;
    }
    const double dT = (ta.final_state - tb.final_state).norm();
    double max_ratio = 0.0;
    for (int k = 0; k < ta.steps(); ++k)
      max_ratio = std::max(max_ratio, (ta.states.col(k) - tb.states.col(k)).norm() / d0);
    max_ratio = std::max(max_ratio, dT / d0);
    const double rate = horizon > 0 ? std::pow(dT / d0, 1.0 / horizon) : 1.0;
    s.max_growth_rate = std::max(s.max_growth_rate, rate);
    s.max_distance_ratio = std::max(s.max_distance_ratio, max_ratio);
    if (!std::isfinite(max_ratio) || max_ratio > 1e6) s.diverged = true;

    if (cert) {
      const auto trace = empirical_contraction_test(m, *cert, u, xa, xb);
      const double v = trace.diverged ? kInf : trace.max_ratio;
      s.max_v_ratio = std::max(s.max_v_ratio.value_or(0.0), v);
    }
  }
  return s;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ComparisonTable compare(const std::vector<EvalReport>& reports) {
  ComparisonTable t;
  std::map<std::pair<std::string, int>, std::vector<const EvalReport*>> groups;
  for (const auto& r : reports) groups[{r.model_kind, r.layers}].push_back(&r);

  auto run_id = [](const EvalReport& r) {
    return r.model_kind + " L=" + std::to_string(r.layers) + " fold=" + std::to_string(r.fold) +
           " seed=" + std::to_string(r.seed);
  };

  for (auto& [key, group] : groups) {
    KindSummary row;
    row.model_kind = key.first;
    row.layers = key.second;
    row.count = static_cast<int>(group.size());
    std::vector<double> values;
    for (const auto* r : group) {
      if (r->diverged) {
        ++row.unstable;
        row.unstable_runs.push_back(run_id(*r));
      } else {
        values.push_back(r->mean_nse);
      }
    }
    std::sort(row.unstable_runs.begin(), row.unstable_runs.end());
    if (!values.empty()) {
      row.q1 = quantile(values, 0.25);
      row.median = quantile(values, 0.5);
      row.q3 = quantile(values, 0.75);
    }
    t.rows.push_back(std::move(row));
  }

  using Key = std::tuple<int, int, std::uint64_t>;
  std::map<Key, double> ci, sr;
  auto score = [](const EvalReport& r) { return r.diverged ? kInf : r.mean_nse; };
  for (const auto& r : reports) {
    const Key k{r.layers, r.fold, r.seed};
    if (r.model_kind == "ci-rnn") ci[k] = score(r);
    if (r.model_kind == "s-rnn") sr[k] = score(r);
  }
  std::map<int, std::pair<int, double>> wins;  // layers -> (pairs, wins)
  for (const auto& [k, a] : ci) {
    auto it = sr.find(k);
    if (it == sr.end()) continue;
    const double b = it->second;
    auto& w = wins[std::get<0>(k)];
    ++w.first;
    if (a < b)
      w.second += 1.0;
    else if (a == b)
      w.second += 0.5;
  }
  std::set<int> layer_counts;
  for (const auto& r : reports) layer_counts.insert(r.layers);
  for (int L : layer_counts) {
    ComparisonTable::WinRate wr;
    wr.layers = L;
    auto it = wins.find(L);
    if (it != wins.end() && it->second.first > 0) {
      wr.pairs = it->second.first;
      wr.rate = it->second.second / it->second.first;
    }
    t.win_rates.push_back(wr);
  }

  std::map<std::tuple<int, std::string, int>, ComparisonTable::FoldCell> cells;
  for (const auto& r : reports) {
    auto& c = cells[{r.fold, r.model_kind, r.layers}];
    c.fold = r.fold;
    c.model_kind = r.model_kind;
    c.layers = r.layers;
    ++c.runs;
    if (r.diverged)
      c.unbounded = true;
    else
      c.mean_nse += r.mean_nse;
  }
  for (auto& [key, c] : cells) {
    c.mean_nse = c.unbounded ? kInf : c.mean_nse / c.runs;
    t.per_fold.push_back(c);
  }
  return t;
}

std::string report_to_json(const EvalReport& r) {
  json nse_list = json::array();
  for (double v : r.channel_nse) nse_list.push_back(finite_or_null(v));
  json j = {{"format", "cirnn-eval"},
            {"version", 1},
            {"model_kind", r.model_kind},
            {"layers", r.layers},
            {"fold", r.fold},
            {"seed", r.seed},
            {"split", r.split},
            {"nse", nse_list},
            {"mean_nse", finite_or_null(r.mean_nse)},
            {"mse", finite_or_null(r.mse)},
            {"unbounded_nse", r.diverged},
            {"nse_overflow_guard", kNseOverflow}};
  if (r.contraction.tested)
    j["contraction"] = {{"max_ratio", finite_or_null(r.contraction.max_ratio)},
                        {"lambda", r.contraction.lambda},
                        {"passes", r.contraction.passes}};
  return detail::dump(j);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "cirnn-eval") throw DataError("not an eval report");
    r.model_kind = j.at("model_kind").get<std::string>();
    r.layers = j.at("layers").get<int>();
    r.fold = j.at("fold").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.split = j.value("split", std::string("test"));
    const auto& n = j.at("nse");
    r.channel_nse.resize(static_cast<Eigen::Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) r.channel_nse(static_cast<Eigen::Index>(i)) = number_or_inf(n[i]);
    r.mean_nse = number_or_inf(j.at("mean_nse"));
    r.mse = number_or_inf(j.at("mse"));
    r.diverged = j.at("unbounded_nse").get<bool>();
    if (j.contains("contraction")) {
      const auto& c = j["contraction"];
      r.contraction.tested = true;
      r.contraction.max_ratio = number_or_inf(c.at("max_ratio"));
      r.contraction.lambda = c.at("lambda").get<double>();
      r.contraction.passes = c.at("passes").get<bool>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
  return r;
}

std::string comparison_to_text(const ComparisonTable& t) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "kind layers runs unstable q1 median q3\n";
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    s << std::setprecision(6);
    if (v)
      s << *v;
    else
      s << "-";
    return s.str();
  };
  for (const auto& r : t.rows)
    out << r.model_kind << ' ' << r.layers << ' ' << r.count << ' ' << r.unstable << ' ' << opt(r.q1)
        << ' ' << opt(r.median) << ' ' << opt(r.q3) << '\n';
  out << "\nwin rate ci-rnn vs s-rnn (lower mean NSE wins, ties 0.5)\n";
  out << "layers pairs rate\n";
  for (const auto& w : t.win_rates) out << w.layers << ' ' << w.pairs << ' ' << opt(w.rate) << '\n';
  out << "\nper-fold mean NSE\n";
  out << "fold kind layers runs mean_nse\n";
  for (const auto& c : t.per_fold) {
    out << c.fold << ' ' << c.model_kind << ' ' << c.layers << ' ' << c.runs << ' ';
    if (c.unbounded)
      out << "unbounded";
    else
      out << c.mean_nse;
    out << '\n';
  }
  bool any = false;
  for (const auto& r : t.rows)
    for (const auto& id : r.unstable_runs) {
      if (!any) out << "\nunbounded NSE\n";
      any = true;
      out << id << '\n';
    }
  return out.str();
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::vector<const EvalReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const EvalReport* a, const EvalReport* b) {
    return std::tie(a->model_kind, a->layers, a->fold, a->seed) <
           std::tie(b->model_kind, b->layers, b->fold, b->seed);
  });
  std::ostringstream out;
  out << std::setprecision(17);
  out << "model_kind,layers,fold,seed,mean_nse,mse,unbounded\n";
  for (const auto* r : sorted)
    out << r->model_kind << ',' << r->layers << ',' << r->fold << ',' << r->seed << ','
        << r->mean_nse << ',' << r->mse << ',' << (r->diverged ? 1 : 0) << '\n';
  return out.str();
}

std::string stress_to_json(const StressSummary& s) {
  json j = {{"n_pairs", s.n_pairs},
            {"horizon", s.horizon},
            {"max_growth_rate", finite_or_null(s.max_growth_rate)},
            {"max_distance_ratio", finite_or_null(s.max_distance_ratio)},
            {"diverged", s.diverged},
            {"lambda", s.lambda}};
  if (s.max_v_ratio) j["max_v_ratio"] = finite_or_null(*s.max_v_ratio);
  return detail::dump(j);
}

}  // namespace cirnn
