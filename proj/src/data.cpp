#include "cirnn/data.hpp"

#include "cirnn/checkpoint.hpp"
#include "json_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace cirnn {

namespace fs = std::filesystem;
using detail::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split label '" + s + "'");
}

std::vector<int> SeqDataset::indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (sequences[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<Sequence> SeqDataset::subset(Split s) const {
  std::vector<Sequence> out;
  for (const auto& seq : sequences)
    if (seq.split == s) out.push_back(seq);
  return out;
}

void SeqDataset::validate() const {
  for (const auto& s : sequences) {
    if (s.inputs.rows() != n_u() || s.outputs.rows() != n_y())
      throw DataError("sequence '" + s.name + "': channel count does not match dataset");
    if (s.inputs.cols() != s.outputs.cols())
      throw DataError("sequence '" + s.name + "': input and output lengths differ");
  }
}

ChenConfig ChenConfig::desk() { return ChenConfig{}; }

ChenConfig ChenConfig::paper() {
  ChenConfig c;
  c.T = 500;
  c.n_seq = 20;
  return c;
}

double chen_step(double gain, double x1, double x2, double u1, double u2, double w) {
  const double g = std::exp(-x1 * x1);
  return gain * ((0.8 - 0.5 * g) * x1 - (0.3 + 0.9 * g) * x2 + u1 + 0.2 * u2 + 0.1 * u1 * u2 + w);
}

SeqDataset generate_chen(const ChenConfig& cfg) {
  if (cfg.noise_variance < 0 || cfg.input_variance < 0)
    throw DataError("chen: variances must be non-negative");
  if (cfg.T < 1 || cfg.n_seq < 1) throw DataError("chen: T and n_seq must be positive");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double su = std::sqrt(cfg.input_variance);
  const double sw = std::sqrt(cfg.noise_variance);

  SeqDataset ds;
  ds.input_names = {"u"};
  ds.output_names = {"y"};
  for (int s = 0; s < cfg.n_seq; ++s) {
    Sequence seq;
    seq.name = "chen_" + std::to_string(s);
    seq.inputs.resize(1, cfg.T);
    seq.outputs.resize(1, cfg.T);
    for (int k = 0; k < cfg.T; ++k) seq.inputs(0, k) = su * normal(rng);
    double x1 = 0, x2 = 0, u1 = 0, u2 = 0;
    for (int k = 0; k < cfg.T; ++k) {
      const double x = chen_step(cfg.gain, x1, x2, u1, u2, sw * normal(rng));
      seq.outputs(0, k) = x;
      x2 = x1;
      x1 = x;
      u2 = u1;
      u1 = seq.inputs(0, k);
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, const fs::path& path, int row) {
  double v = 0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    if (cell == "nan" || cell == "NaN") return std::numeric_limits<double>::quiet_NaN();
    throw DataError(path.string() + ": row " + std::to_string(row) + ": cannot parse '" + cell + "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

SeqDataset load_timeseries(const fs::path& path, const std::vector<std::string>& input_channels,
                           const std::vector<std::string>& output_channels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_row(trim(line));
      break;
    }
  }
  if (header.empty()) throw DataError(path.string() + ": empty file");

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path.string() + ": missing channel '" + name + "'");
    return static_cast<int>(it - header.begin());
  };
  std::vector<int> in_cols, out_cols;
  for (const auto& c : input_channels) in_cols.push_back(column_of(c));
  for (const auto& c : output_channels) out_cols.push_back(column_of(c));

  std::vector<std::vector<double>> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split_row(line);
    if (cells.size() != header.size())
      throw DataError(path.string() + ": row " + std::to_string(row_no) + " has " +
                      std::to_string(cells.size()) + " fields, header has " +
                      std::to_string(header.size()));
    std::vector<double> values;
    values.reserve(cells.size());
    for (const auto& c : cells) values.push_back(parse_number(c, path, row_no));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  Sequence seq;
  seq.name = path.stem().string();
  const int T = static_cast<int>(rows.size());
  seq.inputs.resize(static_cast<Eigen::Index>(in_cols.size()), T);
  seq.outputs.resize(static_cast<Eigen::Index>(out_cols.size()), T);
  for (int k = 0; k < T; ++k) {
    for (std::size_t i = 0; i < in_cols.size(); ++i) seq.inputs(i, k) = rows[k][in_cols[i]];
    for (std::size_t i = 0; i < out_cols.size(); ++i) seq.outputs(i, k) = rows[k][out_cols[i]];
  }

  SeqDataset ds;
  ds.input_names = input_channels;
  ds.output_names = output_channels;
  ds.sequences.push_back(std::move(seq));
  return ds;
}

std::vector<FoldSplit> kfold(const SeqDataset& ds, int k) {
  std::vector<int> pool;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i)
    if (ds.sequences[i].split != Split::test) pool.push_back(static_cast<int>(i));
  if (k < 2) throw DataError("kfold: k must be at least 2");
  const int n = static_cast<int>(pool.size());
  if (k > n)
    throw DataError("kfold: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                    " available sequences");

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    const int lo = f * n / k;
    const int hi = (f + 1) * n / k;
    for (int i = 0; i < n; ++i) {
      if (i >= lo && i < hi)
        folds[f].val.push_back(pool[i]);
      else
        folds[f].train.push_back(pool[i]);
    }
  }
  return folds;
}

SeqDataset apply_fold(const SeqDataset& ds, const FoldSplit& fold) {
  SeqDataset out = ds;
  out.stats.reset();
  for (int i : fold.train) out.sequences.at(i).split = Split::train;
  for (int i : fold.val) out.sequences.at(i).split = Split::val;
  return out;
}

void hold_out_validation(SeqDataset& ds, double fraction) {
  auto train = ds.indices(Split::train);
  if (train.size() < 2) throw DataError("validation hold-out needs at least two train sequences");
  const int n = static_cast<int>(train.size());
  int n_val = std::max(1, static_cast<int>(std::lround(fraction * n)));
  n_val = std::min(n_val, n - 1);
  for (int i = n - n_val; i < n; ++i) ds.sequences[train[i]].split = Split::val;
}

NormStats compute_norm_stats(const SeqDataset& ds) {
  const auto train = ds.indices(Split::train);
  if (train.empty()) throw DataError("normalize: train split is empty");

  auto channel_stats = [&](bool inputs, int channels, Vec& mean, Vec& scale,
                           const std::vector<std::string>& names, std::vector<std::string>& warn) {
    mean = Vec::Zero(channels);
    scale = Vec::Ones(channels);
    for (int c = 0; c < channels; ++c) {
      double sum = 0;
      long count = 0;
      for (int i : train) {
        const Mat& m = inputs ? ds.sequences[i].inputs : ds.sequences[i].outputs;
        sum += m.row(c).sum();
        count += m.cols();
      }
      const double mu = count > 0 ? sum / static_cast<double>(count) : 0.0;
      double ss = 0;
      for (int i : train) {
        const Mat& m = inputs ? ds.sequences[i].inputs : ds.sequences[i].outputs;
        ss += (m.row(c).array() - mu).square().sum();
      }
      double sd = count > 0 ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
      if (!(sd >= 1e-12)) {
        warn.push_back("channel '" + names[c] + "' has zero variance; scale floored at 1e-12");
        sd = 1e-12;
      }
      mean(c) = mu;
      scale(c) = sd;
    }
  };

  NormStats st;
  channel_stats(true, ds.n_u(), st.u_mean, st.u_scale, ds.input_names, st.warnings);
  channel_stats(false, ds.n_y(), st.y_mean, st.y_scale, ds.output_names, st.warnings);
  return st;
}

SeqDataset apply_norm(const SeqDataset& ds, const NormStats& st) {
  SeqDataset out = ds;
  for (auto& s : out.sequences) {
    s.inputs = ((s.inputs.colwise() - st.u_mean).array().colwise() / st.u_scale.array()).matrix();
    s.outputs = ((s.outputs.colwise() - st.y_mean).array().colwise() / st.y_scale.array()).matrix();
  }
  out.stats = st;
  return out;
}

SeqDataset normalize(const SeqDataset& ds) { return apply_norm(ds, compute_norm_stats(ds)); }

Mat denormalize_outputs(const NormStats& st, const Mat& y) {
  return ((y.array().colwise() * st.y_scale.array()).colwise() + st.y_mean.array()).matrix();
}

SeqDataset denormalize(const SeqDataset& ds) {
  if (!ds.stats) return ds;
  const auto& st = *ds.stats;
  SeqDataset out = ds;
  for (auto& s : out.sequences) {
    s.inputs = ((s.inputs.array().colwise() * st.u_scale.array()).colwise() + st.u_mean.array()).matrix();
    s.outputs = denormalize_outputs(st, s.outputs);
  }
  out.stats.reset();
  return out;
}

std::string norm_stats_to_json(const NormStats& st) {
  json j = {{"format", "cirnn-normalization"},
            {"version", 1},
            {"u_mean", detail::vector_to_json(st.u_mean)},
            {"u_scale", detail::vector_to_json(st.u_scale)},
            {"y_mean", detail::vector_to_json(st.y_mean)},
            {"y_scale", detail::vector_to_json(st.y_scale)},
            {"warnings", st.warnings}};
  return detail::dump(j);
}

NormStats norm_stats_from_json(const std::string& text) {
  NormStats st;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "cirnn-normalization")
      throw DataError("not a normalization file");
    st.u_mean = detail::vector_from_json(j.at("u_mean"));
    st.u_scale = detail::vector_from_json(j.at("u_scale"));
    st.y_mean = detail::vector_from_json(j.at("y_mean"));
    st.y_scale = detail::vector_from_json(j.at("y_scale"));
    st.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("normalization: ") + e.what());
  }
  if (st.u_mean.size() != st.u_scale.size() || st.y_mean.size() != st.y_scale.size())
    throw DataError("normalization: mean and scale lengths differ");
  return st;
}

void write_sequence_csv(const Sequence& s, const std::vector<std::string>& input_names,
                        const std::vector<std::string>& output_names, const fs::path& path) {
  std::ostringstream out;
  bool first = true;
  for (const auto& n : input_names) out << (first ? "" : ",") << n, first = false;
  for (const auto& n : output_names) out << (first ? "" : ",") << n, first = false;
  out << '\n';
  for (int k = 0; k < s.length(); ++k) {
    first = true;
    for (Eigen::Index i = 0; i < s.inputs.rows(); ++i)
      out << (first ? "" : ",") << format_number(s.inputs(i, k)), first = false;
    for (Eigen::Index i = 0; i < s.outputs.rows(); ++i)
      out << (first ? "" : ",") << format_number(s.outputs(i, k)), first = false;
    out << '\n';
  }
  write_text_file(path, out.str());
}

void save_dataset(const SeqDataset& ds, const fs::path& dir, bool normalize_flag) {
  ds.validate();
  json seqs = json::array();
  for (const auto& s : ds.sequences) {
    const std::string file = s.name + ".csv";
    write_sequence_csv(s, ds.input_names, ds.output_names, dir / file);
    seqs.push_back({{"file", file}, {"split", to_string(s.split)}});
  }
  json j = {{"format", "cirnn-dataset"},
            {"version", 1},
            {"inputs", ds.input_names},
            {"outputs", ds.output_names},
            {"normalize", normalize_flag},
            {"sequences", seqs}};
  write_text_file(dir / "manifest.json", detail::dump(j));
}

Manifest load_manifest(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  Manifest m;
  try {
    if (j.value("format", std::string{}) != "cirnn-dataset")
      throw DataError(manifest_path.string() + ": not a dataset manifest");
    const auto inputs = j.at("inputs").get<std::vector<std::string>>();
    const auto outputs = j.at("outputs").get<std::vector<std::string>>();
    m.normalize = j.value("normalize", true);
    m.dataset.input_names = inputs;
    m.dataset.output_names = outputs;
    const fs::path base = manifest_path.parent_path();
    for (const auto& entry : j.at("sequences")) {
      auto part = load_timeseries(base / entry.at("file").get<std::string>(), inputs, outputs);
      Sequence s = std::move(part.sequences.front());
      s.split = parse_split(entry.value("split", std::string("train")));
      m.dataset.sequences.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (m.dataset.sequences.empty()) throw DataError(manifest_path.string() + ": no sequences listed");
  m.dataset.validate();
  return m;
}

}  // namespace cirnn
