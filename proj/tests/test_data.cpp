#include "cirnn/data.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

using namespace cirnn;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

SeqDataset toy_dataset(int n) {
  SeqDataset ds;
  ds.input_names = {"u"};
  ds.output_names = {"y1", "y2"};
  for (int i = 0; i < n; ++i) {
    Sequence s;
    s.name = "s" + std::to_string(i);
    s.inputs = Mat::Constant(1, 4, i);
    s.outputs = Mat::Constant(2, 4, 2.0 * i);
    s.outputs(1, 0) += 1.0;
    ds.sequences.push_back(s);
  }
  return ds;
}

}  // namespace

TEST_CASE("chen step oracle") {
  CHECK(chen_step(1.4, 0.5, -0.3, 1.0, -1.0, 0.1) == doctest::Approx(1.8278064219259993).epsilon(1e-14));
  CHECK(chen_step(1.4, 0.0, 0.0, 1.0, 0.0, 0.0) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(chen_step(1.4, 0.0, 0.0, 0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("chen sizes and labels") {
  const auto desk = generate_chen(ChenConfig::desk());
  CHECK(desk.sequences.size() == 4);
  CHECK(desk.sequences[0].length() == 250);
  CHECK(desk.n_u() == 1);
  CHECK(desk.n_y() == 1);
  const auto paper = generate_chen(ChenConfig::paper());
  CHECK(paper.sequences.size() == 20);
  CHECK(paper.sequences[0].length() == 500);
  for (const auto& s : desk.sequences) {
    CHECK(s.split == Split::train);
    CHECK(s.outputs.allFinite());
  }
}

TEST_CASE("chen is reproducible from its seed") {
  ChenConfig c;
  c.seed = 77;
  const auto a = generate_chen(c);
  const auto b = generate_chen(c);
  c.seed = 78;
  const auto other = generate_chen(c);
  CHECK(a.sequences[2].outputs == b.sequences[2].outputs);
  CHECK(a.sequences[2].inputs == b.sequences[2].inputs);
  CHECK(a.sequences[0].inputs != other.sequences[0].inputs);
}

TEST_CASE("chen trajectories follow the recursion with the stated noise variance") {
  ChenConfig c;
  c.T = 2000;
  c.n_seq = 5;
  c.seed = 3;
  const auto ds = generate_chen(c);
  double ss = 0.0, uu = 0.0;
  long n = 0;
  for (const auto& s : ds.sequences) {
    const auto& x = s.outputs;
    const auto& u = s.inputs;
    for (int k = 0; k < s.length(); ++k) {
      const double x1 = k >= 1 ? x(0, k - 1) : 0.0, x2 = k >= 2 ? x(0, k - 2) : 0.0;
      const double u1 = k >= 1 ? u(0, k - 1) : 0.0, u2 = k >= 2 ? u(0, k - 2) : 0.0;
      const double w = (x(0, k) - chen_step(c.gain, x1, x2, u1, u2, 0.0)) / c.gain;
      ss += w * w;
      uu += u(0, k) * u(0, k);
      ++n;
    }
  }
  CHECK(ss / n == doctest::Approx(c.noise_variance).epsilon(0.05));
  CHECK(uu / n == doctest::Approx(c.input_variance).epsilon(0.05));

  ChenConfig quiet = c;
  quiet.noise_variance = 0.0;
  const auto q = generate_chen(quiet);
  const auto& s = q.sequences[0];
  for (int k = 2; k < 50; ++k)
    CHECK(s.outputs(0, k) == doctest::Approx(chen_step(c.gain, s.outputs(0, k - 1), s.outputs(0, k - 2),
                                                       s.inputs(0, k - 1), s.inputs(0, k - 2), 0.0))
                                 .epsilon(1e-14));
}

TEST_CASE("chen rejects bad configurations") {
  ChenConfig c;
  c.T = 0;
  CHECK_THROWS_AS(generate_chen(c), DataError);
  c = ChenConfig{};
  c.noise_variance = -1.0;
  CHECK_THROWS_AS(generate_chen(c), DataError);
}

TEST_CASE("load_timeseries examples") {
  const auto dir = testing::scratch_dir("timeseries");
  write_file(dir / "a.csv", "t,u,y,z\n0,1.5,2,9\n1,-0.5,3e-1,9\n2,0,4,9\n");
  const auto ds = load_timeseries(dir / "a.csv", {"u"}, {"z", "y"});
  REQUIRE(ds.sequences.size() == 1);
  const auto& s = ds.sequences[0];
  CHECK(s.length() == 3);
  CHECK(s.inputs(0, 0) == 1.5);
  CHECK(s.inputs(0, 1) == -0.5);
  CHECK(s.outputs(0, 2) == 9.0);
  CHECK(s.outputs(1, 1) == 0.3);
  CHECK(ds.output_names == std::vector<std::string>{"z", "y"});
}

TEST_CASE("load_timeseries errors") {
  const auto dir = testing::scratch_dir("timeseries_bad");
  write_file(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_timeseries(dir / "empty.csv", {"u"}, {"y"}), DataError);
  write_file(dir / "ragged.csv", "u,y\n1,2\n3\n");
  CHECK_THROWS_AS(load_timeseries(dir / "ragged.csv", {"u"}, {"y"}), DataError);
  write_file(dir / "text.csv", "u,y\n1,abc\n");
  CHECK_THROWS_AS(load_timeseries(dir / "text.csv", {"u"}, {"y"}), DataError);
  write_file(dir / "ok.csv", "u,y\n1,2\n");
  try {
    load_timeseries(dir / "ok.csv", {"u"}, {"speed"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("speed") != std::string::npos);
  }
  CHECK_THROWS_AS(load_timeseries(dir / "missing.csv", {"u"}, {"y"}), DataError);
}

TEST_CASE("kfold examples") {
  const auto ds = toy_dataset(9);
  const auto folds = kfold(ds, 9);
  REQUIRE(folds.size() == 9);
  for (int f = 0; f < 9; ++f) {
    CHECK(folds[f].val == std::vector<int>{f});
    CHECK(folds[f].train.size() == 8);
  }
  const auto three = kfold(ds, 3);
  CHECK(three[1].val == std::vector<int>{3, 4, 5});
  CHECK_THROWS_AS(kfold(ds, 1), DataError);
  CHECK_THROWS_AS(kfold(ds, 10), DataError);
}

TEST_CASE("kfold partitions the non-test sequences") {
  for (int n = 2; n <= 13; ++n) {
    auto ds = toy_dataset(n + 1);
    ds.sequences.back().split = Split::test;
    for (int k = 2; k <= n; ++k) {
      const auto folds = kfold(ds, k);
      std::multiset<int> seen;
      for (const auto& f : folds) {
        CHECK_FALSE(f.val.empty());
        CHECK(f.val.size() + f.train.size() == static_cast<std::size_t>(n));
        std::set<int> tr(f.train.begin(), f.train.end());
        for (int v : f.val) CHECK(tr.count(v) == 0);
        seen.insert(f.val.begin(), f.val.end());
      }
      CHECK(seen.size() == static_cast<std::size_t>(n));
      CHECK(std::set<int>(seen.begin(), seen.end()).size() == static_cast<std::size_t>(n));
      CHECK(seen.count(n) == 0);
    }
  }
}

TEST_CASE("apply_fold relabels and keeps test") {
  auto ds = toy_dataset(4);
  ds.sequences[3].split = Split::test;
  const auto f = kfold(ds, 3)[0];
  const auto out = apply_fold(ds, f);
  CHECK(out.sequences[0].split == Split::val);
  CHECK(out.sequences[1].split == Split::train);
  CHECK(out.sequences[3].split == Split::test);
}

TEST_CASE("hold_out_validation takes the last train sequences") {
  auto ds = toy_dataset(10);
  hold_out_validation(ds, 0.1);
  CHECK(ds.indices(Split::val) == std::vector<int>{9});
  auto two = toy_dataset(2);
  hold_out_validation(two, 0.9);
  CHECK(two.indices(Split::val).size() == 1);
  auto one = toy_dataset(1);
  CHECK_THROWS_AS(hold_out_validation(one, 0.5), DataError);
}

TEST_CASE("normalize examples") {
  auto ds = toy_dataset(3);
  ds.sequences[2].split = Split::val;
  const auto n = normalize(ds);
  REQUIRE(n.stats);
  // Train inputs are 0 and 1 (four steps each): mean 0.5, population sd 0.5.
  CHECK(n.stats->u_mean(0) == doctest::Approx(0.5));
  CHECK(n.stats->u_scale(0) == doctest::Approx(0.5));
  CHECK(n.sequences[0].inputs(0, 0) == doctest::Approx(-1.0));
  CHECK(n.sequences[2].inputs(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("normalization statistics ignore validation and test data") {
  auto ds = toy_dataset(4);
  ds.sequences[2].split = Split::val;
  ds.sequences[3].split = Split::test;
  const auto a = compute_norm_stats(ds);
  ds.sequences[2].outputs *= 1000.0;
  ds.sequences[3].inputs.array() += 50.0;
  const auto b = compute_norm_stats(ds);
  CHECK(a.u_mean == b.u_mean);
  CHECK(a.y_scale == b.y_scale);
}

TEST_CASE("normalization round-trips") {
  auto ds = generate_chen(ChenConfig::desk());
  hold_out_validation(ds, 0.25);
  const auto n = normalize(ds);
  const auto back = denormalize(n);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK((back.sequences[i].outputs - ds.sequences[i].outputs).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.sequences[i].inputs - ds.sequences[i].inputs).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const auto st = norm_stats_from_json(norm_stats_to_json(*n.stats));
  CHECK(st.u_mean == n.stats->u_mean);
  CHECK(st.y_scale == n.stats->y_scale);
}

TEST_CASE("constant channels get a floored scale and a warning") {
  auto ds = toy_dataset(1);
  ds.sequences.push_back(ds.sequences[0]);
  const auto st = compute_norm_stats(ds);
  CHECK(st.u_scale(0) == 1e-12);
  CHECK_FALSE(st.warnings.empty());
}

TEST_CASE("manifest round-trip") {
  const auto dir = testing::scratch_dir("manifest");
  auto ds = generate_chen(ChenConfig::desk());
  ds.sequences[3].split = Split::test;
  save_dataset(ds, dir, false);
  const auto m = load_manifest(dir / "manifest.json");
  CHECK_FALSE(m.normalize);
  REQUIRE(m.dataset.sequences.size() == 4);
  CHECK(m.dataset.sequences[3].split == Split::test);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(m.dataset.sequences[i].inputs == ds.sequences[i].inputs);
    CHECK(m.dataset.sequences[i].outputs == ds.sequences[i].outputs);
  }
  write_file(dir / "bad.json", "{\"format\": \"something\"}");
  CHECK_THROWS_AS(load_manifest(dir / "bad.json"), DataError);
}

TEST_CASE("split names") {
  for (auto s : {Split::train, Split::val, Split::test}) CHECK(parse_split(to_string(s)) == s);
  CHECK(parse_split("validation") == Split::val);
  CHECK_THROWS_AS(parse_split("holdout"), DataError);
}
