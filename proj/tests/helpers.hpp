#pragma once

#include "cirnn/contraction.hpp"
#include "cirnn/models.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testing {

using cirnn::Mat;
using cirnn::Vec;

inline Mat gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  return Mat::NullaryExpr(r, c, [&] { return n(rng); });
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Random layer stack with every width in [lo, hi] and n_0 = n_L.
inline cirnn::LayerDims random_dims(std::mt19937_64& rng, int layers, int lo, int hi, int n_u = 2,
                                    int n_y = 2) {
  cirnn::LayerDims d;
  d.n_x = uniform_int(rng, lo, hi);
  d.n_u = n_u;
  d.n_y = n_y;
  d.widths.push_back(d.n_x);
  for (int l = 1; l < layers; ++l) d.widths.push_back(uniform_int(rng, lo, hi));
  d.widths.push_back(d.n_x);
  return d;
}

// E_l = I + 0.3 G / sqrt(n), well conditioned but far from the identity.
inline cirnn::ImplicitParams random_implicit(std::mt19937_64& rng, const cirnn::LayerDims& d) {
  auto p = cirnn::ImplicitParams::identity(d);
  for (std::size_t l = 0; l < p.E.size(); ++l) {
    const auto n = p.E[l].rows();
    p.E[l] += gaussian(rng, n, n, 0.3 / std::sqrt(static_cast<double>(n)));
  }
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    p.W[l] = gaussian(rng, p.W[l].rows(), p.W[l].cols(), 0.8 / std::sqrt(static_cast<double>(p.W[l].cols())));
    p.B[l] = gaussian(rng, p.B[l].rows(), p.B[l].cols(), 0.5);
    p.b[l] = gaussian(rng, p.b[l].size(), 1, 0.1);
  }
  p.C = gaussian(rng, p.C.rows(), p.C.cols());
  p.D = gaussian(rng, p.D.rows(), p.D.cols());
  return p;
}

inline cirnn::Mat example1_matrix() {
  cirnn::Mat A(2, 2);
  A << 0.8, 1.0, 0.0, 0.8;
  return A;
}

// Example 1 as a one-layer explicit model with one input and both states observed.
inline cirnn::Model example1_model(cirnn::Activation a = cirnn::Activation::relu) {
  auto p = cirnn::ExplicitParams::zeros(cirnn::LayerDims::uniform(2, 1, 2, 1, 2));
  p.A[0] = example1_matrix();
  p.C = cirnn::Mat::Identity(2, 2);
  cirnn::Model m;
  m.kind = cirnn::ModelKind::rnn;
  m.activation = a;
  m.params = p;
  return m;
}

inline cirnn::Certificate example1_certificate(double p1 = 1.0, double p2 = 10.0) {
  Vec m(2);
  m << p1, p2;
  return cirnn::Certificate::linked({m}, 1.0, 0.0, cirnn::MetricForm::direct);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cirnn_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
