#include "cirnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace cirnn {

namespace {

constexpr double kSingularRcond = 1e-13;
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::PartialPivLU<Mat> factorize(const Mat& e, int layer) {
  Eigen::PartialPivLU<Mat> lu(e);
  if (!(lu.rcond() > kSingularRcond))
    throw SingularMatrixError("E_" + std::to_string(layer) + " is singular during training", layer);
  return lu;
}

template <class T>
void set_zero(T& t) {
  t.setZero();
}

Certificate bundle_certificate(const Bundle& b) {
  return Certificate::linked(b.P, b.lambda, b.epsilon, MetricForm::inverse);
}

ImplicitParams implicit_view(const Bundle& b) {
  ImplicitParams p;
  p.E = b.E;
  p.W = b.A;
  p.B = b.B;
  p.b = b.b;
  p.C = b.C;
  p.D = b.D;
  return p;
}

// Per time step cache for the backward pass.
struct StepCache {
  std::vector<Vec> h;      // input of each layer
  std::vector<Vec> slope;  // activation slope at each layer's pre-activation
};

struct SeqForward {
  std::vector<StepCache> steps;
  Mat states;  // x_0..x_T
  Mat err;     // y_k - target_k
  bool diverged = false;
};

class Forward {
 public:
  explicit Forward(const Bundle& b) : b_(b), implicit_(is_implicit(b.kind)) {
    if (implicit_) {
      const int L = b.layers();
      lu_.reserve(static_cast<std::size_t>(L));
      lut_.reserve(static_cast<std::size_t>(L));
      for (int l = 0; l < L; ++l) {
        lu_.push_back(factorize(b.E[l], l));
        lut_.push_back(factorize(b.E[l].transpose(), l));
      }
    }
  }

  SeqForward run(const Sequence& s, const Vec& x0, bool cache) const {
    const int T = s.length();
    const int L = b_.layers();
    SeqForward f;
    f.states.resize(x0.size(), T + 1);
    f.err.resize(s.outputs.rows(), T);
    if (cache) f.steps.resize(static_cast<std::size_t>(T));
    Vec x = x0;
    f.states.col(0) = x;
    for (int k = 0; k < T; ++k) {
      const auto u = s.inputs.col(k);
      f.err.col(k) = b_.C * x + b_.D * u - s.outputs.col(k);
      Vec z = x;
      for (int l = 0; l < L; ++l) {
        Vec h = implicit_ ? Vec(lu_[l].solve(z)) : z;
        Vec pre = b_.A[l] * h + b_.B[l] * u + b_.b[l];
        z = activation_apply(b_.activation, pre);
        if (cache) {
          f.steps[k].h.push_back(std::move(h));
          f.steps[k].slope.push_back(activation_slope_vector(b_.activation, pre));
        }
      }
      x = std::move(z);
      if (!x.allFinite() || !f.err.col(k).allFinite()) {
        f.diverged = true;
        return f;
      }
      f.states.col(k + 1) = x;
    }
    return f;
  }

  // Accumulates d(sum of squared errors * scale) into g. Returns d/dx0.
  Vec backward(const Sequence& s, const SeqForward& f, double scale, Bundle& g) const {
    const int T = s.length();
    const int L = b_.layers();
    Vec gx_next = Vec::Zero(f.states.rows());
    for (int k = T - 1; k >= 0; --k) {
      const auto u = s.inputs.col(k);
      const Vec e = 2.0 * scale * f.err.col(k);
      const StepCache& c = f.steps[k];
      Vec gz = gx_next;
      for (int l = L - 1; l >= 0; --l) {
        const Vec gpre = c.slope[l].cwiseProduct(gz);
        g.A[l].noalias() += gpre * c.h[l].transpose();
        g.B[l].noalias() += gpre * u.transpose();
        g.b[l] += gpre;
        Vec gh = b_.A[l].transpose() * gpre;
        if (implicit_) {
          gz = lut_[l].solve(gh);
          g.E[l].noalias() -= gz * c.h[l].transpose();
        } else {
          gz = std::move(gh);
        }
      }
      const auto x = f.states.col(k);
      g.C.noalias() += e * x.transpose();
      g.D.noalias() += e * u.transpose();
      gx_next = gz + b_.C.transpose() * e;
    }
    return gx_next;
  }

 private:
  const Bundle& b_;
  bool implicit_;
  std::vector<Eigen::PartialPivLU<Mat>> lu_;
  std::vector<Eigen::PartialPivLU<Mat>> lut_;
};

long scored_entries(const std::vector<Sequence>& seqs, const std::vector<int>& batch) {
  long n = 0;
  for (int i : batch) n += static_cast<long>(seqs.at(i).length()) * seqs.at(i).outputs.rows();
  return n;
}

// mu * ||c||^2 and its gradient (added into g when non-null).
double penalty_and_gradient(const Bundle& b, double mu, Bundle* g, double* c_inf) {
  if (!b.constrained()) {
    if (c_inf) *c_inf = 0.0;
    return 0.0;
  }
  const auto blocks = constraint_blocks(b);
  const int L = b.layers();
  double sum = 0.0, inf = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Mat& Lf = b.factors[i];
    Mat R = blocks[i].M - Lf * Lf.transpose();
    R.diagonal().array() -= b.epsilon;
    sum += R.squaredNorm();
    inf = std::max(inf, R.cwiseAbs().maxCoeff());
    if (!g) continue;

    const Mat G = 2.0 * mu * R;
    // Only the lower triangle is free; upper entries stay exactly zero.
    g->factors[i] -= ((4.0 * mu) * (R * Lf)).triangularView<Eigen::Lower>().toDenseMatrix();

    const int l = blocks[i].layer;
    const Eigen::Index n0 = b.A[l].cols();
    const Eigen::Index n1 = b.A[l].rows();
    const auto G11 = G.topLeftCorner(n0, n0);
    const auto G12 = G.topRightCorner(n0, n1);
    const auto G21 = G.bottomLeftCorner(n1, n0);
    const auto G22 = G.bottomRightCorner(n1, n1);
    g->A[l] += G21 + G12.transpose();
    if (b.kind == ModelKind::cirnn) {
      g->E[l] += G11 + G11.transpose();
      g->P[l] -= G11.diagonal();
      if (l + 1 < L)
        g->P[l + 1] += G22.diagonal();
      else
        g->P[0] += b.lambda * G22.diagonal();
    }
  }
  if (c_inf) *c_inf = inf;
  return mu * sum;
}

}  // namespace

double TrainConfig::lr_at(int epoch) const { return lr0 * std::pow(lr_decay, epoch); }

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string("train: ") + name + " must be positive");
  };
  positive(lr0, "lr0");
  positive(lr_decay, "lr_decay");
  positive(mu0, "mu0");
  positive(viol_tol, "viol_tol");
  positive(penalty_factor, "penalty_factor");
  positive(epsilon, "epsilon");
  positive(adam_eps, "adam_eps");
  if (patience < 1) throw std::invalid_argument("train: patience must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be positive");
  if (washout < 0) throw std::invalid_argument("train: washout must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("train: ADAM betas must lie in [0, 1)");
}

Bundle Bundle::zeros_like() const {
  Bundle z = *this;
  zip_tensors([](auto& t) { set_zero(t); }, z);
  for (auto& e : z.E) e.setZero();
  return z;
}

Model Bundle::model() const {
  Model m;
  m.kind = kind;
  m.activation = activation;
  if (is_implicit(kind)) {
    m.params = implicit_view(*this);
  } else {
    ExplicitParams p;
    p.A = A;
    p.B = B;
    p.b = b;
    p.C = C;
    p.D = D;
    m.params = std::move(p);
  }
  return m;
}

std::optional<Certificate> Bundle::certificate() const {
  if (kind == ModelKind::cirnn) return bundle_certificate(*this);
  if (kind == ModelKind::srnn) {
    std::vector<Vec> ones;
    for (const auto& a : A) ones.push_back(Vec::Ones(a.cols()));
    return Certificate::linked(std::move(ones), 1.0, epsilon, MetricForm::direct);
  }
  return std::nullopt;
}

Bundle make_bundle(const Model& m, const std::optional<Certificate>& cert, int n_train_sequences,
                   double epsilon) {
  Bundle b;
  b.kind = m.kind;
  b.activation = m.activation;
  b.epsilon = epsilon;
  if (is_implicit(m.kind)) {
    const auto& p = m.implicit_params();
    p.validate();
    b.A = p.W;
    b.E = p.E;
    b.B = p.B;
    b.b = p.b;
    b.C = p.C;
    b.D = p.D;
  } else {
    const auto& p = m.explicit_params();
    p.validate();
    b.A = p.A;
    b.B = p.B;
    b.b = p.b;
    b.C = p.C;
    b.D = p.D;
  }
  if (m.kind == ModelKind::cirnn) {
    if (!cert) throw std::invalid_argument("make_bundle: ci-rnn requires a certificate");
    if (cert->form != MetricForm::inverse || cert->layers() != b.layers())
      throw std::invalid_argument("make_bundle: certificate does not match the model");
    b.lambda = cert->lambda;
    b.P.assign(cert->P.begin(), cert->P.end() - 1);
  }
  if (b.constrained()) {
    for (const auto& block : constraint_blocks(b)) {
      Mat s = block.M;
      s.diagonal().array() -= epsilon;
      b.factors.push_back(psd_lower_factor(s));
    }
  }
  const Eigen::Index n_x = b.C.cols();
  b.x0.assign(static_cast<std::size_t>(n_train_sequences), Vec::Zero(n_x));
  return b;
}

std::vector<LmiBlock> constraint_blocks(const Bundle& b) {
  std::vector<LmiBlock> out;
  if (b.kind == ModelKind::cirnn) {
    const ImplicitParams p = implicit_view(b);
    const Certificate c = bundle_certificate(b);
    for (int l = 0; l < b.layers(); ++l) out.push_back(assemble_lmi(p, c, l));
  } else if (b.kind == ModelKind::srnn) {
    for (int l = 0; l < b.layers(); ++l) out.push_back(assemble_spectral_lmi(b.A[l], l));
  }
  return out;
}

Vec constraint_residual(const Bundle& b) {
  const auto blocks = constraint_blocks(b);
  std::vector<Vec> parts;
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    parts.push_back(bm_residual(blocks[i], b.factors.at(i), b.epsilon));
    total += parts.back().size();
  }
  Vec c(total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    c.segment(off, p.size()) = p;
    off += p.size();
  }
  return c;
}

ObjectiveValue objective(const Bundle& b, const std::vector<Sequence>& seqs,
                         const std::vector<int>& batch, double mu) {
  ObjectiveValue out;
  const Forward fwd(b);
  const long n = scored_entries(seqs, batch);
  double sse = 0.0;
  for (int i : batch) {
    const auto f = fwd.run(seqs.at(i), b.x0.at(i), false);
    if (f.diverged) {
      out.diverged = true;
      out.total = out.mse = kInf;
      return out;
    }
    sse += f.err.squaredNorm();
  }
  out.mse = n > 0 ? sse / static_cast<double>(n) : 0.0;
  out.penalty = penalty_and_gradient(b, mu, nullptr, &out.c_inf);
  out.total = out.mse + out.penalty;
  return out;
}

ObjectiveValue gradient(const Bundle& b, const std::vector<Sequence>& seqs,
                        const std::vector<int>& batch, double mu, Bundle& grad) {
  grad = b.zeros_like();
  ObjectiveValue out;
  const Forward fwd(b);
  const long n = scored_entries(seqs, batch);
  const double scale = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  double sse = 0.0;
  for (int i : batch) {
    const Sequence& s = seqs.at(i);
    const auto f = fwd.run(s, b.x0.at(i), true);
    if (f.diverged) {
      grad = b.zeros_like();
      out.diverged = true;
      out.total = out.mse = kInf;
      return out;
    }
    sse += f.err.squaredNorm();
    grad.x0[i] += fwd.backward(s, f, scale, grad);
  }
  out.mse = sse * scale;
  out.penalty = penalty_and_gradient(b, mu, &grad, &out.c_inf);
  out.total = out.mse + out.penalty;
  return out;
}

double sequence_mse(const Model& m, const std::vector<Sequence>& seqs, int washout) {
  double sse = 0.0;
  long n = 0;
  const Vec x0 = Vec::Zero(m.dims().n_x);
  for (const auto& s : seqs) {
    const auto tr = simulate(m, s.inputs, x0);
    if (tr.diverged) return kInf;
    for (int k = washout; k < s.length(); ++k) {
      sse += (tr.outputs.col(k) - s.outputs.col(k)).squaredNorm();
      n += s.outputs.rows();
    }
  }
  if (!std::isfinite(sse)) return kInf;
  return n > 0 ? sse / static_cast<double>(n) : 0.0;
}

AdamState adam_init(const Bundle& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(Bundle& params, AdamState& state, const Bundle& grad, double lr,
               const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  zip_tensors(
      [&](auto& p, auto& m, auto& v, const auto& g) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
      },
      params, state.m, state.v, grad);
}

TrainResult train(const TrainConfig& cfg, const SeqDataset& data, Bundle params,
                  const TrainHooks& hooks) {
  cfg.validate();
  const auto train_seqs = data.subset(Split::train);
  const auto val_seqs = data.subset(Split::val);
  if (train_seqs.empty() || val_seqs.empty())
    throw DataError("train: dataset needs both train and validation sequences");
  if (params.x0.size() != train_seqs.size())
    params.x0.assign(train_seqs.size(), Vec::Zero(params.C.cols()));

  TrainResult res;
  AdamState adam = adam_init(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(train_seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> all = order;

  double mu = cfg.mu0;
  double best_val = kInf;
  int last_improve = -1;
  bool any_finite = false;
  Bundle grad;

  for (int e = 0; e < cfg.max_epochs; ++e) {
    const double lr = cfg.lr_at(e);
    double lr_eff = lr;
    int skipped = 0;
    std::shuffle(order.begin(), order.end(), rng);
    for (int i : order) {
      ObjectiveValue v;
      try {
        v = gradient(params, train_seqs, {i}, mu, grad);
      } catch (const SingularMatrixError& err) {
        v.diverged = true;
        res.events.push_back("epoch " + std::to_string(e) + ": " + err.what());
      }
      if (v.diverged) {
        ++skipped;
        lr_eff *= 0.5;
        res.events.push_back("epoch " + std::to_string(e) + ": non-finite forward pass on sequence " +
                             std::to_string(i) + "; batch skipped, lr halved");
        continue;
      }
      adam_step(params, adam, grad, lr_eff, cfg);
      for (auto& p : params.P) p = p.cwiseMax(cfg.p_floor);
    }

    if (hooks.on_epoch_end) hooks.on_epoch_end(e, params);

    EpochRecord rec;
    rec.epoch = e;
    rec.mu = mu;
    rec.lr = lr;
    rec.skipped_batches = skipped;
    try {
      const auto obj = objective(params, train_seqs, all, 0.0);
      rec.train_mse = obj.mse;
      penalty_and_gradient(params, 0.0, nullptr, &rec.c_inf);
      rec.val_mse = sequence_mse(params.model(), val_seqs, cfg.washout);
    } catch (const SingularMatrixError& err) {
      rec.train_mse = rec.val_mse = kInf;
      rec.c_inf = kInf;
      res.events.push_back("epoch " + std::to_string(e) + ": " + err.what());
    }
    res.history.push_back(rec);
    if (std::isfinite(rec.train_mse)) any_finite = true;

    const bool feasible = rec.c_inf <= cfg.viol_tol;
    if (feasible && std::isfinite(rec.val_mse) && rec.val_mse < best_val) {
      best_val = rec.val_mse;
      res.best = params;
      res.has_best = true;
      res.best_epoch = e;
      last_improve = e;
    }
    if (rec.c_inf > cfg.viol_tol) mu *= cfg.penalty_factor;
    if (e - last_improve >= cfg.patience + 1) {
      res.early_stopped = true;
      break;
    }
  }

  if (!any_finite) throw SolverError("train: every epoch diverged");
  res.last = params;
  if (!res.has_best) {
    res.best = params;
    res.events.push_back("no feasible snapshot improved validation; returning the final parameters");
  }
  res.best_val_mse = res.has_best ? best_val : kInf;
  return res;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_mse,val_mse,c_infnorm,mu,lr\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.train_mse << ',' << r.val_mse << ',' << r.c_inf << ',' << r.mu << ','
        << r.lr << '\n';
  return out.str();
}

}  // namespace cirnn
