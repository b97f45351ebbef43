#include "cirnn/config.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace cirnn {

using detail::json;

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::sample: return "sample";
    case InitScheme::spectral: return "spectral";
    case InitScheme::project: return "project";
    case InitScheme::uniform: return "uniform";
  }
  return "sample";
}

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "sample") return InitScheme::sample;
  if (s == "spectral") return InitScheme::spectral;
  if (s == "project") return InitScheme::project;
  if (s == "uniform") return InitScheme::uniform;
  throw ConfigError("unknown init scheme '" + s + "'");
}

LayerDims RunConfig::dims(int n_u, int n_y) const {
  return LayerDims::uniform(model.n_x, n_u, n_y, model.layers, model.hidden);
}

InitConfig RunConfig::init_config(int n_u, int n_y) const {
  InitConfig ic;
  ic.alpha = init.alpha;
  ic.seed = seed;
  ic.dims = dims(n_u, n_y);
  ic.epsilon = init.epsilon;
  ic.lambda = init.lambda;
  return ic;
}

void RunConfig::validate() const {
  if (model.n_x < 1 || model.hidden < 1 || model.layers < 1)
    throw ConfigError("model: n_x, hidden and layers must be positive");
  if (!(init.alpha > 0) || !(init.epsilon > 0) || !(init.lambda > 0) || init.lambda > 1)
    throw ConfigError("init: alpha and epsilon must be positive, lambda in (0, 1]");
  if (model.kind == ModelKind::cirnn && init.scheme != InitScheme::project)
    throw ConfigError("init: ci-rnn requires the project scheme");
  if (model.kind == ModelKind::srnn && init.scheme != InitScheme::spectral)
    throw ConfigError("init: s-rnn requires the spectral scheme");
  if (!is_implicit(model.kind) && init.scheme == InitScheme::uniform)
    throw ConfigError("init: the uniform scheme produces implicit models");
  if (model.kind == ModelKind::implicit && init.scheme != InitScheme::uniform &&
      init.scheme != InitScheme::project)
    throw ConfigError("init: implicit-rnn uses the project or uniform scheme");
  if (!(data.validation_fraction > 0 && data.validation_fraction < 1))
    throw ConfigError("data: validation_fraction must lie in (0, 1)");
  if (!(data.test_fraction >= 0 && data.test_fraction < 1))
    throw ConfigError("data: test_fraction must lie in [0, 1)");
  if (data.chen.T < 1 || data.chen.n_seq < 1 || data.chen.noise_variance < 0 ||
      data.chen.input_variance < 0)
    throw ConfigError("data.chen: T, n_seq positive and variances non-negative");
  if (eval.washout < 0 || eval.stress_pairs < 0 || eval.stress_horizon < 1)
    throw ConfigError("eval: washout and stress_pairs non-negative, stress_horizon positive");
  try {
    parse_split(eval.split);
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> preset_names() { return {"A", "B", "C", "D", "E", "desk", "paper"}; }

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "A") {
    cfg.model.kind = ModelKind::cirnn;
    cfg.init.scheme = InitScheme::project;
    cfg.init.alpha = 1.2;
  } else if (name == "B") {
    cfg.model.kind = ModelKind::implicit;
    cfg.init.scheme = InitScheme::project;
    cfg.init.alpha = 1.2;
  } else if (name == "C") {
    cfg.model.kind = ModelKind::implicit;
    cfg.init.scheme = InitScheme::uniform;
  } else if (name == "D") {
    cfg.model.kind = ModelKind::rnn;
    cfg.init.scheme = InitScheme::sample;
    cfg.init.alpha = 1.0;
  } else if (name == "E") {
    cfg.model.kind = ModelKind::srnn;
    cfg.init.scheme = InitScheme::spectral;
    cfg.init.alpha = 1.0;
  } else if (name == "desk") {
    cfg.data.chen = ChenConfig::desk();
    cfg.model.n_x = cfg.model.hidden = 20;
    cfg.model.layers = 2;
    cfg.model.activation = Activation::relu;
  } else if (name == "paper") {
    cfg.data.chen = ChenConfig::paper();
    cfg.model.n_x = cfg.model.hidden = 60;
    cfg.model.layers = 2;
    cfg.model.activation = Activation::relu;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.presets.push_back(name);
}

namespace {

using Setter = std::function<void(const json&)>;

void apply_section(const json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(section + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }
}

template <class T>
Setter set(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto& m = cfg.model;
  auto& in = cfg.init;
  auto& t = cfg.train;
  auto& d = cfg.data;
  auto& c = cfg.data.chen;
  auto& ev = cfg.eval;

  std::map<std::string, Setter> top = {
      {"seed", set(cfg.seed)},
      {"out", set(cfg.out)},
      {"presets", [](const json&) {}},
      {"model",
       [&](const json& v) {
         apply_section(v, "model",
                       {{"kind", [&](const json& x) { m.kind = parse_model_kind(x.get<std::string>()); }},
                        {"activation",
                         [&](const json& x) { m.activation = parse_activation(x.get<std::string>()); }},
                        {"n_x", set(m.n_x)},
                        {"hidden", set(m.hidden)},
                        {"layers", set(m.layers)}});
       }},
      {"init",
       [&](const json& v) {
         apply_section(v, "init",
                       {{"scheme", [&](const json& x) { in.scheme = parse_init_scheme(x.get<std::string>()); }},
                        {"alpha", set(in.alpha)},
                        {"epsilon", set(in.epsilon)},
                        {"lambda", set(in.lambda)}});
       }},
      {"train",
       [&](const json& v) {
         apply_section(v, "train",
                       {{"lr0", set(t.lr0)},
                        {"lr_decay", set(t.lr_decay)},
                        {"mu0", set(t.mu0)},
                        {"viol_tol", set(t.viol_tol)},
                        {"penalty_factor", set(t.penalty_factor)},
                        {"patience", set(t.patience)},
                        {"epsilon", set(t.epsilon)},
                        {"max_epochs", set(t.max_epochs)},
                        {"washout", set(t.washout)},
                        {"beta1", set(t.beta1)},
                        {"beta2", set(t.beta2)},
                        {"adam_eps", set(t.adam_eps)}});
       }},
      {"data",
       [&](const json& v) {
         apply_section(
             v, "data",
             {{"manifest", set(d.manifest)},
              {"validation_fraction", set(d.validation_fraction)},
              {"test_fraction", set(d.test_fraction)},
              {"normalize", set(d.normalize)},
              {"chen", [&](const json& x) {
                 apply_section(x, "data.chen",
                               {{"T", set(c.T)},
                                {"n_seq", set(c.n_seq)},
                                {"noise_variance", set(c.noise_variance)},
                                {"input_variance", set(c.input_variance)},
                                {"gain", set(c.gain)}});
               }}});
       }},
      {"eval",
       [&](const json& v) {
         apply_section(v, "eval",
                       {{"split", set(ev.split)},
                        {"washout", set(ev.washout)},
                        {"stress_pairs", set(ev.stress_pairs)},
                        {"stress_horizon", set(ev.stress_horizon)}});
       }},
  };
  // Presets sit below every explicit key regardless of their position.
  if (j.is_object() && j.contains("presets")) {
    try {
      for (const auto& p : j["presets"].get<std::vector<std::string>>())
        if (std::find(cfg.presets.begin(), cfg.presets.end(), p) == cfg.presets.end())
          apply_preset(cfg, p);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config.presets: ") + e.what());
    }
  }
  apply_section(j, "config", top);
}

std::string config_to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& c = cfg.data.chen;
  json j = {
      {"seed", cfg.seed},
      {"out", cfg.out},
      {"presets", cfg.presets},
      {"model",
       {{"kind", to_string(cfg.model.kind)},
        {"activation", to_string(cfg.model.activation)},
        {"n_x", cfg.model.n_x},
        {"hidden", cfg.model.hidden},
        {"layers", cfg.model.layers}}},
      {"init",
       {{"scheme", to_string(cfg.init.scheme)},
        {"alpha", cfg.init.alpha},
        {"epsilon", cfg.init.epsilon},
        {"lambda", cfg.init.lambda}}},
      {"train",
       {{"lr0", t.lr0},
        {"lr_decay", t.lr_decay},
        {"mu0", t.mu0},
        {"viol_tol", t.viol_tol},
        {"penalty_factor", t.penalty_factor},
        {"patience", t.patience},
        {"epsilon", t.epsilon},
        {"max_epochs", t.max_epochs},
        {"washout", t.washout},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps}}},
      {"data",
       {{"manifest", cfg.data.manifest},
        {"validation_fraction", cfg.data.validation_fraction},
        {"test_fraction", cfg.data.test_fraction},
        {"normalize", cfg.data.normalize},
        {"chen",
         {{"T", c.T},
          {"n_seq", c.n_seq},
          {"noise_variance", c.noise_variance},
          {"input_variance", c.input_variance},
          {"gain", c.gain}}}}},
      {"eval",
       {{"split", cfg.eval.split},
        {"washout", cfg.eval.washout},
        {"stress_pairs", cfg.eval.stress_pairs},
        {"stress_horizon", cfg.eval.stress_horizon}}},
  };
  return detail::dump(j);
}

}  // namespace cirnn
