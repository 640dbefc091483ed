#pragma once

// Declarative experiment configuration, loaded from a JSON document.
// Unknown keys are rejected at every level. Example:
//
// {
//   "model": {"catalog": "tanh1d", "params": {"sigma": 1.0}},
//   "scheme": "q-increment",
//   "x0": [0.0],
//   "t_final": 1.0,
//   "m_steps": 1000,
//   "n_paths": 10000,
//   "seed": 0,
//   "grid": {"x_min": -6.0, "x_max": 14.0, "n_cells": 400},
//   "alpha": 1.0,
//   "output_dir": "out"
// }
//
// Inline models replace "catalog" with "n", "m", "drift" (array of n
// expressions), "coupling" (n x m array of expressions), "label".

#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "markovsde/catalog.hpp"
#include "markovsde/sim.hpp"

namespace markovsde {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExperimentConfig {
  // model description
  std::string catalog;  // empty for inline models
  int n = 0, m = 0;
  std::vector<std::string> drift;
  std::vector<std::vector<std::string>> coupling;
  std::string label;
  expr::ParamMap params;
  std::string gamma = "1";    // klein-kramers only
  std::string uprime = "x1";  // klein-kramers only

  StepScheme scheme = StepScheme::q_increment();
  std::vector<double> x0;  // empty: catalog default / zeros
  double t_final = 1.0;
  std::int64_t m_steps = 1000;
  std::int64_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::optional<GridSpec> grid;
  double alpha = 1.0;
  std::string output_dir = "out";

  SdeModel build_model() const {
    if (!catalog.empty()) {
      CatalogOptions opts{params, gamma, uprime};
      return make_catalog_model(catalog, opts).model;
    }
    return SdeModel(n, m, drift, coupling, params, label.empty() ? "inline" : label);
  }

  GridSpec resolved_grid() const {
    if (grid) return *grid;
    if (!catalog.empty()) return make_catalog_model(catalog, {params, gamma, uprime}).default_grid;
    return {-8.0, 8.0, 400};
  }

  VectorXd resolved_x0(const SdeModel& model) const {
    if (!x0.empty()) {
      if (static_cast<int>(x0.size()) != model.dim())
        throw ConfigError("x0 has length " + std::to_string(x0.size()) +
                          " but the model has dimension " + std::to_string(model.dim()));
      VectorXd v(model.dim());
      for (int i = 0; i < model.dim(); ++i) v(i) = x0[static_cast<std::size_t>(i)];
      return v;
    }
    if (!catalog.empty()) {
      const auto entry = make_catalog_model(catalog, {params, gamma, uprime});
      VectorXd v(model.dim());
      for (int i = 0; i < model.dim(); ++i)
        v(i) = entry.default_x0[static_cast<std::size_t>(i)];
      return v;
    }
    return VectorXd::Zero(model.dim());
  }

  // canonical serialization; hashed into the run manifest
  nlohmann::json to_json() const {
    nlohmann::json j;
    nlohmann::json jm;
    if (!catalog.empty()) {
      jm["catalog"] = catalog;
    } else {
      jm["n"] = n;
      jm["m"] = m;
      jm["drift"] = drift;
      jm["coupling"] = coupling;
      jm["label"] = label;
    }
    if (!params.empty()) jm["params"] = params;
    if (catalog == "klein-kramers") {
      jm["gamma"] = gamma;
      jm["uprime"] = uprime;
    }
    j["model"] = jm;
    j["scheme"] = scheme.kind == StepScheme::Kind::QIncrement
                      ? nlohmann::json("q-increment")
                      : nlohmann::json({{"alpha", scheme.alpha}});
    if (!x0.empty()) j["x0"] = x0;
    j["t_final"] = t_final;
    j["m_steps"] = m_steps;
    j["n_paths"] = n_paths;
    j["seed"] = seed;
    if (grid) j["grid"] = {{"x_min", grid->x_min}, {"x_max", grid->x_max}, {"n_cells", grid->n_cells}};
    j["alpha"] = alpha;
    j["output_dir"] = output_dir;
    return j;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline StepScheme parse_scheme(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "ito") return StepScheme::ito();
    if (name == "stratonovich") return StepScheme::stratonovich();
    if (name == "anti-ito") return StepScheme::anti_ito();
    if (name == "q" || name == "q-increment") return StepScheme::q_increment();
    throw ConfigError("unknown scheme '" + name +
                      "' (available: ito, stratonovich, anti-ito, q-increment, "
                      "{\"alpha\": value})");
  }
  if (j.is_object()) {
    reject_unknown_keys(j, {"alpha"}, "scheme");
    if (!j.contains("alpha")) throw ConfigError("scheme object needs an 'alpha' key");
    const double a = j.at("alpha").get<double>();
    if (a < 0.0 || a > 1.0) throw ConfigError("scheme alpha must lie in [0, 1]");
    return StepScheme::alpha_euler(a);
  }
  throw ConfigError("scheme must be a string or {\"alpha\": value}");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"model", "scheme", "x0", "t_final", "m_steps", "n_paths",
                               "seed", "grid", "alpha", "output_dir"},
                              "config");
  ExperimentConfig cfg;

  if (!j.contains("model")) throw ConfigError("config needs a 'model' entry");
  const auto& jm = j.at("model");
  if (jm.is_string()) {
    cfg.catalog = jm.get<std::string>();
  } else if (jm.is_object()) {
    detail::reject_unknown_keys(
        jm, {"catalog", "n", "m", "drift", "coupling", "label", "params", "gamma", "uprime"},
        "model");
    if (jm.contains("catalog")) {
      cfg.catalog = jm.at("catalog").get<std::string>();
      for (const std::string key : {"n", "m", "drift", "coupling"})
        if (jm.contains(key))
          throw ConfigError("model key '" + key + "' conflicts with 'catalog'");
    } else {
      for (const std::string key : {"n", "m", "drift", "coupling"})
        if (!jm.contains(key))
          throw ConfigError("inline model needs the '" + key + "' key");
      cfg.n = jm.at("n").get<int>();
      cfg.m = jm.at("m").get<int>();
      cfg.drift = jm.at("drift").get<std::vector<std::string>>();
      cfg.coupling = jm.at("coupling").get<std::vector<std::vector<std::string>>>();
      if (jm.contains("label")) cfg.label = jm.at("label").get<std::string>();
    }
    if (jm.contains("params")) {
      if (!jm.at("params").is_object()) throw ConfigError("model params must be an object");
      for (const auto& [key, value] : jm.at("params").items()) {
        if (!value.is_number()) throw ConfigError("parameter '" + key + "' must be a number");
        cfg.params[key] = value.get<double>();
      }
    }
    if (jm.contains("gamma")) cfg.gamma = jm.at("gamma").get<std::string>();
    if (jm.contains("uprime")) cfg.uprime = jm.at("uprime").get<std::string>();
    if ((jm.contains("gamma") || jm.contains("uprime")) && cfg.catalog != "klein-kramers")
      throw ConfigError("'gamma'/'uprime' apply to the klein-kramers catalog model only");
  } else {
    throw ConfigError("model must be a catalog name or an object");
  }

  if (j.contains("scheme")) cfg.scheme = detail::parse_scheme(j.at("scheme"));
  if (j.contains("x0")) cfg.x0 = j.at("x0").get<std::vector<double>>();
  if (j.contains("t_final")) cfg.t_final = j.at("t_final").get<double>();
  if (j.contains("m_steps")) cfg.m_steps = j.at("m_steps").get<std::int64_t>();
  if (j.contains("n_paths")) cfg.n_paths = j.at("n_paths").get<std::int64_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("grid")) {
    const auto& jg = j.at("grid");
    detail::reject_unknown_keys(jg, {"x_min", "x_max", "n_cells"}, "grid");
    GridSpec spec;
    if (jg.contains("x_min")) spec.x_min = jg.at("x_min").get<double>();
    if (jg.contains("x_max")) spec.x_max = jg.at("x_max").get<double>();
    if (jg.contains("n_cells")) spec.n_cells = jg.at("n_cells").get<int>();
    cfg.grid = spec;
  }
  if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

  // validation beyond shapes
  if (!(cfg.t_final > 0.0)) throw ConfigError("t_final must be > 0");
  if (cfg.m_steps < 1) throw ConfigError("m_steps must be >= 1");
  if (cfg.n_paths < 1) throw ConfigError("n_paths must be >= 1");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (cfg.grid) {
    try {
      cfg.grid->validate();
    } catch (const std::exception& err) {
      throw ConfigError(err.what());
    }
  }

  try {
    const SdeModel model = cfg.build_model();
    cfg.resolved_x0(model);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& err) {
    throw ConfigError(std::string("model validation failed: ") + err.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < err.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("parse error in '" + path + "' at line " + std::to_string(line) +
                      ": " + err.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& err) {
    throw ConfigError(std::string(err.what()) + " (config '" + path + "')");
  }
}

}  // namespace markovsde
