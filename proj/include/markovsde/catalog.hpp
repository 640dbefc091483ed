#pragma once

// Built-in model catalog. Each entry bundles the SdeModel with a default
// grid and starting point suitable for its dynamics.
//
//   ou1d          a = -k x,  b = sigma                      (k = 1, sigma = 1)
//   tanh1d        a = -x,    b = sigma (2 + tanh x)         (sigma = 1)
//   klein-kramers a = (v, -gamma v - U'(x)),  B = (0, sqrt(2 gamma T))^T
//                 so that D_vv = 2 gamma T; gamma may be an expression in
//                 (x1, x2) and the potential enters through its derivative
//                 uprime (default U = x^2/2, i.e. uprime = "x1")
//   linear2d      a = M x with M = [[m11,m12],[m21,m22]], constant B
//                 (defaults: the rotational system M = [[-1,1],[-1,-1]], B = I)

#include <stdexcept>
#include <string>
#include <vector>

#include "markovsde/grid.hpp"
#include "markovsde/model.hpp"

namespace markovsde {

class CatalogError : public std::runtime_error {
 public:
  explicit CatalogError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CatalogEntry {
  SdeModel model;
  GridSpec default_grid;
  std::vector<double> default_x0;
};

struct CatalogOptions {
  expr::ParamMap params;        // overrides of the defaults below
  std::string gamma = "1";      // klein-kramers: friction expression
  std::string uprime = "x1";    // klein-kramers: U'(x1) expression
};

namespace detail {

inline expr::ParamMap merged(expr::ParamMap defaults, const expr::ParamMap& overrides) {
  for (const auto& [key, value] : overrides) {
    if (!defaults.count(key))
      throw CatalogError("unknown parameter '" + key + "' for this catalog model");
    defaults[key] = value;
  }
  return defaults;
}

}  // namespace detail

inline CatalogEntry make_ou1d(const CatalogOptions& opts = {}) {
  auto params = detail::merged({{"k", 1.0}, {"sigma", 1.0}}, opts.params);
  return {SdeModel(1, 1, {"-(k*x1)"}, {{"sigma"}}, params, "ou1d"),
          {-6.0, 6.0, 400},
          {0.0}};
}

inline CatalogEntry make_tanh1d(const CatalogOptions& opts = {}) {
  auto params = detail::merged({{"sigma", 1.0}}, opts.params);
  return {SdeModel(1, 1, {"-x1"}, {{"sigma*(2+tanh(x1))"}}, params, "tanh1d"),
          {-6.0, 14.0, 400},
          {0.0}};
}

inline CatalogEntry make_klein_kramers(const CatalogOptions& opts = {}) {
  auto params = detail::merged({{"T", 1.0}}, opts.params);
  const std::string g = "(" + opts.gamma + ")";
  const std::string drift_v = "-(" + g + "*x2) - (" + opts.uprime + ")";
  const std::string b_vv = "sqrt(2*" + g + "*T)";
  return {SdeModel(2, 1, {"x2", drift_v}, {{"0"}, {b_vv}}, params, "klein-kramers"),
          {-5.0, 5.0, 400},
          {0.5, 0.5}};
}

inline CatalogEntry make_linear2d(const CatalogOptions& opts = {}) {
  auto params = detail::merged({{"m11", -1.0},
                                {"m12", 1.0},
                                {"m21", -1.0},
                                {"m22", -1.0},
                                {"b11", 1.0},
                                {"b12", 0.0},
                                {"b21", 0.0},
                                {"b22", 1.0}},
                               opts.params);
  return {SdeModel(2, 2, {"m11*x1 + m12*x2", "m21*x1 + m22*x2"},
                   {{"b11", "b12"}, {"b21", "b22"}}, params, "linear2d"),
          {-5.0, 5.0, 400},
          {0.3, 0.3}};
}

inline CatalogEntry make_catalog_model(const std::string& name,
                                       const CatalogOptions& opts = {}) {
  if (name == "ou1d") return make_ou1d(opts);
  if (name == "tanh1d") return make_tanh1d(opts);
  if (name == "klein-kramers") return make_klein_kramers(opts);
  if (name == "linear2d") return make_linear2d(opts);
  throw CatalogError("unknown catalog model '" + name +
                     "' (available: ou1d, tanh1d, klein-kramers, linear2d)");
}

}  // namespace markovsde
