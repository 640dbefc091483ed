#pragma once

// SDE model dX = a(X) dt + B(X) dW with expression-valued coefficients.
// All derivatives are central finite differences; there is no symbolic
// differentiation anywhere in the toolkit.

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "markovsde/expr.hpp"

namespace markovsde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

// Central-difference step: h ~ cbrt(eps) balances truncation against rounding.
inline double fd_step(double x, double scale = 1.0) {
  constexpr double h0 = 6.0554544523933395e-6;  // cbrt(DBL_EPSILON)
  return h0 * scale * std::max(1.0, std::abs(x));
}

class SdeModel {
 public:
  // Scratch buffers for the allocation-free kernels. One workspace per
  // thread; kernels never allocate after init().
  struct Workspace {
    std::vector<double> stack;   // expression evaluation stack
    std::vector<double> xt;      // perturbed state
    std::vector<double> b0, bp, bm;  // coupling at x, x+h, x-h
    std::vector<double> tmp;     // n-vector scratch

    void init(const SdeModel& model) {
      stack.assign(static_cast<std::size_t>(model.max_stack_), 0.0);
      xt.assign(static_cast<std::size_t>(model.n_), 0.0);
      const std::size_t nm = static_cast<std::size_t>(model.n_) * model.m_;
      b0.assign(nm, 0.0);
      bp.assign(nm, 0.0);
      bm.assign(nm, 0.0);
      tmp.assign(static_cast<std::size_t>(model.n_), 0.0);
    }
  };

  SdeModel(int n, int m, const std::vector<std::string>& drift,
           const std::vector<std::vector<std::string>>& coupling,
           expr::ParamMap params, std::string label = "")
      : n_(n), m_(m), params_(std::move(params)), label_(std::move(label)) {
    if (n_ < 1 || m_ < 1) throw ModelError("model dimensions must be >= 1");
    if (static_cast<int>(drift.size()) != n_)
      throw ModelError("expected " + std::to_string(n_) + " drift expressions");
    if (static_cast<int>(coupling.size()) != n_)
      throw ModelError("expected " + std::to_string(n_) + " coupling rows");
    for (const auto& row : coupling)
      if (static_cast<int>(row.size()) != m_)
        throw ModelError("expected " + std::to_string(m_) + " coupling columns");

    for (const auto& text : drift) drift_ast_.push_back(expr::parse(text));
    for (const auto& row : coupling) {
      for (const auto& text : row) coupling_ast_.push_back(expr::parse(text));
    }
    for (const auto& e : drift_ast_) check_bindings(e);
    for (const auto& e : coupling_ast_) check_bindings(e);

    for (const auto& e : drift_ast_) drift_code_.emplace_back(e, params_);
    for (const auto& e : coupling_ast_) coupling_code_.emplace_back(e, params_);
    for (const auto& c : drift_code_) max_stack_ = std::max(max_stack_, c.stack_size());
    for (const auto& c : coupling_code_) max_stack_ = std::max(max_stack_, c.stack_size());
  }

  int dim() const { return n_; }
  int noise_dim() const { return m_; }
  const std::string& label() const { return label_; }
  const expr::ParamMap& params() const { return params_; }
  const expr::Expr& drift_expr(int i) const { return drift_ast_[static_cast<std::size_t>(i)]; }
  const expr::Expr& coupling_expr(int i, int k) const {
    return coupling_ast_[static_cast<std::size_t>(i) * m_ + k];
  }

  // ---- allocation-free kernels ----

  void drift_into(const double* x, double* out, Workspace& ws) const {
    for (int i = 0; i < n_; ++i) {
      try {
        out[i] = drift_code_[static_cast<std::size_t>(i)].eval(x, n_, ws.stack.data());
      } catch (const expr::EvalError& err) {
        throw ModelError("drift component " + std::to_string(i + 1) + ": " + err.what());
      }
    }
  }

  // Row-major n x m.
  void coupling_into(const double* x, double* out, Workspace& ws) const {
    for (int i = 0; i < n_ * m_; ++i) {
      try {
        out[i] = coupling_code_[static_cast<std::size_t>(i)].eval(x, n_, ws.stack.data());
      } catch (const expr::EvalError& err) {
        throw ModelError("coupling entry (" + std::to_string(i / m_ + 1) + "," +
                         std::to_string(i % m_ + 1) + "): " + err.what());
      }
    }
  }

  // a_sp^i = (1/2) sum_k d/dx_k (B B^T)^{ik}; the form used by integrators
  // and the FPE. The divergence is expanded by the product rule before
  // differencing,
  //   (1/2) sum_{j,k} [ (d_k b^{ij}) b^{kj} + b^{ij} (d_k b^{kj}) ],
  // so that only B itself is differenced; differencing the product B B^T
  // would lose ~1e-10 to cancellation, which the step-identity tests
  // cannot afford.
  void spurious_drift_into(const double* x, double* out, Workspace& ws) const {
    for (int i = 0; i < n_; ++i) out[i] = 0.0;
    for (int i = 0; i < n_; ++i) ws.xt[static_cast<std::size_t>(i)] = x[i];
    coupling_into(x, ws.b0.data(), ws);
    for (int k = 0; k < n_; ++k) {
      const double h = fd_step(x[k]);
      ws.xt[static_cast<std::size_t>(k)] = x[k] + h;
      coupling_into(ws.xt.data(), ws.bp.data(), ws);
      ws.xt[static_cast<std::size_t>(k)] = x[k] - h;
      coupling_into(ws.xt.data(), ws.bm.data(), ws);
      ws.xt[static_cast<std::size_t>(k)] = x[k];
      const double inv2h = 0.5 / h;
      const double* bpk = ws.bp.data() + static_cast<std::size_t>(k) * m_;
      const double* bmk = ws.bm.data() + static_cast<std::size_t>(k) * m_;
      const double* b0k = ws.b0.data() + static_cast<std::size_t>(k) * m_;
      for (int i = 0; i < n_; ++i) {
        const double* bpi = ws.bp.data() + static_cast<std::size_t>(i) * m_;
        const double* bmi = ws.bm.data() + static_cast<std::size_t>(i) * m_;
        const double* b0i = ws.b0.data() + static_cast<std::size_t>(i) * m_;
        double acc = 0.0;
        for (int j = 0; j < m_; ++j) {
          const double db_ij = (bpi[j] - bmi[j]) * inv2h;
          const double db_kj = (bpk[j] - bmk[j]) * inv2h;
          acc += db_ij * b0k[j] + b0i[j] * db_kj;
        }
        out[i] += 0.5 * acc;
      }
    }
  }

  // ---- Eigen convenience wrappers ----

  VectorXd drift(const VectorXd& x) const {
    Workspace ws = workspace();
    VectorXd out(n_);
    drift_into(x.data(), out.data(), ws);
    return out;
  }

  MatrixXd coupling(const VectorXd& x) const {
    Workspace ws = workspace();
    std::vector<double> buf(static_cast<std::size_t>(n_) * m_);
    coupling_into(x.data(), buf.data(), ws);
    MatrixXd out(n_, m_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) out(i, j) = buf[static_cast<std::size_t>(i) * m_ + j];
    return out;
  }

  MatrixXd diffusion(const VectorXd& x) const {
    const MatrixXd b = coupling(x);
    return b * b.transpose();
  }

  VectorXd spurious_drift(const VectorXd& x) const {
    Workspace ws = workspace();
    VectorXd out(n_);
    spurious_drift_into(x.data(), out.data(), ws);
    return out;
  }

  // a_sp^i = b^{ij}_{,k} b^{kj}; kept for the diagonal-case identity check.
  VectorXd spurious_drift_coupling_form(const VectorXd& x) const {
    Workspace ws = workspace();
    VectorXd xt = x;
    VectorXd out = VectorXd::Zero(n_);
    const std::size_t nm = static_cast<std::size_t>(n_) * m_;
    std::vector<double> b0(nm), bp(nm), bm(nm);
    coupling_into(x.data(), b0.data(), ws);
    for (int k = 0; k < n_; ++k) {
      const double h = fd_step(x(k));
      xt(k) = x(k) + h;
      coupling_into(xt.data(), bp.data(), ws);
      xt(k) = x(k) - h;
      coupling_into(xt.data(), bm.data(), ws);
      xt(k) = x(k);
      const double inv2h = 0.5 / h;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < m_; ++j) {
          const double dbij = (bp[static_cast<std::size_t>(i) * m_ + j] -
                               bm[static_cast<std::size_t>(i) * m_ + j]) *
                              inv2h;
          out(i) += dbij * b0[static_cast<std::size_t>(k) * m_ + j];
        }
    }
    return out;
  }

  // Central-difference Jacobian of the drift. fd_scale > 1 enlarges the
  // step; used by convergence-order tests.
  MatrixXd jacobian_drift(const VectorXd& x, double fd_scale = 1.0) const {
    Workspace ws = workspace();
    VectorXd xt = x;
    VectorXd fp(n_), fm(n_);
    MatrixXd jac(n_, n_);
    for (int k = 0; k < n_; ++k) {
      const double h = fd_step(x(k), fd_scale);
      xt(k) = x(k) + h;
      drift_into(xt.data(), fp.data(), ws);
      xt(k) = x(k) - h;
      drift_into(xt.data(), fm.data(), ws);
      xt(k) = x(k);
      jac.col(k) = (fp - fm) / (2.0 * h);
    }
    return jac;
  }

  double dissipation(const VectorXd& x) const { return -jacobian_drift(x).trace(); }

  Workspace workspace() const {
    Workspace ws;
    ws.init(*this);
    return ws;
  }

 private:
  void check_bindings(const expr::Expr& e) const {
    const int max_var = expr::max_var_index(e);
    if (max_var > n_)
      throw ModelError("expression '" + expr::to_string(e) + "' references x" +
                       std::to_string(max_var) + " but the model has dimension " +
                       std::to_string(n_));
    for (const auto& name : expr::param_names(e))
      if (!params_.count(name))
        throw ModelError("expression '" + expr::to_string(e) +
                         "' references unbound parameter '" + name + "'");
  }

  int n_ = 0, m_ = 0;
  std::vector<expr::Expr> drift_ast_;
  std::vector<expr::Expr> coupling_ast_;  // row-major n x m
  expr::ParamMap params_;
  std::string label_;
  std::vector<expr::CompiledExpr> drift_code_;
  std::vector<expr::CompiledExpr> coupling_code_;
  int max_stack_ = 1;

  friend struct Workspace;
};

}  // namespace markovsde
