#pragma once

// Path integration: the classical alpha-family Euler step and the
// non-Gaussian quadratic-increment step, plus ensemble running.
//
// Alpha step:  x + a dt + B dw + alpha * a_sp dt
// Q step:      x + a dt + B dw + Q,  Q^i = dB^{i mu}/dx_lambda B^{lambda nu}
//                                          dw_mu dw_nu
// The Q term keeps the full quadratic form in dw including off-diagonal
// products; no dt substitution happens at step level.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "markovsde/model.hpp"
#include "markovsde/rng.hpp"

namespace markovsde {

class SimulationError : public std::runtime_error {
 public:
  explicit SimulationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StepScheme {
  enum class Kind { AlphaEuler, QIncrement };
  Kind kind = Kind::QIncrement;
  double alpha = 1.0;

  static StepScheme ito() { return {Kind::AlphaEuler, 0.0}; }
  static StepScheme stratonovich() { return {Kind::AlphaEuler, 0.5}; }
  static StepScheme anti_ito() { return {Kind::AlphaEuler, 1.0}; }
  static StepScheme alpha_euler(double a) {
    if (a < 0.0 || a > 1.0) throw SimulationError("alpha must lie in [0, 1]");
    return {Kind::AlphaEuler, a};
  }
  static StepScheme q_increment() { return {Kind::QIncrement, 1.0}; }

  std::string name() const {
    if (kind == Kind::QIncrement) return "q-increment";
    if (alpha == 0.0) return "ito";
    if (alpha == 0.5) return "stratonovich";
    if (alpha == 1.0) return "anti-ito";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "alpha-euler(%.17g)", alpha);
    return buf;
  }
};

namespace detail {

// Scratch for one path worker; everything reused across steps.
struct StepBuffers {
  SdeModel::Workspace ws;
  std::vector<double> a, dw, q, u, x_next;

  void init(const SdeModel& model) {
    ws.init(model);
    a.assign(static_cast<std::size_t>(model.dim()), 0.0);
    dw.assign(static_cast<std::size_t>(model.noise_dim()), 0.0);
    q.assign(static_cast<std::size_t>(model.dim()), 0.0);
    u.assign(static_cast<std::size_t>(model.dim()), 0.0);
    x_next.assign(static_cast<std::size_t>(model.dim()), 0.0);
  }
};

// Q^i = dB^{i mu}/dx_lambda * (B dw)_lambda * dw_mu, central differences.
inline void q_term_into(const SdeModel& model, const double* x, const double* dw,
                        double* out, StepBuffers& buf) {
  const int n = model.dim();
  const int m = model.noise_dim();
  model.coupling_into(x, buf.ws.b0.data(), buf.ws);
  for (int lam = 0; lam < n; ++lam) {
    double s = 0.0;
    const double* row = buf.ws.b0.data() + static_cast<std::size_t>(lam) * m;
    for (int nu = 0; nu < m; ++nu) s += row[nu] * dw[nu];
    buf.u[static_cast<std::size_t>(lam)] = s;
  }
  for (int i = 0; i < n; ++i) out[i] = 0.0;
  for (int lam = 0; lam < n; ++lam) {
    auto& xt = buf.ws.xt;
    for (int i = 0; i < n; ++i) xt[static_cast<std::size_t>(i)] = x[i];
    const double h = fd_step(x[lam]);
    xt[static_cast<std::size_t>(lam)] = x[lam] + h;
    model.coupling_into(xt.data(), buf.ws.bp.data(), buf.ws);
    xt[static_cast<std::size_t>(lam)] = x[lam] - h;
    model.coupling_into(xt.data(), buf.ws.bm.data(), buf.ws);
    const double inv2h = 0.5 / h;
    const double ul = buf.u[static_cast<std::size_t>(lam)];
    for (int i = 0; i < n; ++i) {
      const double* bpi = buf.ws.bp.data() + static_cast<std::size_t>(i) * m;
      const double* bmi = buf.ws.bm.data() + static_cast<std::size_t>(i) * m;
      double s = 0.0;
      for (int mu = 0; mu < m; ++mu) s += (bpi[mu] - bmi[mu]) * dw[mu];
      out[i] += s * inv2h * ul;
    }
  }
}

inline void step_alpha_into(const SdeModel& model, const double* x, double dt,
                            const double* dw, double alpha, double* out,
                            StepBuffers& buf) {
  const int n = model.dim();
  const int m = model.noise_dim();
  model.drift_into(x, buf.a.data(), buf.ws);
  if (alpha != 0.0) {
    model.spurious_drift_into(x, buf.q.data(), buf.ws);  // leaves B(x) in ws.b0
  } else {
    model.coupling_into(x, buf.ws.b0.data(), buf.ws);
    std::fill(buf.q.begin(), buf.q.end(), 0.0);
  }
  for (int i = 0; i < n; ++i) {
    double noise = 0.0;
    const double* row = buf.ws.b0.data() + static_cast<std::size_t>(i) * m;
    for (int k = 0; k < m; ++k) noise += row[k] * dw[k];
    out[i] = x[i] + buf.a[static_cast<std::size_t>(i)] * dt + noise +
             alpha * buf.q[static_cast<std::size_t>(i)] * dt;
  }
}

inline void step_q_into(const SdeModel& model, const double* x, double dt,
                        const double* dw, double* out, StepBuffers& buf) {
  const int n = model.dim();
  const int m = model.noise_dim();
  model.drift_into(x, buf.a.data(), buf.ws);
  q_term_into(model, x, dw, buf.q.data(), buf);  // fills ws.b0 with B(x)
  for (int i = 0; i < n; ++i) {
    double noise = 0.0;
    const double* row = buf.ws.b0.data() + static_cast<std::size_t>(i) * m;
    for (int k = 0; k < m; ++k) noise += row[k] * dw[k];
    out[i] = x[i] + buf.a[static_cast<std::size_t>(i)] * dt + noise +
             buf.q[static_cast<std::size_t>(i)];
  }
}

}  // namespace detail

inline VectorXd step_alpha(const SdeModel& model, const VectorXd& x, double dt,
                           const VectorXd& dw, double alpha) {
  if (dt <= 0.0) throw SimulationError("step: dt must be > 0");
  if (dw.size() != model.noise_dim())
    throw SimulationError("step: dw has wrong length");
  detail::StepBuffers buf;
  buf.init(model);
  VectorXd out(model.dim());
  detail::step_alpha_into(model, x.data(), dt, dw.data(), alpha, out.data(), buf);
  return out;
}

inline VectorXd step_q(const SdeModel& model, const VectorXd& x, double dt,
                       const VectorXd& dw) {
  if (dt <= 0.0) throw SimulationError("step: dt must be > 0");
  if (dw.size() != model.noise_dim())
    throw SimulationError("step: dw has wrong length");
  detail::StepBuffers buf;
  buf.init(model);
  VectorXd out(model.dim());
  detail::step_q_into(model, x.data(), dt, dw.data(), out.data(), buf);
  return out;
}

// The quadratic noise term alone; exposed so tests can probe its algebra.
inline VectorXd q_term(const SdeModel& model, const VectorXd& x, const VectorXd& dw) {
  if (dw.size() != model.noise_dim())
    throw SimulationError("q_term: dw has wrong length");
  detail::StepBuffers buf;
  buf.init(model);
  VectorXd out(model.dim());
  detail::q_term_into(model, x.data(), dw.data(), out.data(), buf);
  return out;
}

// States of one path at the recorded sample steps, flat row-major.
struct Trajectory {
  int dim = 0;
  std::vector<double> data;  // [sample][component]

  int n_samples() const { return dim == 0 ? 0 : static_cast<int>(data.size()) / dim; }
  double state(int sample, int comp) const {
    return data[static_cast<std::size_t>(sample) * dim + comp];
  }
};

struct PathEnsemble {
  std::string model_label;
  StepScheme scheme;
  std::vector<double> x0;
  double t_final = 0.0;
  std::int64_t m_steps = 0;
  std::uint64_t seed = 0;
  int dim = 0;
  std::vector<std::int64_t> sample_steps;  // ascending; first 0, last m_steps
  std::vector<double> sample_times;
  std::vector<std::uint64_t> path_ids;     // stream ids of surviving paths
  std::vector<Trajectory> paths;
  std::vector<std::uint64_t> aborted_ids;

  int n_paths() const { return static_cast<int>(paths.size()); }

  // Marginal of one coordinate at one sample index.
  std::vector<double> marginal(int comp, int sample) const {
    std::vector<double> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(p.state(sample, comp));
    return out;
  }
  std::vector<double> final_marginal(int comp = 0) const {
    return marginal(comp, static_cast<int>(sample_steps.size()) - 1);
  }

  // CSV dump: header path_id,step,t,x1..xn.
  void write_csv(std::ostream& os) const;
};

struct EnsembleOptions {
  std::int64_t record_stride = 1;  // record every k-th step (plus step 0 and the last)
  int threads = 0;                 // 0: hardware concurrency
  double max_abort_fraction = 1e-3;
};

namespace detail {

inline std::vector<std::int64_t> sample_steps_for(std::int64_t m_steps,
                                                  std::int64_t stride) {
  std::vector<std::int64_t> steps;
  if (stride < 1) stride = 1;
  for (std::int64_t s = 0; s < m_steps; s += stride) steps.push_back(s);
  steps.push_back(m_steps);
  return steps;
}

}  // namespace detail

// One path with dt = t_final / m_steps; each conditional increment starts
// from the state reached after the preceding step. Throws SimulationError
// when the state leaves the finite range.
inline Trajectory simulate_path(const SdeModel& model, const StepScheme& scheme,
                                const VectorXd& x0, double t_final,
                                std::int64_t m_steps, WienerStream& stream,
                                std::int64_t record_stride = 1) {
  if (t_final <= 0.0) throw SimulationError("simulate_path: t_final must be > 0");
  if (m_steps < 1) throw SimulationError("simulate_path: m_steps must be >= 1");
  if (x0.size() != model.dim()) throw SimulationError("simulate_path: x0 has wrong length");

  const int n = model.dim();
  const int m = model.noise_dim();
  const double dt = t_final / static_cast<double>(m_steps);
  const auto samples = detail::sample_steps_for(m_steps, record_stride);

  detail::StepBuffers buf;
  buf.init(model);
  std::vector<double> x(x0.data(), x0.data() + n);

  Trajectory traj;
  traj.dim = n;
  traj.data.reserve(samples.size() * static_cast<std::size_t>(n));

  std::size_t next_sample = 0;
  auto record_if_due = [&](std::int64_t step) {
    if (next_sample < samples.size() && samples[next_sample] == step) {
      traj.data.insert(traj.data.end(), x.begin(), x.end());
      ++next_sample;
    }
  };
  record_if_due(0);

  for (std::int64_t step = 0; step < m_steps; ++step) {
    stream.sample_dw_into(dt, m, buf.dw.data());
    if (scheme.kind == StepScheme::Kind::QIncrement) {
      detail::step_q_into(model, x.data(), dt, buf.dw.data(), buf.x_next.data(), buf);
    } else {
      detail::step_alpha_into(model, x.data(), dt, buf.dw.data(), scheme.alpha,
                              buf.x_next.data(), buf);
    }
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(buf.x_next[static_cast<std::size_t>(i)]))
        throw SimulationError("non-finite state at step " + std::to_string(step + 1) +
                              " (component " + std::to_string(i + 1) + ")");
    }
    std::swap(x, buf.x_next);
    record_if_due(step + 1);
  }
  return traj;
}

// Independent paths via distinct stream ids; deterministic for a given seed
// regardless of thread count.
inline PathEnsemble simulate_ensemble(const SdeModel& model, const StepScheme& scheme,
                                      const VectorXd& x0, double t_final,
                                      std::int64_t m_steps, int n_paths,
                                      std::uint64_t seed,
                                      const EnsembleOptions& opts = {}) {
  if (n_paths < 1) throw SimulationError("simulate_ensemble: n_paths must be >= 1");

  PathEnsemble ens;
  ens.model_label = model.label();
  ens.scheme = scheme;
  ens.x0.assign(x0.data(), x0.data() + x0.size());
  ens.t_final = t_final;
  ens.m_steps = m_steps;
  ens.seed = seed;
  ens.dim = model.dim();
  ens.sample_steps = detail::sample_steps_for(m_steps, opts.record_stride);
  for (auto s : ens.sample_steps)
    ens.sample_times.push_back(t_final * static_cast<double>(s) /
                               static_cast<double>(m_steps));

  std::vector<Trajectory> all(static_cast<std::size_t>(n_paths));
  std::vector<char> aborted(static_cast<std::size_t>(n_paths), 0);
  std::vector<std::string> abort_msgs(static_cast<std::size_t>(n_paths));

  int threads = opts.threads > 0
                    ? opts.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n_paths));

  std::atomic<int> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const int id = cursor.fetch_add(1);
      if (id >= n_paths) return;
      WienerStream stream(seed, static_cast<std::uint64_t>(id));
      try {
        all[static_cast<std::size_t>(id)] = simulate_path(
            model, scheme, x0, t_final, m_steps, stream, opts.record_stride);
      } catch (const std::exception& err) {
        aborted[static_cast<std::size_t>(id)] = 1;
        abort_msgs[static_cast<std::size_t>(id)] = err.what();
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int id = 0; id < n_paths; ++id) {
    if (aborted[static_cast<std::size_t>(id)]) {
      ens.aborted_ids.push_back(static_cast<std::uint64_t>(id));
    } else {
      ens.path_ids.push_back(static_cast<std::uint64_t>(id));
      ens.paths.push_back(std::move(all[static_cast<std::size_t>(id)]));
    }
  }

  const double abort_fraction =
      static_cast<double>(ens.aborted_ids.size()) / static_cast<double>(n_paths);
  if (abort_fraction > opts.max_abort_fraction) {
    std::string first;
    for (int id = 0; id < n_paths; ++id)
      if (aborted[static_cast<std::size_t>(id)]) {
        first = abort_msgs[static_cast<std::size_t>(id)];
        break;
      }
    throw SimulationError("ensemble failed: " + std::to_string(ens.aborted_ids.size()) +
                          " of " + std::to_string(n_paths) +
                          " paths aborted (first: " + first + ")");
  }
  return ens;
}

inline void PathEnsemble::write_csv(std::ostream& os) const {
  os << "path_id,step,t";
  for (int i = 1; i <= dim; ++i) os << ",x" << i;
  os << "\n";
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (std::size_t s = 0; s < sample_steps.size(); ++s) {
      os << path_ids[p] << ',' << sample_steps[s] << ','
         << expr::detail::format_double(sample_times[s]);
      for (int c = 0; c < dim; ++c)
        os << ',' << expr::detail::format_double(paths[p].state(static_cast<int>(s), c));
      os << "\n";
    }
  }
}

}  // namespace markovsde
