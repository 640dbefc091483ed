#pragma once

// Subcommand implementations behind the command-line tool:
//   simulate        ensemble CSV
//   fpe-evolve      density CSV + mode/mean trajectory CSV + SVG plots
//   steady          flux-form steady density vs. a long-run Monte Carlo
//                   histogram, with an L1 verdict report
//   quasipotential  fixed-point analysis report (or a tabulated
//                   quasipotential for 1-D models)
//   compare         paired Monte Carlo / density-evolution experiment
//   validate        the full acceptance suite
//
// Every run writes a manifest. Exit codes: 0 success, 1 usage/config
// error, 2 numerical failure (diagnostic written next to the outputs).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "markovsde/acceptance.hpp"
#include "markovsde/config.hpp"
#include "markovsde/fpe.hpp"
#include "markovsde/io.hpp"
#include "markovsde/quasipotential.hpp"
#include "markovsde/stats.hpp"
#include "markovsde/version.hpp"

namespace markovsde {

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

inline void require_1d(const SdeModel& model, const std::string& subcommand) {
  if (model.dim() != 1)
    throw ConfigError("'" + subcommand + "' needs a 1-D model, but '" + model.label() +
                      "' has dimension " + std::to_string(model.dim()) +
                      " (the flux-form solver is 1-D only)");
}

inline std::string fmt(double v) { return expr::detail::format_double(v); }

struct KeyValueWriter {
  std::ofstream out;
  void line(const std::string& key, const std::string& value) {
    out << key << " = " << value << "\n";
  }
  void line(const std::string& key, double value) { line(key, fmt(value)); }
  void line(const std::string& key, bool value) {
    line(key, std::string(value ? "true" : "false"));
  }
};

}  // namespace detail

inline void run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                         std::ostream& log) {
  const SdeModel model = cfg.build_model();
  const VectorXd x0 = cfg.resolved_x0(model);
  const auto ensemble = simulate_ensemble(model, cfg.scheme, x0, cfg.t_final, cfg.m_steps,
                                          static_cast<int>(cfg.n_paths), cfg.seed);
  auto out = detail::open_output(dir / "ensemble.csv");
  ensemble.write_csv(out);
  log << "simulate: " << ensemble.n_paths() << " paths, " << cfg.m_steps << " steps -> "
      << (dir / "ensemble.csv").string() << "\n";
  if (!ensemble.aborted_ids.empty())
    log << "simulate: " << ensemble.aborted_ids.size() << " paths aborted\n";
}

inline void run_fpe_evolve(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                           std::ostream& log) {
  const SdeModel model = cfg.build_model();
  detail::require_1d(model, "fpe-evolve");
  const GridSpec grid = cfg.resolved_grid();
  const VectorXd x0 = cfg.resolved_x0(model);

  const DensityGrid w0 = gaussian_density(grid, x0(0), 3.0 * grid.dx());
  const double dt = stable_dt(model, grid, cfg.alpha);
  const auto result = evolve(model, w0, cfg.t_final, dt, cfg.alpha, {101});

  {
    auto out = detail::open_output(dir / "density.csv");
    write_density_csv(out, result.density,
                      {{"model", model.label()},
                       {"alpha", detail::fmt(cfg.alpha)},
                       {"t", detail::fmt(cfg.t_final)},
                       {"dt", detail::fmt(result.dt)}});
  }
  {
    auto out = detail::open_output(dir / "trajectory.csv");
    out << "t,mean,mode\n";
    for (const auto& p : result.track)
      out << detail::fmt(p.t) << ',' << detail::fmt(p.mean) << ',' << detail::fmt(p.mode)
          << "\n";
  }
  {
    SvgSeries density{"w(x, t_final)", {}, {}};
    for (int i = 0; i < result.density.n_cells(); ++i) {
      density.x.push_back(result.density.center(i));
      density.y.push_back(result.density.values[static_cast<std::size_t>(i)]);
    }
    auto out = detail::open_output(dir / "density.svg");
    write_svg_lines(out, model.label() + ": density at t = " + detail::fmt(cfg.t_final),
                    {density});
  }
  {
    SvgSeries mean{"mean", {}, {}}, mode{"mode", {}, {}};
    for (const auto& p : result.track) {
      mean.x.push_back(p.t);
      mean.y.push_back(p.mean);
      mode.x.push_back(p.t);
      mode.y.push_back(p.mode);
    }
    auto out = detail::open_output(dir / "trajectory.svg");
    write_svg_lines(out, model.label() + ": mean and mode", {mean, mode});
  }
  if (result.boundary_mass_warning)
    log << "fpe-evolve: warning: boundary density above 1e-10 of the peak; widen the grid\n";
  log << "fpe-evolve: " << result.steps << " steps of dt = " << result.dt << "\n";
}

inline void run_steady(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                       std::ostream& log) {
  const SdeModel model = cfg.build_model();
  detail::require_1d(model, "steady");
  const GridSpec grid = cfg.resolved_grid();
  const VectorXd x0 = cfg.resolved_x0(model);

  const DensityGrid steady = steady_1d(model, grid, cfg.alpha);
  {
    auto out = detail::open_output(dir / "steady_alpha.csv");
    write_density_csv(out, steady,
                      {{"model", model.label()}, {"alpha", detail::fmt(cfg.alpha)}});
  }

  // long-run Monte Carlo marginal under the configured scheme
  const auto ensemble =
      simulate_ensemble(model, cfg.scheme, x0, cfg.t_final, cfg.m_steps,
                        static_cast<int>(cfg.n_paths), cfg.seed, {cfg.m_steps, 0, 1e-3});
  const auto samples = ensemble.final_marginal();
  const auto hist = histogram(samples, grid);
  {
    auto out = detail::open_output(dir / "steady_mc.csv");
    write_density_csv(out, hist.density,
                      {{"model", model.label()},
                       {"scheme", cfg.scheme.name()},
                       {"t", detail::fmt(cfg.t_final)},
                       {"n_paths", std::to_string(ensemble.n_paths())}});
  }

  const double l1 = l1_distance(steady, hist.density);
  const auto mode = density_mode(steady);
  const double mean = steady.mean();
  const auto mc_moments = moments(samples);
  {
    detail::KeyValueWriter report{detail::open_output(dir / "steady_report.txt")};
    report.line("model", model.label());
    report.line("alpha", cfg.alpha);
    report.line("scheme_mc", cfg.scheme.name());
    report.line("l1_mc_vs_steady", l1);
    report.line("steady_mode", mode.value);
    report.line("steady_mode_at_boundary", mode.at_boundary);
    report.line("steady_mean", mean);
    report.line("mc_mean", mc_moments.mean);
    report.line("mc_std_error", mc_moments.std_error);
    report.line("mode_at_zero", std::abs(mode.value) <= grid.dx());
    report.line("mean_positive", mean > 0.0);
    report.line("out_of_range_samples", static_cast<double>(hist.below + hist.above));
  }
  {
    SvgSeries sa{"flux-form steady", {}, {}}, sm{"monte carlo", {}, {}};
    for (int i = 0; i < steady.n_cells(); ++i) {
      sa.x.push_back(steady.center(i));
      sa.y.push_back(steady.values[static_cast<std::size_t>(i)]);
      sm.x.push_back(hist.density.center(i));
      sm.y.push_back(hist.density.values[static_cast<std::size_t>(i)]);
    }
    auto out = detail::open_output(dir / "steady.svg");
    write_svg_lines(out, model.label() + ": steady density", {sa, sm});
  }
  log << "steady: L1(mc, steady) = " << l1 << "\n";
}

inline void run_quasipotential(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                               std::ostream& log) {
  const SdeModel model = cfg.build_model();
  if (model.dim() == 1) {
    const GridSpec grid = cfg.resolved_grid();
    const auto table = quasipotential_1d(model, grid.x_min, grid.x_max, grid.n_cells + 1);
    auto out = detail::open_output(dir / "quasipotential.csv");
    out << "x,phi\n";
    for (std::size_t j = 0; j < table.x.size(); ++j)
      out << detail::fmt(table.x[j]) << ',' << detail::fmt(table.phi[j]) << "\n";
    detail::KeyValueWriter report{detail::open_output(dir / "report.txt")};
    report.line("model", model.label());
    report.line("x_star", table.x_star);
    log << "quasipotential: tabulated over [" << grid.x_min << ", " << grid.x_max << "]\n";
    return;
  }

  const VectorXd guess = cfg.resolved_x0(model);
  const auto report = analyze_steady_state(model, guess);
  {
    auto out = detail::open_output(dir / "report.txt");
    write_report(out, report);
  }
  auto dump = [&](const std::string& name, const MatrixXd& m) {
    if (m.size() == 0) return;
    auto out = detail::open_output(dir / (name + ".csv"));
    write_matrix_csv(out, m);
  };
  dump("M", report.fixed_point.m_jacobian);
  dump("D", report.fixed_point.d_star);
  dump("A_explicit", report.a_explicit);
  dump("A_balance", report.a_balance);
  dump("S_explicit", report.s_explicit);
  dump("S_covariance", report.s_covariance);
  dump("sigma", report.sigma);
  log << "quasipotential: " << (report.partial ? "partial report" : "full report")
      << " at x* = " << detail::vector_to_string(report.fixed_point.x_star) << "\n";
}

inline void run_compare(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                        std::ostream& log) {
  const SdeModel model = cfg.build_model();
  detail::require_1d(model, "compare");
  const GridSpec grid = cfg.resolved_grid();
  const VectorXd x0 = cfg.resolved_x0(model);

  const auto ensemble =
      simulate_ensemble(model, cfg.scheme, x0, cfg.t_final, cfg.m_steps,
                        static_cast<int>(cfg.n_paths), cfg.seed, {cfg.m_steps, 0, 1e-3});
  const auto samples = ensemble.final_marginal();
  const auto hist = histogram(samples, grid);
  const auto mc = moments(samples);
  const auto mc_mode = kde_mode(samples);

  const DensityGrid w0 = gaussian_density(grid, x0(0), 3.0 * grid.dx());
  const auto fpe_result =
      evolve(model, w0, cfg.t_final, stable_dt(model, grid, cfg.alpha), cfg.alpha);
  const double fpe_mean = fpe_result.density.mean();
  const auto fpe_mode = density_mode(fpe_result.density);

  const double l1 = l1_distance(hist.density, fpe_result.density);
  const double scale = std::max(std::sqrt(mc.variance), 1e-12);

  const double l1_tol = 0.05;
  const double mean_tol = std::max(3.0 * mc.std_error, 0.02 * scale);
  const double mode_tol = std::max(mc_mode.bandwidth, grid.dx());

  {
    auto out = detail::open_output(dir / "compare.csv");
    out << "metric,monte_carlo,fpe,difference,tolerance,verdict\n";
    out << "l1_distance,," << detail::fmt(l1) << ',' << detail::fmt(l1) << ','
        << detail::fmt(l1_tol) << ',' << (l1 <= l1_tol ? "pass" : "fail") << "\n";
    const double mean_diff = std::abs(mc.mean - fpe_mean);
    out << "mean," << detail::fmt(mc.mean) << ',' << detail::fmt(fpe_mean) << ','
        << detail::fmt(mean_diff) << ',' << detail::fmt(mean_tol) << ','
        << (mean_diff <= mean_tol ? "pass" : "fail") << "\n";
    const double mode_diff = std::abs(mc_mode.mode - fpe_mode.value);
    out << "mode," << detail::fmt(mc_mode.mode) << ',' << detail::fmt(fpe_mode.value) << ','
        << detail::fmt(mode_diff) << ',' << detail::fmt(mode_tol) << ','
        << (mode_diff <= mode_tol ? "pass" : "fail") << "\n";
  }
  {
    SvgSeries sm{"monte carlo", {}, {}}, sf{"fpe", {}, {}};
    for (int i = 0; i < grid.n_cells; ++i) {
      sm.x.push_back(hist.density.center(i));
      sm.y.push_back(hist.density.values[static_cast<std::size_t>(i)]);
      sf.x.push_back(fpe_result.density.center(i));
      sf.y.push_back(fpe_result.density.values[static_cast<std::size_t>(i)]);
    }
    auto out = detail::open_output(dir / "compare.svg");
    write_svg_lines(out, model.label() + ": ensemble vs density at t = " +
                             detail::fmt(cfg.t_final),
                    {sm, sf});
  }
  log << "compare: L1 = " << l1 << ", mc mean = " << mc.mean << ", fpe mean = " << fpe_mean
      << "\n";
}

inline int run_subcommand(const std::string& subcommand, ExperimentConfig cfg,
                          std::ostream& log) {
  if (const char* env_seed = std::getenv("MARKOVSDE_SEED")) {
    try {
      cfg.seed = std::stoull(env_seed);
      log << "seed overridden by MARKOVSDE_SEED = " << cfg.seed << "\n";
    } catch (const std::exception&) {
      log << "error: MARKOVSDE_SEED is not an integer: " << env_seed << "\n";
      return 1;
    }
  }

  const std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    log << "error: cannot create output directory '" << dir.string() << "': " << ec.message()
        << "\n";
    return 1;
  }

  Manifest manifest;
  manifest.config_hash = hex64(fnv1a_hash(cfg.to_json().dump()));
  manifest.seed = cfg.seed;
  manifest.version = kVersion;
  manifest.subcommand = subcommand;
  manifest.started = utc_timestamp(std::time(nullptr));
  const auto t0 = std::chrono::steady_clock::now();

  auto finish = [&](int code) {
    manifest.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto out = detail::open_output(dir / "manifest.txt");
    write_manifest(out, manifest);
    return code;
  };

  try {
    if (subcommand == "simulate") {
      run_simulate(cfg, dir, log);
    } else if (subcommand == "fpe-evolve") {
      run_fpe_evolve(cfg, dir, log);
    } else if (subcommand == "steady") {
      run_steady(cfg, dir, log);
    } else if (subcommand == "quasipotential") {
      run_quasipotential(cfg, dir, log);
    } else if (subcommand == "compare") {
      run_compare(cfg, dir, log);
    } else if (subcommand == "validate") {
      const SubcommandRunner self = [](const std::string& name, ExperimentConfig sub_cfg,
                                       std::ostream& sub_log) {
        return run_subcommand(name, std::move(sub_cfg), sub_log);
      };
      const auto results = run_acceptance(log, self);
      auto out = detail::open_output(dir / "validate_report.txt");
      print_acceptance(out, results);
      return finish(all_passed(results) ? 0 : 2);
    } else {
      log << "error: unknown subcommand '" << subcommand << "'\n";
      return 1;
    }
    return finish(0);
  } catch (const ConfigError& err) {
    log << "config error: " << err.what() << "\n";
    return 1;
  } catch (const CatalogError& err) {
    log << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    log << "numerical failure: " << err.what() << "\n";
    try {
      auto out = detail::open_output(dir / "error.txt");
      out << subcommand << " failed: " << err.what() << "\n";
    } catch (const std::exception&) {
    }
    return finish(2);
  }
}

}  // namespace markovsde
