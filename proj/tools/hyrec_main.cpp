// hyrec: synthesize internal functionals, reconstruct coefficients, and run
// the convergence / noise studies from one JSON config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hyrec/field_io.hpp"
#include "hyrec/harness.hpp"

namespace fs = std::filesystem;
using namespace hyrec;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  bool dump = false;
};

ExperimentConfig need_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this command");
  ExperimentConfig cfg = load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.noise.seed = *g.seed;
  }
  if (!g.out.empty()) cfg.output = g.out;
  return cfg;
}

/// Measurements from --data, or synthesized (with noise) from the config.
MeasurementSet measurements(const Globals& g, const ExperimentConfig& cfg) {
  if (!g.data.empty()) return load_measurements(g.data);
  const Synthesis syn = synthesize_on(cfg, config_grid(cfg));
  return add_noise(syn.measurements, cfg.noise);
}

void print_metrics(const SingleResult& r) {
  std::printf("%-8s %14s %14s %14s\n", "quantity", "rel C0", "rel C1", "rel C2");
  for (const auto& [name, m] : r.metrics) {
    std::printf("%-8s %14.6e %14.6e %14.6e\n", name.c_str(), m.rel_c0, m.rel_c1, m.rel_c2);
  }
  for (const auto& w : r.resolved.report.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("%s\n", r.resolved.report.audit.statement().c_str());
}

void write_single(const SingleResult& r, const fs::path& out, bool dump) {
  write_resolved_fields(r.resolved, out / "fields");
  write_json(report_json(r), out / "report.json");
  write_metrics_csv(r, out / "metrics.csv");
  if (dump) write_intermediates(r.recon, out / "intermediates");
}

int cmd_forward(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const Grid grid = config_grid(cfg);
  const Synthesis syn = synthesize_on(cfg, grid);
  const fs::path out = cfg.output;
  for (std::size_t j = 0; j < syn.solutions.size(); ++j) {
    write_field(syn.solutions[j], out / "solutions" / ("u_" + std::to_string(j + 1)));
  }
  const GroundTruth t = materialize_truth(cfg, grid);
  write_field(t.coeffs.a, out / "truth" / "a");
  write_field(t.coeffs.b, out / "truth" / "b");
  write_field(t.coeffs.c, out / "truth" / "c");
  write_field(syn.d, out / "truth" / "d");
  std::printf("wrote %zu solutions to %s\n", syn.solutions.size(), (out / "solutions").c_str());
  return 0;
}

int cmd_synth(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const Synthesis syn = synthesize_on(cfg, config_grid(cfg));
  const MeasurementSet ms = add_noise(syn.measurements, cfg.noise);
  const fs::path out = cfg.output;
  save_measurements(ms, out / "measurements", syn.d_solution_dependent);
  write_field(syn.d, out / "truth" / "d");
  std::printf("wrote J = %d functionals to %s (min |H_1| = %.6e)\n", ms.count(),
              (out / "measurements").c_str(), ms.min_abs_h1);
  return 0;
}

int cmd_reconstruct(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg = need_config(g);
  if (!g.out.empty()) cfg.output = g.out;
  if (g.config.empty() && g.data.empty()) throw ConfigError("reconstruct needs --config or --data");
  const MeasurementSet ms = measurements(g, cfg);
  const Reconstruction rec = reconstruct(ms, cfg.a_model);
  const fs::path out = fs::path(cfg.output) / "reconstruction";
  write_intermediates(rec, out);
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["J"] = ms.count();
  j["valid_points"] = rec.ab.mask.count();
  j["interior_points"] = interior_mask(ms.grid(), 1).count();
  j["null_combination_residual"] = rec.theta_m.max_residual;
  j["ratio_boundary_mismatch"] = rec.ratios.boundary_mismatch;
  write_json(j, out / "report.json");
  std::printf("alpha, beta valid on %zu of %zu interior points; fields in %s\n",
              rec.ab.mask.count(), interior_mask(ms.grid(), 1).count(), out.c_str());
  return 0;
}

int cmd_resolve(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const SingleResult r = reconstruct_and_resolve(cfg, measurements(g, cfg));
  write_single(r, cfg.output, g.dump);
  print_metrics(r);
  return 0;
}

int cmd_check(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg = need_config(g);
  if (!g.out.empty()) cfg.output = g.out;
  if (g.config.empty() && g.data.empty()) throw ConfigError("check needs --config or --data");
  const MeasurementSet ms = measurements(g, cfg);
  const AdmissibilityReport rep = check(ms, cfg.covering, cfg.thresholds);
  std::cout << format_table(rep);
  write_json(to_json(rep), fs::path(cfg.output) / "admissibility.json");
  return rep.pass() ? 0 : 4;
}

int cmd_run(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const SingleResult r = run_single(cfg);
  write_single(r, cfg.output, g.dump);
  print_metrics(r);
  return 0;
}

int cmd_convergence(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const ConvergenceResult r = run_convergence(cfg);
  write_convergence_csv(r, fs::path(cfg.output) / "convergence.csv");
  write_json(report_json(r), fs::path(cfg.output) / "convergence.json");
  for (const auto& [name, o] : r.order) std::printf("%-8s order %.3f\n", name.c_str(), o);
  for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
  return 0;
}

int cmd_noise_sweep(const Globals& g) {
  const ExperimentConfig cfg = need_config(g);
  const NoiseSweepResult r = run_noise_sweep(cfg);
  write_noise_csv(r, fs::path(cfg.output) / "noise_sweep.csv");
  write_json(report_json(r), fs::path(cfg.output) / "noise_sweep.json");
  for (const auto& [name, s] : r.spread) {
    std::printf("%-8s error / |dH|_C2 spread %.3f\n", name.c_str(), s);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid-data coefficient reconstruction laboratory"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_option("--data", g.data, "measurement directory written by 'synth'");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_flag("--dump-intermediates", g.dump, "write v_j, M^m, alpha, beta, quality fields");
  app.fallthrough();

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Globals&);
  };
  const Cmd cmds[] = {
      {"forward", "solve the forward problems and write u_j", cmd_forward},
      {"synth", "write the measurement set H_j (with noise)", cmd_synth},
      {"reconstruct", "recover alpha, beta from the functionals", cmd_reconstruct},
      {"resolve", "reconstruct and resolve (a, b, c, d) for the modality", cmd_resolve},
      {"check", "admissibility margins (exit 4 when a condition fails)", cmd_check},
      {"run", "single end-to-end experiment with error metrics", cmd_run},
      {"convergence", "refinement study with fitted orders", cmd_convergence},
      {"noise-sweep", "noise-stability study", cmd_noise_sweep},
  };
  int (*chosen)(const Globals&) = nullptr;
  for (const Cmd& c : cmds) {
    app.add_subcommand(c.name, c.help)->callback([&chosen, fn = c.fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    return chosen(g);
  } catch (const ConfigError& e) {
    std::cerr << "error [config]: " << e.what() << '\n';
    return 2;
  } catch (const EvaluationError& e) {
    std::cerr << "error [phantom]: " << e.what() << '\n';
    return 2;
  } catch (const AssemblyError& e) {
    std::cerr << "error [forward]: " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "error [solver]: " << e.what() << " (residual " << e.residual() << ")\n";
    return 3;
  } catch (const DegeneracyError& e) {
    std::cerr << "error [degeneracy]: " << e.what() << '\n';
    return 4;
  } catch (const ResolutionError& e) {
    std::cerr << "error [gauge]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
