#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyrec/admissibility.hpp"
#include "hyrec/gauge.hpp"

namespace hyrec {

inline constexpr int kSchemaVersion = 1;

enum class StudyKind { single, convergence, noise_sweep };

/// Declarative experiment. Expression fields are phantom-DSL strings.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::vector<Interval> bounds;
  std::vector<int> shape;
  /// Data are synthesized on a grid refined by this factor and sampled back.
  int synthesis_refinement = 1;
  std::vector<std::string> a;  // one scalar expression or sym_size(n) entries
  std::vector<std::string> b;  // empty means zero
  std::string c = "0";
  AModel a_model = AModel::tensor;
  ModalityKind modality = ModalityKind::elastography;
  std::string gamma = "1";
  std::string d = "1";
  std::optional<BConstraint::Kind> constraint_kind;
  int constraint_axis = 0;
  std::string constraint_value = "0";
  bool known_d = false;
  std::vector<std::string> traces;  // empty means default
  NoiseSpec noise;
  SolverSettings solver;
  StudyKind study = StudyKind::single;
  std::vector<int> levels;
  std::vector<double> noise_levels;
  AdmissibilityThresholds thresholds;
  std::vector<SubBox> covering;
  std::uint64_t seed = 0;
  std::string output = "out";
};

/// Validates against the shipped schema rules (unknown keys, types, ranges)
/// before anything is computed. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Discrete proxies of the Hoelder norms: sup of the difference, then also of
/// its first and second differences, on the mask.
struct ErrorMetrics {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double rel_c0 = 0.0;
  double rel_c1 = 0.0;
  double rel_c2 = 0.0;
  double masked_fraction = 0.0;
};

/// Component-wise over all components of the field kind. Derivatives count
/// only at mask points whose stencil stays on the mask. Throws ConfigError on
/// an empty mask or mismatched grids.
template <FieldKind K>
ErrorMetrics error_norms(const Field<K>& field, const Field<K>& reference,
                         const InteriorMask& mask);

/// Ground-truth fields realized on a grid.
struct GroundTruth {
  CoefficientSet coeffs;
  Modality modality;
};
GroundTruth materialize_truth(const ExperimentConfig& cfg, const Grid& grid);

Grid config_grid(const ExperimentConfig& cfg, int level_shape = 0);

/// Forward solves plus d, possibly on the refined grid, sampled back to `grid`.
Synthesis synthesize_on(const ExperimentConfig& cfg, const Grid& grid);

struct SingleResult {
  Grid grid;
  Reconstruction recon;
  ResolvedCoefficients resolved;
  std::map<std::string, ErrorMetrics> metrics;
  MeasurementSet measurements;
  GroundTruth truth;
};

/// Reconstruction and resolution from measurements, with anchors and
/// modality parameters taken from the config's ground truth.
SingleResult reconstruct_and_resolve(const ExperimentConfig& cfg, const MeasurementSet& ms);

/// synthesize -> noise -> reconstruct -> resolve -> metrics.
SingleResult run_single(const ExperimentConfig& cfg, int level_shape = 0);

struct ConvergenceRow {
  std::string quantity;
  int shape = 0;
  double h = 0.0;
  double abs_c0 = 0.0;
  double rel_c0 = 0.0;
};
struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::map<std::string, double> order;  // NaN when not fittable
  std::vector<std::string> warnings;
};
ConvergenceResult run_convergence(const ExperimentConfig& cfg);

/// Least-squares slope of log(err) against log(h).
double fitted_order(const std::vector<double>& h, const std::vector<double>& err);

struct NoiseRow {
  double epsilon = 0.0;
  double delta_h_c2 = 0.0;
  std::string quantity;
  double c0 = 0.0;
  double c1 = 0.0;
  double ratio = 0.0;  // c0 / delta_h_c2, NaN at epsilon = 0
};
struct NoiseSweepResult {
  std::vector<NoiseRow> rows;
  std::map<std::string, double> spread;  // max ratio / min ratio over epsilon > 0
};
NoiseSweepResult run_noise_sweep(const ExperimentConfig& cfg);

/// Output writers. CSV columns are fixed; numbers use %.17g.
void write_metrics_csv(const SingleResult& r, const std::filesystem::path& path);
void write_convergence_csv(const ConvergenceResult& r, const std::filesystem::path& path);
void write_noise_csv(const NoiseSweepResult& r, const std::filesystem::path& path);
nlohmann::json report_json(const SingleResult& r);
nlohmann::json report_json(const ConvergenceResult& r);
nlohmann::json report_json(const NoiseSweepResult& r);
void write_resolved_fields(const ResolvedCoefficients& r, const std::filesystem::path& dir);
void write_intermediates(const Reconstruction& rec, const std::filesystem::path& dir);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace hyrec
