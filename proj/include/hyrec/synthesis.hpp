#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hyrec/forward.hpp"

namespace hyrec {

enum class ModalityKind { elastography, qpat, qtat, generic };

const char* modality_name(ModalityKind kind);
ModalityKind parse_modality(const std::string& name);

/// How the weight d in H_j = d u_j is formed.
///   elastography: d = 1, b = 0
///   qpat:         d = gamma * c, b = 0, c real positive
///   qtat:         d = gamma * Im(c) * conj(u_1), b = 0
///   generic:      d given, non-vanishing
struct Modality {
  ModalityKind kind = ModalityKind::elastography;
  std::optional<ScalarField> gamma;
  std::optional<ScalarField> d;
};

struct NoiseSpec {
  double epsilon = 0.0;
  double correlation_length = 0.1;
  std::uint64_t seed = 0;
};

/// Everything the reconstruction side may read.
struct MeasurementSet {
  ModalityKind modality = ModalityKind::elastography;
  std::vector<BoundaryTrace> traces;
  std::vector<ScalarField> functionals;
  double min_abs_h1 = 0.0;
  std::optional<NoiseSpec> noise;

  int count() const { return static_cast<int>(functionals.size()); }
  const Grid& grid() const { return functionals.front().grid(); }
};

/// Output of synthesize(): the measurements plus the hidden quantities that
/// produced them (solutions u_j and the realized d). Only `measurements` may
/// be handed to the reconstruction side.
struct Synthesis {
  MeasurementSet measurements;
  std::vector<ScalarField> solutions;
  ScalarField d;
  /// True for QTAT, whose d depends on u_1.
  bool d_solution_dependent = false;
};

/// Number of functionals required by the tensor pipeline: n(n+3)/2.
constexpr int tensor_measurement_count(int dim) { return dim * (dim + 3) / 2; }
/// Number of M matrices: n(n+1)/2 - 1.
constexpr int m_matrix_count(int dim) { return dim * (dim + 1) / 2 - 1; }
constexpr int scalar_measurement_count(int dim) { return dim + 1; }

/// {1, x, y, xy, x^2-y^2} in 2-D, {1, x, y, z, xy, xz, yz, x^2-y^2, x^2-z^2}
/// in 3-D, truncated to J. J must be n+1 or n(n+3)/2.
std::vector<std::string> default_trace_expressions(int dim, int count);

std::vector<BoundaryTrace> make_traces(const std::vector<std::string>& expressions,
                                       const Grid& grid);
std::vector<BoundaryTrace> default_traces(const Grid& grid, int count);

inline constexpr double kDefaultH1Threshold = 1e-8;

Synthesis synthesize(const CoefficientSet& coeffs, const Modality& modality,
                     const std::vector<BoundaryTrace>& traces,
                     const SolverSettings& settings = {},
                     double h1_threshold = kDefaultH1Threshold);

/// Smooth random field: white noise convolved with a Gaussian of standard
/// deviation `correlation_length`, scaled to unit sup norm.
ScalarField smooth_noise(const Grid& grid, double correlation_length, std::uint64_t seed);

/// H_j + eps * |H_j|_inf * eta_j. eps = 0 returns the input unchanged.
MeasurementSet add_noise(const MeasurementSet& ms, const NoiseSpec& spec);

void save_measurements(const MeasurementSet& ms, const std::filesystem::path& dir,
                       bool d_solution_dependent = false);
MeasurementSet load_measurements(const std::filesystem::path& dir);

}  // namespace hyrec
