#include "hyrec/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "hyrec/expr.hpp"
#include "hyrec/field_io.hpp"

namespace hyrec {

namespace fs = std::filesystem;
using nlohmann::json;

const char* modality_name(ModalityKind kind) {
  switch (kind) {
    case ModalityKind::elastography: return "elastography";
    case ModalityKind::qpat: return "qpat";
    case ModalityKind::qtat: return "qtat";
    case ModalityKind::generic: return "generic";
  }
  return "?";
}

ModalityKind parse_modality(const std::string& name) {
  for (auto k : {ModalityKind::elastography, ModalityKind::qpat, ModalityKind::qtat,
                 ModalityKind::generic}) {
    if (name == modality_name(k)) return k;
  }
  throw ConfigError("unknown modality '" + name + "'");
}

std::vector<std::string> default_trace_expressions(int dim, int count) {
  static const std::vector<std::string> two = {"1", "x", "y", "x*y", "x^2-y^2"};
  static const std::vector<std::string> three = {"1",   "x",   "y",       "z",      "x*y",
                                                 "x*z", "y*z", "x^2-y^2", "x^2-z^2"};
  if (dim != 2 && dim != 3) throw ConfigError("default traces exist for n = 2, 3 only");
  if (count != scalar_measurement_count(dim) && count != tensor_measurement_count(dim)) {
    throw ConfigError("default traces need J = " + std::to_string(dim + 1) + " or J = " +
                      std::to_string(tensor_measurement_count(dim)) + " for n = " +
                      std::to_string(dim) + ", got " + std::to_string(count));
  }
  const auto& all = dim == 2 ? two : three;
  return {all.begin(), all.begin() + count};
}

std::vector<BoundaryTrace> make_traces(const std::vector<std::string>& expressions,
                                       const Grid& grid) {
  std::vector<BoundaryTrace> out;
  for (const auto& text : expressions) {
    out.push_back({expr::materialize_scalar(expr::parse(text), grid), text});
  }
  return out;
}

std::vector<BoundaryTrace> default_traces(const Grid& grid, int count) {
  return make_traces(default_trace_expressions(grid.dim(), count), grid);
}

namespace {

double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (const Complex& z : f.data()) m = std::max(m, std::abs(z));
  return m;
}

void require_zero_b(const CoefficientSet& k, ModalityKind kind) {
  for (const Complex& z : k.b.data()) {
    if (z != Complex{}) {
      throw ConfigError(std::string(modality_name(kind)) + " requires b = 0");
    }
  }
}

const ScalarField& require_gamma(const Modality& m) {
  if (!m.gamma) throw ConfigError(std::string(modality_name(m.kind)) + " requires gamma");
  return *m.gamma;
}

}  // namespace

Synthesis synthesize(const CoefficientSet& coeffs, const Modality& modality,
                     const std::vector<BoundaryTrace>& traces, const SolverSettings& settings,
                     double h1_threshold) {
  if (traces.empty()) throw ConfigError("no boundary traces given");
  const Grid& g = coeffs.grid();

  switch (modality.kind) {
    case ModalityKind::elastography:
      require_zero_b(coeffs, modality.kind);
      break;
    case ModalityKind::qpat:
      require_zero_b(coeffs, modality.kind);
      require_gamma(modality);
      for (const Complex& z : coeffs.c.data()) {
        if (z.imag() != 0.0 || !(z.real() > 0.0)) {
          throw ConfigError("qpat requires c real and positive (absorption)");
        }
      }
      break;
    case ModalityKind::qtat:
      require_zero_b(coeffs, modality.kind);
      require_gamma(modality);
      break;
    case ModalityKind::generic:
      if (!modality.d) throw ConfigError("generic modality requires d");
      break;
  }

  Synthesis out;
  const DirichletSolver solver(coeffs, settings);
  for (const auto& f : traces) out.solutions.push_back(solver.solve(f));

  ScalarField d(g, Complex{1.0, 0.0});
  switch (modality.kind) {
    case ModalityKind::elastography:
      break;
    case ModalityKind::qpat:
      for (std::size_t p = 0; p < g.size(); ++p) d(p) = (*modality.gamma)(p) * coeffs.c(p);
      break;
    case ModalityKind::qtat: {
      const ScalarField& u1 = out.solutions.front();
      for (std::size_t p = 0; p < g.size(); ++p) {
        d(p) = (*modality.gamma)(p) * coeffs.c(p).imag() * std::conj(u1(p));
      }
      out.d_solution_dependent = true;
      break;
    }
    case ModalityKind::generic:
      d = *modality.d;
      break;
  }

  MeasurementSet& ms = out.measurements;
  ms.modality = modality.kind;
  ms.traces = traces;
  for (const auto& u : out.solutions) {
    ScalarField h(g);
    for (std::size_t p = 0; p < g.size(); ++p) h(p) = d(p) * u(p);
    ms.functionals.push_back(std::move(h));
  }

  const ScalarField& h1 = ms.functionals.front();
  const double hmax = max_abs(h1);
  double hmin = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (g.on_boundary(p)) continue;
    if (std::abs(h1(p)) < hmin) {
      hmin = std::abs(h1(p));
      worst = p;
    }
  }
  if (!(hmin > h1_threshold * hmax)) {
    const auto x = g.point(worst);
    throw DegeneracyError("H_1 vanishes in the interior (min |H_1| = " + std::to_string(hmin) +
                          " at (" + std::to_string(x[0]) + ", " + std::to_string(x[1]) +
                          (g.dim() == 3 ? ", " + std::to_string(x[2]) : std::string()) +
                          ")); u_1 must not vanish");
  }
  ms.min_abs_h1 = hmin;
  out.d = std::move(d);
  return out;
}

ScalarField smooth_noise(const Grid& grid, double correlation_length, std::uint64_t seed) {
  if (!(correlation_length > 0.0)) throw ConfigError("noise correlation length must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> field(grid.size());
  for (double& v : field) v = normal(rng);

  for (int ax = 0; ax < grid.dim(); ++ax) {
    const double h = grid.spacing(ax);
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * correlation_length / h)));
    std::vector<double> kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k) {
      const double t = k * h / correlation_length;
      kernel[k + radius] = std::exp(-0.5 * t * t);
    }
    const std::size_t stride = grid.stride(ax);
    const int n = grid.shape(ax);
    std::vector<double> line(n);
    std::vector<double> next(field.size());
    for (std::size_t start = 0; start < grid.size(); ++start) {
      if ((start / stride) % n != 0) continue;
      for (int i = 0; i < n; ++i) line[i] = field[start + i * stride];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const int lo = std::max(0, i - radius);
        const int hi = std::min(n - 1, i + radius);
        for (int j = lo; j <= hi; ++j) acc += kernel[j - i + radius] * line[j];
        next[start + i * stride] = acc;
      }
    }
    field.swap(next);
  }

  double sup = 0.0;
  for (double v : field) sup = std::max(sup, std::abs(v));
  ScalarField out(grid);
  for (std::size_t p = 0; p < grid.size(); ++p) out(p) = sup > 0.0 ? field[p] / sup : 0.0;
  return out;
}

MeasurementSet add_noise(const MeasurementSet& ms, const NoiseSpec& spec) {
  if (spec.epsilon < 0.0) throw ConfigError("noise amplitude must be >= 0");
  MeasurementSet out = ms;
  if (spec.epsilon == 0.0) return out;
  out.noise = spec;
  for (std::size_t j = 0; j < out.functionals.size(); ++j) {
    ScalarField& h = out.functionals[j];
    const double amp = spec.epsilon * max_abs(h);
    // One independent stream per functional, derived from the single seed.
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                      static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(j)};
    std::uint64_t words[2];
    std::uint32_t raw[4];
    seq.generate(raw, raw + 4);
    words[0] = (std::uint64_t{raw[0]} << 32) | raw[1];
    words[1] = (std::uint64_t{raw[2]} << 32) | raw[3];
    const ScalarField eta = smooth_noise(h.grid(), spec.correlation_length, words[0] ^ words[1]);
    for (std::size_t p = 0; p < h.size(); ++p) h(p) += amp * eta(p);
  }
  return out;
}

void save_measurements(const MeasurementSet& ms, const fs::path& dir, bool d_solution_dependent) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["modality"] = modality_name(ms.modality);
  manifest["J"] = ms.count();
  json traces = json::array();
  for (std::size_t j = 0; j < ms.functionals.size(); ++j) {
    write_field(ms.functionals[j], dir / ("H_" + std::to_string(j + 1)));
    write_field(ms.traces[j].values, dir / ("f_" + std::to_string(j + 1)));
    traces.push_back(ms.traces[j].expression);
  }
  manifest["traces"] = traces;
  if (ms.noise) {
    manifest["noise"] = {{"epsilon", ms.noise->epsilon},
                         {"correlation_length", ms.noise->correlation_length},
                         {"seed", ms.noise->seed}};
  } else {
    manifest["noise"] = nullptr;
  }
  manifest["min_abs_H1"] = ms.min_abs_h1;
  manifest["d_solution_dependent"] = d_solution_dependent;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw Error("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

MeasurementSet load_measurements(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ConfigError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad manifest: ") + e.what());
  }
  MeasurementSet ms;
  ms.modality = parse_modality(manifest.at("modality").get<std::string>());
  const int count = manifest.at("J").get<int>();
  const auto& exprs = manifest.at("traces");
  for (int j = 0; j < count; ++j) {
    ms.functionals.push_back(read_field<FieldKind::scalar>(dir / ("H_" + std::to_string(j + 1))));
    ms.traces.push_back({read_field<FieldKind::scalar>(dir / ("f_" + std::to_string(j + 1))),
                         exprs.at(j).get<std::string>()});
  }
  if (!manifest.at("noise").is_null()) {
    const auto& n = manifest["noise"];
    ms.noise = NoiseSpec{n.at("epsilon").get<double>(), n.at("correlation_length").get<double>(),
                         n.at("seed").get<std::uint64_t>()};
  }
  ms.min_abs_h1 = manifest.at("min_abs_H1").get<double>();
  return ms;
}

}  // namespace hyrec
