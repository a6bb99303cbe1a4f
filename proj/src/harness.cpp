#include "hyrec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "hyrec/calculus.hpp"
#include "hyrec/expr.hpp"
#include "hyrec/field_io.hpp"

namespace hyrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---- config validation ---------------------------------------------------

void only_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

const json* opt(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string get_string(const json& v, const std::string& what) {
  if (!v.is_string()) throw ConfigError(what + " must be a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw ConfigError(what + " must be an integer");
  return v.get<int>();
}

std::vector<std::string> string_list(const json& v, const std::string& what) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(what + " must be a string or a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(get_string(e, what + " entry"));
  return out;
}

std::vector<Interval> parse_bounds(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be a list of [lo, hi] pairs");
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!iv.is_array() || iv.size() != 2) throw ConfigError(what + " entries must be [lo, hi]");
    out.push_back({get_number(iv[0], what), get_number(iv[1], what)});
  }
  return out;
}

// Every expression in the config is parsed up front so syntax errors surface
// before any compute.
void check_expr(const std::string& text, const std::string& what) {
  try {
    (void)expr::parse(text);
  } catch (const ParseError& e) {
    throw ParseError(what + ": " + e.what(), e.offset());
  }
}

// ---- field helpers -------------------------------------------------------

ScalarField scalar(const std::string& text, const Grid& g) {
  return expr::materialize_scalar(expr::parse(text), g);
}

Grid refined(const Grid& g, int factor) {
  std::vector<Interval> b;
  std::vector<int> s;
  for (int ax = 0; ax < g.dim(); ++ax) {
    b.push_back(g.bounds(ax));
    s.push_back((g.shape(ax) - 1) * factor + 1);
  }
  return make_grid(b, s);
}

template <FieldKind K>
Field<K> sample(const Field<K>& fine, const Grid& coarse, int factor) {
  Field<K> out(coarse);
  const Grid& fg = fine.grid();
  const int n = coarse.dim();
  for (std::size_t p = 0; p < coarse.size(); ++p) {
    auto m = coarse.multi_index(p);
    for (int ax = 0; ax < n; ++ax) m[ax] *= factor;
    const std::size_t q = fg.index(std::span<const int>(m.data(), n));
    for (int c = 0; c < out.components(); ++c) out(p, c) = fine(q, c);
  }
  return out;
}

template <FieldKind K>
double sup_on(const Field<K>& f, const InteriorMask& mask) {
  double s = 0.0;
  for (std::size_t p = 0; p < f.size(); ++p) {
    if (!mask[p]) continue;
    for (const Complex& z : f.at(p)) s = std::max(s, std::abs(z));
  }
  return s;
}

/// sup over points of `mask` of all first (order 1) or second (order 2)
/// differences of every component.
template <FieldKind K>
double derivative_sup(const Field<K>& f, const InteriorMask& mask, int order) {
  double s = 0.0;
  for (int c = 0; c < f.components(); ++c) {
    const ScalarField fc = component(f, c);
    if (order == 1) {
      const VectorField d = gradient(fc);
      s = std::max(s, sup_on(d, mask));
    } else {
      const SymTensorField d = hessian(fc);
      s = std::max(s, sup_on(d, mask));
    }
  }
  return s;
}

void inverse_times(const SymTensorField& a, const VectorField& b, VectorField& out) {
  const Grid& g = a.grid();
  const int n = g.dim();
  out = VectorField(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3> m(n, n);
    Eigen::Matrix<Complex, Eigen::Dynamic, 1, 0, 3, 1> v(n);
    for (int i = 0; i < n; ++i) {
      v(i) = b(p, i);
      for (int j = 0; j < n; ++j) m(i, j) = a(p, i, j);
    }
    const auto x = m.inverse() * v;
    for (int i = 0; i < n; ++i) out(p, i) = x(i);
  }
}

void put_field(json& j, const char* key, double v) { j[key] = std::isfinite(v) ? json(v) : json(nullptr); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

}  // namespace

// ---- config --------------------------------------------------------------

ExperimentConfig parse_config(const json& j) {
  only_keys(j, "config",
            {"schema_version", "description", "grid", "coefficients", "a_model", "modality",
             "traces", "noise", "solver", "study", "levels", "noise_levels", "thresholds",
             "covering", "seed", "output"});
  ExperimentConfig cfg;
  if (auto v = opt(j, "schema_version")) {
    cfg.schema_version = get_int(*v, "schema_version");
    if (cfg.schema_version != kSchemaVersion) {
      throw ConfigError("unsupported schema_version " + std::to_string(cfg.schema_version));
    }
  }
  if (auto v = opt(j, "description")) (void)get_string(*v, "description");

  const json* grid = opt(j, "grid");
  if (!grid) throw ConfigError("config needs a 'grid' section");
  only_keys(*grid, "grid", {"bounds", "shape", "synthesis_refinement"});
  if (!opt(*grid, "bounds") || !opt(*grid, "shape")) {
    throw ConfigError("grid needs 'bounds' and 'shape'");
  }
  cfg.bounds = parse_bounds((*grid)["bounds"], "grid.bounds");
  if (!(*grid)["shape"].is_array()) throw ConfigError("grid.shape must be a list of integers");
  for (const auto& s : (*grid)["shape"]) cfg.shape.push_back(get_int(s, "grid.shape entry"));
  if (cfg.shape.size() != cfg.bounds.size()) {
    throw ConfigError("grid.bounds and grid.shape differ in length");
  }
  const int n = static_cast<int>(cfg.bounds.size());
  (void)make_grid(cfg.bounds, cfg.shape);  // range checks
  if (auto v = opt(*grid, "synthesis_refinement")) {
    cfg.synthesis_refinement = get_int(*v, "grid.synthesis_refinement");
    if (cfg.synthesis_refinement < 1) throw ConfigError("grid.synthesis_refinement must be >= 1");
  }

  const json* coeffs = opt(j, "coefficients");
  if (!coeffs) throw ConfigError("config needs a 'coefficients' section");
  only_keys(*coeffs, "coefficients", {"a", "b", "c"});
  cfg.a = opt(*coeffs, "a") ? string_list((*coeffs)["a"], "coefficients.a")
                            : std::vector<std::string>{"1"};
  if (cfg.a.size() != 1 && static_cast<int>(cfg.a.size()) != sym_size(n)) {
    throw ConfigError("coefficients.a needs 1 or " + std::to_string(sym_size(n)) +
                      " expressions (layout 11, 22, 12 / 11, 22, 33, 23, 13, 12)");
  }
  if (auto v = opt(*coeffs, "b")) {
    cfg.b = string_list(*v, "coefficients.b");
    if (static_cast<int>(cfg.b.size()) != n) {
      throw ConfigError("coefficients.b needs " + std::to_string(n) + " expressions");
    }
  }
  if (auto v = opt(*coeffs, "c")) cfg.c = get_string(*v, "coefficients.c");
  for (const auto& e : cfg.a) check_expr(e, "coefficients.a");
  for (const auto& e : cfg.b) check_expr(e, "coefficients.b");
  check_expr(cfg.c, "coefficients.c");

  if (auto v = opt(j, "a_model")) {
    const std::string m = get_string(*v, "a_model");
    if (m == "tensor") {
      cfg.a_model = AModel::tensor;
    } else if (m == "scalar") {
      cfg.a_model = AModel::scalar;
    } else {
      throw ConfigError("a_model must be 'scalar' or 'tensor'");
    }
  }

  if (auto v = opt(j, "modality")) {
    only_keys(*v, "modality", {"type", "gamma", "d", "b_constraint", "known_d"});
    if (!opt(*v, "type")) throw ConfigError("modality needs 'type'");
    cfg.modality = parse_modality(get_string((*v)["type"], "modality.type"));
    if (auto g = opt(*v, "gamma")) cfg.gamma = get_string(*g, "modality.gamma");
    if (auto d = opt(*v, "d")) cfg.d = get_string(*d, "modality.d");
    if (auto k = opt(*v, "known_d")) {
      if (!k->is_boolean()) throw ConfigError("modality.known_d must be a boolean");
      cfg.known_d = k->get<bool>();
    }
    if (auto bc = opt(*v, "b_constraint")) {
      only_keys(*bc, "modality.b_constraint", {"kind", "axis", "value"});
      const std::string kind = get_string(bc->value("kind", json()), "b_constraint.kind");
      if (kind == "divergence") {
        cfg.constraint_kind = BConstraint::Kind::divergence;
      } else if (kind == "component") {
        cfg.constraint_kind = BConstraint::Kind::component;
      } else {
        throw ConfigError("b_constraint.kind must be 'divergence' or 'component'");
      }
      if (auto a = opt(*bc, "axis")) cfg.constraint_axis = get_int(*a, "b_constraint.axis");
      if (cfg.constraint_axis < 0 || cfg.constraint_axis >= n) {
        throw ConfigError("b_constraint.axis out of range");
      }
      if (auto val = opt(*bc, "value")) cfg.constraint_value = get_string(*val, "b_constraint.value");
      check_expr(cfg.constraint_value, "b_constraint.value");
    }
    check_expr(cfg.gamma, "modality.gamma");
    check_expr(cfg.d, "modality.d");
  }
  if (cfg.modality == ModalityKind::generic && !cfg.constraint_kind) {
    throw ConfigError("generic modality needs modality.b_constraint");
  }

  if (auto v = opt(j, "traces")) {
    if (v->is_string()) {
      if (v->get<std::string>() != "default") {
        throw ConfigError("traces must be \"default\" or a list of expressions");
      }
    } else {
      cfg.traces = string_list(*v, "traces");
      for (const auto& e : cfg.traces) check_expr(e, "traces");
    }
  }

  if (auto v = opt(j, "noise")) {
    only_keys(*v, "noise", {"epsilon", "correlation_length"});
    if (auto e = opt(*v, "epsilon")) cfg.noise.epsilon = get_number(*e, "noise.epsilon");
    if (auto l = opt(*v, "correlation_length")) {
      cfg.noise.correlation_length = get_number(*l, "noise.correlation_length");
    }
    if (cfg.noise.epsilon < 0.0) throw ConfigError("noise.epsilon must be >= 0");
    if (!(cfg.noise.correlation_length > 0.0)) {
      throw ConfigError("noise.correlation_length must be > 0");
    }
  }

  if (auto v = opt(j, "solver")) {
    only_keys(*v, "solver", {"method", "tolerance", "max_iterations"});
    if (auto m = opt(*v, "method")) {
      const std::string s = get_string(*m, "solver.method");
      if (s == "auto") {
        cfg.solver.method = SolverMethod::automatic;
      } else if (s == "direct") {
        cfg.solver.method = SolverMethod::direct;
      } else if (s == "iterative") {
        cfg.solver.method = SolverMethod::iterative;
      } else {
        throw ConfigError("solver.method must be auto, direct or iterative");
      }
    }
    if (auto t = opt(*v, "tolerance")) cfg.solver.tolerance = get_number(*t, "solver.tolerance");
    if (auto it = opt(*v, "max_iterations")) {
      cfg.solver.max_iterations = get_int(*it, "solver.max_iterations");
    }
    if (!(cfg.solver.tolerance > 0.0)) throw ConfigError("solver.tolerance must be > 0");
    if (cfg.solver.max_iterations < 1) throw ConfigError("solver.max_iterations must be >= 1");
  }

  if (auto v = opt(j, "study")) {
    const std::string s = get_string(*v, "study");
    if (s == "single") {
      cfg.study = StudyKind::single;
    } else if (s == "convergence") {
      cfg.study = StudyKind::convergence;
    } else if (s == "noise-sweep") {
      cfg.study = StudyKind::noise_sweep;
    } else {
      throw ConfigError("study must be single, convergence or noise-sweep");
    }
  }
  if (auto v = opt(j, "levels")) {
    if (!v->is_array()) throw ConfigError("levels must be a list of point counts");
    for (const auto& l : *v) cfg.levels.push_back(get_int(l, "levels entry"));
  }
  if (auto v = opt(j, "noise_levels")) {
    if (!v->is_array()) throw ConfigError("noise_levels must be a list of numbers");
    for (const auto& e : *v) {
      cfg.noise_levels.push_back(get_number(e, "noise_levels entry"));
      if (cfg.noise_levels.back() < 0.0) throw ConfigError("noise_levels must be >= 0");
    }
  }
  if (cfg.study == StudyKind::convergence && cfg.levels.size() < 3) {
    throw ConfigError("a convergence study needs at least 3 refinement levels");
  }
  if (cfg.study == StudyKind::noise_sweep) {
    if (cfg.noise_levels.size() < 3 ||
        std::find(cfg.noise_levels.begin(), cfg.noise_levels.end(), 0.0) == cfg.noise_levels.end()) {
      throw ConfigError("a noise sweep needs at least 3 noise levels including 0");
    }
  }

  if (auto v = opt(j, "thresholds")) cfg.thresholds = thresholds(*v);
  if (auto v = opt(j, "covering")) {
    if (!v->is_array()) throw ConfigError("covering must be a list of boxes");
    for (const auto& b : *v) {
      only_keys(b, "covering entry", {"bounds", "functionals"});
      SubBox box;
      if (!opt(b, "bounds")) throw ConfigError("covering entry needs bounds");
      box.bounds = parse_bounds(b["bounds"], "covering.bounds");
      if (static_cast<int>(box.bounds.size()) != n) {
        throw ConfigError("covering box dimension does not match the grid");
      }
      if (auto f = opt(b, "functionals")) {
        if (!f->is_array()) throw ConfigError("covering.functionals must be a list");
        for (const auto& k : *f) box.functionals.push_back(get_int(k, "covering.functionals entry"));
      }
      cfg.covering.push_back(std::move(box));
    }
  }
  if (auto v = opt(j, "seed")) {
    if (!v->is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  cfg.noise.seed = cfg.seed;
  if (auto v = opt(j, "output")) cfg.output = get_string(*v, "output");
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---- metrics ---------------------------------------------------------------

template <FieldKind K>
ErrorMetrics error_norms(const Field<K>& field, const Field<K>& reference,
                         const InteriorMask& mask) {
  if (!(field.grid() == reference.grid()) || !(mask.grid() == field.grid())) {
    throw ConfigError("error_norms: fields and mask live on different grids");
  }
  if (mask.count() == 0) throw ConfigError("error_norms: empty mask");
  const Grid& g = field.grid();
  Field<K> diff(g, Complex(kNaN, 0.0));
  Field<K> ref(g, Complex(kNaN, 0.0));
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < diff.components(); ++c) {
      diff(p, c) = field(p, c) - reference(p, c);
      ref(p, c) = reference(p, c);
    }
  }
  // Difference stencils only where they stay on the mask.
  const InteriorMask deep = erode(mask);
  ErrorMetrics m;
  m.c0 = sup_on(diff, mask);
  const double r0 = sup_on(ref, mask);
  double r1 = r0;
  double r2 = r0;
  m.c1 = m.c0;
  m.c2 = m.c0;
  if (deep.count() > 0) {
    m.c1 = std::max(m.c0, derivative_sup(diff, deep, 1));
    m.c2 = std::max(m.c1, derivative_sup(diff, deep, 2));
    r1 = std::max(r0, derivative_sup(ref, deep, 1));
    r2 = std::max(r1, derivative_sup(ref, deep, 2));
  }
  m.rel_c0 = r0 > 0.0 ? m.c0 / r0 : m.c0;
  m.rel_c1 = r1 > 0.0 ? m.c1 / r1 : m.c1;
  m.rel_c2 = r2 > 0.0 ? m.c2 / r2 : m.c2;
  const double total = static_cast<double>(interior_mask(g, mask.margin()).count());
  m.masked_fraction = 1.0 - static_cast<double>(mask.count()) / total;
  return m;
}

template ErrorMetrics error_norms(const ScalarField&, const ScalarField&, const InteriorMask&);
template ErrorMetrics error_norms(const VectorField&, const VectorField&, const InteriorMask&);
template ErrorMetrics error_norms(const SymTensorField&, const SymTensorField&,
                                  const InteriorMask&);

// ---- pipeline --------------------------------------------------------------

Grid config_grid(const ExperimentConfig& cfg, int level_shape) {
  std::vector<int> shape = cfg.shape;
  if (level_shape > 0) std::fill(shape.begin(), shape.end(), level_shape);
  return make_grid(cfg.bounds, shape);
}

GroundTruth materialize_truth(const ExperimentConfig& cfg, const Grid& grid) {
  const int n = grid.dim();
  GroundTruth t;
  t.coeffs = CoefficientSet::identity(grid);
  if (cfg.a.size() == 1) {
    const ScalarField a = scalar(cfg.a.front(), grid);
    for (std::size_t p = 0; p < grid.size(); ++p)
      for (int i = 0; i < n; ++i) t.coeffs.a(p, i) = a(p);
  } else {
    t.coeffs.a = expr::materialize_symtensor(expr::parse_all(cfg.a), grid);
  }
  if (!cfg.b.empty()) t.coeffs.b = expr::materialize_vector(expr::parse_all(cfg.b), grid);
  t.coeffs.c = scalar(cfg.c, grid);
  t.modality.kind = cfg.modality;
  if (cfg.modality == ModalityKind::qpat || cfg.modality == ModalityKind::qtat) {
    t.modality.gamma = scalar(cfg.gamma, grid);
  }
  if (cfg.modality == ModalityKind::generic) t.modality.d = scalar(cfg.d, grid);
  return t;
}

Synthesis synthesize_on(const ExperimentConfig& cfg, const Grid& grid) {
  const int r = cfg.synthesis_refinement;
  const Grid fine = r == 1 ? grid : refined(grid, r);
  const GroundTruth truth = materialize_truth(cfg, fine);
  const int dim = grid.dim();
  const auto exprs = cfg.traces.empty()
                         ? default_trace_expressions(
                               dim, cfg.a_model == AModel::tensor ? tensor_measurement_count(dim)
                                                                  : scalar_measurement_count(dim))
                         : cfg.traces;
  Synthesis s = synthesize(truth.coeffs, truth.modality, make_traces(exprs, fine), cfg.solver);
  if (r == 1) return s;
  Synthesis out;
  out.d_solution_dependent = s.d_solution_dependent;
  out.d = sample(s.d, grid, r);
  for (const auto& u : s.solutions) out.solutions.push_back(sample(u, grid, r));
  out.measurements.modality = s.measurements.modality;
  for (std::size_t j = 0; j < s.measurements.functionals.size(); ++j) {
    out.measurements.functionals.push_back(sample(s.measurements.functionals[j], grid, r));
    out.measurements.traces.push_back(
        {sample(s.measurements.traces[j].values, grid, r), s.measurements.traces[j].expression});
  }
  double hmin = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (!grid.on_boundary(p)) hmin = std::min(hmin, std::abs(out.measurements.functionals[0](p)));
  }
  out.measurements.min_abs_h1 = hmin;
  return out;
}

namespace {

/// The realized d on `grid`: needs the forward solution for QTAT.
ScalarField realized_d(const ExperimentConfig& cfg, const Grid& grid) {
  if (cfg.modality == ModalityKind::elastography) return ScalarField(grid, 1.0);
  if (cfg.modality == ModalityKind::generic) return scalar(cfg.d, grid);
  if (cfg.modality == ModalityKind::qpat) {
    const ScalarField gamma = scalar(cfg.gamma, grid);
    const ScalarField c = scalar(cfg.c, grid);
    ScalarField d(grid);
    for (std::size_t p = 0; p < grid.size(); ++p) d(p) = gamma(p) * c(p);
    return d;
  }
  return synthesize_on(cfg, grid).d;
}

void add_metric(std::map<std::string, ErrorMetrics>& out, const std::string& name,
                const auto& field, const auto& ref, const InteriorMask& mask) {
  if (mask.count() == 0) return;
  out[name] = error_norms(field, ref, mask);
}

}  // namespace

SingleResult reconstruct_and_resolve(const ExperimentConfig& cfg, const MeasurementSet& ms) {
  SingleResult r;
  r.grid = ms.grid();
  const Grid& g = r.grid;
  const int n = g.dim();
  r.measurements = ms;
  r.truth = materialize_truth(cfg, g);
  r.recon = reconstruct(ms, cfg.a_model);
  const ScalarField& h1 = ms.functionals.front();
  const InvariantTriple tri = invariant_triple(r.recon.ab, h1);

  SymTensorField ahat;
  ScalarField big_b;
  split_amplitude(r.truth.coeffs.a, ahat, big_b);
  const ScalarField d = realized_d(cfg, g);
  ScalarField rho(g);
  for (std::size_t p = 0; p < g.size(); ++p) rho(p) = big_b(p) / d(p);
  BoundaryAnchors anchors{big_b, rho};
  ResolveOptions ro;
  ro.solver = cfg.solver;

  switch (cfg.modality) {
    case ModalityKind::elastography:
      r.resolved = resolve_elastography(tri, h1, anchors, ro);
      break;
    case ModalityKind::qpat:
      r.resolved = resolve_qpat(tri, h1, *r.truth.modality.gamma, anchors, ro);
      break;
    case ModalityKind::qtat: {
      bool real = true;
      for (const Complex& z : r.truth.coeffs.a.data()) real = real && z.imag() == 0.0;
      r.resolved = resolve_qtat(tri, h1, anchors, real, ro);
      break;
    }
    case ModalityKind::generic: {
      BConstraint con{*cfg.constraint_kind, cfg.constraint_axis, scalar(cfg.constraint_value, g)};
      std::optional<ScalarField> kd;
      if (cfg.known_d) kd = d;
      r.resolved = resolve_generic_b(tri, h1, con, anchors, kd, ro);
      break;
    }
  }

  const ResolvedCoefficients& res = r.resolved;
  const InteriorMask& mask = res.mask;
  SymTensorField res_ahat(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < sym_size(n); ++c) res_ahat(p, c) = tri.ahat(p, c);
  }
  add_metric(r.metrics, "ahat", res_ahat, ahat, mask);
  add_metric(r.metrics, "rho", res.rho, rho, mask);
  const bool gauge_fixed =
      cfg.modality == ModalityKind::elastography || cfg.modality == ModalityKind::qpat ||
      (cfg.modality == ModalityKind::generic && cfg.known_d);
  if (gauge_fixed) {
    add_metric(r.metrics, "a", res.a, r.truth.coeffs.a, mask);
    add_metric(r.metrics, "B", res.big_b, big_b, mask);
    add_metric(r.metrics, "c", res.c, r.truth.coeffs.c, mask);
    add_metric(r.metrics, "d", res.d, d, mask);
  }
  if (cfg.modality == ModalityKind::generic) {
    VectorField ainvb;
    inverse_times(r.truth.coeffs.a, r.truth.coeffs.b, ainvb);
    add_metric(r.metrics, "ainv_b", res.ainv_b, ainvb, mask);
  }
  if (cfg.modality == ModalityKind::qtat && res.gamma) {
    std::vector<char> ok(g.size(), 0);
    for (std::size_t p = 0; p < g.size(); ++p) ok[p] = mask[p] && !res.gamma_failed[p];
    add_metric(r.metrics, "gamma", *res.gamma, *r.truth.modality.gamma, mask.restricted(ok));
  }
  return r;
}

SingleResult run_single(const ExperimentConfig& cfg, int level_shape) {
  const Grid g = config_grid(cfg, level_shape);
  const Synthesis syn = synthesize_on(cfg, g);
  const MeasurementSet ms = add_noise(syn.measurements, cfg.noise);
  return reconstruct_and_resolve(cfg, ms);
}

double fitted_order(const std::vector<double>& h, const std::vector<double>& err) {
  const std::size_t k = h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = k * sxx - sx * sx;
  return den != 0.0 ? (k * sxy - sx * sy) / den : kNaN;
}

ConvergenceResult run_convergence(const ExperimentConfig& cfg) {
  if (cfg.levels.size() < 3) {
    throw ConfigError("a convergence study needs at least 3 refinement levels");
  }
  ConvergenceResult out;
  std::map<std::string, std::vector<double>> hs, errs;
  for (int level : cfg.levels) {
    const SingleResult r = run_single(cfg, level);
    const double h = r.grid.spacing(0);
    for (const auto& [name, m] : r.metrics) {
      out.rows.push_back({name, level, h, m.c0, m.rel_c0});
      hs[name].push_back(h);
      errs[name].push_back(m.rel_c0);
    }
  }
  for (const auto& [name, e] : errs) {
    if (e.size() != cfg.levels.size()) {
      out.order[name] = kNaN;
      out.warnings.push_back(name + ": not available on every level");
      continue;
    }
    if (*std::max_element(e.begin(), e.end()) < 1e-10) {
      out.order[name] = kNaN;
      out.warnings.push_back(name + ": errors at rounding level, no order fitted");
      continue;
    }
    bool monotone = true;
    for (std::size_t i = 1; i < e.size(); ++i) monotone = monotone && e[i] < e[i - 1];
    if (!monotone) {
      out.order[name] = kNaN;
      out.warnings.push_back(name + ": error sequence is not monotone, no order fitted");
      continue;
    }
    out.order[name] = fitted_order(hs[name], e);
  }
  return out;
}

NoiseSweepResult run_noise_sweep(const ExperimentConfig& cfg) {
  if (cfg.noise_levels.size() < 3 ||
      std::find(cfg.noise_levels.begin(), cfg.noise_levels.end(), 0.0) == cfg.noise_levels.end()) {
    throw ConfigError("a noise sweep needs at least 3 noise levels including 0");
  }
  const Grid g = config_grid(cfg);
  const Synthesis syn = synthesize_on(cfg, g);
  const SingleResult base = reconstruct_and_resolve(cfg, syn.measurements);
  const InteriorMask inner = interior_mask(g, 1);

  // (ahat, a, c, B) of one resolution.
  auto quantities = [](const SingleResult& r) {
    const ResolvedCoefficients& res = r.resolved;
    SymTensorField ahat_field(r.grid);
    for (std::size_t p = 0; p < r.grid.size(); ++p) {
      const Complex b2 = res.big_b(p) * res.big_b(p);
      for (int c = 0; c < ahat_field.components(); ++c) ahat_field(p, c) = res.a(p, c) / b2;
    }
    return std::make_tuple(ahat_field, res.a, res.c, res.big_b);
  };
  const auto [ahat0, a0, c0, b0] = quantities(base);
  const VectorField diva0 = divergence(a0);

  NoiseSweepResult out;
  std::map<std::string, std::vector<double>> ratios;
  for (double eps : cfg.noise_levels) {
    NoiseSpec spec = cfg.noise;
    spec.epsilon = eps;
    const MeasurementSet noisy = add_noise(syn.measurements, spec);
    double dh = 0.0;
    for (int j = 0; j < noisy.count(); ++j) {
      dh = std::max(dh, error_norms(noisy.functionals[j], syn.measurements.functionals[j], inner).c2);
    }
    const SingleResult r = eps == 0.0 ? base : reconstruct_and_resolve(cfg, noisy);
    const InteriorMask mask = base.resolved.mask.restricted(r.resolved.mask.flags());
    const auto [ahat1, a1, c1, b1] = quantities(r);
    const VectorField diva1 = divergence(a1);
    const InteriorMask deep = erode(mask);
    auto row = [&](const std::string& name, const ErrorMetrics& m) {
      const double ratio = eps > 0.0 && dh > 0.0 ? m.c0 / dh : kNaN;
      out.rows.push_back({eps, dh, name, m.c0, m.c1, ratio});
      if (eps > 0.0) ratios[name].push_back(ratio);
    };
    row("ahat", error_norms(ahat1, ahat0, mask));
    row("c", error_norms(c1, c0, mask));
    row("div_a", error_norms(diva1, diva0, deep));
    row("B", error_norms(b1, b0, mask));
  }
  for (const auto& [name, v] : ratios) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    out.spread[name] = *lo > 0.0 ? *hi / *lo : kNaN;
  }
  return out;
}

// ---- output ------------------------------------------------------------------

void write_json(const json& j, const fs::path& path) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_metrics_csv(const SingleResult& r, const fs::path& path) {
  auto os = open_out(path);
  os << "quantity,shape,h,c0,c1,c2,rel_c0,rel_c1,rel_c2,masked_fraction\n";
  for (const auto& [name, m] : r.metrics) {
    os << name << ',' << r.grid.shape(0) << ',' << num(r.grid.spacing(0)) << ',' << num(m.c0)
       << ',' << num(m.c1) << ',' << num(m.c2) << ',' << num(m.rel_c0) << ',' << num(m.rel_c1)
       << ',' << num(m.rel_c2) << ',' << num(m.masked_fraction) << '\n';
  }
}

void write_convergence_csv(const ConvergenceResult& r, const fs::path& path) {
  auto os = open_out(path);
  os << "quantity,shape,h,abs_c0,rel_c0,order\n";
  for (const auto& row : r.rows) {
    os << row.quantity << ',' << row.shape << ',' << num(row.h) << ',' << num(row.abs_c0) << ','
       << num(row.rel_c0) << ',' << num(r.order.at(row.quantity)) << '\n';
  }
}

void write_noise_csv(const NoiseSweepResult& r, const fs::path& path) {
  auto os = open_out(path);
  os << "epsilon,delta_h_c2,quantity,c0,c1,ratio\n";
  for (const auto& row : r.rows) {
    os << num(row.epsilon) << ',' << num(row.delta_h_c2) << ',' << row.quantity << ','
       << num(row.c0) << ',' << num(row.c1) << ',' << num(row.ratio) << '\n';
  }
}

json report_json(const SingleResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["study"] = "single";
  j["grid"] = {{"dim", r.grid.dim()}};
  for (int ax = 0; ax < r.grid.dim(); ++ax) {
    j["grid"]["shape"].push_back(r.grid.shape(ax));
    j["grid"]["bounds"].push_back({r.grid.bounds(ax).lo, r.grid.bounds(ax).hi});
  }
  j["measurements"] = {{"J", r.measurements.count()},
                       {"min_abs_H1", r.measurements.min_abs_h1},
                       {"ratio_boundary_mismatch", r.recon.ratios.boundary_mismatch},
                       {"null_combination_residual", r.recon.theta_m.max_residual}};
  j["gauge"] = to_json(r.resolved.report);
  json metrics = json::object();
  for (const auto& [name, m] : r.metrics) {
    json e;
    put_field(e, "c0", m.c0);
    put_field(e, "c1", m.c1);
    put_field(e, "c2", m.c2);
    put_field(e, "rel_c0", m.rel_c0);
    put_field(e, "rel_c1", m.rel_c1);
    put_field(e, "rel_c2", m.rel_c2);
    put_field(e, "masked_fraction", m.masked_fraction);
    metrics[name] = e;
  }
  j["metrics"] = metrics;
  if (!r.resolved.gamma_failed.empty()) {
    j["gamma_failures"] =
        std::count(r.resolved.gamma_failed.begin(), r.resolved.gamma_failed.end(), char{1});
  }
  return j;
}

json report_json(const ConvergenceResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["study"] = "convergence";
  json order = json::object();
  for (const auto& [name, o] : r.order) order[name] = std::isfinite(o) ? json(o) : json(nullptr);
  j["order"] = order;
  j["warnings"] = r.warnings;
  return j;
}

json report_json(const NoiseSweepResult& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["study"] = "noise-sweep";
  json spread = json::object();
  for (const auto& [name, s] : r.spread) spread[name] = std::isfinite(s) ? json(s) : json(nullptr);
  j["ratio_spread"] = spread;
  return j;
}

void write_resolved_fields(const ResolvedCoefficients& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_field(r.a, dir / "a");
  write_field(r.b, dir / "b");
  write_field(r.c, dir / "c");
  write_field(r.d, dir / "d");
  write_field(r.big_b, dir / "B");
  write_field(r.rho, dir / "rho");
  write_field(r.ainv_b, dir / "ainv_b");
  write_field(r.q, dir / "q");
  if (r.gamma) write_field(*r.gamma, dir / "gamma");
  write_json(to_json(r.report), dir / "gauge_report.json");
}

void write_intermediates(const Reconstruction& rec, const fs::path& dir) {
  fs::create_directories(dir);
  for (int j = 0; j < rec.ratios.count(); ++j) {
    write_field(rec.ratios.v[j], dir / ("v_" + std::to_string(j + 1)));
  }
  for (std::size_t m = 0; m < rec.theta_m.m.size(); ++m) {
    write_field(rec.theta_m.m[m], dir / ("M_" + std::to_string(m + 1)));
  }
  write_field(rec.ab.alpha, dir / "alpha");
  write_field(rec.ab.beta, dir / "beta");
  write_field(rec.ab.quality, dir / "quality");
}

}  // namespace hyrec
