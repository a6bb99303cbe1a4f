#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "helpers.hpp"
#include "hyrec/calculus.hpp"
#include "hyrec/expr.hpp"
#include "hyrec/synthesis.hpp"

using namespace hyrec;
using namespace hyrec::test;

namespace {

ScalarField field(const Grid& g, const std::string& text) {
  return expr::materialize_scalar(expr::parse(text), g);
}

CoefficientSet bump_coeffs(const Grid& g, const std::string& c) {
  CoefficientSet k = CoefficientSet::identity(g);
  const std::string a = "1+0.3*exp(-((x-0.5)^2+(y-0.5)^2)/0.02)";
  k.a = expr::materialize_symtensor(expr::parse_all(std::vector<std::string>{a, a, "0"}), g);
  k.c = field(g, c);
  return k;
}

Modality generic(const ScalarField& d) { return {ModalityKind::generic, std::nullopt, d}; }

bool bit_equal(const ScalarField& a, const ScalarField& b) {
  return a.data().size() == b.data().size() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

double c2_of(const ScalarField& f) {
  const InteriorMask m = interior_mask(f.grid(), 1);
  return max_abs(hessian(f), m);
}

}  // namespace

TEST_CASE("measurement counts follow n(n+3)/2 and n(n+1)/2 - 1") {
  for (int n : {2, 3}) {
    CHECK(tensor_measurement_count(n) == n * (n + 3) / 2);
    CHECK(m_matrix_count(n) == tensor_measurement_count(n) - 1 - n);
  }
  CHECK(tensor_measurement_count(2) == 5);
  CHECK(tensor_measurement_count(3) == 9);
  CHECK(m_matrix_count(2) == 2);
  CHECK(m_matrix_count(3) == 5);
  CHECK(scalar_measurement_count(2) == 3);
}

TEST_CASE("default traces") {
  CHECK(default_trace_expressions(2, 5) == std::vector<std::string>{"1", "x", "y", "x*y", "x^2-y^2"});
  CHECK(default_trace_expressions(2, 3) == std::vector<std::string>{"1", "x", "y"});
  const auto t3 = default_trace_expressions(3, 9);
  CHECK(t3.size() == 9u);
  CHECK(t3.back() == "x^2-z^2");
  CHECK(default_trace_expressions(3, 4).size() == 4u);
  CHECK_THROWS_AS(default_trace_expressions(2, 4), ConfigError);
  CHECK_THROWS_AS(default_trace_expressions(3, 5), ConfigError);
  const Grid g = unit_grid(9);
  const auto tr = default_traces(g, 5);
  REQUIRE(tr.size() == 5u);
  const int c[] = {2, 6};
  CHECK(tr[3].values(g.index(c)) == Complex(0.25 * 0.75, 0));
  CHECK(tr[3].expression == "x*y");
}

TEST_CASE("elastography with a = I: H_j are the traces") {
  const Grid g = unit_grid(17);
  const Synthesis s = synthesize(CoefficientSet::identity(g), {}, default_traces(g, 3));
  REQUIRE(s.measurements.count() == 3);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    CHECK(std::abs(s.measurements.functionals[0](p) - 1.0) < 1e-12);
    CHECK(std::abs(s.measurements.functionals[1](p) - x[0]) < 1e-12);
    CHECK(std::abs(s.measurements.functionals[2](p) - x[1]) < 1e-12);
  }
  CHECK(s.measurements.min_abs_h1 == doctest::Approx(1.0));
  CHECK_FALSE(s.d_solution_dependent);
}

TEST_CASE("generic d = 2 doubles the functionals") {
  const Grid g = unit_grid(17);
  const Synthesis s =
      synthesize(CoefficientSet::identity(g), generic(ScalarField(g, 2.0)), default_traces(g, 3));
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    CHECK(std::abs(s.measurements.functionals[0](p) - 2.0) < 1e-12);
    CHECK(std::abs(s.measurements.functionals[1](p) - 2 * x[0]) < 1e-12);
    CHECK(std::abs(s.measurements.functionals[2](p) - 2 * x[1]) < 1e-12);
  }
}

TEST_CASE("qpat functionals are c times independently solved u_j") {
  const Grid g = unit_grid(33);
  const CoefficientSet k = bump_coeffs(g, "1+0.5*exp(-((x-0.4)^2+(y-0.6)^2)/0.05)");
  const auto tr = default_traces(g, 5);
  const Synthesis s = synthesize(k, {ModalityKind::qpat, ScalarField(g, 1.0), std::nullopt}, tr);
  for (int j = 0; j < 5; ++j) {
    const ScalarField u = solve_dirichlet(k, tr[j]);
    double e = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p)
      e = std::max(e, std::abs(s.measurements.functionals[j](p) - k.c(p) * u(p)));
    CHECK(e < 1e-12);
  }
}

TEST_CASE("modality preconditions") {
  const Grid g = unit_grid(9);
  CoefficientSet k = CoefficientSet::identity(g);
  const auto tr = default_traces(g, 3);
  CHECK_THROWS_AS(synthesize(k, {ModalityKind::qpat, ScalarField(g, 1.0), std::nullopt}, tr),
                  ConfigError);  // c = 0 is not an absorption
  k.c = ScalarField(g, 1.0);
  CHECK_THROWS_AS(synthesize(k, {ModalityKind::qpat, std::nullopt, std::nullopt}, tr), ConfigError);
  CHECK_THROWS_AS(synthesize(k, {ModalityKind::generic, std::nullopt, std::nullopt}, tr), ConfigError);
  k.b = VectorField(g, 0.5);
  CHECK_THROWS_AS(synthesize(k, {}, tr), ConfigError);
  CHECK_THROWS_AS(synthesize(k, {ModalityKind::qtat, ScalarField(g, 1.0), std::nullopt}, tr),
                  ConfigError);
  CHECK_THROWS_AS(synthesize(k, {}, {}), ConfigError);
  CHECK(parse_modality("qtat") == ModalityKind::qtat);
  CHECK_THROWS_AS(parse_modality("ultrasound"), ConfigError);
}

TEST_CASE("vanishing u_1 is a degeneracy") {
  const Grid g = unit_grid(17);
  const auto tr = make_traces({"x-0.5", "x", "y"}, g);
  CHECK_THROWS_AS(synthesize(CoefficientSet::identity(g), {}, tr), DegeneracyError);
}

TEST_CASE("ratios do not depend on d") {
  const Grid g = unit_grid(33);
  const CoefficientSet k = bump_coeffs(g, "0.5");
  const auto tr = default_traces(g, 5);
  const Synthesis s1 = synthesize(k, generic(field(g, "1+0.5*x*y")), tr);
  const Synthesis s2 = synthesize(k, generic(field(g, "2-cos(3*x)+i*y")), tr);
  double e = 0.0;
  for (int j = 1; j < 5; ++j) {
    for (std::size_t p = 0; p < g.size(); ++p) {
      const Complex r1 = s1.measurements.functionals[j](p) / s1.measurements.functionals[0](p);
      const Complex r2 = s2.measurements.functionals[j](p) / s2.measurements.functionals[0](p);
      e = std::max(e, std::abs(r1 - r2) / std::max(1.0, std::abs(r1)));
    }
  }
  CHECK(e < 1e-14);
}

TEST_CASE("qtat functionals carry u_j / u_1") {
  const Grid g = unit_grid(33);
  const CoefficientSet k = bump_coeffs(g, "1+0.2*x+i*(0.5+0.3*y)");
  const Synthesis s = synthesize(k, {ModalityKind::qtat, field(g, "1+0.1*x"), std::nullopt},
                                 default_traces(g, 5));
  CHECK(s.d_solution_dependent);
  const ScalarField& h1 = s.measurements.functionals[0];
  double e = 0.0;
  for (int j = 1; j < 5; ++j) {
    const ScalarField& hj = s.measurements.functionals[j];
    for (std::size_t p = 0; p < g.size(); ++p) {
      const Complex lhs = hj(p) * std::conj(h1(p)) / std::norm(h1(p));
      const Complex rhs = s.solutions[j](p) / s.solutions[0](p);
      e = std::max(e, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
  }
  CHECK(e < 1e-13);
}

TEST_CASE("noise") {
  const Grid g = unit_grid(65);
  const Synthesis s = synthesize(bump_coeffs(g, "0"), {}, default_traces(g, 5));
  const MeasurementSet& ms = s.measurements;

  const MeasurementSet same = add_noise(ms, {0.0, 0.1, 3});
  for (int j = 0; j < 5; ++j) CHECK(bit_equal(same.functionals[j], ms.functionals[j]));

  const MeasurementSet n1 = add_noise(ms, {1e-3, 0.1, 42});
  const MeasurementSet n1b = add_noise(ms, {1e-3, 0.1, 42});
  const MeasurementSet n2 = add_noise(ms, {2e-3, 0.1, 42});
  const MeasurementSet other = add_noise(ms, {1e-3, 0.1, 43});
  for (int j = 0; j < 5; ++j) CHECK(bit_equal(n1.functionals[j], n1b.functionals[j]));
  CHECK_FALSE(bit_equal(n1.functionals[1], other.functionals[1]));
  REQUIRE(n1.noise.has_value());
  CHECK(n1.noise->epsilon == 1e-3);

  for (int j = 0; j < 5; ++j) {
    ScalarField d1(g), d2(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
      d1(p) = n1.functionals[j](p) - ms.functionals[j](p);
      d2(p) = n2.functionals[j](p) - ms.functionals[j](p);
    }
    const double ratio = c2_of(d2) / c2_of(d1);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.01));
    // Amplitude is relative to the functional's own sup norm.
    double hmax = 0.0, dmax = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      hmax = std::max(hmax, std::abs(ms.functionals[j](p)));
      dmax = std::max(dmax, std::abs(d1(p)));
    }
    CHECK(dmax == doctest::Approx(1e-3 * hmax).epsilon(1e-6));
  }
  CHECK_THROWS_AS(add_noise(ms, {-1.0, 0.1, 0}), ConfigError);
  CHECK_THROWS_AS(add_noise(ms, {1e-3, 0.0, 0}), ConfigError);
}

TEST_CASE("smooth noise gets rougher as the correlation length shrinks") {
  const Grid g = unit_grid(65);
  const ScalarField wide = smooth_noise(g, 0.2, 5);
  const ScalarField narrow = smooth_noise(g, 0.05, 5);
  double sw = 0.0;
  for (const Complex& z : wide.data()) sw = std::max(sw, std::abs(z));
  CHECK(sw == doctest::Approx(1.0));
  CHECK(c2_of(narrow) > 4.0 * c2_of(wide));
}

TEST_CASE("measurements round-trip through disk") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hyrec_test_ms";
  fs::remove_all(dir);
  const Grid g = unit_grid(17);
  const Synthesis s = synthesize(bump_coeffs(g, "0"), generic(field(g, "1+x")), default_traces(g, 5));
  const MeasurementSet noisy = add_noise(s.measurements, {1e-4, 0.2, 9});
  save_measurements(noisy, dir);
  const MeasurementSet back = load_measurements(dir);
  CHECK(back.modality == ModalityKind::generic);
  REQUIRE(back.count() == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(bit_equal(back.functionals[j], noisy.functionals[j]));
    CHECK(back.traces[j].expression == noisy.traces[j].expression);
  }
  CHECK(back.min_abs_h1 == noisy.min_abs_h1);
  REQUIRE(back.noise.has_value());
  CHECK(back.noise->seed == 9u);
  CHECK_THROWS_AS(load_measurements(dir / "missing"), ConfigError);
  fs::remove_all(dir);
}
