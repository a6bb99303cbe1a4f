#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "hyrec/calculus.hpp"
#include "hyrec/field_io.hpp"

using namespace hyrec;
using namespace hyrec::test;

TEST_CASE("make_grid spacing and validation") {
  const Grid g = make_grid({{0, 1}, {0, 1}}, {5, 5});
  CHECK(g.spacing(0) == 0.25);
  CHECK(g.spacing(1) == 0.25);
  CHECK_THROWS_AS(make_grid({{0, 1}, {0, 1}}, {4, 5}), ConfigError);
  CHECK_THROWS_AS(make_grid({{1, 1}, {0, 1}}, {5, 5}), ConfigError);
  const Grid h = make_grid({{-1, 1}, {0, 2}}, {11, 21});
  CHECK(h.spacing(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(h.spacing(1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(h.size() == 231u);
}

TEST_CASE("point ordering is lexicographic with the last axis fastest") {
  const Grid g = make_grid({{0, 1}, {0, 2}}, {5, 9});
  CHECK(g.stride(1) == 1u);
  CHECK(g.stride(0) == 9u);
  const int mi[] = {2, 3};
  const std::size_t p = g.index(mi);
  CHECK(p == 2u * 9u + 3u);
  CHECK(g.coord(p, 0) == 0.5);
  CHECK(g.coord(p, 1) == 0.75);
  CHECK(g.multi_index(p)[0] == 2);
  CHECK(g.multi_index(p)[1] == 3);
}

TEST_CASE("interior_mask counts") {
  const Grid g = unit_grid(5);
  CHECK(interior_mask(g, 1).count() == 9u);
  CHECK(interior_mask(g, 2).count() == 1u);
  CHECK_THROWS_AS(interior_mask(g, 3), ConfigError);
  CHECK_THROWS_AS(interior_mask(g, 0), ConfigError);
  const Grid g3 = make_grid({{0, 1}, {0, 1}, {0, 1}}, {5, 6, 7});
  CHECK(interior_mask(g3, 1).count() == 3u * 4u * 5u);
}

TEST_CASE("erode strips one ring and agrees with interior_mask") {
  const Grid g = unit_grid(9);
  const InteriorMask e = erode(interior_mask(g, 1));
  const InteriorMask m2 = interior_mask(g, 2);
  CHECK(e.margin() == 2);
  for (std::size_t p = 0; p < g.size(); ++p) CHECK(e[p] == m2[p]);

  // A hole in the mask grows to its 3x3 neighbourhood.
  std::vector<char> keep(g.size(), 1);
  const int centre[] = {4, 4};
  keep[g.index(centre)] = 0;
  const InteriorMask holed = interior_mask(g, 1).restricted(keep);
  CHECK(erode(holed).count() == m2.count() - 9);
}

TEST_CASE("gradient examples") {
  const Grid g = unit_grid(9);
  const InteriorMask all = interior_mask(g, 1);
  const VectorField gx = gradient(sample(g, [](double x, double) { return x; }));
  for (std::size_t p = 0; p < g.size(); ++p) {
    CHECK(std::abs(gx(p, 0) - 1.0) < 1e-13);
    CHECK(std::abs(gx(p, 1)) < 1e-13);
  }
  const Grid g5 = unit_grid(5);
  const VectorField gq = gradient(sample(g5, [](double x, double) { return x * x; }));
  const int mid[] = {2, 2};
  CHECK(gq(g5.index(mid), 0).real() == 1.0);
  (void)all;
}

namespace {

// Interior sup errors of gradient and hessian for f = sin(x) cos(y) and
// exp(x + y) against the closed forms.
std::pair<double, double> calculus_errors(int n) {
  const Grid g = unit_grid(n);
  const InteriorMask m = interior_mask(g, 1);
  const VectorField gr = gradient(sample(g, [](double x, double y) { return std::sin(x) * std::cos(y); }));
  VectorField gr_ref(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    gr_ref(p, 0) = std::cos(x[0]) * std::cos(x[1]);
    gr_ref(p, 1) = -std::sin(x[0]) * std::sin(x[1]);
  }
  const SymTensorField he = hessian(sample(g, [](double x, double y) { return std::exp(x + y); }));
  SymTensorField he_ref(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    for (int c = 0; c < 3; ++c) he_ref(p, c) = std::exp(x[0] + x[1]);
  }
  return {max_diff(gr, gr_ref, m), max_diff(he, he_ref, m)};
}

}  // namespace

TEST_CASE("gradient and hessian converge at second order") {
  const auto e1 = calculus_errors(17);
  const auto e2 = calculus_errors(33);
  const auto e3 = calculus_errors(65);
  CHECK(order(e1.first, e2.first) >= 1.9);
  CHECK(order(e2.first, e3.first) >= 1.9);
  CHECK(order(e1.second, e2.second) >= 1.9);
  CHECK(order(e2.second, e3.second) >= 1.9);
}

TEST_CASE("hessian examples") {
  const Grid g = unit_grid(7);
  const InteriorMask m = interior_mask(g, 1);
  const SymTensorField hxy = hessian(sample(g, [](double x, double y) { return x * y; }));
  const SymTensorField hxx = hessian(sample(g, [](double x, double) { return x * x; }));
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!m[p]) continue;
    CHECK(std::abs(hxy(p, 0, 0)) < 1e-12);
    CHECK(std::abs(hxy(p, 1, 1)) < 1e-12);
    CHECK(std::abs(hxy(p, 0, 1) - 1.0) < 1e-12);
    CHECK(std::abs(hxx(p, 0, 0) - 2.0) < 1e-12);
    CHECK(std::abs(hxx(p, 1, 1)) < 1e-12);
    CHECK(std::abs(hxx(p, 0, 1)) < 1e-12);
  }
}

TEST_CASE("divergence examples") {
  const Grid g = unit_grid(7);
  const InteriorMask m = interior_mask(g, 1);
  VectorField f(g);
  SymTensorField id(g);
  SymTensorField quad(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    f(p, 0) = x[0];
    f(p, 1) = x[1];
    id(p, 0, 0) = id(p, 1, 1) = 1.0;
    quad(p, 0, 0) = x[0] * x[0];
    quad(p, 1, 1) = x[1] * x[1];
    quad(p, 0, 1) = x[0] * x[1];
  }
  const ScalarField d = divergence(f);
  const VectorField di = divergence(id);
  const VectorField dq = divergence(quad);
  for (std::size_t p = 0; p < g.size(); ++p) {
    CHECK(std::abs(d(p) - 2.0) < 1e-12);
    CHECK(std::abs(di(p, 0)) < 1e-12);
    CHECK(std::abs(di(p, 1)) < 1e-12);
    if (!m[p]) continue;
    const auto x = g.point(p);
    CHECK(std::abs(dq(p, 0) - 3.0 * x[0]) < 1e-12);
    CHECK(std::abs(dq(p, 1) - 3.0 * x[1]) < 1e-12);
  }
}

TEST_CASE("derivative operators are linear") {
  const Grid g = unit_grid(17);
  const ScalarField f = sample(g, [](double x, double y) { return std::sin(3 * x) * std::exp(y); });
  const ScalarField h = sample(g, [](double x, double y) { return Complex(std::cos(x * y), x); });
  const Complex al(0.7, -0.2);
  const Complex be(-1.3, 0.4);
  ScalarField comb(g);
  for (std::size_t p = 0; p < g.size(); ++p) comb(p) = al * f(p) + be * h(p);
  const VectorField gf = gradient(f), gh = gradient(h), gc = gradient(comb);
  const SymTensorField hf = hessian(f), hh = hessian(h), hc = hessian(comb);
  double e = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    for (int c = 0; c < 2; ++c) e = std::max(e, std::abs(gc(p, c) - al * gf(p, c) - be * gh(p, c)));
    for (int c = 0; c < 3; ++c) e = std::max(e, std::abs(hc(p, c) - al * hf(p, c) - be * hh(p, c)));
  }
  // Hessian entries carry 1/h^2 ~ 256 amplification of rounding.
  CHECK(e < 1e-10);
}

TEST_CASE("quadratics are reproduced exactly in 3-D, including the boundary") {
  const Grid g = make_grid({{0, 1}, {-1, 0.5}, {0, 2}}, {6, 7, 9});
  ScalarField f(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    f(p) = 1 + 2 * x[0] - x[1] + 0.5 * x[2] + x[0] * x[1] - 3 * x[1] * x[2] + x[0] * x[2] +
           x[0] * x[0] - 2 * x[2] * x[2];
  }
  const VectorField gr = gradient(f);
  const SymTensorField he = hessian(f);
  const InteriorMask m = interior_mask(g, 1);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    CHECK(std::abs(gr(p, 0) - (2 + x[1] + x[2] + 2 * x[0])) < 1e-11);
    CHECK(std::abs(gr(p, 1) - (-1 + x[0] - 3 * x[2])) < 1e-11);
    CHECK(std::abs(gr(p, 2) - (0.5 - 3 * x[1] + x[0] - 4 * x[2])) < 1e-11);
    if (!m[p]) continue;
    CHECK(std::abs(he(p, 0, 0) - 2.0) < 1e-9);
    CHECK(std::abs(he(p, 1, 1)) < 1e-9);
    CHECK(std::abs(he(p, 2, 2) + 4.0) < 1e-9);
    CHECK(std::abs(he(p, 0, 1) - 1.0) < 1e-9);
    CHECK(std::abs(he(p, 0, 2) - 1.0) < 1e-9);
    CHECK(std::abs(he(p, 1, 2) + 3.0) < 1e-9);
  }
  CHECK(sym_index(3, 0, 0) == 0);
  CHECK(sym_index(3, 1, 2) == 3);
  CHECK(sym_index(3, 0, 2) == 4);
  CHECK(sym_index(3, 0, 1) == 5);
  CHECK(sym_index(2, 1, 0) == 2);
}

TEST_CASE("restrict_to and embed invert each other on the sub-box") {
  const Grid g = unit_grid(9);
  const ScalarField f = sample(g, [](double x, double y) { return x + 10 * y; });
  const ScalarField s = restrict_to(f, 2);
  CHECK(s.grid().shape(0) == 5);
  CHECK(s.grid().bounds(0).lo == 0.25);
  const ScalarField back = embed(s, g, 2, Complex(-1, 0));
  const InteriorMask m2 = interior_mask(g, 2);
  for (std::size_t p = 0; p < g.size(); ++p) {
    CHECK(back(p) == (m2[p] ? f(p) : Complex(-1, 0)));
  }
}

TEST_CASE("field files round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hyrec_test_grid_io";
  fs::remove_all(dir);
  const Grid g = make_grid({{-1, 1}, {0, 3}}, {7, 6});
  SymTensorField t(g);
  for (std::size_t p = 0; p < g.size(); ++p)
    for (int c = 0; c < 3; ++c) t(p, c) = Complex(std::sin(p + 0.1 * c), 1.0 / (1.0 + p * c));
  write_field(t, dir / "t");
  const SymTensorField r = read_field<FieldKind::symtensor>(dir / "t");
  CHECK(r.grid() == g);
  REQUIRE(r.data().size() == t.data().size());
  CHECK(std::memcmp(r.data().data(), t.data().data(), t.data().size_bytes()) == 0);

  FieldKind kind{};
  CHECK(read_field_grid(dir / "t", &kind) == g);
  CHECK(kind == FieldKind::symtensor);
  CHECK_THROWS_AS(read_field<FieldKind::scalar>(dir / "t"), ConfigError);

  // Truncated payload is rejected.
  fs::resize_file(dir / "t.bin", fs::file_size(dir / "t.bin") - 8);
  CHECK_THROWS_AS(read_field<FieldKind::symtensor>(dir / "t"), ConfigError);
  fs::remove_all(dir);
}
