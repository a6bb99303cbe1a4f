#include <doctest.h>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "hyrec/admissibility.hpp"
#include "hyrec/expr.hpp"
#include "hyrec/recon.hpp"

using namespace hyrec;
using namespace hyrec::test;

namespace {

MeasurementSet analytic(const Grid& g, const std::vector<std::string>& exprs) {
  MeasurementSet ms;
  ms.traces = make_traces(exprs, g);
  for (const auto& t : ms.traces) ms.functionals.push_back(t.values);
  return ms;
}

MeasurementSet forward(const Grid& g, const std::string& a, const std::vector<std::string>& exprs) {
  CoefficientSet k = CoefficientSet::identity(g);
  k.a = expr::materialize_symtensor(expr::parse_all(std::vector<std::string>{a, a, "0"}), g);
  return synthesize(k, {}, make_traces(exprs, g)).measurements;
}

}  // namespace

TEST_CASE("threshold parsing") {
  const AdmissibilityThresholds d = thresholds(nullptr);
  CHECK(d.u1 == 1e-6);
  CHECK(d.det == 1e-6);
  CHECK(d.m == 1e-6);
  const AdmissibilityThresholds t = thresholds({{"det", 1e-3}});
  CHECK(t.det == 1e-3);
  CHECK(t.u1 == 1e-6);
  CHECK_THROWS_AS(thresholds({{"det", 0}}), ConfigError);
  CHECK_THROWS_AS(thresholds({{"m", -1e-3}}), ConfigError);
  CHECK_THROWS_AS(thresholds({{"gram", 1e-3}}), ConfigError);
  CHECK_THROWS_AS(thresholds({{"u1", "small"}}), ConfigError);
  CHECK_THROWS_AS(thresholds(nlohmann::json::array()), ConfigError);
}

TEST_CASE("harmonic quintet passes with det margin 1") {
  const Grid g = unit_grid(33);
  const AdmissibilityReport r = check(analytic(g, default_trace_expressions(2, 5)));
  CHECK(r.global.u1 == doctest::Approx(1.0));
  CHECK(r.global.det == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(r.global.m.has_value());
  CHECK(*r.global.m > 0.1);
  CHECK(r.pass());
  CHECK(r.global.points == interior_mask(g, 1).count());
  CHECK(r.note.find("interior") != std::string::npos);
  const nlohmann::json j = to_json(r);
  CHECK(j.at("pass") == true);
  CHECK(j.at("thresholds").at("det") == 1e-6);
  CHECK(format_table(r).find("PASS") != std::string::npos);
}

TEST_CASE("parallel gradients fail the basis condition") {
  const Grid g = unit_grid(33);
  const AdmissibilityReport r = check(analytic(g, {"1", "x", "2*x", "x*y", "x^2-y^2"}));
  CHECK(r.global.det < 1e-12);
  CHECK_FALSE(r.global.det_pass);
  CHECK(r.global.u1_pass);
  CHECK_FALSE(r.pass());
  CHECK(to_json(r).at("global").at("det").at("pass") == false);
  CHECK(format_table(r).find("FAIL") != std::string::npos);
}

TEST_CASE("scalar-mode data have no M margin") {
  const Grid g = unit_grid(17);
  const AdmissibilityReport r = check(analytic(g, {"1", "x", "y"}));
  CHECK_FALSE(r.global.m.has_value());
  CHECK_FALSE(r.global.m_pass);
}

TEST_CASE("a stricter det threshold flips the verdict on the same data") {
  const Grid g = unit_grid(33);
  const MeasurementSet ms = analytic(g, {"1", "x", "x+1e-4*y", "x*y", "x^2-y^2"});
  const AdmissibilityReport loose = check(ms);
  AdmissibilityThresholds strict;
  strict.det = 1e-3;
  const AdmissibilityReport tight = check(ms, {}, strict);
  CHECK(loose.global.det_pass);
  CHECK_FALSE(tight.global.det_pass);
  CHECK(loose.global.det == tight.global.det);
  CHECK(tight.thresholds.det == 1e-3);
}

TEST_CASE("covering: global failure, every patch viable with its own traces") {
  // Box k uses {1, P_k, Q_k, x, y} with (P_k, Q_k) = (Re, Im) of (z - z_k)^2;
  // z_k sits in the opposite quadrant, so each pair degenerates away from
  // its own box. The critical points move off the grid under the varying a
  // and are sampled at O(h^2), hence a det threshold of 1e-2.
  const Grid g = unit_grid(41);
  const std::string a = "1+0.5*sin(2*pi*x)*sin(2*pi*y)";
  const double centre[4][2] = {{0.75, 0.75}, {0.75, 0.25}, {0.25, 0.75}, {0.25, 0.25}};
  const Interval quad[4][2] = {{{0, 0.5}, {0, 0.5}}, {{0, 0.5}, {0.5, 1}},
                               {{0.5, 1}, {0, 0.5}}, {{0.5, 1}, {0.5, 1}}};
  std::vector<std::string> traces;
  std::vector<SubBox> covering;
  for (int k = 0; k < 4; ++k) {
    char p[96], q[96];
    std::snprintf(p, sizeof p, "(x-%g)^2-(y-%g)^2", centre[k][0], centre[k][1]);
    std::snprintf(q, sizeof q, "2*(x-%g)*(y-%g)", centre[k][0], centre[k][1]);
    for (const std::string& t : {std::string("1"), std::string(p), std::string(q),
                                 std::string("x"), std::string("y")})
      traces.push_back(t);
    covering.push_back({{quad[k][0], quad[k][1]}, {5 * k, 5 * k + 1, 5 * k + 2, 5 * k + 3, 5 * k + 4}});
  }
  const MeasurementSet ms = forward(g, a, traces);
  AdmissibilityThresholds thr;
  thr.det = 1e-2;
  const AdmissibilityReport r = check(ms, covering, thr);
  CHECK_FALSE(r.pass());
  CHECK_FALSE(r.global.det_pass);
  REQUIRE(r.subdomains.size() == 4u);
  for (const auto& e : r.subdomains) {
    CAPTURE(e.margins.det);
    CHECK(e.margins.pass());
  }
  // Without the per-box subsets the same boxes are not all viable.
  std::vector<SubBox> plain = covering;
  for (auto& b : plain) b.functionals.clear();
  const AdmissibilityReport rp = check(ms, plain, thr);
  int failing = 0;
  for (const auto& e : rp.subdomains) failing += e.margins.pass() ? 0 : 1;
  CHECK(failing >= 1);
  CHECK(to_json(r).at("subdomains").size() == 4u);

  SubBox bad{{{0, 1}}, {}};
  CHECK_THROWS_AS(check(ms, {bad}), ConfigError);
  SubBox empty{{{0.41, 0.42}, {0.41, 0.42}}, {}};
  CHECK_THROWS_AS(check(ms, {empty}), ConfigError);
}

TEST_CASE("shrinking the box never lowers a margin") {
  const Grid g = unit_grid(33);
  const MeasurementSet ms =
      forward(g, "1+0.3*exp(-((x-0.5)^2+(y-0.5)^2)/0.05)", default_trace_expressions(2, 5));
  const std::vector<SubBox> nested = {{{{0.1, 0.9}, {0.1, 0.9}}, {}},
                                      {{{0.2, 0.8}, {0.15, 0.7}}, {}},
                                      {{{0.3, 0.6}, {0.3, 0.6}}, {}}};
  const AdmissibilityReport r = check(ms, nested);
  const ConditionMargins* prev = &r.global;
  for (const auto& e : r.subdomains) {
    CHECK(e.margins.u1 >= prev->u1);
    CHECK(e.margins.det >= prev->det);
    CHECK(*e.margins.m >= *prev->m);
    CHECK(e.margins.points < prev->points);
    prev = &e.margins;
  }
}

TEST_CASE("points masked by the reconstruction have an M margin below threshold") {
  const Grid g = make_grid({{0, 1}, {0, 1}}, {49, 49});
  const MeasurementSet ms = analytic(g, {"1", "x", "y", "x*y", "(x-1/3)^3-3*(x-1/3)*y^2"});
  const Reconstruction rec = reconstruct(ms, AModel::tensor);
  const MarginMaps maps = margin_maps(ms);
  const AdmissibilityThresholds thr;
  REQUIRE(maps.m.has_value());
  std::size_t masked = 0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rec.ratios.mask[p]) {
      CHECK(std::isnan(maps.det(p).real()));
      continue;
    }
    if (rec.ab.valid[p]) continue;
    ++masked;
    CHECK((*maps.m)(p).real() < thr.m);
  }
  CHECK(masked > 0);
  CHECK_FALSE(check(ms).global.m_pass);
}

TEST_CASE("margin_maps validates its functional subset") {
  const Grid g = unit_grid(17);
  const MeasurementSet ms = analytic(g, default_trace_expressions(2, 5));
  CHECK_THROWS_AS(margin_maps(ms, {0, 9}), ConfigError);
  CHECK_THROWS_AS(margin_maps(ms, {0}), MeasurementCountError);
  const MarginMaps sub = margin_maps(ms, {0, 1, 2});
  CHECK_FALSE(sub.m.has_value());
}
