#include "hyrec/admissibility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hyrec/calculus.hpp"
#include "hyrec/recon.hpp"

namespace hyrec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
using SmallMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

Complex dot(std::span<const Complex> u, std::span<const Complex> v) {
  Complex s{};
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * v[k];
  return s;
}

double norm(std::span<const Complex> u) {
  double s = 0.0;
  for (const Complex& z : u) s += std::norm(z);
  return std::sqrt(s);
}

bool inside(const Grid& g, std::size_t p, const SubBox& box) {
  if (box.bounds.empty()) return true;
  const auto x = g.point(p);
  for (int ax = 0; ax < g.dim(); ++ax) {
    const double tol = 1e-9 * g.spacing(ax);
    if (x[ax] < box.bounds[ax].lo - tol || x[ax] > box.bounds[ax].hi + tol) return false;
  }
  return true;
}

ConditionMargins reduce(const MarginMaps& maps, const SubBox& box,
                        const AdmissibilityThresholds& thr) {
  const Grid& g = maps.u1.grid();
  const InteriorMask mask = interior_mask(g, 1);
  ConditionMargins out;
  double hmin = std::numeric_limits<double>::infinity();
  double hmax = 0.0;
  double det = std::numeric_limits<double>::infinity();
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p] || !inside(g, p, box)) continue;
    ++out.points;
    const double h = maps.u1(p).real();
    hmin = std::min(hmin, h);
    hmax = std::max(hmax, h);
    det = std::min(det, maps.det(p).real());
    if (maps.m) m = std::min(m, (*maps.m)(p).real());
  }
  if (out.points == 0) throw ConfigError("sub-box contains no interior grid points");
  out.u1 = hmax > 0.0 ? hmin / hmax : 0.0;
  out.det = det;
  if (maps.m) out.m = m;
  out.u1_pass = out.u1 >= thr.u1;
  out.det_pass = out.det >= thr.det;
  out.m_pass = out.m && *out.m >= thr.m;
  return out;
}

nlohmann::json margins_json(const ConditionMargins& c) {
  nlohmann::json j;
  j["points"] = c.points;
  j["u1"] = {{"margin", c.u1}, {"pass", c.u1_pass}};
  j["det"] = {{"margin", c.det}, {"pass", c.det_pass}};
  if (c.m) {
    j["m_independence"] = {{"margin", *c.m}, {"pass", c.m_pass}};
  } else {
    j["m_independence"] = {{"margin", nullptr}, {"pass", false}};
  }
  j["pass"] = c.pass();
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string row(const std::string& label, const ConditionMargins& c) {
  std::ostringstream os;
  auto cell = [](const std::string& v, bool ok) { return v + (ok ? " ok  " : " FAIL"); };
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %-16s %-16s %-16s %s", label.c_str(),
                cell(fmt(c.u1), c.u1_pass).c_str(), cell(fmt(c.det), c.det_pass).c_str(),
                cell(c.m ? fmt(*c.m) : std::string("   n/a   "), c.m_pass).c_str(),
                c.pass() ? "PASS" : "FAIL");
  return buf;
}

}  // namespace

AdmissibilityThresholds thresholds(const nlohmann::json& cfg) {
  AdmissibilityThresholds t;
  if (cfg.is_null()) return t;
  if (!cfg.is_object()) throw ConfigError("thresholds must be an object");
  for (const auto& [key, value] : cfg.items()) {
    double* slot = key == "u1" ? &t.u1 : key == "det" ? &t.det : key == "m" ? &t.m : nullptr;
    if (!slot) throw ConfigError("unknown threshold '" + key + "'");
    if (!value.is_number()) throw ConfigError("threshold '" + key + "' must be a number");
    *slot = value.get<double>();
    if (!(*slot > 0.0)) throw ConfigError("threshold '" + key + "' must be positive");
  }
  return t;
}

MarginMaps margin_maps(const MeasurementSet& ms, const std::vector<int>& functionals) {
  std::vector<const ScalarField*> h;
  if (functionals.empty()) {
    for (const auto& f : ms.functionals) h.push_back(&f);
  } else {
    for (int j : functionals) {
      if (j < 0 || j >= ms.count()) throw ConfigError("functional index out of range");
      h.push_back(&ms.functionals[j]);
    }
  }
  if (h.size() < 2) throw MeasurementCountError("admissibility needs at least two functionals", 2,
                                                static_cast<int>(h.size()));
  const Grid& g = h.front()->grid();
  const int n = g.dim();
  const InteriorMask mask = interior_mask(g, 1);

  MarginMaps maps{ScalarField(g, kNaN), ScalarField(g, kNaN), std::nullopt};
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (mask[p]) maps.u1(p) = std::abs((*h.front())(p));
  }
  const int count = static_cast<int>(h.size());
  if (count < n + 1) return maps;

  // Ratios without the H_1 guard: a vanishing H_1 shows up as a margin.
  std::vector<VectorField> grad;
  std::vector<SymTensorField> hess;
  for (int j = 1; j < count; ++j) {
    ScalarField v(g);
    for (std::size_t p = 0; p < g.size(); ++p) v(p) = (*h[j])(p) / (*h.front())(p);
    grad.push_back(gradient(v));
    hess.push_back(hessian(v));
  }

  // Normalized by the sup norms of the basis gradients rather than their
  // pointwise norms: a per-point Hadamard ratio stays near 1 at a conformal
  // critical point, where both gradients vanish together.
  double scale = 1.0;
  for (int i = 0; i < n; ++i) {
    double sup = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (mask[p]) sup = std::max(sup, norm(grad[i].at(p)));
    }
    scale *= sup;
  }

  const bool tensor = count >= tensor_measurement_count(n);
  if (tensor) maps.m = ScalarField(g, kNaN);
  std::vector<std::vector<Complex>> rows;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p]) continue;
    SmallMatrix basis(n, n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) basis(i, k) = grad[i](p, k);
    }
    const double det = std::abs(basis.determinant());
    const double ratio = scale > 0.0 && std::isfinite(det) ? det / scale : 0.0;
    maps.det(p) = ratio;
    if (!tensor) continue;

    SmallMatrix gm(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) gm(i, j) = dot(grad[i].at(p), grad[j].at(p));
    if (!(ratio > 0.0)) {
      (*maps.m)(p) = 0.0;
      continue;
    }
    const SmallMatrix inv = gm.inverse();
    rows.clear();
    for (int m = 0; m + n < count - 1; ++m) {
      const int extra = n + m;
      std::vector<Complex> mm(hess[extra].at(p).begin(), hess[extra].at(p).end());
      for (int j = 0; j < n; ++j) {
        Complex theta{};
        for (int k = 0; k < n; ++k) theta -= inv(j, k) * dot(grad[extra].at(p), grad[k].at(p));
        for (int c = 0; c < sym_size(n); ++c) mm[c] += theta * hess[j](p, c);
      }
      rows.push_back(std::move(mm));
    }
    const NullVector nv = alpha_at_point(rows, n, 0.0);
    (*maps.m)(p) = std::isfinite(nv.quality) ? nv.quality : 0.0;
  }
  return maps;
}

AdmissibilityReport check(const MeasurementSet& ms, const std::vector<SubBox>& covering,
                          const AdmissibilityThresholds& thr) {
  AdmissibilityReport r;
  r.thresholds = thr;
  r.note =
      "margins are minima over interior grid points (one step inside the boundary); the "
      "conditions they stand for are stated on the closed domain";
  const MarginMaps all = margin_maps(ms);
  r.global = reduce(all, SubBox{}, thr);
  for (const SubBox& box : covering) {
    if (static_cast<int>(box.bounds.size()) != ms.grid().dim()) {
      throw ConfigError("sub-box dimension does not match the grid");
    }
    const MarginMaps local = box.functionals.empty() ? all : margin_maps(ms, box.functionals);
    r.subdomains.push_back({box, reduce(local, box, thr)});
  }
  return r;
}

nlohmann::json to_json(const AdmissibilityReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["note"] = r.note;
  j["thresholds"] = {{"u1", r.thresholds.u1}, {"det", r.thresholds.det}, {"m", r.thresholds.m}};
  j["global"] = margins_json(r.global);
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& e : r.subdomains) {
    nlohmann::json s = margins_json(e.margins);
    nlohmann::json b = nlohmann::json::array();
    for (const auto& iv : e.box.bounds) b.push_back({iv.lo, iv.hi});
    s["bounds"] = b;
    s["functionals"] = e.box.functionals;
    subs.push_back(s);
  }
  j["subdomains"] = subs;
  j["pass"] = r.pass();
  return j;
}

std::string format_table(const AdmissibilityReport& r) {
  std::ostringstream os;
  os << "# " << r.note << "\n";
  os << "# thresholds: u1 " << fmt(r.thresholds.u1) << ", det " << fmt(r.thresholds.det)
     << ", m " << fmt(r.thresholds.m) << "\n";
  char head[256];
  std::snprintf(head, sizeof head, "%-22s %-16s %-16s %-16s %s", "region", "u1 margin",
                "det margin", "M margin", "verdict");
  os << head << "\n" << row("global", r.global) << "\n";
  for (std::size_t k = 0; k < r.subdomains.size(); ++k) {
    std::ostringstream label;
    label << "box " << k << " [";
    const auto& b = r.subdomains[k].box.bounds;
    for (std::size_t ax = 0; ax < b.size(); ++ax) {
      label << (ax ? "x" : "") << b[ax].lo << "," << b[ax].hi;
    }
    label << "]";
    os << row(label.str(), r.subdomains[k].margins) << "\n";
  }
  return os.str();
}

}  // namespace hyrec
