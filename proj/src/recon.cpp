#include "hyrec/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hyrec/calculus.hpp"

namespace hyrec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kSqrt2 = std::sqrt(2.0);

using SmallMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

std::string point_list(const Grid& g, const std::vector<std::size_t>& pts) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(pts.size(), 8);
  for (std::size_t k = 0; k < shown; ++k) {
    const auto x = g.point(pts[k]);
    os << (k ? ", " : "") << "(";
    for (int a = 0; a < g.dim(); ++a) os << (a ? ", " : "") << x[a];
    os << ")";
  }
  if (pts.size() > shown) os << ", ... (" << pts.size() << " points)";
  return os.str();
}

SmallMatrix sym_matrix(std::span<const Complex> s, int n) {
  SmallMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = s[sym_index(n, i, j)];
  return m;
}

Complex contract(std::span<const Complex> a, std::span<const Complex> b, int n) {
  // A : B = Tr(A B) for symmetric A, B.
  Complex acc{};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) acc += a[sym_index(n, i, j)] * b[sym_index(n, i, j)];
  return acc;
}

Complex dot(std::span<const Complex> u, std::span<const Complex> v) {
  Complex acc{};
  for (std::size_t k = 0; k < u.size(); ++k) acc += u[k] * v[k];
  return acc;
}

}  // namespace

RatioSet ratios(const MeasurementSet& ms, double h1_threshold) {
  if (ms.count() < 2) throw MeasurementCountError("at least two functionals are needed", 2, ms.count());
  const Grid& g = ms.grid();
  const ScalarField& h1 = ms.functionals.front();
  double hmax = 0.0;
  for (const Complex& z : h1.data()) hmax = std::max(hmax, std::abs(z));
  // Boundary values feed the margin-1 stencils, so every point is checked.
  std::vector<std::size_t> bad;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!(std::abs(h1(p)) > h1_threshold * hmax)) bad.push_back(p);
  }
  if (!bad.empty()) {
    throw DegeneracyError("H_1 vanishes (|H_1| <= " + std::to_string(h1_threshold) +
                          " max|H_1|) at " + point_list(g, bad));
  }

  RatioSet rs;
  rs.mask = interior_mask(g, 1);
  for (int j = 1; j < ms.count(); ++j) {
    const ScalarField& hj = ms.functionals[j];
    if (!(hj.grid() == g)) throw ConfigError("functionals live on different grids");
    ScalarField v(g);
    for (std::size_t p = 0; p < g.size(); ++p) v(p) = hj(p) / h1(p);

    const ScalarField& f1 = ms.traces.front().values;
    const ScalarField& fj = ms.traces[j].values;
    double mis = 0.0;
    double scale = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (!g.on_boundary(p)) continue;
      mis = std::max(mis, std::abs(v(p) - fj(p) / f1(p)));
      scale = std::max(scale, std::abs(v(p)));
    }
    rs.boundary_mismatch = std::max(rs.boundary_mismatch, scale > 0.0 ? mis / scale : mis);

    rs.grad.push_back(gradient(v));
    rs.hess.push_back(hessian(v));
    rs.v.push_back(std::move(v));
  }
  return rs;
}

GramData gram(const RatioSet& rs, double relative_threshold) {
  const Grid& g = rs.mask.grid();
  const int n = g.dim();
  if (rs.count() < n) {
    throw MeasurementCountError("the gradient basis needs n = " + std::to_string(n) +
                                    " ratio fields (J >= n+1)",
                                n + 1, rs.count() + 1);
  }
  GramData gd{SymTensorField(g, kNaN), SymTensorField(g, kNaN), ScalarField(g, kNaN), 0.0};

  double gmax = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p]) continue;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (const Complex& z : rs.grad[i].at(p)) s += std::norm(z);
      gmax = std::max(gmax, s);
    }
  }
  gd.threshold = relative_threshold * std::pow(gmax, n);

  std::vector<std::size_t> bad;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p]) continue;
    SmallMatrix h(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) h(i, j) = h(j, i) = dot(rs.grad[i].at(p), rs.grad[j].at(p));
    const Complex det = h.determinant();
    gd.det(p) = det;
    if (!(std::abs(det) >= gd.threshold) || gmax == 0.0) {
      bad.push_back(p);
      continue;
    }
    const SmallMatrix inv = h.inverse();
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        gd.gram(p, i, j) = h(i, j);
        gd.inverse(p, i, j) = inv(i, j);
      }
    }
  }
  if (!bad.empty()) {
    throw DegeneracyError("gradients of v_1..v_n do not form a basis (|det H| < " +
                          std::to_string(gd.threshold) + ") at " + point_list(g, bad));
  }
  return gd;
}

VectorField reconstruct_ab_scalar(const RatioSet& rs, const GramData& gd) {
  const Grid& g = rs.mask.grid();
  const int n = g.dim();
  VectorField out(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p]) continue;
    for (int k = 0; k < n; ++k) out(p, k) = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Complex lap{};
        for (int k = 0; k < n; ++k) lap += rs.hess[j](p, k, k);
        const Complex w = -gd.inverse(p, i, j) * lap;
        for (int k = 0; k < n; ++k) out(p, k) += w * rs.grad[i](p, k);
      }
    }
  }
  return out;
}

std::vector<ScalarField> theta_coefficients(const RatioSet& rs, const GramData& gd, int m,
                                            double* max_residual) {
  const Grid& g = rs.mask.grid();
  const int n = g.dim();
  const int target = n + m;
  if (m < 0 || target >= rs.count()) {
    throw MeasurementCountError("null combination " + std::to_string(m + 1) + " needs ratio v_" +
                                    std::to_string(target + 1),
                                target + 2, rs.count() + 1);
  }
  std::vector<ScalarField> theta(rs.count(), ScalarField(g, kNaN));
  double worst = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p]) continue;
    std::vector<Complex> proj(n);
    for (int k = 0; k < n; ++k) proj[k] = dot(rs.grad[target].at(p), rs.grad[k].at(p));
    for (int j = 0; j < rs.count(); ++j) theta[j](p) = 0.0;
    for (int j = 0; j < n; ++j) {
      Complex acc{};
      for (int k = 0; k < n; ++k) acc += gd.inverse(p, j, k) * proj[k];
      theta[j](p) = -acc;
    }
    theta[target](p) = 1.0;

    double scale = 0.0;
    double res = 0.0;
    for (int c = 0; c < n; ++c) {
      Complex r{};
      for (int j = 0; j < rs.count(); ++j) {
        r += theta[j](p) * rs.grad[j](p, c);
        scale = std::max(scale, std::abs(theta[j](p)) * std::abs(rs.grad[j](p, c)));
      }
      res = std::max(res, std::abs(r));
    }
    if (scale > 0.0) worst = std::max(worst, res / scale);
  }
  if (max_residual) *max_residual = worst;
  if (!(worst <= 1e-10)) {
    throw Error("internal inconsistency: null combination residual " + std::to_string(worst));
  }
  return theta;
}

SymTensorField m_matrix(const RatioSet& rs, const std::vector<ScalarField>& theta) {
  const Grid& g = rs.mask.grid();
  const int nc = sym_size(g.dim());
  SymTensorField out(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p]) continue;
    for (int c = 0; c < nc; ++c) {
      Complex acc{};
      for (int j = 0; j < rs.count(); ++j) {
        if (theta[j](p) != Complex{}) acc += theta[j](p) * rs.hess[j](p, c);
      }
      out(p, c) = acc;
    }
  }
  return out;
}

ThetaMData build_theta_m(const RatioSet& rs, const GramData& gd) {
  const int n = rs.mask.grid().dim();
  ThetaMData out;
  for (int m = 0; m + n < rs.count(); ++m) {
    double res = 0.0;
    out.theta.push_back(theta_coefficients(rs, gd, m, &res));
    out.max_residual = std::max(out.max_residual, res);
    out.m.push_back(m_matrix(rs, out.theta.back()));
  }
  return out;
}

void flatten_sym(std::span<const Complex> sym, int dim, std::span<Complex> out) {
  const int nc = sym_size(dim);
  for (int c = 0; c < nc; ++c) out[c] = c < dim ? sym[c] : sym[c] * kSqrt2;
}

void unflatten_sym(std::span<const Complex> flat, int dim, std::span<Complex> out) {
  const int nc = sym_size(dim);
  for (int c = 0; c < nc; ++c) out[c] = c < dim ? flat[c] : flat[c] / kSqrt2;
}

NullVector alpha_at_point(const std::vector<std::vector<Complex>>& m_rows, int dim,
                          double gap_threshold) {
  const int nc = sym_size(dim);
  const int rows = static_cast<int>(m_rows.size());
  NullVector out;
  out.alpha.assign(nc, Complex(kNaN, 0.0));
  if (rows == 0) return out;

  Eigen::MatrixXcd k(rows, nc);
  std::vector<Complex> flat(nc);
  for (int r = 0; r < rows; ++r) {
    flatten_sym(m_rows[r], dim, flat);
    for (int c = 0; c < nc; ++c) k(r, c) = flat[c];
  }
  if (!k.allFinite()) return out;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(k, Eigen::ComputeFullV);
  std::vector<double> s(nc, 0.0);
  for (int i = 0; i < svd.singularValues().size(); ++i) s[i] = svd.singularValues()[i];
  if (!(s[0] > 0.0)) return out;
  out.quality = (s[nc - 2] - s[nc - 1]) / s[0];

  const Eigen::VectorXcd null = svd.matrixV().col(nc - 1);
  std::vector<Complex> nv(null.data(), null.data() + nc);
  std::vector<Complex> alpha(nc);
  unflatten_sym(nv, dim, alpha);

  Complex trace{};
  for (int i = 0; i < dim; ++i) trace += alpha[i];
  if (!(std::abs(trace) > 0.0)) return out;
  const Complex phase = trace / std::abs(trace);
  for (auto& z : alpha) z /= phase;

  const Complex det = sym_matrix(alpha, dim).determinant();
  if (!(std::abs(det) > 0.0)) return out;
  const Complex scale = std::pow(det, -1.0 / dim);
  for (auto& z : alpha) z *= scale;

  out.alpha = std::move(alpha);
  out.valid = out.quality >= gap_threshold;
  return out;
}

AlphaBeta alpha_from_nullspace(const std::vector<SymTensorField>& m, double gap_threshold) {
  if (m.empty()) throw MeasurementCountError("no M matrices to constrain alpha", 1, 0);
  const Grid& g = m.front().grid();
  const int n = g.dim();
  AlphaBeta ab{SymTensorField(g, kNaN), VectorField(g, kNaN), ScalarField(g, 0.0),
               std::vector<char>(g.size(), 0), InteriorMask()};
  const InteriorMask base = interior_mask(g, 1);
  std::vector<std::vector<Complex>> rows(m.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!base[p]) continue;
    for (std::size_t r = 0; r < m.size(); ++r) {
      const auto entries = m[r].at(p);
      rows[r].assign(entries.begin(), entries.end());
    }
    NullVector nv = alpha_at_point(rows, n, gap_threshold);
    ab.quality(p) = nv.quality;
    if (!nv.valid) continue;
    ab.valid[p] = 1;
    for (int c = 0; c < sym_size(n); ++c) ab.alpha(p, c) = nv.alpha[c];
  }
  ab.mask = base.restricted(ab.valid);
  return ab;
}

VectorField beta_from_alpha(const RatioSet& rs, const GramData& gd, const SymTensorField& alpha,
                            std::span<const char> valid) {
  const Grid& g = rs.mask.grid();
  const int n = g.dim();
  VectorField out(g, kNaN);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!rs.mask[p] || !valid[p]) continue;
    for (int k = 0; k < n; ++k) out(p, k) = 0.0;
    for (int j = 0; j < n; ++j) {
      const Complex aj = contract(alpha.at(p), rs.hess[j].at(p), n);
      for (int i = 0; i < n; ++i) {
        const Complex w = -gd.inverse(p, i, j) * aj;
        for (int k = 0; k < n; ++k) out(p, k) += w * rs.grad[i](p, k);
      }
    }
  }
  return out;
}

int required_measurements(int dim, AModel model) {
  return model == AModel::tensor ? tensor_measurement_count(dim) : scalar_measurement_count(dim);
}

Reconstruction reconstruct(const MeasurementSet& ms, AModel model,
                           const ReconThresholds& thresholds) {
  if (ms.functionals.empty()) throw MeasurementCountError("no functionals", 1, 0);
  const int dim = ms.grid().dim();
  const int need = required_measurements(dim, model);
  if (ms.count() < need) {
    throw MeasurementCountError(
        std::string(model == AModel::tensor ? "tensor" : "scalar") + " reconstruction in " +
            std::to_string(dim) + "-D needs " + std::to_string(need) + " functionals, got " +
            std::to_string(ms.count()),
        need, ms.count());
  }
  Reconstruction r;
  r.ratios = ratios(ms, thresholds.h1);
  r.gram = gram(r.ratios, thresholds.gram);
  const Grid& g = ms.grid();
  if (model == AModel::tensor) {
    r.theta_m = build_theta_m(r.ratios, r.gram);
    r.ab = alpha_from_nullspace(r.theta_m.m, thresholds.nullspace_gap);
  } else {
    r.ab = AlphaBeta{SymTensorField(g, kNaN), VectorField(g, kNaN), ScalarField(g, 0.0),
                     std::vector<char>(g.size(), 0), InteriorMask()};
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (!r.ratios.mask[p]) continue;
      r.ab.valid[p] = 1;
      r.ab.quality(p) = 1.0;
      for (int c = 0; c < sym_size(dim); ++c) r.ab.alpha(p, c) = c < dim ? 1.0 : 0.0;
    }
    r.ab.mask = r.ratios.mask.restricted(r.ab.valid);
  }
  r.ab.beta = beta_from_alpha(r.ratios, r.gram, r.ab.alpha, r.ab.valid);
  return r;
}

}  // namespace hyrec
