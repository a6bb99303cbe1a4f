#include "hyrec/calculus.hpp"

namespace hyrec {

namespace {

// Applies `line_op` to every grid line parallel to `axis`.
template <typename LineOp>
ScalarField along_lines(const ScalarField& f, int axis, LineOp&& line_op) {
  const Grid& g = f.grid();
  ScalarField out(g);
  const std::size_t stride = g.stride(axis);
  const int n = g.shape(axis);
  for (std::size_t start = 0; start < g.size(); ++start) {
    if ((start / stride) % n != 0) continue;  // not the head of a line
    line_op(f.data().data() + start, out.data().data() + start, stride, n);
  }
  return out;
}

}  // namespace

ScalarField partial(const ScalarField& f, int axis) {
  const double inv2h = 0.5 / f.grid().spacing(axis);
  return along_lines(f, axis, [inv2h](const Complex* in, Complex* out, std::size_t s, int n) {
    auto v = [&](int k) { return in[k * s]; };
    out[0] = (-3.0 * v(0) + 4.0 * v(1) - v(2)) * inv2h;
    for (int k = 1; k < n - 1; ++k) out[k * s] = (v(k + 1) - v(k - 1)) * inv2h;
    out[(n - 1) * s] = (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) * inv2h;
  });
}

ScalarField second_partial(const ScalarField& f, int axis) {
  const double h = f.grid().spacing(axis);
  const double inv_h2 = 1.0 / (h * h);
  return along_lines(f, axis, [inv_h2](const Complex* in, Complex* out, std::size_t s, int n) {
    auto v = [&](int k) { return in[k * s]; };
    out[0] = (2.0 * v(0) - 5.0 * v(1) + 4.0 * v(2) - v(3)) * inv_h2;
    for (int k = 1; k < n - 1; ++k) out[k * s] = (v(k + 1) - 2.0 * v(k) + v(k - 1)) * inv_h2;
    out[(n - 1) * s] =
        (2.0 * v(n - 1) - 5.0 * v(n - 2) + 4.0 * v(n - 3) - v(n - 4)) * inv_h2;
  });
}

template <FieldKind K>
ScalarField component(const Field<K>& f, int comp) {
  ScalarField out(f.grid());
  for (std::size_t p = 0; p < f.size(); ++p) out(p) = f(p, comp);
  return out;
}

template ScalarField component(const ScalarField&, int);
template ScalarField component(const VectorField&, int);
template ScalarField component(const SymTensorField&, int);

VectorField gradient(const ScalarField& f) {
  const Grid& g = f.grid();
  VectorField out(g);
  for (int a = 0; a < g.dim(); ++a) {
    const ScalarField d = partial(f, a);
    for (std::size_t p = 0; p < g.size(); ++p) out(p, a) = d(p);
  }
  return out;
}

SymTensorField hessian(const ScalarField& f) {
  const Grid& g = f.grid();
  const int n = g.dim();
  SymTensorField out(g);
  std::array<ScalarField, kMaxDim> first;
  for (int a = 0; a < n; ++a) first[a] = partial(f, a);
  for (int i = 0; i < n; ++i) {
    const ScalarField dii = second_partial(f, i);
    for (std::size_t p = 0; p < g.size(); ++p) out(p, i, i) = dii(p);
    for (int j = i + 1; j < n; ++j) {
      const ScalarField dij = partial(first[i], j);
      for (std::size_t p = 0; p < g.size(); ++p) out(p, i, j) = dij(p);
    }
  }
  return out;
}

ScalarField divergence(const VectorField& f) {
  const Grid& g = f.grid();
  ScalarField out(g);
  for (int a = 0; a < g.dim(); ++a) {
    const ScalarField d = partial(component(f, a), a);
    for (std::size_t p = 0; p < g.size(); ++p) out(p) += d(p);
  }
  return out;
}

VectorField divergence(const SymTensorField& f) {
  const Grid& g = f.grid();
  const int n = g.dim();
  VectorField out(g);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const ScalarField d = partial(component(f, sym_index(n, i, j)), j);
      for (std::size_t p = 0; p < g.size(); ++p) out(p, i) += d(p);
    }
  }
  return out;
}

ScalarField laplacian(const ScalarField& f) {
  const Grid& g = f.grid();
  ScalarField out(g);
  for (int a = 0; a < g.dim(); ++a) {
    const ScalarField d = second_partial(f, a);
    for (std::size_t p = 0; p < g.size(); ++p) out(p) += d(p);
  }
  return out;
}

}  // namespace hyrec
