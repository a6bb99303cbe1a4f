#pragma once

// Small fixtures shared by the unit tests.

#include <cmath>
#include <functional>
#include <limits>

#include "hyrec/grid.hpp"

namespace hyrec::test {

using Fn = std::function<Complex(double, double)>;

inline Grid unit_grid(int n) { return make_grid({{0, 1}, {0, 1}}, {n, n}); }

inline ScalarField sample(const Grid& g, const Fn& f) {
  ScalarField out(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    out(p) = f(x[0], x[1]);
  }
  return out;
}

/// sup |a - b| over mask points, every component.
template <FieldKind K>
double max_diff(const Field<K>& a, const Field<K>& b, const InteriorMask& mask) {
  double m = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < a.components(); ++c) m = std::max(m, std::abs(a(p, c) - b(p, c)));
  }
  return m;
}

template <FieldKind K>
double max_abs(const Field<K>& a, const InteriorMask& mask) {
  double m = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < a.components(); ++c) m = std::max(m, std::abs(a(p, c)));
  }
  return m;
}

inline double order(double coarse, double fine) { return std::log2(coarse / fine); }

}  // namespace hyrec::test
