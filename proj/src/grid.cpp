#include "hyrec/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hyrec {

std::size_t Grid::index(std::span<const int> multi) const {
  std::size_t idx = 0;
  for (int a = 0; a < dim_; ++a) idx += static_cast<std::size_t>(multi[a]) * stride_[a];
  return idx;
}

std::array<int, kMaxDim> Grid::multi_index(std::size_t idx) const {
  std::array<int, kMaxDim> m{0, 0, 0};
  for (int a = 0; a < dim_; ++a) {
    m[a] = static_cast<int>(idx / stride_[a]);
    idx %= stride_[a];
  }
  return m;
}

double Grid::coord(std::size_t idx, int axis) const {
  const int k = static_cast<int>((idx / stride_[axis]) % shape_[axis]);
  // The last point is pinned to hi so that boundary traces are exact.
  if (k == shape_[axis] - 1) return bounds_[axis].hi;
  return bounds_[axis].lo + k * spacing_[axis];
}

std::array<double, kMaxDim> Grid::point(std::size_t idx) const {
  std::array<double, kMaxDim> x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = coord(idx, a);
  return x;
}

int Grid::boundary_distance(std::size_t idx) const {
  int dist = std::numeric_limits<int>::max();
  const auto m = multi_index(idx);
  for (int a = 0; a < dim_; ++a) {
    dist = std::min({dist, m[a], shape_[a] - 1 - m[a]});
  }
  return dist;
}

bool Grid::operator==(const Grid& other) const {
  if (dim_ != other.dim_) return false;
  for (int a = 0; a < dim_; ++a) {
    if (shape_[a] != other.shape_[a] || !(bounds_[a] == other.bounds_[a])) return false;
  }
  return true;
}

Grid make_grid(std::span<const Interval> bounds, std::span<const int> shape) {
  if (bounds.size() != shape.size()) {
    throw ConfigError("grid bounds and shape have different lengths");
  }
  const int dim = static_cast<int>(shape.size());
  if (dim < 2 || dim > 3) {
    throw ConfigError("grid dimension must be 2 or 3, got " + std::to_string(dim));
  }
  Grid g;
  g.dim_ = dim;
  for (int a = 0; a < dim; ++a) {
    if (shape[a] < 5) {
      throw ConfigError("axis " + std::to_string(a) + " has " +
                        std::to_string(shape[a]) + " points; at least 5 required");
    }
    if (!(bounds[a].hi > bounds[a].lo) || !std::isfinite(bounds[a].lo) ||
        !std::isfinite(bounds[a].hi)) {
      throw ConfigError("axis " + std::to_string(a) + " has a degenerate interval");
    }
    g.bounds_[a] = bounds[a];
    g.shape_[a] = shape[a];
    g.spacing_[a] = (bounds[a].hi - bounds[a].lo) / (shape[a] - 1);
  }
  std::size_t stride = 1;
  for (int a = dim - 1; a >= 0; --a) {
    g.stride_[a] = stride;
    stride *= static_cast<std::size_t>(shape[a]);
  }
  g.size_ = stride;
  return g;
}

Grid make_grid(std::initializer_list<Interval> bounds, std::initializer_list<int> shape) {
  return make_grid(std::span<const Interval>(bounds.begin(), bounds.size()),
                   std::span<const int>(shape.begin(), shape.size()));
}

Grid subgrid(const Grid& grid, int margin) {
  std::array<Interval, kMaxDim> b{};
  std::array<int, kMaxDim> s{};
  for (int a = 0; a < grid.dim(); ++a) {
    const double h = grid.spacing(a);
    b[a] = {grid.bounds(a).lo + margin * h, grid.bounds(a).hi - margin * h};
    s[a] = grid.shape(a) - 2 * margin;
  }
  return make_grid(std::span<const Interval>(b.data(), grid.dim()),
                   std::span<const int>(s.data(), grid.dim()));
}

std::size_t InteriorMask::count() const {
  return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), char{1}));
}

InteriorMask InteriorMask::restricted(std::span<const char> keep) const {
  std::vector<char> f(flags_);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] && keep[i]) ? 1 : 0;
  return InteriorMask(grid_, margin_, std::move(f));
}

InteriorMask interior_mask(const Grid& grid, int margin) {
  int min_axis = std::numeric_limits<int>::max();
  for (int a = 0; a < grid.dim(); ++a) min_axis = std::min(min_axis, grid.shape(a));
  if (margin < 1 || 2 * margin >= min_axis) {
    throw ConfigError("interior margin " + std::to_string(margin) +
                      " does not fit a grid with " + std::to_string(min_axis) +
                      " points on its shortest axis");
  }
  std::vector<char> flags(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    flags[i] = grid.boundary_distance(i) >= margin ? 1 : 0;
  }
  return InteriorMask(grid, margin, std::move(flags));
}

InteriorMask erode(const InteriorMask& mask) {
  const Grid& g = mask.grid();
  const int n = g.dim();
  std::vector<char> out(g.size(), 0);
  for (std::size_t p = 0; p < g.size(); ++p) {
    if (!mask[p] || g.boundary_distance(p) < 1) continue;
    const auto m = g.multi_index(p);
    bool ok = true;
    std::array<int, kMaxDim> off{-1, -1, -1};
    while (ok) {
      std::array<int, kMaxDim> q = m;
      for (int a = 0; a < n; ++a) q[a] += off[a];
      if (!mask[g.index(std::span<const int>(q.data(), n))]) ok = false;
      int a = 0;
      while (a < n && off[a] == 1) off[a++] = -1;
      if (a == n) break;
      ++off[a];
    }
    out[p] = ok ? 1 : 0;
  }
  return InteriorMask(g, mask.margin() + 1, std::move(out));
}

namespace {

template <typename Fn>
void for_each_sub_point(const Grid& grid, int margin, Fn&& fn) {
  const Grid sub = subgrid(grid, margin);
  for (std::size_t s = 0; s < sub.size(); ++s) {
    auto m = sub.multi_index(s);
    for (int a = 0; a < grid.dim(); ++a) m[a] += margin;
    fn(s, grid.index(std::span<const int>(m.data(), grid.dim())));
  }
}

}  // namespace

template <FieldKind K>
Field<K> restrict_to(const Field<K>& field, int margin) {
  Field<K> out(subgrid(field.grid(), margin));
  const int nc = field.components();
  for_each_sub_point(field.grid(), margin, [&](std::size_t s, std::size_t g) {
    for (int c = 0; c < nc; ++c) out(s, c) = field(g, c);
  });
  return out;
}

template <FieldKind K>
Field<K> embed(const Field<K>& sub, const Grid& grid, int margin, Complex fill) {
  Field<K> out(grid, fill);
  const int nc = out.components();
  for_each_sub_point(grid, margin, [&](std::size_t s, std::size_t g) {
    for (int c = 0; c < nc; ++c) out(g, c) = sub(s, c);
  });
  return out;
}

template ScalarField restrict_to(const ScalarField&, int);
template VectorField restrict_to(const VectorField&, int);
template SymTensorField restrict_to(const SymTensorField&, int);
template ScalarField embed(const ScalarField&, const Grid&, int, Complex);
template VectorField embed(const VectorField&, const Grid&, int, Complex);
template SymTensorField embed(const SymTensorField&, const Grid&, int, Complex);

}  // namespace hyrec
