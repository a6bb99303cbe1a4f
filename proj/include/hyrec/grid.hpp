#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "hyrec/error.hpp"

namespace hyrec {

using Complex = std::complex<double>;

inline constexpr int kMaxDim = 3;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

/// Vertex-centered tensor-product grid over a box. Boundary points are part
/// of the grid. Points are ordered lexicographically with the last axis
/// varying fastest.
class Grid {
 public:
  Grid() = default;

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return size_; }
  const Interval& bounds(int axis) const { return bounds_[axis]; }
  int shape(int axis) const { return shape_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  std::size_t index(std::span<const int> multi) const;
  std::array<int, kMaxDim> multi_index(std::size_t idx) const;
  double coord(std::size_t idx, int axis) const;
  std::array<double, kMaxDim> point(std::size_t idx) const;

  /// Number of grid steps from idx to the nearest boundary face.
  int boundary_distance(std::size_t idx) const;
  bool on_boundary(std::size_t idx) const { return boundary_distance(idx) == 0; }

  bool operator==(const Grid& other) const;

  friend Grid make_grid(std::span<const Interval> bounds,
                        std::span<const int> shape);

 private:
  int dim_ = 0;
  std::size_t size_ = 0;
  std::array<Interval, kMaxDim> bounds_{};
  std::array<int, kMaxDim> shape_{1, 1, 1};
  std::array<double, kMaxDim> spacing_{};
  std::array<std::size_t, kMaxDim> stride_{};
};

/// Throws ConfigError unless 2 <= dim <= 3, every axis has >= 5 points and a
/// non-degenerate interval.
Grid make_grid(std::span<const Interval> bounds, std::span<const int> shape);
Grid make_grid(std::initializer_list<Interval> bounds,
               std::initializer_list<int> shape);

/// Box made of the points at distance >= margin from the boundary of `grid`,
/// re-expressed as a grid of its own.
Grid subgrid(const Grid& grid, int margin);

/// Number of independent entries of a symmetric n x n tensor.
constexpr int sym_size(int dim) { return dim * (dim + 1) / 2; }

/// Storage slot of entry (i, j) of a symmetric tensor. Layout is
/// (11, 22, 12) in 2-D and (11, 22, 33, 23, 13, 12) in 3-D.
constexpr int sym_index(int dim, int i, int j) {
  if (i == j) return i;
  if (dim == 2) return 2;
  const int k = 3 - i - j;  // the axis not involved
  return 3 + k;
}

enum class FieldKind { scalar, vector, symtensor };

constexpr int components_of(FieldKind kind, int dim) {
  switch (kind) {
    case FieldKind::scalar:
      return 1;
    case FieldKind::vector:
      return dim;
    case FieldKind::symtensor:
      return sym_size(dim);
  }
  return 1;
}

/// Complex samples on a grid. Component c of point p lives at
/// data()[p * components() + c].
template <FieldKind Kind>
class Field {
 public:
  static constexpr FieldKind kind = Kind;

  Field() = default;
  explicit Field(Grid grid, Complex fill = Complex{0.0, 0.0})
      : grid_(std::move(grid)),
        ncomp_(components_of(Kind, grid_.dim())),
        values_(grid_.size() * ncomp_, fill) {}
  Field(Grid grid, std::vector<Complex> values)
      : grid_(std::move(grid)),
        ncomp_(components_of(Kind, grid_.dim())),
        values_(std::move(values)) {
    if (values_.size() != grid_.size() * ncomp_) {
      throw ConfigError("field value count does not match grid");
    }
  }

  const Grid& grid() const noexcept { return grid_; }
  int components() const noexcept { return ncomp_; }
  std::size_t size() const noexcept { return grid_.size(); }

  std::span<Complex> data() noexcept { return values_; }
  std::span<const Complex> data() const noexcept { return values_; }

  Complex& operator()(std::size_t point, int comp = 0) {
    return values_[point * ncomp_ + comp];
  }
  const Complex& operator()(std::size_t point, int comp = 0) const {
    return values_[point * ncomp_ + comp];
  }

  /// Tensor entry (i, j); only for symtensor fields.
  Complex& operator()(std::size_t point, int i, int j)
    requires(Kind == FieldKind::symtensor)
  {
    return values_[point * ncomp_ + sym_index(grid_.dim(), i, j)];
  }
  const Complex& operator()(std::size_t point, int i, int j) const
    requires(Kind == FieldKind::symtensor)
  {
    return values_[point * ncomp_ + sym_index(grid_.dim(), i, j)];
  }

  std::span<const Complex> at(std::size_t point) const {
    return std::span<const Complex>(values_).subspan(point * ncomp_, ncomp_);
  }
  std::span<Complex> at(std::size_t point) {
    return std::span<Complex>(values_).subspan(point * ncomp_, ncomp_);
  }

 private:
  Grid grid_;
  int ncomp_ = 1;
  std::vector<Complex> values_;
};

using ScalarField = Field<FieldKind::scalar>;
using VectorField = Field<FieldKind::vector>;
using SymTensorField = Field<FieldKind::symtensor>;

/// Points at least `margin` steps away from every boundary face.
class InteriorMask {
 public:
  InteriorMask() = default;
  InteriorMask(Grid grid, int margin, std::vector<char> flags)
      : grid_(std::move(grid)), margin_(margin), flags_(std::move(flags)) {}

  const Grid& grid() const noexcept { return grid_; }
  int margin() const noexcept { return margin_; }
  bool operator[](std::size_t idx) const { return flags_[idx] != 0; }
  std::size_t count() const;
  std::span<const char> flags() const noexcept { return flags_; }

  /// Intersection with an arbitrary per-point predicate (e.g. validity).
  InteriorMask restricted(std::span<const char> keep) const;

 private:
  Grid grid_;
  int margin_ = 0;
  std::vector<char> flags_;
};

/// Throws ConfigError if margin < 1 or 2 * margin >= the smallest axis count.
InteriorMask interior_mask(const Grid& grid, int margin);

/// Points of `mask` whose whole 3^n neighbourhood is in `mask`; the margin
/// grows by one.
InteriorMask erode(const InteriorMask& mask);

/// Values of `field` on the points of subgrid(field.grid(), margin).
template <FieldKind K>
Field<K> restrict_to(const Field<K>& field, int margin);

/// Inverse of restrict_to: points outside the sub-box get `fill`.
template <FieldKind K>
Field<K> embed(const Field<K>& sub, const Grid& grid, int margin, Complex fill);

}  // namespace hyrec
