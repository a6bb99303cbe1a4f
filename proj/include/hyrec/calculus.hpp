#pragma once

#include "hyrec/grid.hpp"

namespace hyrec {

// Finite-difference vector calculus on a Grid. Interior points use
// second-order central differences; boundary points use second-order
// one-sided stencils. All operators are exact on polynomials of per-axis
// degree <= 2 at interior points.

/// d/dx_axis of one component of a field.
ScalarField partial(const ScalarField& f, int axis);
ScalarField second_partial(const ScalarField& f, int axis);

VectorField gradient(const ScalarField& f);

/// Diagonal entries use 3-point second differences, off-diagonal entries the
/// composition of two central first differences (the 4-point cross stencil).
/// Only trusted at margin >= 1.
SymTensorField hessian(const ScalarField& f);

ScalarField divergence(const VectorField& f);

/// Row-wise divergence: entry i is sum_j d_j F_ij.
VectorField divergence(const SymTensorField& f);

ScalarField laplacian(const ScalarField& f);

/// Component `comp` of a vector/tensor field as a scalar field.
template <FieldKind K>
ScalarField component(const Field<K>& f, int comp);

}  // namespace hyrec
