#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hyrec/synthesis.hpp"

namespace hyrec {

// Quantitative versions of the three sufficient conditions for
// reconstruction: u_1 does not vanish, grad v_1..grad v_n is a basis, and
// the M matrices are independent (alpha spans a 1-D orthogonal complement).
// Every margin is a minimum over interior (margin-1) points of a
// scale-free pointwise quantity whose normalization is fixed on the whole
// grid, so restricting to a sub-box can only raise it. A grid samples an
// isolated zero at distance up to h/sqrt(2), so a point degeneracy shows as
// an O(h^2) margin rather than 0.

struct AdmissibilityThresholds {
  double u1 = 1e-6;
  double det = 1e-6;
  double m = 1e-6;
};

/// Reads {"u1", "det", "m"} from a JSON object (missing keys keep their
/// defaults, null gives all defaults). Non-positive or unknown entries throw
/// ConfigError.
AdmissibilityThresholds thresholds(const nlohmann::json& cfg);

/// Axis-aligned box; `functionals` optionally picks the (0-based) subset of
/// H_j used on it, so each patch of a covering may rely on its own
/// boundary conditions. Empty means all.
struct SubBox {
  std::vector<Interval> bounds;
  std::vector<int> functionals;
};

struct ConditionMargins {
  /// min |H_1| / max |H_1| over the box.
  double u1 = 0.0;
  /// min over points of |det(grad v_1..grad v_n)| / prod_i sup |grad v_i|,
  /// sups taken over the interior of the whole grid.
  double det = 0.0;
  /// min over points of the relative singular-value gap of the stacked M
  /// constraint operator; nullopt when J < n(n+3)/2.
  std::optional<double> m;
  bool u1_pass = false;
  bool det_pass = false;
  bool m_pass = false;
  std::size_t points = 0;

  bool pass() const { return u1_pass && det_pass && m_pass; }
};

struct SubdomainEntry {
  SubBox box;
  ConditionMargins margins;
};

struct AdmissibilityReport {
  AdmissibilityThresholds thresholds;
  ConditionMargins global;
  std::vector<SubdomainEntry> subdomains;
  std::string note;

  bool pass() const { return global.pass(); }
};

/// Pointwise margin maps on the full grid (NaN outside the margin-1 mask).
struct MarginMaps {
  ScalarField u1;
  ScalarField det;
  std::optional<ScalarField> m;
};
MarginMaps margin_maps(const MeasurementSet& ms, const std::vector<int>& functionals = {});

AdmissibilityReport check(const MeasurementSet& ms, const std::vector<SubBox>& covering = {},
                          const AdmissibilityThresholds& thr = {});

nlohmann::json to_json(const AdmissibilityReport& r);
std::string format_table(const AdmissibilityReport& r);

}  // namespace hyrec
