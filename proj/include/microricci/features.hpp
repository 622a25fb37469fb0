#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "microricci/mesh.hpp"
#include "microricci/sparse.hpp"

namespace microricci {

/// Bumped whenever the meaning or order of a feature changes.
inline constexpr int kFeatureSpecVersion = 1;

inline constexpr std::size_t kSelectorFeatureDim = 7;
inline constexpr std::size_t kRegressorFeatureDim = 2;

using SelectorFeatures = std::array<double, kSelectorFeatureDim>;
using RegressorFeatures = std::array<double, kRegressorFeatureDim>;

/// [s_i, min, max, mean, std of the one-ring residuals, deg(i), s_i/‖s‖∞].
/// `s_inf` must be ‖s‖∞; it is passed in so scoring every vertex stays O(m).
inline SelectorFeatures selector_features(std::span<const double> s, double s_inf, const TriMesh& mesh, Index i) {
    if (i >= mesh.num_vertices() || s.size() != mesh.num_vertices())
        throw DimensionError("selector_features: vertex or residual out of range");
    auto ring = mesh.one_ring(i);
    if (ring.empty()) throw TopologyError("vertex " + std::to_string(i) + " has no neighbours");
    double lo = s[ring[0]], hi = s[ring[0]], sum = 0.0;
    for (Index j : ring) {
        lo = std::min(lo, s[j]);
        hi = std::max(hi, s[j]);
        sum += s[j];
    }
    const double deg = static_cast<double>(ring.size());
    const double mean = sum / deg;
    double var = 0.0;
    for (Index j : ring) var += (s[j] - mean) * (s[j] - mean);
    const double sd = std::sqrt(var / deg);
    const double normalized = s_inf > 0.0 ? s[i] / s_inf : 0.0;
    return {s[i], lo, hi, mean, sd, deg, normalized};
}

inline SelectorFeatures selector_features(std::span<const double> s, const TriMesh& mesh, Index i) {
    return selector_features(s, inf_norm(s), mesh, i);
}

/// (s_i, deg(i)).
inline RegressorFeatures regressor_features(std::span<const double> s, const TriMesh& mesh, Index i) {
    if (i >= mesh.num_vertices() || s.size() != mesh.num_vertices())
        throw DimensionError("regressor_features: vertex or residual out of range");
    return {s[i], static_cast<double>(mesh.degree(i))};
}

}  // namespace microricci
