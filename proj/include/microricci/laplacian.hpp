#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "microricci/metric.hpp"
#include "microricci/sparse.hpp"

namespace microricci {

/// |cot θ| is capped here; near-degenerate corners in noisy inputs would
/// otherwise overflow the weights.
inline constexpr double kCotangentCap = 1e12;

struct LaplacianDiagnostics {
    std::size_t capped_cotangents = 0;   // conditioning warnings
    std::size_t positive_offdiagonal = 0;  // non-Delaunay edges
};

/// Cotangent Laplacian of the metric given by per-edge `lengths`:
/// H_ij = −½(cot α_ij + cot β_ij) on edges, H_ii = −Σ_{k≠i} H_ik.
inline SparseSym cotan_laplacian_from_lengths(const TriMesh& mesh, std::span<const double> lengths,
                                              LaplacianDiagnostics* diag = nullptr,
                                              AngleMode mode = AngleMode::strict) {
    const auto angles = corner_angles(mesh, lengths, mode).angles;
    std::vector<double> weight(mesh.num_edges(), 0.0);  // off-diagonal value per edge
    LaplacianDiagnostics local;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        for (int k = 0; k < 3; ++k) {
            double cot = 1.0 / std::tan(angles[f][k]);
            if (!(std::abs(cot) <= kCotangentCap)) {
                cot = std::copysign(kCotangentCap, std::isnan(cot) ? 1.0 : cot);
                ++local.capped_cotangents;
            }
            weight[mesh.face_edges(static_cast<Index>(f))[k]] -= 0.5 * cot;
        }
    }

    const std::size_t n = mesh.num_vertices();
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    cols.reserve(n + 2 * mesh.num_edges());
    vals.reserve(n + 2 * mesh.num_edges());
    for (Index i = 0; i < n; ++i) {
        auto ring = mesh.one_ring(i);
        auto ring_e = mesh.ring_edges(i);
        double diag_sum = 0.0;
        for (std::size_t k = 0; k < ring.size(); ++k) diag_sum -= weight[ring_e[k]];
        bool placed_diag = false;
        for (std::size_t k = 0; k < ring.size(); ++k) {
            if (!placed_diag && ring[k] > i) {
                cols.push_back(i);
                vals.push_back(diag_sum);
                placed_diag = true;
            }
            cols.push_back(ring[k]);
            vals.push_back(weight[ring_e[k]]);
        }
        if (!placed_diag) {
            cols.push_back(i);
            vals.push_back(diag_sum);
        }
        offsets[i + 1] = cols.size();
    }
    for (double w : weight)
        if (w > 0.0) ++local.positive_offdiagonal;
    if (diag) *diag = local;
    return SparseSym(n, std::move(offsets), std::move(cols), std::move(vals));
}

/// H assembled from the metric induced by log-radii x.
inline SparseSym build_cotan_laplacian(const TriMesh& mesh, std::span<const double> x,
                                       LaplacianDiagnostics* diag = nullptr) {
    return cotan_laplacian_from_lengths(mesh, edge_lengths(mesh, x), diag);
}

/// H assembled from the embedded edge lengths.
inline SparseSym build_embedded_laplacian(const TriMesh& mesh, LaplacianDiagnostics* diag = nullptr) {
    return cotan_laplacian_from_lengths(mesh, mesh.embedded_edge_lengths(), diag);
}

}  // namespace microricci
