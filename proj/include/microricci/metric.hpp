#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "microricci/mesh.hpp"

namespace microricci {

/// Per-vertex log-radii (conformal factors).
using LogRadii = std::vector<double>;

inline void check_log_radii(const TriMesh& mesh, std::span<const double> x) {
    if (x.size() != mesh.num_vertices())
        throw DimensionError("log-radii length " + std::to_string(x.size()) + " != vertex count " +
                             std::to_string(mesh.num_vertices()));
}

/// l(i,j) = exp(x_i + x_j) for every edge, indexed like mesh.edges().
inline std::vector<double> edge_lengths(const TriMesh& mesh, std::span<const double> x) {
    check_log_radii(mesh, x);
    const auto& edges = mesh.edges();
    std::vector<double> out(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) out[e] = std::exp(x[edges[e][0]] + x[edges[e][1]]);
    return out;
}

/// Side lengths of face f ordered by opposite corner.
inline std::array<double, 3> face_side_lengths(const TriMesh& mesh, std::span<const double> lengths, Index f) {
    const auto& fe = mesh.face_edges(f);
    return {lengths[fe[0]], lengths[fe[1]], lengths[fe[2]]};
}

/// Law-of-cosines angle opposite side `a`. Returns false when the strict
/// triangle inequality fails; `angle` then holds the clamped value.
inline bool angle_opposite(double a, double b, double c, double& angle) {
    const bool valid = a < b + c && b < a + c && c < a + b;
    double cosine = (b * b + c * c - a * a) / (2.0 * b * c);
    angle = std::acos(std::clamp(cosine, -1.0, 1.0));
    return valid;
}

using FaceAngles = std::array<double, 3>;

struct CornerAngles {
    std::vector<FaceAngles> angles;        // angles[f][k] at corner k of face f
    std::vector<Index> clamped_faces;      // only populated in clamp mode
};

enum class AngleMode { strict, clamp };

/// Corner angles of the metric given by `lengths`. In strict mode a face
/// violating the triangle inequality raises DegenerateTriangleError; in
/// clamp mode the cosine is clamped to [-1, 1] and the face is flagged.
inline CornerAngles corner_angles(const TriMesh& mesh, std::span<const double> lengths,
                                  AngleMode mode = AngleMode::strict) {
    if (lengths.size() != mesh.num_edges()) throw DimensionError("edge length count mismatch");
    CornerAngles out;
    out.angles.resize(mesh.num_faces());
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        auto l = face_side_lengths(mesh, lengths, static_cast<Index>(f));
        bool ok = true;
        for (int k = 0; k < 3; ++k) ok = angle_opposite(l[k], l[(k + 1) % 3], l[(k + 2) % 3], out.angles[f][k]) && ok;
        if (!ok) {
            if (mode == AngleMode::strict) throw DegenerateTriangleError(f, l);
            out.clamped_faces.push_back(static_cast<Index>(f));
        }
    }
    return out;
}

/// Angle deficits K_i = 2π − Σ corner angles at i, from precomputed angles.
inline std::vector<double> angle_deficits(const TriMesh& mesh, const std::vector<FaceAngles>& angles) {
    std::vector<double> k(mesh.num_vertices(), 2.0 * std::numbers::pi);
    const auto& faces = mesh.faces();
    for (std::size_t f = 0; f < faces.size(); ++f)
        for (int c = 0; c < 3; ++c) k[faces[f][c]] -= angles[f][c];
    return k;
}

/// Discrete Gaussian curvature of the metric induced by x.
inline std::vector<double> gauss_curvature(const TriMesh& mesh, std::span<const double> x,
                                           AngleMode mode = AngleMode::strict) {
    auto lengths = edge_lengths(mesh, x);
    return angle_deficits(mesh, corner_angles(mesh, lengths, mode).angles);
}

}  // namespace microricci
