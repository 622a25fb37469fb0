#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "microricci/mesh.hpp"

namespace microricci {

namespace detail {

// Longitude/latitude about a tilted axis so no subdivision vertex lands on a
// pole. Faces straddling the seam get their small longitudes wrapped by +1.
inline std::vector<std::array<Vec2, 3>> spherical_wedge_uv(const std::vector<Vec3>& pos,
                                                           const std::vector<Face>& faces) {
    const Vec3 axis = [] {
        Vec3 a{0.2113, 0.9327, 0.2921};
        return (1.0 / norm(a)) * a;
    }();
    Vec3 ref = cross(axis, Vec3{1.0, 0.0, 0.0});
    ref = (1.0 / norm(ref)) * ref;
    const Vec3 ref2 = cross(axis, ref);

    auto project = [&](const Vec3& p) -> Vec2 {
        Vec3 d = (1.0 / norm(p)) * p;
        double u = std::atan2(dot(d, ref2), dot(d, ref)) / (2.0 * std::numbers::pi) + 0.5;
        double v = std::acos(std::clamp(dot(d, axis), -1.0, 1.0)) / std::numbers::pi;
        return {u, v};
    };
    std::vector<std::array<Vec2, 3>> uv(faces.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) uv[f][k] = project(pos[faces[f][k]]);
        double lo = std::min({uv[f][0][0], uv[f][1][0], uv[f][2][0]});
        double hi = std::max({uv[f][0][0], uv[f][1][0], uv[f][2][0]});
        if (hi - lo > 0.5)
            for (auto& t : uv[f])
                if (t[0] < 0.5) t[0] += 1.0;
    }
    return uv;
}

}  // namespace detail

inline constexpr int kMaxIcosphereSubdivisions = 7;

/// Subdivided icosahedron projected onto a sphere of `radius`.
/// |F| = 20·4^s, n = 10·4^s + 2. Carries per-corner spherical UVs.
inline TriMesh gen_icosphere(int subdivisions, double radius = 1.0) {
    if (subdivisions < 0 || subdivisions > kMaxIcosphereSubdivisions)
        throw Error("icosphere subdivisions must be in [0, " + std::to_string(kMaxIcosphereSubdivisions) + "]");
    if (!(radius > 0.0)) throw Error("icosphere radius must be positive");

    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> pos{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                          {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : pos) p = (1.0 / norm(p)) * p;
    std::vector<Face> faces{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                            {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                            {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                            {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<Index, Index>, Index> midpoint;
        auto mid = [&](Index a, Index b) {
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = pos[a] + pos[b];
            pos.push_back((1.0 / norm(m)) * m);
            Index id = static_cast<Index>(pos.size() - 1);
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Face> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            Index ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    auto uv = detail::spherical_wedge_uv(pos, faces);
    for (auto& p : pos) p = radius * p;
    return TriMesh::build(std::move(pos), std::move(faces), std::move(uv));
}

/// Regular tetrahedron with unit circumradius.
inline TriMesh gen_tetrahedron() {
    const double s = 1.0 / std::sqrt(3.0);
    std::vector<Vec3> pos{{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    std::vector<Face> faces{{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return TriMesh::build(std::move(pos), std::move(faces));
}

}  // namespace microricci
