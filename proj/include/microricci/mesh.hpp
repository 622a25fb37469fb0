#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "microricci/errors.hpp"

namespace microricci {

using Index = std::uint32_t;
using Vec3 = std::array<double, 3>;
using Vec2 = std::array<double, 2>;
using Face = std::array<Index, 3>;
using Edge = std::array<Index, 2>;  // always stored with edge[0] < edge[1]

inline constexpr Index kInvalidIndex = static_cast<Index>(-1);

// ---------------------------------------------------------------------------
// small vector helpers
// ---------------------------------------------------------------------------

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------
// TriMesh
// ---------------------------------------------------------------------------

/// Closed, orientable triangle mesh. Immutable once built; every derived
/// table (edges, one-rings, face/edge incidence) is computed by `build`.
///
/// Corner k of face f sits at vertex faces()[f][k]; the edge opposite that
/// corner joins corners k+1 and k+2 and is face_edges()[f][k].
class TriMesh {
public:
    TriMesh() = default;

    /// Validates and builds the adjacency tables. `uv`, when non-empty, holds
    /// one UV triple per face (per-corner wedges). Throws TopologyError.
    static TriMesh build(std::vector<Vec3> positions, std::vector<Face> faces,
                         std::vector<std::array<Vec2, 3>> uv = {});

    [[nodiscard]] std::size_t num_vertices() const noexcept { return positions_.size(); }
    [[nodiscard]] std::size_t num_edges() const noexcept { return edges_.size(); }
    [[nodiscard]] std::size_t num_faces() const noexcept { return faces_.size(); }
    [[nodiscard]] long euler_characteristic() const noexcept {
        return static_cast<long>(num_vertices()) - static_cast<long>(num_edges()) +
               static_cast<long>(num_faces());
    }

    [[nodiscard]] const std::vector<Vec3>& positions() const noexcept { return positions_; }
    [[nodiscard]] const std::vector<Face>& faces() const noexcept { return faces_; }
    [[nodiscard]] const std::vector<Edge>& edges() const noexcept { return edges_; }
    [[nodiscard]] std::span<const Index> one_ring(Index v) const noexcept { return one_ring_[v]; }
    [[nodiscard]] std::size_t degree(Index v) const noexcept { return one_ring_[v].size(); }
    [[nodiscard]] std::span<const Index> vertex_faces(Index v) const noexcept { return vertex_faces_[v]; }
    [[nodiscard]] const std::array<Index, 3>& face_edges(Index f) const noexcept { return face_edges_[f]; }
    [[nodiscard]] const std::array<Index, 2>& edge_faces(Index e) const noexcept { return edge_faces_[e]; }
    /// Edge ids parallel to one_ring(v).
    [[nodiscard]] std::span<const Index> ring_edges(Index v) const noexcept { return ring_edges_[v]; }

    [[nodiscard]] bool has_uv() const noexcept { return !uv_.empty(); }
    [[nodiscard]] const std::vector<std::array<Vec2, 3>>& uv() const noexcept { return uv_; }

    /// Edge id joining i and j, or kInvalidIndex.
    [[nodiscard]] Index edge_index(Index i, Index j) const noexcept {
        const auto& ring = one_ring_[i];
        auto it = std::lower_bound(ring.begin(), ring.end(), j);
        if (it == ring.end() || *it != j) return kInvalidIndex;
        return ring_edges_[i][static_cast<std::size_t>(it - ring.begin())];
    }

    /// Same topology, new positions.
    [[nodiscard]] TriMesh with_positions(std::vector<Vec3> positions) const {
        if (positions.size() != positions_.size()) throw DimensionError("position count mismatch");
        TriMesh out = *this;
        out.positions_ = std::move(positions);
        return out;
    }

    [[nodiscard]] double bounding_box_diagonal() const noexcept {
        if (positions_.empty()) return 0.0;
        Vec3 lo = positions_[0], hi = positions_[0];
        for (const auto& p : positions_) {
            for (int k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        }
        return norm(hi - lo);
    }

    /// Edge lengths of the embedding, indexed like edges().
    [[nodiscard]] std::vector<double> embedded_edge_lengths() const {
        std::vector<double> out(edges_.size());
        for (std::size_t e = 0; e < edges_.size(); ++e)
            out[e] = norm(positions_[edges_[e][1]] - positions_[edges_[e][0]]);
        return out;
    }

private:
    std::vector<Vec3> positions_;
    std::vector<Face> faces_;
    std::vector<Edge> edges_;
    std::vector<std::vector<Index>> one_ring_;
    std::vector<std::vector<Index>> ring_edges_;
    std::vector<std::vector<Index>> vertex_faces_;
    std::vector<std::array<Index, 3>> face_edges_;
    std::vector<std::array<Index, 2>> edge_faces_;
    std::vector<std::array<Vec2, 3>> uv_;
};

inline TriMesh TriMesh::build(std::vector<Vec3> positions, std::vector<Face> faces,
                              std::vector<std::array<Vec2, 3>> uv) {
    const std::size_t n = positions.size();
    if (faces.empty()) throw TopologyError("mesh has no faces");
    if (!uv.empty() && uv.size() != faces.size())
        throw TopologyError("uv wedge count does not match face count");

    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        for (Index v : t)
            if (v >= n) throw TopologyError("face " + std::to_string(f) + " references missing vertex", f);
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw TopologyError("face " + std::to_string(f) + " repeats a vertex", f);
    }

    TriMesh m;
    m.positions_ = std::move(positions);
    m.faces_ = std::move(faces);
    m.uv_ = std::move(uv);

    // Directed half-edges must be unique (orientable, consistently oriented),
    // and each must have its twin (closed).
    std::map<std::pair<Index, Index>, Index> halfedge_face;
    for (std::size_t f = 0; f < m.faces_.size(); ++f) {
        const auto& t = m.faces_[f];
        for (int k = 0; k < 3; ++k) {
            auto key = std::make_pair(t[k], t[(k + 1) % 3]);
            if (!halfedge_face.emplace(key, static_cast<Index>(f)).second)
                throw TopologyError("face " + std::to_string(f) + ": edge (" + std::to_string(key.first) +
                                    "," + std::to_string(key.second) +
                                    ") is non-manifold or inconsistently oriented",
                                    f);
        }
    }

    m.face_edges_.assign(m.faces_.size(), {kInvalidIndex, kInvalidIndex, kInvalidIndex});
    std::map<std::pair<Index, Index>, Index> edge_id;
    for (std::size_t f = 0; f < m.faces_.size(); ++f) {
        const auto& t = m.faces_[f];
        for (int k = 0; k < 3; ++k) {
            Index a = t[(k + 1) % 3], b = t[(k + 2) % 3];
            if (halfedge_face.find({b, a}) == halfedge_face.end())
                throw TopologyError("face " + std::to_string(f) + ": boundary edge (" + std::to_string(a) +
                                    "," + std::to_string(b) + ")",
                                    f);
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto [it, inserted] = edge_id.emplace(key, static_cast<Index>(m.edges_.size()));
            if (inserted) {
                m.edges_.push_back({key.first, key.second});
                m.edge_faces_.push_back({static_cast<Index>(f), kInvalidIndex});
            } else {
                m.edge_faces_[it->second][1] = static_cast<Index>(f);
            }
            m.face_edges_[f][k] = it->second;
        }
    }

    m.one_ring_.assign(n, {});
    m.ring_edges_.assign(n, {});
    m.vertex_faces_.assign(n, {});
    for (std::size_t f = 0; f < m.faces_.size(); ++f)
        for (Index v : m.faces_[f]) m.vertex_faces_[v].push_back(static_cast<Index>(f));
    for (const auto& [key, e] : edge_id) {  // map order keeps rings sorted
        m.one_ring_[key.first].push_back(key.second);
        m.ring_edges_[key.first].push_back(e);
    }
    for (const auto& [key, e] : edge_id) {
        m.one_ring_[key.second].push_back(key.first);
        m.ring_edges_[key.second].push_back(e);
    }
    for (std::size_t v = 0; v < n; ++v) {
        auto& ring = m.one_ring_[v];
        auto& re = m.ring_edges_[v];
        std::vector<std::size_t> order(ring.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ring[a] < ring[b]; });
        std::vector<Index> r2, e2;
        for (auto k : order) {
            r2.push_back(ring[k]);
            e2.push_back(re[k]);
        }
        ring = std::move(r2);
        re = std::move(e2);
    }

    for (std::size_t v = 0; v < n; ++v) {
        if (m.vertex_faces_[v].empty()) throw TopologyError("vertex " + std::to_string(v) + " is unreferenced");
        // A manifold vertex has a single fan: as many faces as neighbours, and
        // walking the fan from one face visits all of them.
        const auto& vf = m.vertex_faces_[v];
        if (vf.size() != m.one_ring_[v].size())
            throw TopologyError("vertex " + std::to_string(v) + " is non-manifold");
        Index f = vf[0];
        std::size_t visited = 0;
        do {
            const auto& t = m.faces_[f];
            int k = t[0] == v ? 0 : (t[1] == v ? 1 : 2);
            Index next_v = t[(k + 2) % 3];  // half-edge (v -> next_v) is owned by the neighbouring face
            f = halfedge_face.at({v, next_v});
            ++visited;
        } while (f != vf[0] && visited <= vf.size());
        if (visited != vf.size())
            throw TopologyError("vertex " + std::to_string(v) + " is non-manifold (multiple fans)");
    }
    return m;
}

}  // namespace microricci
