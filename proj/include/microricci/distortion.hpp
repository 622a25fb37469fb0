#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "microricci/mesh.hpp"

namespace microricci {

enum class DistortionKind { gaussian_noise, quantize_position, decimate };

inline std::string to_string(DistortionKind k) {
    switch (k) {
        case DistortionKind::gaussian_noise: return "gaussian_noise";
        case DistortionKind::quantize_position: return "quantize_position";
        case DistortionKind::decimate: return "decimate";
    }
    return "?";
}

inline DistortionKind distortion_kind_from_string(const std::string& s) {
    if (s == "gaussian_noise") return DistortionKind::gaussian_noise;
    if (s == "quantize_position") return DistortionKind::quantize_position;
    if (s == "decimate") return DistortionKind::decimate;
    throw Error("unknown distortion kind '" + s + "'");
}

/// magnitude: σ as a fraction of the bounding-box diagonal in [0, 0.5]
/// (gaussian_noise) | bit depth in [1, 48] (quantize_position) | target
/// vertex fraction in (0, 1] (decimate).
struct DistortionSpec {
    DistortionKind kind = DistortionKind::gaussian_noise;
    double magnitude = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        switch (kind) {
            case DistortionKind::gaussian_noise:
                if (!(magnitude >= 0.0 && magnitude <= 0.5)) throw Error("gaussian_noise sigma must be in [0, 0.5]");
                break;
            case DistortionKind::quantize_position:
                if (!(magnitude >= 1.0 && magnitude <= 48.0) || magnitude != std::floor(magnitude))
                    throw Error("quantize_position bits must be an integer in [1, 48]");
                break;
            case DistortionKind::decimate:
                if (!(magnitude > 0.0 && magnitude <= 1.0)) throw Error("decimate fraction must be in (0, 1]");
                break;
        }
    }
};

namespace detail {

inline TriMesh add_gaussian_noise(const TriMesh& mesh, double sigma, std::uint64_t seed) {
    if (sigma == 0.0) return mesh;
    const double scale = sigma * mesh.bounding_box_diagonal();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto pos = mesh.positions();
    for (auto& p : pos)
        for (auto& c : p) c += scale * gauss(rng);
    return mesh.with_positions(std::move(pos));
}

inline TriMesh quantize_positions(const TriMesh& mesh, int bits) {
    const auto& src = mesh.positions();
    Vec3 lo = src[0], hi = src[0];
    for (const auto& p : src)
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    const double cells = std::ldexp(1.0, bits);
    auto pos = src;
    for (auto& p : pos)
        for (int k = 0; k < 3; ++k) {
            double step = (hi[k] - lo[k]) / cells;
            if (step > 0.0) p[k] = lo[k] + std::round((p[k] - lo[k]) / step) * step;
        }
    return mesh.with_positions(std::move(pos));
}

// Shortest-edge collapse to the midpoint. An edge is collapsed only when the
// link condition holds, both opposite vertices keep degree >= 3, and no
// surviving face flips its normal.
class EdgeCollapser {
public:
    explicit EdgeCollapser(const TriMesh& mesh)
        : pos_(mesh.positions()), faces_(mesh.faces()), face_alive_(faces_.size(), true),
          vertex_alive_(pos_.size(), true), vertex_faces_(pos_.size()), alive_count_(pos_.size()) {
        for (std::size_t f = 0; f < faces_.size(); ++f)
            for (Index v : faces_[f]) vertex_faces_[v].push_back(static_cast<Index>(f));
        for (const auto& e : mesh.edges()) push_edge(e[0], e[1]);
    }

    TriMesh run(std::size_t target) {
        while (alive_count_ > target && !heap_.empty()) {
            auto [len, a, b] = heap_.top();
            heap_.pop();
            if (!vertex_alive_[a] || !vertex_alive_[b]) continue;
            if (len != length(a, b)) continue;  // stale entry; a fresh one was pushed when it changed
            auto ring_a = neighbours(a);
            if (!std::binary_search(ring_a.begin(), ring_a.end(), b)) continue;
            try_collapse(a, b, ring_a);
        }
        if (alive_count_ > target)
            throw Error("decimation stalled at " + std::to_string(alive_count_) + " vertices (target " +
                        std::to_string(target) + ")");
        return compact();
    }

private:
    using Entry = std::tuple<double, Index, Index>;

    double length(Index a, Index b) const { return norm(pos_[a] - pos_[b]); }
    void push_edge(Index a, Index b) { heap_.emplace(length(a, b), std::min(a, b), std::max(a, b)); }

    std::vector<Index> neighbours(Index v) const {
        std::vector<Index> out;
        for (Index f : vertex_faces_[v])
            for (Index u : faces_[f])
                if (u != v) out.push_back(u);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    static Vec3 face_normal(const Vec3& p0, const Vec3& p1, const Vec3& p2) { return cross(p1 - p0, p2 - p0); }

    void try_collapse(Index a, Index b, const std::vector<Index>& ring_a) {
        auto ring_b = neighbours(b);
        std::vector<Index> common;
        std::set_intersection(ring_a.begin(), ring_a.end(), ring_b.begin(), ring_b.end(), std::back_inserter(common));
        if (common.size() != 2) return;
        for (Index c : common)
            if (neighbours(c).size() <= 3) return;
        if (ring_a.size() + ring_b.size() - 4 < 3) return;

        const Vec3 mid = 0.5 * (pos_[a] + pos_[b]);
        for (Index v : {a, b}) {
            for (Index f : vertex_faces_[v]) {
                const auto& t = faces_[f];
                bool has_a = t[0] == a || t[1] == a || t[2] == a;
                bool has_b = t[0] == b || t[1] == b || t[2] == b;
                if (has_a && has_b) continue;
                std::array<Vec3, 3> p{pos_[t[0]], pos_[t[1]], pos_[t[2]]};
                Vec3 before = face_normal(p[0], p[1], p[2]);
                for (int k = 0; k < 3; ++k)
                    if (t[k] == v) p[k] = mid;
                Vec3 after = face_normal(p[0], p[1], p[2]);
                if (dot(before, after) <= 0.0) return;
            }
        }

        pos_[a] = mid;
        std::vector<Index> merged;
        for (Index f : vertex_faces_[a]) {
            auto& t = faces_[f];
            bool has_b = t[0] == b || t[1] == b || t[2] == b;
            if (has_b) {
                face_alive_[f] = false;
                for (Index u : t)
                    if (u != a && u != b) std::erase(vertex_faces_[u], f);
            } else {
                merged.push_back(f);
            }
        }
        for (Index f : vertex_faces_[b]) {
            if (!face_alive_[f]) continue;
            for (auto& u : faces_[f])
                if (u == b) u = a;
            merged.push_back(f);
        }
        vertex_faces_[a] = std::move(merged);
        vertex_faces_[b].clear();
        vertex_alive_[b] = false;
        --alive_count_;
        for (Index u : neighbours(a)) {
            push_edge(a, u);
            for (Index w : neighbours(u))
                if (w != a) push_edge(u, w);
        }
    }

    TriMesh compact() const {
        std::vector<Index> remap(pos_.size(), kInvalidIndex);
        std::vector<Vec3> pos;
        for (std::size_t v = 0; v < pos_.size(); ++v)
            if (vertex_alive_[v]) {
                remap[v] = static_cast<Index>(pos.size());
                pos.push_back(pos_[v]);
            }
        std::vector<Face> faces;
        for (std::size_t f = 0; f < faces_.size(); ++f)
            if (face_alive_[f]) faces.push_back({remap[faces_[f][0]], remap[faces_[f][1]], remap[faces_[f][2]]});
        return TriMesh::build(std::move(pos), std::move(faces));
    }

    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    std::vector<bool> face_alive_;
    std::vector<bool> vertex_alive_;
    std::vector<std::vector<Index>> vertex_faces_;
    std::size_t alive_count_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap_;
};

}  // namespace detail

/// Returns a distorted copy. Noise and quantization keep the topology;
/// decimation drops UVs and returns a new closed mesh. Deterministic in seed.
inline TriMesh apply_distortion(const TriMesh& mesh, const DistortionSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case DistortionKind::gaussian_noise: return detail::add_gaussian_noise(mesh, spec.magnitude, spec.seed);
        case DistortionKind::quantize_position:
            return detail::quantize_positions(mesh, static_cast<int>(spec.magnitude));
        case DistortionKind::decimate: {
            auto target = static_cast<std::size_t>(std::llround(spec.magnitude * static_cast<double>(mesh.num_vertices())));
            if (target < 4) throw Error("decimation target of " + std::to_string(target) + " vertices is below 4");
            if (target >= mesh.num_vertices()) return mesh;
            return detail::EdgeCollapser(mesh).run(target);
        }
    }
    return mesh;
}

}  // namespace microricci
