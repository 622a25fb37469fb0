#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "microricci/mesh.hpp"

namespace microricci {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_real(std::string_view tok, std::size_t line) {
    // std::from_chars for double is available in libstdc++ >= 11
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(line, "invalid number '" + std::string(tok) + "'");
    return v;
}

inline long parse_int(std::string_view tok, std::size_t line) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(line, "invalid index '" + std::string(tok) + "'");
    return v;
}

// OBJ indices are 1-based; negative values count back from the current end.
inline Index resolve_index(long raw, std::size_t count, std::size_t line) {
    long idx = raw > 0 ? raw - 1 : static_cast<long>(count) + raw;
    if (raw == 0 || idx < 0 || idx >= static_cast<long>(count))
        throw ParseError(line, "index " + std::to_string(raw) + " out of range");
    return static_cast<Index>(idx);
}

}  // namespace detail

/// Reads an ASCII Wavefront OBJ holding a closed triangle mesh. `v`, `vt`
/// and `f` records are used; everything else is ignored. Per-corner UVs are
/// kept only when every face carries texture indices.
inline TriMesh read_obj(std::istream& in) {
    std::vector<Vec3> positions;
    std::vector<Vec2> texcoords;
    std::vector<Face> faces;
    std::vector<std::array<Index, 3>> face_uv;
    std::vector<std::size_t> face_line;
    bool all_faces_textured = true;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "v") {
            if (tok.size() < 4) throw ParseError(line_no, "vertex record needs 3 coordinates");
            positions.push_back({detail::parse_real(tok[1], line_no), detail::parse_real(tok[2], line_no),
                                 detail::parse_real(tok[3], line_no)});
        } else if (tok[0] == "vt") {
            if (tok.size() < 3) throw ParseError(line_no, "texture record needs 2 coordinates");
            texcoords.push_back({detail::parse_real(tok[1], line_no), detail::parse_real(tok[2], line_no)});
        } else if (tok[0] == "f") {
            if (tok.size() != 4)
                throw TopologyError("line " + std::to_string(line_no) + ": face " + std::to_string(faces.size()) +
                                        " has " + std::to_string(tok.size() - 1) + " vertices; only triangles are supported",
                                    faces.size());
            Face face{};
            std::array<Index, 3> uvi{};
            bool textured = true;
            for (int k = 0; k < 3; ++k) {
                std::string_view t = tok[k + 1];
                auto slash = t.find('/');
                face[k] = detail::resolve_index(detail::parse_int(t.substr(0, slash), line_no), positions.size(),
                                                line_no);
                if (slash == std::string_view::npos) {
                    textured = false;
                    continue;
                }
                auto rest = t.substr(slash + 1);
                auto slash2 = rest.find('/');
                auto vt = rest.substr(0, slash2);
                if (vt.empty()) {
                    textured = false;
                } else {
                    uvi[k] = detail::resolve_index(detail::parse_int(vt, line_no), texcoords.size(), line_no);
                }
            }
            if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
                throw TopologyError("line " + std::to_string(line_no) + ": face " + std::to_string(faces.size()) +
                                        " is degenerate (repeated vertex)",
                                    faces.size());
            faces.push_back(face);
            face_uv.push_back(uvi);
            face_line.push_back(line_no);
            all_faces_textured = all_faces_textured && textured;
        }
    }

    std::vector<std::array<Vec2, 3>> uv;
    if (all_faces_textured && !faces.empty()) {
        uv.reserve(faces.size());
        for (const auto& t : face_uv) uv.push_back({texcoords[t[0]], texcoords[t[1]], texcoords[t[2]]});
    }
    try {
        return TriMesh::build(std::move(positions), std::move(faces), std::move(uv));
    } catch (const TopologyError& e) {
        if (e.face() != TopologyError::kNoFace && e.face() < face_line.size())
            throw TopologyError("line " + std::to_string(face_line[e.face()]) + ": " + e.what(), e.face());
        throw;
    }
}

inline TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_obj(in);
}

/// Writes positions with round-trip precision; faces as `f a/a b/b c/c` when
/// the mesh has UVs (one `vt` per corner), `f a b c` otherwise.
inline void write_obj(std::ostream& out, const TriMesh& mesh) {
    char buf[128];
    for (const auto& p : mesh.positions()) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
    if (mesh.has_uv()) {
        for (const auto& w : mesh.uv())
            for (const auto& t : w) {
                std::snprintf(buf, sizeof buf, "vt %.17g %.17g\n", t[0], t[1]);
                out << buf;
            }
        std::size_t corner = 1;
        for (const auto& f : mesh.faces()) {
            out << "f " << f[0] + 1 << '/' << corner << ' ' << f[1] + 1 << '/' << corner + 1 << ' ' << f[2] + 1 << '/'
                << corner + 2 << '\n';
            corner += 3;
        }
    } else {
        for (const auto& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

inline void save_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_obj(out, mesh);
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace microricci
