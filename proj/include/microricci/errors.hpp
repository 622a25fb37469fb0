#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace microricci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Mesh is not a closed, orientable 2-manifold made of triangles.
class TopologyError : public Error {
public:
    explicit TopologyError(const std::string& what, std::size_t face = kNoFace) : Error(what), face_(face) {}
    /// Offending face index, or kNoFace.
    [[nodiscard]] std::size_t face() const noexcept { return face_; }
    static constexpr std::size_t kNoFace = static_cast<std::size_t>(-1);

private:
    std::size_t face_;
};

/// A face violates the strict triangle inequality under the current metric.
class DegenerateTriangleError : public Error {
public:
    DegenerateTriangleError(std::size_t face, std::array<double, 3> lengths)
        : Error("degenerate triangle at face " + std::to_string(face) + " (lengths " +
                std::to_string(lengths[0]) + ", " + std::to_string(lengths[1]) + ", " +
                std::to_string(lengths[2]) + ")"),
          face_(face),
          lengths_(lengths) {}
    [[nodiscard]] std::size_t face() const noexcept { return face_; }
    [[nodiscard]] const std::array<double, 3>& lengths() const noexcept { return lengths_; }

private:
    std::size_t face_;
    std::array<double, 3> lengths_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Model or dataset file written by an incompatible version.
class VersionError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public Error {
public:
    using Error::Error;
};

/// Solver aborted: residual became non-finite or grew past the divergence guard.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, std::size_t vertex, const std::string& what)
        : Error(what), iteration_(iteration), vertex_(vertex) {}
    [[nodiscard]] std::size_t iteration() const noexcept { return iteration_; }
    [[nodiscard]] std::size_t vertex() const noexcept { return vertex_; }

private:
    std::size_t iteration_;
    std::size_t vertex_;
};

}  // namespace microricci
