#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "microricci/errors.hpp"

namespace microricci {

/// Symmetric sparse matrix in compressed-row form with sorted column
/// indices. Both triangles are stored so a row doubles as a column.
class SparseSym {
public:
    SparseSym() = default;
    SparseSym(std::size_t n, std::vector<std::size_t> row_offsets, std::vector<std::uint32_t> col_indices,
              std::vector<double> values)
        : n_(n), row_offsets_(std::move(row_offsets)), col_indices_(std::move(col_indices)), values_(std::move(values)) {
        if (row_offsets_.size() != n_ + 1 || col_indices_.size() != values_.size() ||
            row_offsets_.back() != values_.size())
            throw DimensionError("inconsistent compressed-row arrays");
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
    [[nodiscard]] const std::vector<std::size_t>& row_offsets() const noexcept { return row_offsets_; }
    [[nodiscard]] const std::vector<std::uint32_t>& col_indices() const noexcept { return col_indices_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    [[nodiscard]] std::span<const std::uint32_t> row_cols(std::size_t i) const noexcept {
        return {col_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }
    [[nodiscard]] std::span<const double> row_values(std::size_t i) const noexcept {
        return {values_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }

    /// Entry (i, j); zero outside the pattern.
    [[nodiscard]] double at(std::size_t i, std::size_t j) const noexcept {
        auto cols = row_cols(i);
        auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(j));
        if (it == cols.end() || *it != j) return 0.0;
        return values_[row_offsets_[i] + static_cast<std::size_t>(it - cols.begin())];
    }

    [[nodiscard]] double diagonal(std::size_t i) const noexcept { return at(i, i); }

    /// out = H v in O(nnz).
    void multiply(std::span<const double> v, std::span<double> out) const {
        if (v.size() != n_ || out.size() != n_) throw DimensionError("matvec dimension mismatch");
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) acc += values_[k] * v[col_indices_[k]];
            out[i] = acc;
        }
    }

    [[nodiscard]] std::vector<double> multiply(std::span<const double> v) const {
        std::vector<double> out(n_);
        multiply(v, out);
        return out;
    }

    [[nodiscard]] SparseSym scaled(double c) const {
        SparseSym out = *this;
        for (auto& v : out.values_) v *= c;
        return out;
    }

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<std::uint32_t> col_indices_;
    std::vector<double> values_;
};

/// Residual (syndrome) s = H x.
inline std::vector<double> syndrome(const SparseSym& h, std::span<const double> x) {
    if (x.size() != h.size())
        throw DimensionError("syndrome: vector length " + std::to_string(x.size()) + " != matrix size " +
                             std::to_string(h.size()));
    return h.multiply(x);
}

/// max_i Σ_j |H_ij|.
inline double inf_norm(const SparseSym& h) noexcept {
    double best = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        double row = 0.0;
        for (double v : h.row_values(i)) row += std::abs(v);
        best = std::max(best, row);
    }
    return best;
}

inline double inf_norm(std::span<const double> v) noexcept {
    double best = 0.0;
    for (double a : v) best = std::max(best, std::abs(a));
    return best;
}

/// vᵀ H v.
inline double quadratic_form(const SparseSym& h, std::span<const double> v) {
    if (v.size() != h.size()) throw DimensionError("quadratic_form dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        auto cols = h.row_cols(i);
        auto vals = h.row_values(i);
        double row = 0.0;
        for (std::size_t k = 0; k < cols.size(); ++k) row += vals[k] * v[cols[k]];
        acc += v[i] * row;
    }
    return acc;
}

/// Σ_{i<j} (−H_ij)(v_i − v_j)²; equals vᵀHv when every row sums to zero.
inline double edge_sum_form(const SparseSym& h, std::span<const double> v) {
    if (v.size() != h.size()) throw DimensionError("edge_sum_form dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        auto cols = h.row_cols(i);
        auto vals = h.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cols[k] <= i) continue;
            double d = v[i] - v[cols[k]];
            acc += -vals[k] * d * d;
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// triplet text format: "n nnz" header, then one "i j value" line per entry
// ---------------------------------------------------------------------------

inline void write_triplets(std::ostream& out, const SparseSym& h) {
    out << h.size() << ' ' << h.nnz() << '\n';
    char buf[96];
    for (std::size_t i = 0; i < h.size(); ++i) {
        auto cols = h.row_cols(i);
        auto vals = h.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%zu %u %.17g\n", i, cols[k], vals[k]);
            out << buf;
        }
    }
}

inline SparseSym read_triplets(std::istream& in) {
    std::size_t n = 0, nnz = 0;
    if (!(in >> n >> nnz)) throw ParseError(1, "missing 'n nnz' header");
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    for (std::size_t k = 0; k < nnz; ++k) {
        std::size_t i = 0, j = 0;
        double v = 0.0;
        if (!(in >> i >> j >> v)) throw ParseError(k + 2, "truncated triplet list");
        if (i >= n || j >= n) throw ParseError(k + 2, "index out of range");
        rows[i].emplace_back(static_cast<std::uint32_t>(j), v);
    }
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (auto& r : rows) {
        std::sort(r.begin(), r.end());
        for (auto& [j, v] : r) {
            cols.push_back(j);
            vals.push_back(v);
        }
        offsets.push_back(cols.size());
    }
    return SparseSym(n, std::move(offsets), std::move(cols), std::move(vals));
}

}  // namespace microricci
