#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "microricci/metric.hpp"
#include "microricci/solver.hpp"

namespace microricci {

struct Spread {
    double mean = 0.0;
    double std = 0.0;  // population
};

inline Spread curvature_spread(std::span<const double> k) {
    if (k.empty()) throw Error("curvature_spread: empty vector");
    Spread s;
    for (double v : k) s.mean += v;
    s.mean /= static_cast<double>(k.size());
    double var = 0.0;
    for (double v : k) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(k.size()));
    return s;
}

/// Heron's formula in the cancellation-safe ordering; 0 for degenerate sides.
inline double heron_area(double a, double b, double c) {
    std::array<double, 3> l{a, b, c};
    std::sort(l.begin(), l.end(), std::greater<>());
    a = l[0], b = l[1], c = l[2];
    double p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    return p > 0.0 ? 0.25 * std::sqrt(p) : 0.0;
}

namespace detail {

inline void check_metric(const TriMesh& mesh, std::span<const double> lengths) {
    if (lengths.size() != mesh.num_edges())
        throw TopologyError("metric has " + std::to_string(lengths.size()) + " edge lengths but the mesh has " +
                            std::to_string(mesh.num_edges()) + " edges");
}

}  // namespace detail

struct UvDistortion {
    double rms = 0.0;
    std::size_t degenerate_uv_faces = 0;  // zero-area UV triangles, excluded
};

/// Per face, the least-squares similarity from the UV triangle onto the
/// metric triangle (laid out in the plane with the UV orientation). The
/// face deviation is sqrt(residual / Σ|p − centroid|²); the result is its
/// RMS weighted by metric area.
inline UvDistortion uv_distortion_rms(const TriMesh& mesh, std::span<const double> lengths) {
    if (!mesh.has_uv()) throw Error("uv_distortion_rms: mesh has no UV coordinates");
    detail::check_metric(mesh, lengths);
    using C = std::complex<double>;
    UvDistortion out;
    double weighted = 0.0, total_area = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const auto& uv = mesh.uv()[f];
        std::array<C, 3> u{C(uv[0][0], uv[0][1]), C(uv[1][0], uv[1][1]), C(uv[2][0], uv[2][1])};
        const double uv_area2 = std::imag(std::conj(u[1] - u[0]) * (u[2] - u[0]));
        if (uv_area2 == 0.0 || !std::isfinite(uv_area2)) {
            ++out.degenerate_uv_faces;
            continue;
        }
        auto l = face_side_lengths(mesh, lengths, static_cast<Index>(f));
        const double a = l[0], b = l[1], c = l[2];  // opposite corners 0, 1, 2
        const double area = heron_area(a, b, c);
        // corner 0 at the origin, corner 1 along +x at distance c
        const double px = (b * b + c * c - a * a) / (2.0 * c);
        double py = std::sqrt(std::max(0.0, b * b - px * px));
        if (uv_area2 < 0.0) py = -py;
        std::array<C, 3> p{C(0.0, 0.0), C(c, 0.0), C(px, py)};
        const C uc = (u[0] + u[1] + u[2]) / 3.0, pc = (p[0] + p[1] + p[2]) / 3.0;
        C num(0.0, 0.0);
        double den = 0.0, scale = 0.0;
        for (int k = 0; k < 3; ++k) {
            C du = u[k] - uc, dp = p[k] - pc;
            num += std::conj(du) * dp;
            den += std::norm(du);
            scale += std::norm(dp);
        }
        const C s = num / den;
        double resid = 0.0;
        for (int k = 0; k < 3; ++k) resid += std::norm(s * (u[k] - uc) - (p[k] - pc));
        const double dev2 = scale > 0.0 ? resid / scale : 0.0;
        weighted += area * dev2;
        total_area += area;
    }
    out.rms = total_area > 0.0 ? std::sqrt(weighted / total_area) : 0.0;
    return out;
}

/// Per face, max over corners of |θ_ref − θ_after| in degrees, where θ_ref
/// comes from the embedded positions.
inline std::vector<double> angular_deviation(const TriMesh& reference, std::span<const double> lengths_after) {
    detail::check_metric(reference, lengths_after);
    const auto ref_lengths = reference.embedded_edge_lengths();
    const auto before = corner_angles(reference, ref_lengths, AngleMode::clamp).angles;
    const auto after = corner_angles(reference, lengths_after, AngleMode::clamp).angles;
    std::vector<double> out(reference.num_faces());
    for (std::size_t f = 0; f < out.size(); ++f) {
        double worst = 0.0;
        for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(before[f][k] - after[f][k]));
        out[f] = worst * 180.0 / std::numbers::pi;
    }
    return out;
}

/// Per face |A'/A − 1| with Heron areas of both metrics.
inline std::vector<double> area_ratio_error(const TriMesh& reference, std::span<const double> lengths_after) {
    detail::check_metric(reference, lengths_after);
    const auto ref_lengths = reference.embedded_edge_lengths();
    std::vector<double> out(reference.num_faces());
    for (std::size_t f = 0; f < out.size(); ++f) {
        auto r = face_side_lengths(reference, ref_lengths, static_cast<Index>(f));
        auto a = face_side_lengths(reference, lengths_after, static_cast<Index>(f));
        double ar = heron_area(r[0], r[1], r[2]);
        if (!(ar > 0.0)) throw Error("area_ratio_error: reference face " + std::to_string(f) + " has zero area");
        out[f] = std::abs(heron_area(a[0], a[1], a[2]) / ar - 1.0);
    }
    return out;
}

/// Linear-interpolation quantile, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw Error("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct QualityReport {
    double curvature_mean = 0.0;
    double curvature_std = 0.0;
    double uv_rms = std::numeric_limits<double>::quiet_NaN();  // NaN when the mesh has no UVs
    std::size_t uv_degenerate_faces = 0;
    double angle_dev_median = 0.0;  // degrees, per-face max statistic
    double angle_dev_p95 = 0.0;
    double area_err_median = 0.0;
    double area_err_p95 = 0.0;
    double area_scale = 1.0;  // length factor applied so total metric area matches the reference
    std::size_t iterations = 0;
};

/// Quality of the metric induced by x against the embedded reference. The
/// metric is uniformly rescaled to the reference's total area first; angles
/// and the UV statistic are unaffected by that.
inline QualityReport quality_report(const TriMesh& reference, std::span<const double> x, std::size_t iterations) {
    QualityReport q;
    q.iterations = iterations;
    auto k = gauss_curvature(reference, x, AngleMode::clamp);
    auto spread = curvature_spread(k);
    q.curvature_mean = spread.mean;
    q.curvature_std = spread.std;

    auto lengths = edge_lengths(reference, x);
    const auto ref = reference.embedded_edge_lengths();
    double area_after = 0.0, area_ref = 0.0;
    for (std::size_t f = 0; f < reference.num_faces(); ++f) {
        auto a = face_side_lengths(reference, lengths, static_cast<Index>(f));
        auto r = face_side_lengths(reference, ref, static_cast<Index>(f));
        area_after += heron_area(a[0], a[1], a[2]);
        area_ref += heron_area(r[0], r[1], r[2]);
    }
    if (area_after > 0.0) q.area_scale = std::sqrt(area_ref / area_after);
    for (auto& l : lengths) l *= q.area_scale;

    auto ang = angular_deviation(reference, lengths);
    q.angle_dev_median = quantile(ang, 0.5);
    q.angle_dev_p95 = quantile(ang, 0.95);
    auto area = area_ratio_error(reference, lengths);
    q.area_err_median = quantile(area, 0.5);
    q.area_err_p95 = quantile(area, 0.95);
    if (reference.has_uv()) {
        auto uv = uv_distortion_rms(reference, lengths);
        q.uv_rms = uv.rms;
        q.uv_degenerate_faces = uv.degenerate_uv_faces;
    }
    return q;
}

struct CorpusStats {
    double iter_mean = 0.0;
    double iter_std = 0.0;  // population
    double ms_per_iter = 0.0;
    double total_s = 0.0;
};

/// Table-style aggregates; time per iteration pools all stage timings.
inline CorpusStats corpus_stats(std::span<const SolveReport> reports) {
    if (reports.empty()) throw Error("corpus_stats: no reports");
    CorpusStats c;
    std::vector<double> iters;
    double total_ns = 0.0;
    std::size_t total_iters = 0;
    for (const auto& r : reports) {
        iters.push_back(static_cast<double>(r.iterations_used));
        for (const auto* stage : {&r.stage_ns.matvec, &r.stage_ns.select, &r.stage_ns.step_predict, &r.stage_ns.update})
            for (auto t : *stage) total_ns += static_cast<double>(t);
        total_iters += r.iterations_used;
    }
    auto spread = curvature_spread(iters);
    c.iter_mean = spread.mean;
    c.iter_std = spread.std;
    c.total_s = total_ns * 1e-9;
    c.ms_per_iter = total_iters ? total_ns * 1e-6 / static_cast<double>(total_iters) : 0.0;
    return c;
}

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
};

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw Error("correlation undefined for a zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

inline Correlation rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("rank_correlation: inputs differ in length");
    if (a.size() < 3) throw Error("rank_correlation needs at least 3 pairs");
    Correlation c;
    c.pearson = pearson(a, b);
    auto ra = average_ranks(a), rb = average_ranks(b);
    c.spearman = pearson(ra, rb);
    return c;
}

}  // namespace microricci
