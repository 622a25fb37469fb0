#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "microricci/laplacian.hpp"
#include "microricci/metric.hpp"

namespace microricci {

/// Gauss–Legendre nodes and weights mapped to [0, 1].
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline Quadrature gauss_legendre(int count) {
    if (count < 1) throw Error("quadrature needs at least one node");
    Quadrature q;
    q.nodes.resize(static_cast<std::size_t>(count));
    q.weights.resize(static_cast<std::size_t>(count));
    const int half = (count + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= count; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = count * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        double w = 2.0 / ((1.0 - z * z) * dp * dp);
        auto lo = static_cast<std::size_t>(i), hi = static_cast<std::size_t>(count - 1 - i);
        q.nodes[lo] = 0.5 * (1.0 - z);
        q.nodes[hi] = 0.5 * (1.0 + z);
        q.weights[lo] = q.weights[hi] = 0.5 * w;
    }
    return q;
}

inline constexpr int kDefaultQuadratureNodes = 16;

struct EnergyReport {
    double value = 0.0;
    std::vector<double> gradient;  // K(x)
    int path_samples = 0;
};

/// E(x) = ∫₀¹ K(t·x)·x dt along the straight segment from 0.
inline double ricci_energy_value(const TriMesh& mesh, std::span<const double> x,
                                 int quadrature_nodes = kDefaultQuadratureNodes) {
    check_log_radii(mesh, x);
    const auto q = gauss_legendre(quadrature_nodes);
    std::vector<double> u(x.size());
    double e = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = q.nodes[k] * x[i];
        std::vector<double> kv;
        try {
            kv = gauss_curvature(mesh, u);
        } catch (const DegenerateTriangleError& err) {
            throw Error("degenerate metric on the energy path at t=" + std::to_string(q.nodes[k]) + ": " + err.what());
        }
        double dotp = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dotp += kv[i] * x[i];
        e += q.weights[k] * dotp;
    }
    return e;
}

inline EnergyReport ricci_energy(const TriMesh& mesh, std::span<const double> x,
                                 int quadrature_nodes = kDefaultQuadratureNodes) {
    EnergyReport r;
    r.value = ricci_energy_value(mesh, x, quadrature_nodes);
    r.gradient = gauss_curvature(mesh, x);
    r.path_samples = quadrature_nodes;
    return r;
}

/// Energy along the two-segment path 0 → mid → x.
inline double ricci_energy_via(const TriMesh& mesh, std::span<const double> mid, std::span<const double> x,
                               int quadrature_nodes = kDefaultQuadratureNodes) {
    const auto q = gauss_legendre(quadrature_nodes);
    double e = ricci_energy_value(mesh, mid, quadrature_nodes);
    std::vector<double> u(x.size()), d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - mid[i];
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        for (std::size_t i = 0; i < x.size(); ++i) u[i] = mid[i] + q.nodes[k] * d[i];
        auto kv = gauss_curvature(mesh, u);
        double dotp = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dotp += kv[i] * d[i];
        e += q.weights[k] * dotp;
    }
    return e;
}

/// max_i |(E(x+h e_i) − E(x−h e_i))/2h − K_i(x)| / (1 + |K_i(x)|).
inline double gradient_check(const TriMesh& mesh, std::span<const double> x, double h,
                             int quadrature_nodes = kDefaultQuadratureNodes) {
    const auto k = gauss_curvature(mesh, x);
    std::vector<double> xp(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        double ep = ricci_energy_value(mesh, xp, quadrature_nodes);
        xp[i] = x[i] - h;
        double em = ricci_energy_value(mesh, xp, quadrature_nodes);
        xp[i] = x[i];
        double fd = (ep - em) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - k[i]) / (1.0 + std::abs(k[i])));
    }
    return worst;
}

struct HessianCheck {
    /// max over the pattern of |J_ij − H_ij| / (1 + |H_ij|), J = ∂K_j/∂x_i by central differences
    double pattern_max_rel_err = 0.0;
    /// same, against 2H: the exact Jacobian for lengths exp(x_i + x_j)
    double pattern_max_rel_err_2h = 0.0;
    double off_pattern_max_abs = 0.0;
    double symmetry_max_abs = 0.0;  // max |J_ij − J_ji|
};

inline HessianCheck hessian_check(const TriMesh& mesh, std::span<const double> x, double h) {
    const std::size_t n = mesh.num_vertices();
    const auto hm = build_cotan_laplacian(mesh, x);
    std::vector<std::vector<double>> jac(n, std::vector<double>(n, 0.0));  // jac[i][j] = ∂K_j/∂x_i
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t i = 0; i < n; ++i) {
        xp[i] = x[i] + h;
        auto kp = gauss_curvature(mesh, xp);
        xp[i] = x[i] - h;
        auto km = gauss_curvature(mesh, xp);
        xp[i] = x[i];
        for (std::size_t j = 0; j < n; ++j) jac[i][j] = (kp[j] - km[j]) / (2.0 * h);
    }
    HessianCheck out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.symmetry_max_abs = std::max(out.symmetry_max_abs, std::abs(jac[i][j] - jac[j][i]));
            const bool in_pattern = i == j || mesh.edge_index(static_cast<Index>(i), static_cast<Index>(j)) != kInvalidIndex;
            if (in_pattern) {
                double hij = hm.at(i, j);
                out.pattern_max_rel_err = std::max(out.pattern_max_rel_err, std::abs(jac[i][j] - hij) / (1.0 + std::abs(hij)));
                out.pattern_max_rel_err_2h =
                    std::max(out.pattern_max_rel_err_2h, std::abs(jac[i][j] - 2.0 * hij) / (1.0 + 2.0 * std::abs(hij)));
            } else {
                out.off_pattern_max_abs = std::max(out.off_pattern_max_abs, std::abs(jac[i][j]));
            }
        }
    }
    return out;
}

struct ConvexityProbe {
    double min_quadform = 0.0;            // over sampled unit sum-zero directions
    std::size_t positive_offdiagonal = 0;  // Delaunay violations in H(x)
};

/// Samples random unit vectors with Σv = 0 and returns the smallest vᵀH(x)v.
inline ConvexityProbe convexity_probe(const TriMesh& mesh, std::span<const double> x, std::size_t samples,
                                      std::uint64_t seed = 1) {
    LaplacianDiagnostics diag;
    const auto hm = build_cotan_laplacian(mesh, x, &diag);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = mesh.num_vertices();
    std::vector<double> v(n);
    ConvexityProbe out;
    out.positive_offdiagonal = diag.positive_offdiagonal;
    out.min_quadform = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
        double mean = 0.0;
        for (auto& a : v) {
            a = gauss(rng);
            mean += a;
        }
        mean /= static_cast<double>(n);
        double nn = 0.0;
        for (auto& a : v) {
            a -= mean;
            nn += a * a;
        }
        nn = std::sqrt(nn);
        for (auto& a : v) a /= nn;
        out.min_quadform = std::min(out.min_quadform, quadratic_form(hm, v));
    }
    return out;
}

}  // namespace microricci
