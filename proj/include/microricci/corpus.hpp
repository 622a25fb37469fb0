#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "microricci/distortion.hpp"
#include "microricci/generate.hpp"
#include "microricci/metric.hpp"
#include "microricci/training.hpp"

namespace microricci {

/// Gaussian log-radii rescaled so ‖x‖∞ = amplitude.
inline LogRadii random_log_radii(std::size_t n, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LogRadii x(n);
    double peak = 0.0;
    for (auto& v : x) {
        v = gauss(rng);
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0)
        for (auto& v : x) v *= amplitude / peak;
    return x;
}

struct CorpusSpec {
    int subdivisions = 2;
    DistortionSpec distortion{DistortionKind::gaussian_noise, 0.0, 0};
    double x0_amplitude = 0.1;
    std::uint64_t x0_seed = 0;

    [[nodiscard]] std::string name() const {
        char buf[128];
        std::snprintf(buf, sizeof buf, "ico%d_%s%g_x%llu", subdivisions, to_string(distortion.kind).c_str(),
                      distortion.magnitude, static_cast<unsigned long long>(x0_seed));
        return buf;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"subdivisions", subdivisions},
                {"distortion", to_string(distortion.kind)},
                {"magnitude", distortion.magnitude},
                {"distortion_seed", distortion.seed},
                {"x0_amplitude", x0_amplitude},
                {"x0_seed", x0_seed}};
    }
};

inline CorpusEntry realize(const CorpusSpec& spec) {
    CorpusEntry e{apply_distortion(gen_icosphere(spec.subdivisions), spec.distortion), {}, spec.name()};
    e.x0 = random_log_radii(e.mesh.num_vertices(), spec.x0_amplitude, spec.x0_seed);
    return e;
}

inline std::vector<CorpusEntry> realize(const std::vector<CorpusSpec>& specs) {
    std::vector<CorpusEntry> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(realize(s));
    return out;
}

/// Ten icosphere-derived meshes of 160–400 vertices. The held-out set uses
/// different decimation targets, distortion and x₀ seeds.
inline std::vector<CorpusSpec> stock_corpus(bool held_out, std::uint64_t seed = 0) {
    using K = DistortionKind;
    struct Row {
        int sub;
        K kind;
        double mag;
    };
    static const std::vector<Row> train{{2, K::gaussian_noise, 0.01}, {3, K::decimate, 0.40}, {3, K::decimate, 0.50},
                                        {4, K::decimate, 0.12},       {2, K::quantize_position, 8},
                                        {3, K::decimate, 0.30},       {3, K::decimate, 0.60},
                                        {4, K::decimate, 0.10},       {2, K::gaussian_noise, 0.02},
                                        {3, K::decimate, 0.45}};
    static const std::vector<Row> test{{2, K::gaussian_noise, 0.015}, {3, K::decimate, 0.35}, {3, K::decimate, 0.55},
                                       {4, K::decimate, 0.11},        {2, K::quantize_position, 10},
                                       {3, K::decimate, 0.42},        {3, K::decimate, 0.52},
                                       {4, K::decimate, 0.14},        {2, K::gaussian_noise, 0.005},
                                       {3, K::decimate, 0.38}};
    const auto& rows = held_out ? test : train;
    const std::uint64_t base = seed * 1000 + (held_out ? 500 : 100);
    std::vector<CorpusSpec> out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        CorpusSpec s;
        s.subdivisions = rows[k].sub;
        s.distortion = {rows[k].kind, rows[k].mag, base + k};
        s.x0_amplitude = 0.1;
        s.x0_seed = base + 50 + k;
        out.push_back(s);
    }
    return out;
}

}  // namespace microricci
