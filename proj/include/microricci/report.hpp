#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "microricci/checksum.hpp"
#include "microricci/metrics.hpp"
#include "microricci/solver.hpp"

namespace microricci {

namespace detail {

/// JSON has no NaN; non-finite reals are written as null.
inline nlohmann::json real_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json config_to_json(const SolveConfig& c) {
    return {{"epsilon_mode", to_string(c.epsilon_mode)},
            {"epsilon", c.epsilon},
            {"tolerance", c.tolerance},
            {"max_steps", c.max_steps},
            {"residual_mode", to_string(c.residual_mode)},
            {"h_policy", to_string(c.h_policy)},
            {"refresh_every", c.refresh_every},
            {"h_source", to_string(c.h_source)},
            {"incremental", c.incremental},
            {"resync_every", c.resync_every},
            {"divergence_factor", c.divergence_factor},
            {"clamp_angles", c.clamp_angles},
            {"record_energy", c.record_energy},
            {"energy_nodes", c.energy_nodes},
            {"tie_break", "lowest-index"}};
}

/// Timing fields live under "stage_ns" only, so dropping that key gives the
/// deterministic part of the report.
inline nlohmann::json report_to_json(const SolveReport& r, bool include_timing = true) {
    nlohmann::json j;
    j["iterations_used"] = r.iterations_used;
    j["terminated_by"] = to_string(r.terminated_by);
    if (r.terminated_by == Termination::error)
        j["error"] = {{"message", r.error_message}, {"iteration", r.error_iteration}, {"vertex", r.error_vertex}};
    j["residual_trace"] = r.residual_trace;
    if (!r.energy_trace.empty()) {
        nlohmann::json e = nlohmann::json::array();
        for (double v : r.energy_trace) e.push_back(detail::real_or_null(v));
        j["energy_trace"] = e;
    }
    j["selected"] = r.selected;
    j["step_sizes"] = r.step_sizes;
    j["final_x"] = r.final_x;
    j["initial_safe_epsilon"] = r.initial_safe_epsilon;
    j["final_syndrome_inf"] = detail::real_or_null(r.final_syndrome_inf);
    j["final_curvature_inf"] = detail::real_or_null(r.final_curvature_inf);
    j["max_resync_drift"] = r.max_resync_drift;
    j["monotonicity_violations"] = r.monotonicity_violations;
    nlohmann::json log = nlohmann::json::array();
    for (const auto& v : r.violation_log) log.push_back({{"iteration", v.iteration}, {"before", v.before}, {"after", v.after}});
    j["violation_log"] = log;
    j["capped_cotangents"] = r.capped_cotangents;
    j["clamped_faces"] = r.clamped_faces;
    if (include_timing)
        j["stage_ns"] = {{"matvec", r.stage_ns.matvec},
                         {"select", r.stage_ns.select},
                         {"step_predict", r.stage_ns.step_predict},
                         {"update", r.stage_ns.update}};
    return j;
}

inline std::string report_checksum(const SolveReport& r) { return checksum_string(report_to_json(r, false).dump()); }

inline nlohmann::json quality_to_json(const QualityReport& q) {
    return {{"curvature_mean", q.curvature_mean},
            {"curvature_std", q.curvature_std},
            {"uv_rms", detail::real_or_null(q.uv_rms)},
            {"uv_rms_definition", "area-weighted RMS of per-face best-fit similarity residual / centred metric scale"},
            {"uv_degenerate_faces", q.uv_degenerate_faces},
            {"angle_dev_median_deg", q.angle_dev_median},
            {"angle_dev_p95_deg", q.angle_dev_p95},
            {"angle_dev_statistic", "per-face max over corners"},
            {"area_err_median", q.area_err_median},
            {"area_err_p95", q.area_err_p95},
            {"area_scale", q.area_scale},
            {"iterations", q.iterations}};
}

/// iter,resid_inf,energy,ms_matvec,ms_select,ms_regress,ms_update; the last
/// row carries the final residual and no stage times.
inline void write_trace_csv(std::ostream& out, const SolveReport& r) {
    out << "iter,resid_inf,energy,ms_matvec,ms_select,ms_regress,ms_update\n";
    char buf[256];
    for (std::size_t t = 0; t < r.residual_trace.size(); ++t) {
        std::string energy = t < r.energy_trace.size() && std::isfinite(r.energy_trace[t]) ? format_real(r.energy_trace[t]) : "";
        if (t < r.iterations_used) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%s,%.6f,%.6f,%.6f,%.6f\n", t, format_real(r.residual_trace[t]).c_str(),
                          energy.c_str(), static_cast<double>(r.stage_ns.matvec[t]) * 1e-6,
                          static_cast<double>(r.stage_ns.select[t]) * 1e-6,
                          static_cast<double>(r.stage_ns.step_predict[t]) * 1e-6,
                          static_cast<double>(r.stage_ns.update[t]) * 1e-6);
        } else {
            std::snprintf(buf, sizeof buf, "%zu,%s,%s,,,,\n", t, format_real(r.residual_trace[t]).c_str(), energy.c_str());
        }
        out << buf;
    }
}

}  // namespace microricci
