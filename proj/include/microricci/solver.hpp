#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "microricci/energy.hpp"
#include "microricci/laplacian.hpp"
#include "microricci/metric.hpp"

namespace microricci {

enum class EpsilonMode { fixed, safe, learned };
enum class ResidualMode { syndrome, curvature };
enum class HPolicy { frozen, refresh };
/// Metric the frozen operator is assembled from.
enum class HSource { zero, embedded };
enum class Termination { tolerance, max_steps, error };

inline std::string to_string(EpsilonMode m) {
    switch (m) {
        case EpsilonMode::fixed: return "fixed";
        case EpsilonMode::safe: return "safe";
        case EpsilonMode::learned: return "learned";
    }
    return "?";
}
inline std::string to_string(ResidualMode m) { return m == ResidualMode::syndrome ? "syndrome" : "curvature"; }
inline std::string to_string(HPolicy p) { return p == HPolicy::frozen ? "frozen" : "refresh"; }
inline std::string to_string(HSource s) { return s == HSource::zero ? "zero" : "embedded"; }
inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::tolerance: return "tolerance";
        case Termination::max_steps: return "max_steps";
        case Termination::error: return "error";
    }
    return "?";
}

struct SolveConfig {
    EpsilonMode epsilon_mode = EpsilonMode::safe;
    double epsilon = 0.0;  // used when epsilon_mode == fixed
    double tolerance = 1e-4;
    std::size_t max_steps = 1'000'000;
    ResidualMode residual_mode = ResidualMode::syndrome;
    HPolicy h_policy = HPolicy::frozen;
    std::size_t refresh_every = 0;  // accepted steps between rebuilds when h_policy == refresh
    HSource h_source = HSource::zero;
    /// Frozen syndrome mode updates s by one column of H per step instead of
    /// a full product, with a full product every `resync_every` steps.
    bool incremental = true;
    std::size_t resync_every = 100;
    double divergence_factor = 10.0;
    bool clamp_angles = false;
    bool record_energy = false;
    int energy_nodes = kDefaultQuadratureNodes;

    void validate() const {
        if (!(tolerance > 0.0)) throw Error("tolerance must be positive");
        if (max_steps < 1) throw Error("max_steps must be at least 1");
        if (epsilon_mode == EpsilonMode::fixed && !(epsilon > 0.0)) throw Error("fixed epsilon must be positive");
        if (h_policy == HPolicy::refresh && refresh_every < 1) throw Error("refresh_every must be at least 1");
        if (resync_every < 1) throw Error("resync_every must be at least 1");
        if (!(divergence_factor > 1.0)) throw Error("divergence_factor must exceed 1");
    }
};

/// Per-iteration wall time in nanoseconds, one entry per executed iteration.
struct StageTimes {
    std::vector<std::int64_t> matvec;
    std::vector<std::int64_t> select;
    std::vector<std::int64_t> step_predict;
    std::vector<std::int64_t> update;
};

struct MonotonicityViolation {
    std::size_t iteration = 0;  // step t took ‖s‖∞ from before to after
    double before = 0.0;
    double after = 0.0;
};

struct SolveReport {
    std::size_t iterations_used = 0;
    std::vector<double> residual_trace;  // ‖s‖∞ before each step plus the final value
    std::vector<double> energy_trace;    // only when record_energy
    std::vector<Index> selected;         // vertex updated at each step
    std::vector<double> step_sizes;      // ε used at each step
    StageTimes stage_ns;
    LogRadii final_x;
    Termination terminated_by = Termination::max_steps;
    std::string error_message;
    std::size_t error_iteration = 0;
    std::size_t error_vertex = 0;

    double initial_safe_epsilon = 0.0;  // 1 / ‖H‖∞ at the start
    double final_syndrome_inf = std::numeric_limits<double>::quiet_NaN();
    double final_curvature_inf = std::numeric_limits<double>::quiet_NaN();
    double max_resync_drift = 0.0;  // relative gap between incremental and full residuals
    std::size_t monotonicity_violations = 0;
    std::vector<MonotonicityViolation> violation_log;  // first kMaxViolationLog entries
    std::size_t capped_cotangents = 0;
    std::size_t clamped_faces = 0;

    static constexpr std::size_t kMaxViolationLog = 256;
};

// ---------------------------------------------------------------------------
// primitive steps
// ---------------------------------------------------------------------------

/// argmax_i |s_i|, lowest index on ties.
inline Index select_greedy(std::span<const double> s) noexcept {
    Index best = 0;
    double best_abs = -1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double a = std::abs(s[i]);
        if (a > best_abs) {
            best_abs = a;
            best = static_cast<Index>(i);
        }
    }
    return best;
}

/// x_{i*} ← x_{i*} − ε s_{i*}; every other coordinate unchanged.
inline void greedy_step(std::span<double> x, std::span<const double> s, Index i, double epsilon) {
    x[i] -= epsilon * s[i];
}

/// 1/‖H‖∞, the largest step the monotonicity bound admits.
inline double max_safe_step(const SparseSym& h) {
    double norm_h = inf_norm(h);
    if (!(norm_h > 0.0)) throw Error("max_safe_step: matrix has zero infinity norm");
    return 1.0 / norm_h;
}

// ---------------------------------------------------------------------------
// residual bookkeeping
// ---------------------------------------------------------------------------

/// Owns x, the operator H and the residual s for one solve.
class ResidualState {
public:
    ResidualState(const TriMesh& mesh, std::span<const double> x0, const SolveConfig& cfg)
        : mesh_(mesh), cfg_(cfg), x_(x0.begin(), x0.end()) {
        check_log_radii(mesh, x0);
        if (cfg.h_policy == HPolicy::frozen && cfg.h_source == HSource::embedded) {
            h_ = build_embedded_laplacian(mesh, &diag_);
        } else if (cfg.h_policy == HPolicy::frozen) {
            std::vector<double> zero(mesh.num_vertices(), 0.0);
            h_ = build_cotan_laplacian(mesh, zero, &diag_);
        } else {
            rebuild_h();
        }
        capped_ += diag_.capped_cotangents;
        safe_eps_ = max_safe_step(h_);
        if (cfg.residual_mode == ResidualMode::curvature) {
            angles_.resize(mesh.num_faces());
            for (std::size_t f = 0; f < mesh.num_faces(); ++f) recompute_face(static_cast<Index>(f));
            s_ = angle_deficits(mesh, angles_);
        } else {
            s_ = h_.multiply(x_);
        }
    }

    [[nodiscard]] std::span<const double> residual() const noexcept { return s_; }
    [[nodiscard]] const LogRadii& x() const noexcept { return x_; }
    [[nodiscard]] const SparseSym& operator_h() const noexcept { return h_; }
    [[nodiscard]] double safe_epsilon() const noexcept { return safe_eps_; }
    [[nodiscard]] double max_drift() const noexcept { return max_drift_; }
    [[nodiscard]] std::size_t capped_cotangents() const noexcept { return capped_; }
    [[nodiscard]] std::size_t clamped_faces() const noexcept { return clamped_; }

    /// x_i ← x_i − delta, then bring s up to date.
    void apply(Index i, double delta) {
        x_[i] -= delta;
        ++steps_;
        if (cfg_.residual_mode == ResidualMode::curvature) {
            for (Index f : mesh_.vertex_faces(i)) {
                const auto old = angles_[f];
                recompute_face(f);
                const auto& t = mesh_.faces()[f];
                for (int c = 0; c < 3; ++c) s_[t[c]] -= angles_[f][c] - old[c];
            }
            if (cfg_.h_policy == HPolicy::refresh && steps_ % cfg_.refresh_every == 0) {
                rebuild_h();
                safe_eps_ = max_safe_step(h_);
            }
            return;
        }
        if (cfg_.h_policy == HPolicy::refresh && steps_ % cfg_.refresh_every == 0) {
            rebuild_h();
            safe_eps_ = max_safe_step(h_);
            h_.multiply(x_, s_);
            return;
        }
        if (!cfg_.incremental) {
            h_.multiply(x_, s_);
            return;
        }
        auto cols = h_.row_cols(i);
        auto vals = h_.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k) s_[cols[k]] -= delta * vals[k];
        if (steps_ % cfg_.resync_every == 0) {
            full_.resize(s_.size());
            h_.multiply(x_, full_);
            double scale = std::max(inf_norm(full_), std::numeric_limits<double>::min());
            double gap = 0.0;
            for (std::size_t k = 0; k < s_.size(); ++k) gap = std::max(gap, std::abs(s_[k] - full_[k]));
            max_drift_ = std::max(max_drift_, gap / scale);
            s_.swap(full_);
        }
    }

    /// ‖Hx‖∞ with the current operator.
    [[nodiscard]] double syndrome_inf() const { return inf_norm(h_.multiply(x_)); }

private:
    void rebuild_h() {
        auto lengths = edge_lengths(mesh_, x_);
        h_ = cotan_laplacian_from_lengths(mesh_, lengths, &diag_,
                                          cfg_.clamp_angles ? AngleMode::clamp : AngleMode::strict);
        capped_ += diag_.capped_cotangents;
    }

    void recompute_face(Index f) {
        const auto& t = mesh_.faces()[f];
        std::array<double, 3> l{std::exp(x_[t[1]] + x_[t[2]]), std::exp(x_[t[2]] + x_[t[0]]),
                                std::exp(x_[t[0]] + x_[t[1]])};
        bool ok = true;
        for (int k = 0; k < 3; ++k) ok = angle_opposite(l[k], l[(k + 1) % 3], l[(k + 2) % 3], angles_[f][k]) && ok;
        if (!ok) {
            if (!cfg_.clamp_angles) throw DegenerateTriangleError(f, l);
            ++clamped_;
        }
    }

    const TriMesh& mesh_;
    SolveConfig cfg_;
    LogRadii x_;
    SparseSym h_;
    LaplacianDiagnostics diag_;
    std::vector<double> s_;
    std::vector<double> full_;
    std::vector<FaceAngles> angles_;
    double safe_eps_ = 0.0;
    double max_drift_ = 0.0;
    std::size_t steps_ = 0;
    std::size_t capped_ = 0;
    std::size_t clamped_ = 0;
};

// ---------------------------------------------------------------------------
// the loop
// ---------------------------------------------------------------------------

/// Context handed to selection and step-size policies.
struct StepContext {
    std::span<const double> s;
    double s_inf = 0.0;
    double safe_epsilon = 0.0;
    std::size_t iteration = 0;
};

/// Residual → tolerance check → select → step-size → single-coordinate
/// update, until ‖s‖∞ < τ or max_steps. `select(ctx)` returns the vertex,
/// `step(ctx, i)` its ε. Solver failures end the run with
/// terminated_by == error rather than throwing.
template <class Select, class Step>
SolveReport run_solver(const TriMesh& mesh, std::span<const double> x0, const SolveConfig& cfg, Select&& select,
                       Step&& step) {
    using clock = std::chrono::steady_clock;
    auto ns = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
    };
    cfg.validate();
    SolveReport rep;
    std::optional<ResidualState> state;
    try {
        state.emplace(mesh, x0, cfg);
    } catch (const Error& e) {
        rep.terminated_by = Termination::error;
        rep.error_message = e.what();
        rep.final_x.assign(x0.begin(), x0.end());
        return rep;
    }
    rep.initial_safe_epsilon = state->safe_epsilon();

    auto energy_of = [&](const LogRadii& x) {
        try {
            return ricci_energy_value(mesh, x, cfg.energy_nodes);
        } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    Index pending_vertex = 0;
    double pending_delta = 0.0;
    bool has_pending = false;
    double running_min = std::numeric_limits<double>::infinity();
    auto fail = [&](std::size_t t, std::size_t v, const std::string& msg) {
        rep.terminated_by = Termination::error;
        rep.error_message = msg;
        rep.error_iteration = t;
        rep.error_vertex = v;
    };
    auto note_residual = [&](std::size_t t, double m) {
        if (!rep.residual_trace.empty()) {
            double prev = rep.residual_trace.back();
            if (prev > 0.0 && !(m < prev)) {
                ++rep.monotonicity_violations;
                if (rep.violation_log.size() < SolveReport::kMaxViolationLog)
                    rep.violation_log.push_back({t - 1, prev, m});
            }
        }
        rep.residual_trace.push_back(m);
        if (cfg.record_energy) rep.energy_trace.push_back(energy_of(state->x()));
    };
    auto residual_problem = [&](std::size_t t, double m) -> bool {
        if (!std::isfinite(m)) {
            fail(t, has_pending ? pending_vertex : 0, "non-finite residual at iteration " + std::to_string(t));
            return true;
        }
        running_min = std::min(running_min, m);
        if (m > cfg.divergence_factor * running_min) {
            fail(t, pending_vertex,
                 "divergence: residual " + std::to_string(m) + " exceeds " + std::to_string(cfg.divergence_factor) +
                     "x its running minimum " + std::to_string(running_min) + " at iteration " + std::to_string(t));
            return true;
        }
        return false;
    };

    bool done = false;
    std::size_t t = 0;
    try {
        for (; t < cfg.max_steps; ++t) {
            auto t0 = clock::now();
            if (has_pending) state->apply(pending_vertex, pending_delta);
            auto s = state->residual();
            double m = inf_norm(s);
            auto t1 = clock::now();
            note_residual(t, m);
            if (residual_problem(t, m)) {
                done = true;
                break;
            }
            if (m < cfg.tolerance) {
                rep.terminated_by = Termination::tolerance;
                done = true;
                break;
            }
            StepContext ctx{s, m, state->safe_epsilon(), t};
            auto t2 = clock::now();
            Index i = select(ctx);
            auto t3 = clock::now();
            double eps = step(ctx, i);
            auto t4 = clock::now();
            pending_vertex = i;
            pending_delta = eps * s[i];
            has_pending = true;
            auto t5 = clock::now();
            rep.stage_ns.matvec.push_back(ns(t0, t1));
            rep.stage_ns.select.push_back(ns(t2, t3));
            rep.stage_ns.step_predict.push_back(ns(t3, t4));
            rep.stage_ns.update.push_back(ns(t4, t5));
            rep.selected.push_back(i);
            rep.step_sizes.push_back(eps);
        }
        if (!done) {
            if (has_pending) state->apply(pending_vertex, pending_delta);
            double m = inf_norm(state->residual());
            note_residual(t, m);
            if (!residual_problem(t, m))
                rep.terminated_by = m < cfg.tolerance ? Termination::tolerance : Termination::max_steps;
        }
    } catch (const DegenerateTriangleError& e) {
        fail(t, pending_vertex, std::string("metric degeneracy at iteration ") + std::to_string(t) + ": " + e.what());
    } catch (const Error& e) {
        fail(t, pending_vertex, e.what());
    }

    rep.iterations_used = rep.selected.size();
    rep.final_x = state->x();
    rep.max_resync_drift = state->max_drift();
    rep.capped_cotangents = state->capped_cotangents();
    rep.clamped_faces = state->clamped_faces();
    try {
        rep.final_syndrome_inf = state->syndrome_inf();
    } catch (const Error&) {
    }
    try {
        rep.final_curvature_inf = inf_norm(gauss_curvature(mesh, rep.final_x, AngleMode::strict));
    } catch (const Error&) {
    }
    return rep;
}

/// Pure greedy decoding: i* = argmax |s_i|, fixed or safe ε.
inline SolveReport solve_greedy(const TriMesh& mesh, std::span<const double> x0, const SolveConfig& cfg) {
    if (cfg.epsilon_mode == EpsilonMode::learned)
        throw Error("solve_greedy: learned step sizes need the micro-ml solver");
    const bool fixed = cfg.epsilon_mode == EpsilonMode::fixed;
    const double eps = cfg.epsilon;
    return run_solver(
        mesh, x0, cfg, [](const StepContext& ctx) { return select_greedy(ctx.s); },
        [fixed, eps](const StepContext& ctx, Index) { return fixed ? eps : ctx.safe_epsilon; });
}

}  // namespace microricci
