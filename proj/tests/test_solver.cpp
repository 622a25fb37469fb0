#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "microricci/corpus.hpp"
#include "microricci/distortion.hpp"
#include "microricci/generate.hpp"
#include "microricci/report.hpp"
#include "microricci/solver.hpp"

using namespace microricci;

namespace {

const double kSqrt3 = std::sqrt(3.0);

TriMesh noisy_mesh(int subdiv, std::uint64_t seed) {
    return apply_distortion(gen_icosphere(subdiv), {DistortionKind::gaussian_noise, 0.01, seed});
}

bool same_traces(const SolveReport& a, const SolveReport& b) {
    return a.iterations_used == b.iterations_used && a.residual_trace == b.residual_trace &&
           a.selected == b.selected && a.step_sizes == b.step_sizes && a.final_x == b.final_x &&
           a.terminated_by == b.terminated_by;
}

}  // namespace

TEST(SelectGreedy, Examples) {
    EXPECT_EQ(select_greedy(std::vector<double>{0.1, -0.5, 0.3}), 1u);
    EXPECT_EQ(select_greedy(std::vector<double>{0.5, -0.5}), 0u);
    EXPECT_EQ(select_greedy(std::vector<double>{0.0, 0.0, 0.0}), 0u);
}

TEST(GreedyStep, Examples) {
    std::vector<double> x{0, 0};
    greedy_step(x, std::vector<double>{2, 1}, 0, 0.25);
    EXPECT_EQ(x, (std::vector<double>{-0.5, 0}));
    greedy_step(x, std::vector<double>{2, 1}, 1, 0.0);
    EXPECT_EQ(x, (std::vector<double>{-0.5, 0}));
    greedy_step(x, std::vector<double>{0, 1}, 0, 0.3);
    EXPECT_EQ(x, (std::vector<double>{-0.5, 0}));
}

TEST(MaxSafeStep, Examples) {
    auto h = build_cotan_laplacian(gen_tetrahedron(), std::vector<double>(4, 0.0));
    EXPECT_NEAR(max_safe_step(h), 1 / (2 * kSqrt3), 1e-15);
    EXPECT_NEAR(max_safe_step(h.scaled(2.0)), 0.5 * max_safe_step(h), 1e-16);
    SparseSym id(2, {0, 1, 2}, {0, 1}, {1.0, -1.0});
    EXPECT_EQ(max_safe_step(id), 1.0);
    SparseSym zero(2, {0, 0, 0}, {}, {});
    EXPECT_THROW(max_safe_step(zero), Error);
}

TEST(SolveConfig, Validation) {
    SolveConfig c;
    EXPECT_NO_THROW(c.validate());
    c.tolerance = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.max_steps = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.epsilon_mode = EpsilonMode::fixed;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.epsilon_mode = EpsilonMode::learned;
    auto m = gen_tetrahedron();
    EXPECT_THROW(solve_greedy(m, std::vector<double>(4, 0.0), c), Error);
}

TEST(SolveGreedy, ConstantStartIsConverged) {
    auto m = gen_icosphere(2);
    auto r = solve_greedy(m, std::vector<double>(m.num_vertices(), 0.3), {});
    EXPECT_EQ(r.terminated_by, Termination::tolerance);
    EXPECT_EQ(r.iterations_used, 0u);
    ASSERT_EQ(r.residual_trace.size(), 1u);
    EXPECT_LT(r.residual_trace[0], 1e-12);
}

TEST(SolveGreedy, TetrahedronMatchesDenseIteration) {
    auto m = gen_tetrahedron();
    std::vector<double> x0{1, 0, 0, 0};
    SolveConfig cfg;
    cfg.epsilon_mode = EpsilonMode::fixed;
    cfg.epsilon = 1 / (2 * kSqrt3);
    auto r = solve_greedy(m, x0, cfg);

    // dense 4x4 oracle with a full product every step
    const double off = -1 / kSqrt3;
    std::vector<double> x = x0, s(4);
    std::vector<double> trace;
    std::vector<Index> picks;
    for (int t = 0; t < 100000; ++t) {
        double inf = 0.0;
        for (int i = 0; i < 4; ++i) {
            s[i] = kSqrt3 * x[i];
            for (int j = 0; j < 4; ++j)
                if (j != i) s[i] += off * x[j];
            inf = std::max(inf, std::abs(s[i]));
        }
        trace.push_back(inf);
        if (inf < 1e-4) break;
        int best = 0;
        for (int i = 1; i < 4; ++i)
            if (std::abs(s[i]) > std::abs(s[best])) best = i;
        picks.push_back(static_cast<Index>(best));
        x[best] -= cfg.epsilon * s[best];
    }

    EXPECT_EQ(r.terminated_by, Termination::tolerance);
    ASSERT_EQ(r.residual_trace.size(), trace.size());
    EXPECT_EQ(r.selected, picks);
    for (std::size_t t = 0; t < trace.size(); ++t) EXPECT_NEAR(r.residual_trace[t], trace[t], 1e-12);
    for (std::size_t t = 1; t < trace.size(); ++t) EXPECT_LT(r.residual_trace[t], r.residual_trace[t - 1]);
    EXPECT_EQ(r.monotonicity_violations, 0u);
    EXPECT_LT(r.residual_trace.back(), 1e-4);
    EXPECT_NEAR(r.initial_safe_epsilon, cfg.epsilon, 1e-15);
}

TEST(SolveGreedy, TraceAndTimingShapes) {
    auto m = noisy_mesh(1, 3);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 3);
    auto r = solve_greedy(m, x0, {});
    EXPECT_EQ(r.residual_trace.size(), r.iterations_used + 1);
    EXPECT_EQ(r.selected.size(), r.iterations_used);
    EXPECT_EQ(r.step_sizes.size(), r.iterations_used);
    for (const auto* v : {&r.stage_ns.matvec, &r.stage_ns.select, &r.stage_ns.step_predict, &r.stage_ns.update}) {
        EXPECT_EQ(v->size(), r.iterations_used);
        for (auto ns : *v) EXPECT_GE(ns, 0);
    }
    EXPECT_TRUE(std::isfinite(r.final_syndrome_inf));
    EXPECT_TRUE(std::isfinite(r.final_curvature_inf));
}

TEST(SolveGreedy, NoisyIcosphereTerminatesByTolerance) {
    auto m = noisy_mesh(3, 1);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 1);
    auto r = solve_greedy(m, x0, {});
    EXPECT_EQ(r.terminated_by, Termination::tolerance);
    EXPECT_LT(r.residual_trace.back(), 1e-4);
    // non-increasing steps are counted and logged as they occur
    EXPECT_EQ(r.violation_log.size(), std::min(r.monotonicity_violations, SolveReport::kMaxViolationLog));
    for (const auto& v : r.violation_log) {
        EXPECT_EQ(r.residual_trace[v.iteration], v.before);
        EXPECT_EQ(r.residual_trace[v.iteration + 1], v.after);
        EXPECT_GE(v.after, v.before);
    }
}

TEST(SolveGreedy, TerminationBoundAtDefaultTolerance) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto m = noisy_mesh(2, seed);
        auto x0 = random_log_radii(m.num_vertices(), 0.1, 100 + seed);
        SolveConfig cfg;
        auto r = solve_greedy(m, x0, cfg);
        ASSERT_EQ(r.terminated_by, Termination::tolerance);
        double bound = r.residual_trace[0] / (r.initial_safe_epsilon * cfg.tolerance);
        EXPECT_LE(static_cast<double>(r.iterations_used), bound);
    }
}

TEST(SolveGreedy, TerminationBoundFailsAtLooseTolerance) {
    // a step can lower max|s| by far less than eps * tol, so the bound is not a guarantee
    auto m = noisy_mesh(2, 0);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 100);
    SolveConfig cfg;
    cfg.tolerance = 1e-2;
    auto r = solve_greedy(m, x0, cfg);
    ASSERT_EQ(r.terminated_by, Termination::tolerance);
    EXPECT_EQ(r.iterations_used, 489u);
    EXPECT_GT(static_cast<double>(r.iterations_used), r.residual_trace[0] / (r.initial_safe_epsilon * cfg.tolerance));
}

TEST(SolveGreedy, IncrementalResidualTracksFullProduct) {
    auto m = noisy_mesh(2, 4);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 4);
    auto inc = solve_greedy(m, x0, {});
    EXPECT_LE(inc.max_resync_drift, 1e-12);
    SolveConfig full_cfg;
    full_cfg.incremental = false;
    auto full = solve_greedy(m, x0, full_cfg);
    EXPECT_EQ(full.terminated_by, Termination::tolerance);
    // both runs select the same vertices until rounding differences change a near-tie
    std::size_t agree = 0;
    while (agree < std::min(inc.selected.size(), full.selected.size()) && inc.selected[agree] == full.selected[agree])
        ++agree;
    EXPECT_GE(agree, std::min<std::size_t>(500, inc.selected.size()));
}

TEST(SolveGreedy, LocalityOneCoordinatePerStep) {
    auto m = noisy_mesh(1, 5);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 5);
    SolveConfig cfg;
    cfg.max_steps = 1;
    auto r = solve_greedy(m, x0, cfg);
    ASSERT_EQ(r.iterations_used, 1u);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < x0.size(); ++i) changed += r.final_x[i] != x0[i];
    EXPECT_EQ(changed, 1u);
    EXPECT_NE(r.final_x[r.selected[0]], x0[r.selected[0]]);
}

TEST(SolveGreedy, DeterministicTraces) {
    auto m = noisy_mesh(2, 6);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 6);
    auto a = solve_greedy(m, x0, {});
    auto b = solve_greedy(m, x0, {});
    EXPECT_TRUE(same_traces(a, b));
    EXPECT_EQ(report_checksum(a), report_checksum(b));
}

TEST(SolveGreedy, MaxStepsStopsEarly) {
    auto m = noisy_mesh(2, 7);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 7);
    SolveConfig cfg;
    cfg.max_steps = 50;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::max_steps);
    EXPECT_EQ(r.iterations_used, 50u);
    EXPECT_EQ(r.residual_trace.size(), 51u);
}

TEST(SolveGreedy, OversizedStepReportsDivergence) {
    auto m = noisy_mesh(1, 8);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 8);
    SolveConfig cfg;
    cfg.epsilon_mode = EpsilonMode::fixed;
    cfg.epsilon = 50.0;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::error);
    EXPECT_NE(r.error_message.find("divergence"), std::string::npos);
    EXPECT_GT(r.error_iteration, 0u);
    EXPECT_LT(r.error_vertex, m.num_vertices());
}

TEST(SolveGreedy, RefreshDegeneracyReportsIteration) {
    auto m = gen_icosphere(1);
    std::vector<double> x0(m.num_vertices(), 0.0);
    x0[0] = 0.5;
    SolveConfig cfg;
    cfg.h_policy = HPolicy::refresh;
    cfg.refresh_every = 1;
    cfg.epsilon_mode = EpsilonMode::fixed;
    cfg.epsilon = 1.5;
    cfg.divergence_factor = 1e300;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::error);
    EXPECT_FALSE(r.error_message.empty());
}

TEST(SolveGreedy, DegenerateStartIsReported) {
    auto m = gen_icosphere(1);
    std::vector<double> x0(m.num_vertices(), 0.0);
    x0[0] = -2.0;
    SolveConfig cfg;
    cfg.residual_mode = ResidualMode::curvature;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::error);
    EXPECT_EQ(r.iterations_used, 0u);
}

TEST(SolveGreedy, CurvatureModeLowersPeakCurvature) {
    // a closed sphere keeps sum K = 4 pi, so the curvature residual has a positive floor
    auto m = noisy_mesh(1, 9);
    auto x0 = random_log_radii(m.num_vertices(), 0.05, 9);
    SolveConfig cfg;
    cfg.residual_mode = ResidualMode::curvature;
    cfg.h_policy = HPolicy::refresh;
    cfg.refresh_every = 10;
    cfg.record_energy = true;
    cfg.max_steps = 300;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::max_steps) << r.error_message;
    EXPECT_LT(r.residual_trace.back(), r.residual_trace.front());
    EXPECT_GE(r.residual_trace.back(), 4 * std::numbers::pi / static_cast<double>(m.num_vertices()) - 1e-12);
    ASSERT_EQ(r.energy_trace.size(), r.residual_trace.size());
    EXPECT_NEAR(r.final_curvature_inf, r.residual_trace.back(), 1e-9);
}

TEST(SolveGreedy, EmbeddedOperatorSource) {
    auto m = noisy_mesh(1, 10);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 10);
    SolveConfig cfg;
    cfg.h_source = HSource::embedded;
    auto r = solve_greedy(m, x0, cfg);
    EXPECT_EQ(r.terminated_by, Termination::tolerance);
    EXPECT_NEAR(r.initial_safe_epsilon, max_safe_step(build_embedded_laplacian(m)), 1e-15);
}

TEST(Report, JsonExcludesTimingFromChecksum) {
    auto m = noisy_mesh(1, 11);
    auto x0 = random_log_radii(m.num_vertices(), 0.1, 11);
    auto r = solve_greedy(m, x0, {});
    auto j = report_to_json(r, true);
    EXPECT_TRUE(j.contains("stage_ns"));
    EXPECT_FALSE(report_to_json(r, false).contains("stage_ns"));
    EXPECT_EQ(j["iterations_used"].get<std::size_t>(), r.iterations_used);
    auto r2 = r;
    for (auto& ns : r2.stage_ns.select) ns += 1000;
    EXPECT_EQ(report_checksum(r), report_checksum(r2));
    r2.final_x[0] += 1e-9;
    EXPECT_NE(report_checksum(r), report_checksum(r2));
}

TEST(Report, TraceCsvHeaderAndRows) {
    auto m = gen_tetrahedron();
    SolveConfig cfg;
    cfg.record_energy = true;
    auto r = solve_greedy(m, std::vector<double>{1, 0, 0, 0}, cfg);
    std::ostringstream out;
    write_trace_csv(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "iter,resid_inf,energy,ms_matvec,ms_select,ms_regress,ms_update");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, r.residual_trace.size());
}
