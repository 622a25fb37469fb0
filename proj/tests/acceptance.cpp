// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "microricci/all.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace microricci;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> uniform_vec(std::size_t n, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> v(n);
    for (auto& a : v) a = u(rng);
    return v;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o, double secs) {
    std::printf("%s criterion %d: %s | %s | %.1fs\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run(int id, const std::string& title, const std::function<Outcome()>& body) {
    auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(id, title, o, seconds_since(t0));
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

/// ico2 with 1% vertex noise and a random start of max-norm 0.1.
CorpusEntry noisy_entry(std::uint64_t seed) {
    CorpusSpec s;
    s.subdivisions = 2;
    s.distortion = {DistortionKind::gaussian_noise, 0.01, seed};
    s.x0_amplitude = 0.1;
    s.x0_seed = 1000 + seed;
    return realize(s);
}

double initial_syndrome_inf(const CorpusEntry& e) {
    const auto h = build_cotan_laplacian(e.mesh, std::vector<double>(e.mesh.num_vertices(), 0.0));
    return inf_norm(syndrome(h, e.x0));
}

// ---------------------------------------------------------------------------

Outcome gauss_bonnet() {
    auto t0 = Clock::now();
    double worst = 0.0;
    for (int s = 0; s <= 5; ++s) {
        auto m = gen_icosphere(s);
        for (std::uint64_t k = 0; k < 20; ++k) {
            auto x = uniform_vec(m.num_vertices(), 0.05, 100 * s + k);
            double sum = 0.0;
            for (double v : gauss_curvature(m, x)) sum += v;
            worst = std::max(worst, std::abs(sum - 4 * std::numbers::pi) / (4 * std::numbers::pi));
        }
    }
    double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0, "max rel err " + fmt("%.3g", worst) + " (<= 1e-9), " + fmt("%.2f", secs) + "s (< 5s)"};
}

Outcome hessian_identity() {
    auto t0 = Clock::now();
    auto m = gen_icosphere(2);
    double worst = 0.0, worst_2h = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) {
        auto x = uniform_vec(m.num_vertices(), 0.05, 200 + k);
        auto c = hessian_check(m, x, 1e-6);
        worst = std::max(worst, c.pattern_max_rel_err);
        worst_2h = std::max(worst_2h, c.pattern_max_rel_err_2h);
    }
    double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 30.0, "Jacobian vs H max rel pattern err " + fmt("%.3g", worst) +
                                              " (<= 1e-4); vs 2H " + fmt("%.3g", worst_2h) + ", " +
                                              fmt("%.2f", secs) + "s (< 30s)"};
}

Outcome gradient_identity() {
    auto t0 = Clock::now();
    auto m = gen_icosphere(1);
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 3; ++k) worst = std::max(worst, gradient_check(m, uniform_vec(m.num_vertices(), 0.05, 300 + k), 1e-5));
    double secs = seconds_since(t0);
    return {worst <= 1e-5 && secs < 60.0, "max central-difference err " + fmt("%.3g", worst) + " (<= 1e-5), " +
                                              fmt("%.2f", secs) + "s (< 60s)"};
}

Outcome monotonicity() {
    std::size_t violations = 0, meshes_with = 0, steps = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        auto e = noisy_entry(k);
        SolveConfig cfg;
        cfg.max_steps = 500;
        cfg.tolerance = 1e-300;
        auto r = solve_greedy(e.mesh, e.x0, cfg);
        if (r.terminated_by == Termination::error) return {false, "solver error on mesh " + std::to_string(k)};
        violations += r.monotonicity_violations;
        meshes_with += r.monotonicity_violations > 0;
        steps += r.iterations_used;
    }
    return {violations == 0, std::to_string(violations) + " non-decreasing steps of max|s| over " + std::to_string(steps) +
                                 " steps; " + std::to_string(meshes_with) + "/20 meshes affected (need 0)"};
}

Outcome termination_bound() {
    std::ostringstream detail;
    bool ok = true;
    for (double tau : {1e-2, 1e-3, 1e-4}) {
        std::size_t violated = 0, terminated = 0;
        double worst_ratio = 0.0;
        for (std::uint64_t k = 0; k < 20; ++k) {
            auto e = noisy_entry(k);
            SolveConfig cfg;
            cfg.tolerance = tau;
            auto r = solve_greedy(e.mesh, e.x0, cfg);
            if (r.terminated_by != Termination::tolerance) continue;
            ++terminated;
            double bound = initial_syndrome_inf(e) / (r.initial_safe_epsilon * tau);
            worst_ratio = std::max(worst_ratio, static_cast<double>(r.iterations_used) / bound);
            violated += static_cast<double>(r.iterations_used) > bound;
        }
        ok = ok && violated == 0;
        detail << "tau=" << tau << ": " << violated << "/" << terminated << " over bound (max iter/bound "
               << fmt("%.3f", worst_ratio) << "); ";
    }
    std::size_t stock_ok = 0, stock_bound = 0, stock_total = 0;
    for (bool held_out : {false, true}) {
        for (const auto& e : realize(stock_corpus(held_out))) {
            SolveConfig cfg;
            cfg.tolerance = 1e-4;
            cfg.max_steps = 1'000'000;
            auto r = solve_greedy(e.mesh, e.x0, cfg);
            ++stock_total;
            if (r.terminated_by != Termination::tolerance) continue;
            ++stock_ok;
            stock_bound += static_cast<double>(r.iterations_used) <= initial_syndrome_inf(e) / (r.initial_safe_epsilon * 1e-4);
        }
    }
    ok = ok && stock_ok == stock_total && stock_bound == stock_total;
    detail << "stock corpus tau=1e-4: " << stock_ok << "/" << stock_total << " converged within 1e6, " << stock_bound << "/"
           << stock_total << " within bound";
    return {ok, detail.str()};
}

Outcome quadratic_form_identity() {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 10; ++k) {
        auto m = apply_distortion(gen_icosphere(1 + static_cast<int>(k % 3)), {DistortionKind::gaussian_noise, 0.01, k});
        auto h = build_cotan_laplacian(m, uniform_vec(m.num_vertices(), 0.05, 400 + k));
        for (std::uint64_t t = 0; t < 1000; ++t) {
            auto v = uniform_vec(m.num_vertices(), 1.0, 10000 * k + t);
            double q = quadratic_form(h, v);
            worst = std::max(worst, std::abs(q - edge_sum_form(h, v)) / std::max(std::abs(q), 1e-300));
        }
    }
    return {worst <= 1e-10, "max rel err " + fmt("%.3g", worst) + " (<= 1e-10) over 10 meshes x 1000 vectors"};
}

Outcome reduction_equivalence() {
    std::size_t identical = 0;
    for (std::uint64_t k = 0; k < 5; ++k) {
        auto e = noisy_entry(50 + k);
        SolveConfig cfg;
        auto g = solve_greedy(e.mesh, e.x0, cfg);
        auto t = solve_self_tuning(e.mesh, e.x0, cfg, OracleScorer{}, ConstantStep{g.initial_safe_epsilon});
        identical += g.residual_trace == t.residual_trace && g.selected == t.selected && g.step_sizes == t.step_sizes &&
                     g.final_x == t.final_x && g.terminated_by == t.terminated_by;
    }
    return {identical == 5, std::to_string(identical) + "/5 traces bit-identical"};
}

// ---------------------------------------------------------------------------
// criteria 8-10 share one train-then-evaluate pipeline
// ---------------------------------------------------------------------------

constexpr std::size_t kEvalMaxSteps = 50'000;

struct Pipeline {
    SelectorModel selector;
    RegressorModel regressor;
    std::vector<CorpusEntry> held_out;
    // reports[config][mesh]; configs: full, selector-only, regressor-only, greedy
    std::vector<std::vector<SolveReport>> reports;
    double seconds = 0.0;
    std::string summary;
};

Pipeline run_pipeline() {
    auto t0 = Clock::now();
    Pipeline p;
    const auto train = realize(stock_corpus(false));
    CollectConfig cc;
    cc.seed = 1;
    cc.record_every = 20;  // keeps training inside the time budget
    auto ds = collect_traces(train, cc);
    SelectorHyper sh;
    sh.seed = 3;
    p.selector = train_selector(ds, sh);
    RegressorHyper rh;
    rh.seed = 4;
    p.regressor = train_regressor(ds, rh);
    std::ostringstream os;
    os << ds.samples.size() << " samples / " << ds.groups << " groups, trained in " << fmt("%.0f", seconds_since(t0)) << "s";

    p.held_out = realize(stock_corpus(true));
    SolveConfig cfg;
    cfg.max_steps = kEvalMaxSteps;
    SolveConfig learned = cfg;
    learned.epsilon_mode = EpsilonMode::learned;
    p.reports.assign(4, {});
    for (const auto& e : p.held_out) {
        p.reports[0].push_back(solve_ablation(e.mesh, e.x0, learned, &p.selector, &p.regressor));
        p.reports[1].push_back(solve_ablation(e.mesh, e.x0, cfg, &p.selector, nullptr));
        p.reports[2].push_back(solve_ablation(e.mesh, e.x0, learned, nullptr, &p.regressor));
        p.reports[3].push_back(solve_ablation(e.mesh, e.x0, cfg, nullptr, nullptr));
    }
    p.seconds = seconds_since(t0);
    p.summary = os.str();
    return p;
}

double median_iterations(const std::vector<SolveReport>& rs) {
    std::vector<double> v;
    for (const auto& r : rs) v.push_back(static_cast<double>(r.iterations_used));
    return median(v);
}

std::size_t converged(const std::vector<SolveReport>& rs) {
    std::size_t c = 0;
    for (const auto& r : rs) c += r.terminated_by == Termination::tolerance;
    return c;
}

Outcome speedup(const Pipeline& p) {
    const double full = median_iterations(p.reports[0]), sel = median_iterations(p.reports[1]),
                 reg = median_iterations(p.reports[2]), greedy = median_iterations(p.reports[3]);
    const bool a = full <= 0.7 * greedy;
    const bool b = full <= sel && sel <= greedy && reg < greedy;
    const bool time_ok = p.seconds < 1800.0;
    std::ostringstream os;
    os << "median iterations full " << full << " (" << converged(p.reports[0]) << "/10 conv), selector-only " << sel << " ("
       << converged(p.reports[1]) << "/10), regressor-only " << reg << " (" << converged(p.reports[2]) << "/10), greedy "
       << greedy << " (" << converged(p.reports[3]) << "/10); full/greedy " << fmt("%.3f", full / greedy)
       << " (<= 0.7: " << (a ? "yes" : "no") << "), ordering " << (b ? "holds" : "broken") << "; " << p.summary
       << ", pipeline " << fmt("%.0f", p.seconds) << "s (< 1800s)";
    return {a && b && time_ok, os.str()};
}

Outcome quality(const Pipeline& p) {
    double full[3] = {0, 0, 0}, greedy[3] = {0, 0, 0};
    for (std::size_t k = 0; k < p.held_out.size(); ++k) {
        auto qf = quality_report(p.held_out[k].mesh, p.reports[0][k].final_x, p.reports[0][k].iterations_used);
        auto qg = quality_report(p.held_out[k].mesh, p.reports[3][k].final_x, p.reports[3][k].iterations_used);
        full[0] += qf.curvature_std;
        full[1] += qf.angle_dev_median;
        full[2] += qf.area_err_median;
        greedy[0] += qg.curvature_std;
        greedy[1] += qg.angle_dev_median;
        greedy[2] += qg.area_err_median;
    }
    const std::size_t conv_full = converged(p.reports[0]), conv_greedy = converged(p.reports[3]);
    bool ok = conv_full == p.held_out.size() && conv_greedy == p.held_out.size();
    const char* names[3] = {"curvature std", "angle dev median", "area err median"};
    std::ostringstream os;
    for (int m = 0; m < 3; ++m) {
        double ratio = full[m] / greedy[m];
        ok = ok && ratio <= 1.05;
        os << names[m] << " ratio " << fmt("%.4f", ratio) << "; ";
    }
    os << "converged full " << conv_full << "/10, greedy " << conv_greedy << "/10 (need all; ratios <= 1.05)";
    return {ok, os.str()};
}

Outcome budgets(const Pipeline& p) {
    const std::size_t ps = p.selector.mlp.param_count(), pr = p.regressor.mlp.param_count();
    const std::size_t ds = SelectorModel::initialized(0).mlp.param_count();
    const std::size_t dr = RegressorModel::initialized(0, 0.1).mlp.param_count();
    bool ok = ps >= 800 && ps <= 1400 && pr >= 150 && pr <= 300 && ds == ps && dr == pr;

    const auto dir = fs::temp_directory_path() / "microricci_acceptance_models";
    fs::create_directories(dir);
    save_model(p.selector, (dir / "selector.json").string());
    save_model(p.regressor, (dir / "regressor.json").string());
    auto sel = load_selector((dir / "selector.json").string());
    auto reg = load_regressor((dir / "regressor.json").string());
    fs::remove_all(dir);

    std::size_t checked = 0, mismatched = 0;
    auto ws_a = p.selector.mlp.workspace(), ws_b = sel.mlp.workspace();
    auto wr_a = p.regressor.mlp.workspace(), wr_b = reg.mlp.workspace();
    for (std::uint64_t k = 0; k < 3; ++k) {
        const auto& e = p.held_out[k];
        const auto h = build_cotan_laplacian(e.mesh, std::vector<double>(e.mesh.num_vertices(), 0.0));
        const auto s = syndrome(h, e.x0);
        const double s_inf = inf_norm(s);
        for (std::size_t i = 0; i < e.mesh.num_vertices(); ++i) {
            const auto f = selector_features(s, s_inf, e.mesh, static_cast<Index>(i));
            const auto g = regressor_features(s, e.mesh, static_cast<Index>(i));
            mismatched += p.selector.score(f, s_inf, ws_a) != sel.score(f, s_inf, ws_b);
            mismatched += p.regressor.predict_raw(g, wr_a) != reg.predict_raw(g, wr_b);
            checked += 2;
        }
    }
    ok = ok && mismatched == 0;
    return {ok, "selector " + std::to_string(ps) + " params ([800,1400]), regressor " + std::to_string(pr) +
                    " params ([150,300]); round trip " + std::to_string(checked - mismatched) + "/" +
                    std::to_string(checked) + " forward passes exact"};
}

// ---------------------------------------------------------------------------
// criterion 11 drives the CLI
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cli(const std::string& args) {
    std::string cmd = "\"" MICRORICCI_CLI_PATH "\" " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "microricci_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto q = [&](const std::string& name) { return "\"" + (dir / name).string() + "\""; };
    if (cli("gen --subdiv 1 --count 3 --noise 0.01 --seed 21 --out " + q("corpus")) != 0) return {false, "gen failed"};
    const std::string manifest = q("corpus/manifest.json");
    const std::string collect = "collect --manifest " + manifest + " --tau 1e-3 --label-top-k 8 --seed 21 --out " + q("d.ndjson");
    const std::string train = "train --data " + q("d.ndjson") + " --epochs 2 --seed 21 --out-selector " + q("s.json") +
                              " --out-regressor " + q("r.json");
    const std::string solve = "solve --mode microricci --manifest " + manifest + " --entry 1 --tau 1e-3 --max-steps 20000 --seed 21" +
                              " --model-selector " + q("s.json") + " --model-regressor " + q("r.json") + " --out " + q("rep.json");
    std::vector<std::string> runs[2];
    for (auto& r : runs) {
        if (cli(collect) != 0 || cli(train) != 0 || cli(solve) != 0) return {false, "a CLI step failed"};
        r.push_back(checksum_string(slurp(dir / "d.ndjson")));
        r.push_back(json::parse(slurp(dir / "s.json")).at("checksum").get<std::string>());
        r.push_back(json::parse(slurp(dir / "r.json")).at("checksum").get<std::string>());
        r.push_back(json::parse(slurp(dir / "rep.json")).at("report_checksum").get<std::string>());
    }
    fs::remove_all(dir);
    const char* names[4] = {"dataset", "selector", "regressor", "solve report"};
    std::string detail;
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
        bool same = runs[0][k] == runs[1][k];
        ok = ok && same;
        detail += std::string(names[k]) + (same ? " identical" : " DIFFERS") + (k < 3 ? ", " : "");
    }
    return {ok, detail};
}

}  // namespace

int main() {
    std::printf("library %s\n", kLibraryVersion);
    run(1, "Gauss-Bonnet", gauss_bonnet);
    run(2, "curvature Jacobian equals H", hessian_identity);
    run(3, "energy gradient equals K", gradient_identity);
    run(4, "strict max|s| decrease per safe greedy step", monotonicity);
    run(5, "termination bound and stock-corpus convergence", termination_bound);
    run(6, "quadratic-form edge-sum identity", quadratic_form_identity);
    run(7, "oracle selector + constant step reproduce greedy", reduction_equivalence);

    auto t0 = Clock::now();
    std::optional<Pipeline> pipe;
    std::string pipe_error;
    try {
        pipe = run_pipeline();
    } catch (const std::exception& e) {
        pipe_error = e.what();
    }
    const double pipe_secs = seconds_since(t0);
    if (pipe) {
        run(8, "self-tuning iteration speedup and ablation ordering", [&] { return speedup(*pipe); });
        run(9, "quality non-regression vs greedy", [&] { return quality(*pipe); });
        run(10, "parameter budgets and model round trip", [&] { return budgets(*pipe); });
    } else {
        for (int id : {8, 9, 10}) report(id, "train/evaluate pipeline", {false, "exception: " + pipe_error}, pipe_secs);
    }
    run(11, "CLI artifacts are seed-deterministic", determinism);

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
