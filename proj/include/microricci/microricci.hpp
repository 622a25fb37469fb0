#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "microricci/features.hpp"
#include "microricci/models.hpp"
#include "microricci/solver.hpp"

namespace microricci {

/// Scores every vertex with the selector network.
class ModelScorer {
public:
    ModelScorer(const SelectorModel& model, const TriMesh& mesh) : model_(model), mesh_(mesh), ws_(model.mlp.workspace()) {}

    void operator()(const StepContext& ctx, std::vector<double>& scores) {
        scores.resize(ctx.s.size());
        for (std::size_t i = 0; i < ctx.s.size(); ++i) {
            auto f = selector_features(ctx.s, ctx.s_inf, mesh_, static_cast<Index>(i));
            scores[i] = model_.score(f, ctx.s_inf, ws_);
        }
    }

private:
    const SelectorModel& model_;
    const TriMesh& mesh_;
    Mlp::Workspace ws_;
};

/// σ_i = |s_i|; reduces the self-tuning loop to pure greedy.
struct OracleScorer {
    void operator()(const StepContext& ctx, std::vector<double>& scores) const {
        scores.resize(ctx.s.size());
        for (std::size_t i = 0; i < ctx.s.size(); ++i) scores[i] = std::abs(ctx.s[i]);
    }
};

/// Clipped regressor prediction for the selected vertex.
class ModelStep {
public:
    ModelStep(const RegressorModel& model, const TriMesh& mesh) : model_(model), mesh_(mesh), ws_(model.mlp.workspace()) {}
    double operator()(const StepContext& ctx, Index i) {
        return model_.predict(regressor_features(ctx.s, mesh_, i), ws_);
    }

private:
    const RegressorModel& model_;
    const TriMesh& mesh_;
    Mlp::Workspace ws_;
};

struct ConstantStep {
    double epsilon;
    double operator()(const StepContext&, Index) const { return epsilon; }
};

struct SafeStep {
    double operator()(const StepContext& ctx, Index) const { return ctx.safe_epsilon; }
};

/// argmax over scores, lowest index on ties; non-finite scores are an error.
inline Index argmax_score(std::span<const double> scores) {
    Index best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw Error("selector produced a non-finite score at vertex " + std::to_string(i));
        if (scores[i] > best_v) {
            best_v = scores[i];
            best = static_cast<Index>(i);
        }
    }
    return best;
}

/// Self-tuning loop: score all vertices, update the best one by the
/// predicted step. Stage timings split scoring (select) from prediction.
template <class Scorer, class Predictor>
SolveReport solve_self_tuning(const TriMesh& mesh, std::span<const double> x0, const SolveConfig& cfg, Scorer&& scorer,
                              Predictor&& predictor) {
    std::vector<double> scores;
    return run_solver(
        mesh, x0, cfg,
        [&](const StepContext& ctx) {
            scorer(ctx, scores);
            return argmax_score(scores);
        },
        [&](const StepContext& ctx, Index i) { return predictor(ctx, i); });
}

inline void check_model_versions(const SelectorModel* selector, const RegressorModel* regressor) {
    if (selector && selector->feature_spec_version != kFeatureSpecVersion)
        throw VersionError("selector feature_spec_version " + std::to_string(selector->feature_spec_version) +
                           " does not match the library's " + std::to_string(kFeatureSpecVersion));
    if (regressor && regressor->feature_spec_version != kFeatureSpecVersion)
        throw VersionError("regressor feature_spec_version " + std::to_string(regressor->feature_spec_version) +
                           " does not match the library's " + std::to_string(kFeatureSpecVersion));
}

/// Both learned modules.
inline SolveReport solve_microricci(const TriMesh& mesh, std::span<const double> x0, const SelectorModel& selector,
                                    const RegressorModel& regressor, const SolveConfig& cfg) {
    check_model_versions(&selector, &regressor);
    return solve_self_tuning(mesh, x0, cfg, ModelScorer(selector, mesh), ModelStep(regressor, mesh));
}

/// Ablations: a missing selector means greedy argmax |s_i|, a missing
/// regressor means the configured fixed or safe ε.
inline SolveReport solve_ablation(const TriMesh& mesh, std::span<const double> x0, const SolveConfig& cfg,
                                  const SelectorModel* selector, const RegressorModel* regressor) {
    check_model_versions(selector, regressor);
    if (selector && regressor) return solve_microricci(mesh, x0, *selector, *regressor, cfg);
    const bool fixed = cfg.epsilon_mode == EpsilonMode::fixed;
    auto base_step = [fixed, eps = cfg.epsilon](const StepContext& ctx, Index) {
        return fixed ? eps : ctx.safe_epsilon;
    };
    if (selector) return solve_self_tuning(mesh, x0, cfg, ModelScorer(*selector, mesh), base_step);
    if (regressor) {
        ModelStep step(*regressor, mesh);
        return run_solver(
            mesh, x0, cfg, [](const StepContext& ctx) { return select_greedy(ctx.s); },
            [&](const StepContext& ctx, Index i) { return step(ctx, i); });
    }
    SolveConfig greedy = cfg;
    if (greedy.epsilon_mode == EpsilonMode::learned) greedy.epsilon_mode = EpsilonMode::safe;
    return solve_greedy(mesh, x0, greedy);
}

}  // namespace microricci
