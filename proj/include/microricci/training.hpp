#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "microricci/features.hpp"
#include "microricci/models.hpp"
#include "microricci/solver.hpp"

namespace microricci {

// ---------------------------------------------------------------------------
// lookahead probes on a frozen operator
// ---------------------------------------------------------------------------

/// s ← s − δ·H e_i, touching only the pattern of row i.
inline void apply_column(const SparseSym& h, std::span<double> s, Index i, double delta) {
    auto cols = h.row_cols(i);
    auto vals = h.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) s[cols[k]] -= delta * vals[k];
}

inline double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double a : v) acc += a * a;
    return std::sqrt(acc);
}

/// ‖s‖₂ after one step of size eps at i followed by `followups` pure-greedy
/// steps of size greedy_eps. `scratch` receives the probed residual.
inline double probe_residual(const SparseSym& h, std::span<const double> s, Index i, double eps, double greedy_eps,
                             int followups, std::vector<double>& scratch) {
    scratch.assign(s.begin(), s.end());
    apply_column(h, scratch, i, eps * scratch[i]);
    for (int k = 0; k < followups; ++k) {
        Index j = select_greedy(scratch);
        apply_column(h, scratch, j, greedy_eps * scratch[j]);
    }
    return l2_norm(scratch);
}

/// 16 (by default) log-spaced step sizes from eps_max/256 to eps_max, ascending.
inline std::vector<double> eps_grid(double eps_max, std::size_t count = 16, double span = 256.0) {
    if (!(eps_max > 0.0)) throw Error("eps_grid: eps_max must be positive");
    if (count == 0) throw Error("eps_grid: need at least one candidate");
    std::vector<double> g(count);
    if (count == 1) {
        g[0] = eps_max;
        return g;
    }
    const double lo = std::log(eps_max / span), hi = std::log(eps_max);
    for (std::size_t k = 0; k < count; ++k)
        g[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1));
    g.back() = eps_max;
    return g;
}

struct LookaheadResult {
    double best_eps = 0.0;
    double best_norm = 0.0;
    std::vector<double> norms;  // ‖s‖₂ after the probe, per candidate
};

/// Scores each candidate by ‖s‖₂ after stepping at i with it and then taking
/// horizon−1 greedy steps of size greedy_eps. Ties go to the smaller step.
/// The caller's residual is never modified.
inline LookaheadResult lookahead_optimal_step(const SparseSym& h, std::span<const double> s, Index i,
                                              std::span<const double> candidates, double greedy_eps,
                                              int horizon = 3) {
    if (candidates.empty()) throw Error("lookahead: empty candidate set");
    if (horizon < 1) throw Error("lookahead: horizon must be at least 1");
    if (i >= s.size() || s.size() != h.size()) throw DimensionError("lookahead: vertex or residual out of range");
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return candidates[a] < candidates[b]; });
    LookaheadResult r;
    r.norms.resize(candidates.size());
    std::vector<double> scratch;
    bool first = true;
    for (auto k : order) {
        if (!(candidates[k] > 0.0)) throw Error("lookahead: candidates must be positive");
        double n = probe_residual(h, s, i, candidates[k], greedy_eps, horizon - 1, scratch);
        r.norms[k] = n;
        if (first || n < r.best_norm) {
            r.best_norm = n;
            r.best_eps = candidates[k];
            first = false;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// trace collection
// ---------------------------------------------------------------------------

struct TrainingSample {
    std::size_t mesh_id = 0;
    std::size_t iteration = 0;
    std::size_t group = 0;
    Index vertex = 0;
    double s_inf = 0.0;
    SelectorFeatures features_selector{};
    RegressorFeatures features_regressor{};
    int label_best = 0;
    double label_eps = 0.0;
};

struct CorpusEntry {
    TriMesh mesh;
    LogRadii x0;
    std::string name;
};

struct CollectConfig {
    SolveConfig solve;  // run as frozen-H syndrome greedy with safe ε
    /// Steps probed when labelling the best vertex; 1 is the plain single-step
    /// ℓ2 decrease.
    int label_horizon = 1;
    /// Vertices tried for label_best, taken by |s|; 0 means every vertex
    /// (the top 64 when n > 2000).
    std::size_t label_top_k = 0;
    int eps_horizon = 3;
    std::size_t eps_candidates = 16;
    /// eps_max = eps_max_scale / ‖H‖∞ per mesh.
    double eps_max_scale = 1.0;
    std::size_t hard_negatives = 3;
    std::size_t magnitude_negatives = 3;
    std::size_t uniform_negatives = 2;
    std::size_t record_every = 1;
    std::size_t max_groups_per_mesh = 0;  // 0: no cap
    std::uint64_t seed = 0;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"label_horizon", label_horizon},
                {"label_top_k", label_top_k},
                {"label_norm", "l2"},
                {"eps_horizon", eps_horizon},
                {"eps_candidates", eps_candidates},
                {"eps_max_scale", eps_max_scale},
                {"hard_negatives", hard_negatives},
                {"magnitude_negatives", magnitude_negatives},
                {"uniform_negatives", uniform_negatives},
                {"record_every", record_every},
                {"max_groups_per_mesh", max_groups_per_mesh},
                {"seed", seed},
                {"tolerance", solve.tolerance},
                {"max_steps", solve.max_steps},
                {"h_source", to_string(solve.h_source)}};
    }
};

struct Dataset {
    nlohmann::json meta = nlohmann::json::object();
    double eps_max = 0.0;
    std::vector<TrainingSample> samples;
    std::size_t groups = 0;
    std::size_t iterations = 0;  // greedy iterations run during collection
};

namespace detail {

inline std::vector<Index> top_by_magnitude(std::span<const double> s, std::size_t k) {
    std::vector<Index> idx(s.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](Index a, Index b) {
        double fa = std::abs(s[a]), fb = std::abs(s[b]);
        return fa != fb ? fa > fb : a < b;
    });
    idx.resize(k);
    return idx;
}

/// Vertex whose probe leaves the smallest ‖s‖₂; ties favour the greedy
/// vertex, then the lowest index.
inline Index best_vertex_label(const SparseSym& h, std::span<const double> s, double eps, const CollectConfig& cfg) {
    const Index greedy = select_greedy(s);
    std::size_t k = cfg.label_top_k;
    if (k == 0) k = s.size() <= 2000 ? s.size() : 64;
    auto cand = top_by_magnitude(s, k);
    if (std::find(cand.begin(), cand.end(), greedy) == cand.end()) cand.push_back(greedy);
    std::vector<double> scratch;
    Index best = greedy;
    double best_norm = probe_residual(h, s, greedy, eps, eps, cfg.label_horizon - 1, scratch);
    std::sort(cand.begin(), cand.end());
    for (Index j : cand) {
        if (j == greedy) continue;
        double n = probe_residual(h, s, j, eps, eps, cfg.label_horizon - 1, scratch);
        if (n < best_norm) {
            best_norm = n;
            best = j;
        }
    }
    return best;
}

/// Hardest (largest |s|), magnitude-weighted and uniform negatives, distinct
/// and excluding the positive.
inline std::vector<Index> sample_negatives(std::span<const double> s, Index positive, const CollectConfig& cfg,
                                           std::mt19937_64& rng) {
    const std::size_t n = s.size();
    std::vector<bool> taken(n, false);
    taken[positive] = true;
    std::vector<Index> out;
    for (Index j : top_by_magnitude(s, cfg.hard_negatives + 1)) {
        if (out.size() >= cfg.hard_negatives) break;
        if (!taken[j]) {
            taken[j] = true;
            out.push_back(j);
        }
    }
    auto draw = [&](std::size_t count, bool weighted) {
        for (std::size_t c = 0; c < count; ++c) {
            std::vector<double> w(n, 0.0);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (!taken[j]) total += (w[j] = weighted ? std::abs(s[j]) : 1.0);
            if (!(total > 0.0)) {
                if (!weighted) return;
                for (std::size_t j = 0; j < n; ++j)
                    if (!taken[j]) total += (w[j] = 1.0);
                if (!(total > 0.0)) return;
            }
            std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
            auto j = static_cast<Index>(pick(rng));
            taken[j] = true;
            out.push_back(j);
        }
    };
    draw(cfg.magnitude_negatives, true);
    draw(cfg.uniform_negatives, false);
    return out;
}

inline SparseSym frozen_operator(const TriMesh& mesh, const SolveConfig& cfg) {
    if (cfg.h_source == HSource::embedded) return build_embedded_laplacian(mesh);
    std::vector<double> zero(mesh.num_vertices(), 0.0);
    return build_cotan_laplacian(mesh, zero);
}

}  // namespace detail

/// Samples and run statistics from one corpus entry. Group ids are local to
/// the entry until merged.
struct EntryTraces {
    std::vector<TrainingSample> samples;
    std::size_t groups = 0;
    std::size_t iterations = 0;
    double eps_max = 0.0;
};

inline void validate_collect(const CollectConfig& cfg) {
    if (cfg.label_horizon < 1 || cfg.eps_horizon < 1) throw Error("collect_traces: horizons must be at least 1");
    if (cfg.record_every < 1) throw Error("collect_traces: record_every must be at least 1");
    if (!(cfg.eps_max_scale > 0.0)) throw Error("collect_traces: eps_max_scale must be positive");
}

/// Pure greedy (frozen H, syndrome residual, safe ε) on one entry, recording
/// one labelled group per recorded iteration. Negatives draw from a stream
/// seeded by (cfg.seed, mesh_id), so entries can run in any order.
inline EntryTraces collect_entry(const CorpusEntry& entry, std::size_t mesh_id, const CollectConfig& cfg) {
    validate_collect(cfg);
    SolveConfig scfg = cfg.solve;
    scfg.epsilon_mode = EpsilonMode::safe;
    scfg.residual_mode = ResidualMode::syndrome;
    scfg.h_policy = HPolicy::frozen;
    scfg.record_energy = false;

    EntryTraces out;
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(mesh_id), static_cast<std::uint32_t>(mesh_id >> 32)};
    std::mt19937_64 rng(seq);
    const SparseSym h = detail::frozen_operator(entry.mesh, scfg);
    const double safe = max_safe_step(h);
    out.eps_max = cfg.eps_max_scale * safe;
    const auto grid = eps_grid(out.eps_max, cfg.eps_candidates);

    auto record = [&](const StepContext& ctx) {
        const Index best = detail::best_vertex_label(h, ctx.s, safe, cfg);
        std::vector<Index> members{best};
        for (Index j : detail::sample_negatives(ctx.s, best, cfg, rng)) members.push_back(j);
        for (Index v : members) {
            TrainingSample smp;
            smp.mesh_id = mesh_id;
            smp.iteration = ctx.iteration;
            smp.group = out.groups;
            smp.vertex = v;
            smp.s_inf = ctx.s_inf;
            smp.features_selector = selector_features(ctx.s, ctx.s_inf, entry.mesh, v);
            smp.features_regressor = regressor_features(ctx.s, entry.mesh, v);
            smp.label_best = v == best ? 1 : 0;
            smp.label_eps = lookahead_optimal_step(h, ctx.s, v, grid, safe, cfg.eps_horizon).best_eps;
            out.samples.push_back(smp);
        }
        ++out.groups;
    };

    auto rep = run_solver(
        entry.mesh, entry.x0, scfg,
        [&](const StepContext& ctx) {
            const bool cap_ok = cfg.max_groups_per_mesh == 0 || out.groups < cfg.max_groups_per_mesh;
            if (cap_ok && ctx.iteration % cfg.record_every == 0) record(ctx);
            return select_greedy(ctx.s);
        },
        [](const StepContext& ctx, Index) { return ctx.safe_epsilon; });
    if (rep.terminated_by == Termination::error)
        throw Error("collect_traces: solver failed on corpus entry " + std::to_string(mesh_id) + " (" + entry.name +
                    "): " + rep.error_message);
    out.iterations = rep.iterations_used;
    return out;
}

/// Concatenates per-entry traces in mesh order with global group ids.
inline Dataset merge_traces(std::vector<EntryTraces> parts, const CollectConfig& cfg) {
    Dataset ds;
    for (auto& p : parts) {
        ds.eps_max = std::max(ds.eps_max, p.eps_max);
        for (auto& s : p.samples) {
            s.group += ds.groups;
            ds.samples.push_back(s);
        }
        ds.groups += p.groups;
        ds.iterations += p.iterations;
    }
    ds.meta = cfg.to_json();
    ds.meta["eps_max"] = ds.eps_max;
    ds.meta["feature_spec_version"] = kFeatureSpecVersion;
    ds.meta["corpus_size"] = parts.size();
    ds.meta["groups"] = ds.groups;
    ds.meta["iterations"] = ds.iterations;
    return ds;
}

inline Dataset collect_traces(const std::vector<CorpusEntry>& corpus, const CollectConfig& cfg) {
    if (corpus.empty()) throw Error("collect_traces: empty corpus");
    validate_collect(cfg);
    std::vector<EntryTraces> parts;
    parts.reserve(corpus.size());
    for (std::size_t m = 0; m < corpus.size(); ++m) parts.push_back(collect_entry(corpus[m], m, cfg));
    return merge_traces(std::move(parts), cfg);
}

// ---------------------------------------------------------------------------
// NDJSON datasets: one "meta" record, then one record per sample
// ---------------------------------------------------------------------------

inline nlohmann::json sample_to_json(const TrainingSample& s) {
    return {{"type", "sample"},
            {"mesh_id", s.mesh_id},
            {"iteration", s.iteration},
            {"group", s.group},
            {"vertex", s.vertex},
            {"s_inf", s.s_inf},
            {"features_selector", s.features_selector},
            {"features_regressor", s.features_regressor},
            {"label_best", s.label_best},
            {"label_eps", s.label_eps}};
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
    nlohmann::json meta = ds.meta;
    meta["type"] = "meta";
    meta["eps_max"] = ds.eps_max;
    meta["samples"] = ds.samples.size();
    out << meta.dump() << '\n';
    for (const auto& s : ds.samples) out << sample_to_json(s).dump() << '\n';
}

inline Dataset read_dataset(std::istream& in) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool have_meta = false;
    std::size_t last_group = static_cast<std::size_t>(-1);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        }
        try {
            const auto type = j.at("type").get<std::string>();
            if (type == "meta") {
                if (j.value("feature_spec_version", kFeatureSpecVersion) != kFeatureSpecVersion)
                    throw VersionError("dataset feature_spec_version does not match the library's");
                ds.meta = j;
                ds.eps_max = j.at("eps_max").get<double>();
                ds.iterations = j.value("iterations", std::size_t{0});
                have_meta = true;
                continue;
            }
            TrainingSample s;
            s.mesh_id = j.at("mesh_id").get<std::size_t>();
            s.iteration = j.at("iteration").get<std::size_t>();
            s.group = j.at("group").get<std::size_t>();
            s.vertex = j.at("vertex").get<Index>();
            s.s_inf = j.at("s_inf").get<double>();
            s.features_selector = j.at("features_selector").get<SelectorFeatures>();
            s.features_regressor = j.at("features_regressor").get<RegressorFeatures>();
            s.label_best = j.at("label_best").get<int>();
            s.label_eps = j.at("label_eps").get<double>();
            if (!std::isfinite(s.label_eps)) throw ParseError(lineno, "non-finite label_eps");
            if (s.group != last_group) {
                ++ds.groups;
                last_group = s.group;
            }
            ds.samples.push_back(s);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    if (!have_meta) throw ParseError(0, "dataset has no meta record");
    if (ds.samples.empty()) throw Error("dataset is empty");
    return ds;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct SelectorHyper {
    double lr = 0.05;
    std::size_t epochs = 20;
    std::size_t batch = 16;  // groups per step
    double margin = 1.0;
    double clip = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> dims = default_selector_dims();
};

struct RegressorHyper {
    double lr = 0.05;
    std::size_t epochs = 20;
    std::size_t batch = 32;
    double clip = 1.0;
    std::uint64_t seed = 0;
    bool positives_only = false;
    std::vector<std::size_t> dims = default_regressor_dims();
};

namespace detail {

inline double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Group {
    std::size_t positive = 0;                // index into members
    std::vector<std::array<double, kSelectorFeatureDim>> inputs;  // network inputs
    std::vector<double> prior;                                    // selector_prior per member
    std::vector<int> labels;
};

/// BCE over members plus the mean hinge over (positive, negative) pairs, on
/// prior + network scores.
/// Accumulates dL/dθ into grad when it is non-null.
inline double group_loss(const Mlp& mlp, const Group& g, double margin, Mlp::Gradient* grad,
                         std::vector<Mlp::Workspace>& ws, std::vector<std::vector<double>>& delta) {
    const std::size_t k = g.inputs.size();
    if (ws.size() < k) ws.resize(k, mlp.workspace());
    std::vector<double> score(k), dscore(k, 0.0);
    for (std::size_t m = 0; m < k; ++m) score[m] = g.prior[m] + mlp.forward_scalar(g.inputs[m], ws[m]);
    double loss = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
        double y = g.labels[m];
        loss += (softplus(score[m]) - y * score[m]) / static_cast<double>(k);
        dscore[m] += (sigmoid(score[m]) - y) / static_cast<double>(k);
    }
    const double pairs = static_cast<double>(k - 1);
    for (std::size_t m = 0; m < k; ++m) {
        if (m == g.positive) continue;
        double h = margin - score[g.positive] + score[m];
        if (h > 0.0) {
            loss += h / pairs;
            dscore[g.positive] -= 1.0 / pairs;
            dscore[m] += 1.0 / pairs;
        }
    }
    if (grad)
        for (std::size_t m = 0; m < k; ++m) {
            double d = dscore[m];
            mlp.backward(ws[m], std::span<const double>(&d, 1), *grad, delta);
        }
    return loss;
}

}  // namespace detail

/// Plain SGD with gradient-norm clipping. loss_curve[0] is the loss of the
/// initialization; entry e > 0 is the loss after epoch e.
inline SelectorModel train_selector(const Dataset& ds, const SelectorHyper& hp) {
    std::map<std::size_t, std::vector<const TrainingSample*>> by_group;
    for (const auto& s : ds.samples) by_group[s.group].push_back(&s);

    std::vector<std::vector<double>> raw_inputs;
    for (const auto& s : ds.samples) {
        auto in = selector_network_input(s.features_selector, s.s_inf, InputNormalizer::identity(kSelectorFeatureDim));
        raw_inputs.emplace_back(in.begin(), in.end());
    }
    SelectorModel model = SelectorModel::initialized(hp.seed, hp.dims);
    model.norm = InputNormalizer::fit(raw_inputs, kSelectorFeatureDim);

    std::vector<detail::Group> groups;
    for (const auto& [id, members] : by_group) {
        detail::Group g;
        std::size_t positives = 0;
        for (const auto* s : members) {
            if (s->label_best) {
                g.positive = g.inputs.size();
                ++positives;
            }
            g.inputs.push_back(selector_network_input(s->features_selector, s->s_inf, model.norm));
            g.prior.push_back(selector_prior(s->features_selector[0], s->s_inf));
            g.labels.push_back(s->label_best);
        }
        if (positives == 1 && g.inputs.size() >= 2) groups.push_back(std::move(g));
    }
    if (groups.empty()) throw Error("train_selector: no group has one positive and at least one negative");

    std::vector<Mlp::Workspace> ws;
    std::vector<std::vector<double>> delta;
    auto full_loss = [&]() {
        double total = 0.0;
        for (const auto& g : groups) total += detail::group_loss(model.mlp, g, hp.margin, nullptr, ws, delta);
        return total / static_cast<double>(groups.size());
    };
    model.loss_curve.push_back(full_loss());

    std::mt19937_64 rng(hp.seed);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    auto grad = model.mlp.gradient_buffer();
    const std::size_t batch = std::max<std::size_t>(1, hp.batch);
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += batch) {
            grad.zero();
            const std::size_t end = std::min(order.size(), b + batch);
            double batch_loss = 0.0;
            for (std::size_t k = b; k < end; ++k)
                batch_loss += detail::group_loss(model.mlp, groups[order[k]], hp.margin, &grad, ws, delta);
            if (!std::isfinite(batch_loss))
                throw Error("train_selector: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b / batch));
            const double inv = 1.0 / static_cast<double>(end - b);
            for (auto& v : grad.w)
                for (auto& x : v) x *= inv;
            for (auto& v : grad.b)
                for (auto& x : v) x *= inv;
            model.mlp.sgd_step(grad, hp.lr, hp.clip);
        }
        double l = full_loss();
        if (!std::isfinite(l)) throw Error("train_selector: non-finite loss after epoch " + std::to_string(epoch));
        model.loss_curve.push_back(l);
    }
    return model;
}

/// MSE on label_eps; the clip to [0, eps_max] applies only at inference.
inline RegressorModel train_regressor(const Dataset& ds, const RegressorHyper& hp) {
    std::vector<const TrainingSample*> rows;
    for (const auto& s : ds.samples)
        if (!hp.positives_only || s.label_best) rows.push_back(&s);
    if (rows.empty()) throw Error("train_regressor: dataset has no usable samples");
    if (!(ds.eps_max > 0.0)) throw Error("train_regressor: dataset eps_max must be positive");

    std::vector<std::vector<double>> raw;
    for (const auto* s : rows) raw.emplace_back(s->features_regressor.begin(), s->features_regressor.end());
    RegressorModel model = RegressorModel::initialized(hp.seed, ds.eps_max, hp.dims);
    model.norm = InputNormalizer::fit(raw, kRegressorFeatureDim);
    std::vector<std::array<double, kRegressorFeatureDim>> inputs;
    for (const auto* s : rows) inputs.push_back(regressor_network_input(s->features_regressor, model.norm));

    auto ws = model.mlp.workspace();
    std::vector<std::vector<double>> delta;
    auto full_loss = [&]() {
        double total = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            double e = model.mlp.forward_scalar(inputs[k], ws) - rows[k]->label_eps;
            total += e * e;
        }
        return total / static_cast<double>(rows.size());
    };
    model.loss_curve.push_back(full_loss());

    std::mt19937_64 rng(hp.seed);
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    auto grad = model.mlp.gradient_buffer();
    const std::size_t batch = std::max<std::size_t>(1, hp.batch);
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += batch) {
            grad.zero();
            const std::size_t end = std::min(order.size(), b + batch);
            const double inv = 1.0 / static_cast<double>(end - b);
            double batch_loss = 0.0;
            for (std::size_t k = b; k < end; ++k) {
                double e = model.mlp.forward_scalar(inputs[order[k]], ws) - rows[order[k]]->label_eps;
                batch_loss += e * e;
                double d = 2.0 * e * inv;
                model.mlp.backward(ws, std::span<const double>(&d, 1), grad, delta);
            }
            if (!std::isfinite(batch_loss))
                throw Error("train_regressor: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b / batch));
            model.mlp.sgd_step(grad, hp.lr, hp.clip);
        }
        double l = full_loss();
        if (!std::isfinite(l)) throw Error("train_regressor: non-finite loss after epoch " + std::to_string(epoch));
        model.loss_curve.push_back(l);
    }
    return model;
}

}  // namespace microricci
