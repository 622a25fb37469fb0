#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "microricci/all.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace microricci;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver ended with terminated_by == error; the report has already been written.
class SolveFailed : public std::runtime_error {
public:
    SolveFailed(const std::string& msg, json detail) : std::runtime_error(msg), detail(std::move(detail)) {}
    json detail;
};

std::string config_key(const std::string& flag) {
    std::string k = flag;
    for (auto& c : k)
        if (c == '-') c = '_';
    return k;
}

/// Flags of one subcommand, bound to variables and mirrored into the JSON
/// config block. File values only fill options not given on the command line.
class Options {
public:
    explicit Options(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
        auto* o = app_->add_option("--" + flag, var, desc)->capture_default_str();
        bind(o, flag, var);
        return o;
    }

    CLI::Option* add_flag(const std::string& flag, bool& var, const std::string& desc) {
        auto* o = app_->add_flag("--" + flag, var, desc);
        bind(o, flag, var);
        return o;
    }

    void apply_file(const json& cfg) const {
        for (const auto& f : loaders_) f(cfg);
    }

    [[nodiscard]] json resolved() const {
        json j = json::object();
        for (const auto& f : dumpers_) f(j);
        return j;
    }

    [[nodiscard]] bool given(const std::string& flag) const { return app_->get_option("--" + flag)->count() > 0; }

private:
    template <class T>
    void bind(CLI::Option* o, const std::string& flag, T& var) {
        const std::string key = config_key(flag);
        loaders_.push_back([o, key, &var](const json& cfg) {
            if (o->count() > 0 || !cfg.contains(key)) return;
            try {
                var = cfg.at(key).get<T>();
            } catch (const json::exception& e) {
                throw UsageError("config key '" + key + "': " + e.what());
            }
        });
        dumpers_.push_back([key, &var](json& j) { j[key] = var; });
    }

    CLI::App* app_;
    std::vector<std::function<void(const json&)>> loaders_;
    std::vector<std::function<void(json&)>> dumpers_;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Deterministic sub-seed derivation (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Runs fn(k) for k in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// State shared by every subcommand: its options, --config and --seed.
struct Command {
    std::string name;
    CLI::App* app = nullptr;
    Options opts{nullptr};
    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    Command(CLI::App& root, const std::string& n, const std::string& desc) : name(n), app(root.add_subcommand(n, desc)), opts(app) {
        app->add_option("--config", config_path, "JSON config or any artifact of this subcommand; flags override it");
        opts.add("seed", seed, "Seed for all randomness (default: $MICRORICCI_SEED, else 0)");
    }

    void add_jobs() { opts.add("jobs", jobs, "Meshes processed concurrently")->check(CLI::PositiveNumber); }

    /// Applies the config file and the seed fallback. Call before using options.
    void resolve() {
        bool seed_from_file = false;
        if (!config_path.empty()) {
            json j = read_json_file(config_path);
            if (j.contains("provenance")) j = j.at("provenance");
            if (j.contains("command") && j.at("command") != name)
                throw UsageError("config '" + config_path + "' belongs to subcommand '" +
                                 j.at("command").get<std::string>() + "', not '" + name + "'");
            if (j.contains("config")) j = j.at("config");
            if (!j.is_object()) throw UsageError("config '" + config_path + "' is not a JSON object");
            seed_from_file = j.contains("seed");
            opts.apply_file(j);
        }
        if (!opts.given("seed") && !seed_from_file) {
            if (const char* env = std::getenv("MICRORICCI_SEED")) {
                try {
                    std::size_t used = 0;
                    seed = std::stoull(env, &used);
                    if (used != std::string(env).size()) throw std::invalid_argument(env);
                } catch (const std::exception&) {
                    throw UsageError(std::string("MICRORICCI_SEED is not an unsigned integer: '") + env + "'");
                }
            }
        }
    }

    [[nodiscard]] json provenance() const {
        return {{"command", name}, {"library_version", kLibraryVersion}, {"config", opts.resolved()}};
    }
};

// ---------------------------------------------------------------------------
// corpus input shared by solve, collect and bench
// ---------------------------------------------------------------------------

struct CorpusInput {
    std::string manifest;
    std::string stock;  // "train" | "held_out"

    void add_to(Command& c, const std::string& default_stock) {
        stock = default_stock;
        c.opts.add("manifest", manifest, "Corpus manifest written by 'gen'");
        c.opts.add("stock", stock, "Built-in corpus when no manifest is given: train | held_out")
            ->check(CLI::IsMember({"train", "held_out", ""}));
    }
};

CorpusSpec spec_from_json(const json& j) {
    CorpusSpec s;
    s.subdivisions = j.at("subdivisions").get<int>();
    s.distortion.kind = distortion_kind_from_string(j.at("distortion").get<std::string>());
    s.distortion.magnitude = j.at("magnitude").get<double>();
    s.distortion.seed = j.at("distortion_seed").get<std::uint64_t>();
    s.x0_amplitude = j.at("x0_amplitude").get<double>();
    s.x0_seed = j.at("x0_seed").get<std::uint64_t>();
    return s;
}

std::vector<CorpusEntry> load_manifest(const std::string& path) {
    const json m = read_json_file(path);
    const fs::path dir = fs::path(path).parent_path();
    std::vector<CorpusEntry> out;
    try {
        for (const auto& e : m.at("entries")) {
            const auto spec = spec_from_json(e.at("spec"));
            CorpusEntry ce;
            ce.mesh = load_obj((dir / e.at("file").get<std::string>()).string());
            ce.name = e.at("name").get<std::string>();
            ce.x0 = random_log_radii(ce.mesh.num_vertices(), spec.x0_amplitude, spec.x0_seed);
            out.push_back(std::move(ce));
        }
    } catch (const json::exception& e) {
        throw UsageError("manifest '" + path + "' is malformed: " + e.what());
    }
    if (out.empty()) throw UsageError("manifest '" + path + "' lists no meshes");
    return out;
}

std::vector<CorpusEntry> load_corpus(const CorpusInput& in, std::uint64_t seed) {
    if (!in.manifest.empty()) return load_manifest(in.manifest);
    if (in.stock.empty()) throw UsageError("give --manifest or --stock");
    return realize(stock_corpus(in.stock == "held_out", seed));
}

// ---------------------------------------------------------------------------
// solver flags shared by solve, collect and bench
// ---------------------------------------------------------------------------

struct SolveFlags {
    std::string residual = "syndrome";
    std::string eps = "safe";
    double tau = 1e-4;
    std::size_t max_steps = 1'000'000;
    std::size_t refresh_every = 0;
    std::string h_source = "zero";
    std::size_t resync_every = 100;
    bool no_incremental = false;
    bool clamp_angles = false;
    bool record_energy = false;
    double divergence_factor = 10.0;

    void add_basic(Command& c) {
        c.opts.add("tau", tau, "Stop when the residual's max-norm drops below this");
        c.opts.add("max-steps", max_steps, "Iteration cap");
        c.opts.add("h-source", h_source, "Metric the frozen operator comes from: zero | embedded")
            ->check(CLI::IsMember({"zero", "embedded"}));
    }

    void add_all(Command& c) {
        add_basic(c);
        c.opts.add("residual", residual, "Convergence residual: syndrome (Hx) | curvature (K(x))")
            ->check(CLI::IsMember({"syndrome", "curvature"}));
        c.opts.add("eps", eps, "Step size: safe (1/||H||inf) | fixed:<value>");
        c.opts.add("refresh-every", refresh_every, "Rebuild H from the current metric every k steps (0: frozen H)");
        c.opts.add("resync-every", resync_every, "Full H x product every k incremental updates");
        c.opts.add_flag("no-incremental", no_incremental, "Recompute the full residual every step");
        c.opts.add_flag("clamp-angles", clamp_angles, "Clamp invalid triangle angles instead of failing");
        c.opts.add_flag("record-energy", record_energy, "Record the Ricci energy each iteration");
        c.opts.add("divergence-factor", divergence_factor, "Fail when the residual exceeds this multiple of its minimum");
    }

    [[nodiscard]] SolveConfig build() const {
        SolveConfig cfg;
        if (!(tau > 0.0) || !std::isfinite(tau)) throw UsageError("--tau must be a positive number, got " + std::to_string(tau));
        if (max_steps < 1) throw UsageError("--max-steps must be at least 1");
        cfg.tolerance = tau;
        cfg.max_steps = max_steps;
        cfg.residual_mode = residual == "curvature" ? ResidualMode::curvature : ResidualMode::syndrome;
        if (eps == "safe") {
            cfg.epsilon_mode = EpsilonMode::safe;
        } else if (eps.rfind("fixed:", 0) == 0) {
            cfg.epsilon_mode = EpsilonMode::fixed;
            try {
                std::size_t used = 0;
                cfg.epsilon = std::stod(eps.substr(6), &used);
                if (used != eps.size() - 6) throw std::invalid_argument(eps);
            } catch (const std::exception&) {
                throw UsageError("--eps fixed:<value> needs a number, got '" + eps + "'");
            }
            if (!(cfg.epsilon > 0.0)) throw UsageError("--eps fixed value must be positive");
        } else {
            throw UsageError("--eps must be 'safe' or 'fixed:<value>', got '" + eps + "'");
        }
        cfg.h_policy = refresh_every > 0 ? HPolicy::refresh : HPolicy::frozen;
        cfg.refresh_every = refresh_every;
        cfg.h_source = h_source == "embedded" ? HSource::embedded : HSource::zero;
        cfg.incremental = !no_incremental;
        cfg.resync_every = resync_every;
        cfg.clamp_angles = clamp_angles;
        cfg.record_energy = record_energy;
        cfg.divergence_factor = divergence_factor;
        try {
            cfg.validate();
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }
};

json quality_or_null(const TriMesh& mesh, const SolveReport& r) {
    if (r.terminated_by == Termination::error) return nullptr;
    try {
        return quality_to_json(quality_report(mesh, r.final_x, r.iterations_used));
    } catch (const Error&) {
        return nullptr;
    }
}

/// Trace CSV preceded by a '#' line carrying the provenance block.
std::string trace_csv_text(const SolveReport& r, const json& provenance) {
    std::ostringstream os;
    os << "# " << provenance.dump() << '\n';
    write_trace_csv(os, r);
    return os.str();
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenCmd : Command {
    int subdiv = 3;
    std::size_t count = 5;
    double noise = 0.0;
    int quantize = 0;
    double decimate = 0.0;
    double x0_amplitude = 0.1;
    std::string out = "corpus";
    std::string stock;

    explicit GenCmd(CLI::App& root) : Command(root, "gen", "Write an icosphere-derived OBJ corpus and its manifest") {
        opts.add("subdiv", subdiv, "Icosphere subdivision level");
        opts.add("count", count, "Number of meshes");
        opts.add("noise", noise, "Gaussian vertex noise, fraction of the bounding-box diagonal");
        opts.add("quantize", quantize, "Quantize positions to this many bits (0: off)");
        opts.add("decimate", decimate, "Decimate to this vertex fraction (0: off)");
        opts.add("x0-amplitude", x0_amplitude, "Max-norm of the random initial log-radii");
        opts.add("out", out, "Output directory");
        opts.add("stock", stock, "Write the built-in train | held_out corpus instead")
            ->check(CLI::IsMember({"train", "held_out", ""}));
        add_jobs();
    }

    int run() {
        std::vector<CorpusSpec> specs;
        if (!stock.empty()) {
            specs = stock_corpus(stock == "held_out", seed);
        } else {
            if (subdiv < 0 || subdiv > kMaxIcosphereSubdivisions)
                throw UsageError("--subdiv must be in [0, " + std::to_string(kMaxIcosphereSubdivisions) + "], got " +
                                 std::to_string(subdiv));
            if (count < 1) throw UsageError("--count must be at least 1");
            if (!(x0_amplitude >= 0.0)) throw UsageError("--x0-amplitude must be non-negative");
            int kinds = (noise != 0.0) + (quantize != 0) + (decimate != 0.0);
            if (kinds > 1) throw UsageError("give at most one of --noise, --quantize, --decimate");
            DistortionSpec d{DistortionKind::gaussian_noise, noise, 0};
            if (quantize != 0) d = {DistortionKind::quantize_position, static_cast<double>(quantize), 0};
            if (decimate != 0.0) d = {DistortionKind::decimate, decimate, 0};
            try {
                d.validate();
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
            for (std::size_t k = 0; k < count; ++k) {
                CorpusSpec s;
                s.subdivisions = subdiv;
                s.distortion = d;
                s.distortion.seed = derive_seed(seed, 2 * k);
                s.x0_amplitude = x0_amplitude;
                s.x0_seed = derive_seed(seed, 2 * k + 1);
                specs.push_back(s);
            }
        }

        fs::create_directories(out);
        std::vector<json> entries(specs.size());
        parallel_for(specs.size(), jobs, [&](std::size_t k) {
            const auto mesh = apply_distortion(gen_icosphere(specs[k].subdivisions), specs[k].distortion);
            std::ostringstream os;
            write_obj(os, mesh);
            char file[32];
            std::snprintf(file, sizeof file, "mesh_%03zu.obj", k);
            write_text(fs::path(out) / file, os.str());
            entries[k] = {{"file", file},
                          {"name", specs[k].name()},
                          {"spec", specs[k].to_json()},
                          {"vertices", mesh.num_vertices()},
                          {"faces", mesh.num_faces()},
                          {"checksum", checksum_string(os.str())}};
        });
        json manifest = {{"provenance", provenance()}, {"entries", entries}};
        write_text(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");
        std::cout << "wrote " << specs.size() << " meshes and manifest.json to " << out << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveCmd : Command {
    std::string mode = "greedy";
    std::string mesh_path;
    std::string manifest;
    std::size_t entry = 0;
    std::string x0_path;
    double x0_amplitude = 0.1;
    std::string model_selector, model_regressor;
    std::string out = "report.json";
    std::string trace_csv;
    SolveFlags flags;

    explicit SolveCmd(CLI::App& root) : Command(root, "solve", "Run the greedy or self-tuning solver on one mesh") {
        opts.add("mode", mode, "greedy | microricci | selector-only | regressor-only")
            ->check(CLI::IsMember({"greedy", "microricci", "selector-only", "regressor-only"}));
        opts.add("mesh", mesh_path, "Input OBJ");
        opts.add("manifest", manifest, "Take the mesh and x0 from this corpus manifest");
        opts.add("entry", entry, "Manifest entry index");
        opts.add("x0", x0_path, "JSON array of initial log-radii (default: random, seeded)");
        opts.add("x0-amplitude", x0_amplitude, "Max-norm of the random initial log-radii");
        opts.add("model-selector", model_selector, "Selector model JSON");
        opts.add("model-regressor", model_regressor, "Regressor model JSON");
        opts.add("out", out, "Report JSON");
        opts.add("trace-csv", trace_csv, "Per-iteration trace CSV");
        flags.add_all(*this);
    }

    int run() {
        SolveConfig cfg = flags.build();
        const bool need_sel = mode == "microricci" || mode == "selector-only";
        const bool need_reg = mode == "microricci" || mode == "regressor-only";
        std::vector<std::string> missing;
        if (need_sel && model_selector.empty()) missing.push_back("--model-selector");
        if (need_reg && model_regressor.empty()) missing.push_back("--model-regressor");
        if (!missing.empty()) {
            std::string names;
            for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
            throw UsageError("--mode " + mode + " needs " + names);
        }
        if (mesh_path.empty() == manifest.empty()) throw UsageError("give exactly one of --mesh or --manifest");

        CorpusEntry input;
        if (!manifest.empty()) {
            auto corpus = load_manifest(manifest);
            if (entry >= corpus.size())
                throw UsageError("--entry " + std::to_string(entry) + " is out of range for " +
                                 std::to_string(corpus.size()) + " manifest entries");
            input = std::move(corpus[entry]);
        } else {
            input.mesh = load_obj(mesh_path);
            input.name = mesh_path;
            input.x0 = random_log_radii(input.mesh.num_vertices(), x0_amplitude, seed);
        }
        if (!x0_path.empty()) {
            const json j = read_json_file(x0_path);
            try {
                input.x0 = j.get<std::vector<double>>();
            } catch (const json::exception& e) {
                throw UsageError("--x0 must hold a JSON array of numbers: " + std::string(e.what()));
            }
            if (input.x0.size() != input.mesh.num_vertices())
                throw UsageError("--x0 has " + std::to_string(input.x0.size()) + " values for " +
                                 std::to_string(input.mesh.num_vertices()) + " vertices");
        }

        std::optional<SelectorModel> sel;
        std::optional<RegressorModel> reg;
        if (need_sel) sel = load_selector(model_selector);
        if (need_reg) reg = load_regressor(model_regressor);
        if (reg) cfg.epsilon_mode = EpsilonMode::learned;
        const SolveReport r = solve_ablation(input.mesh, input.x0, cfg, sel ? &*sel : nullptr, reg ? &*reg : nullptr);

        const json prov = provenance();
        json artifact = {{"provenance", prov},
                         {"mesh", {{"name", input.name}, {"vertices", input.mesh.num_vertices()}, {"faces", input.mesh.num_faces()}}},
                         {"solve_config", config_to_json(cfg)},
                         {"report", report_to_json(r)},
                         {"report_checksum", report_checksum(r)},
                         {"quality", quality_or_null(input.mesh, r)}};
        write_text(out, artifact.dump(2) + "\n");
        if (!trace_csv.empty()) write_text(trace_csv, trace_csv_text(r, prov));

        std::cout << "terminated_by=" << to_string(r.terminated_by) << " iterations=" << r.iterations_used
                  << " residual=" << format_real(r.residual_trace.empty() ? 0.0 : r.residual_trace.back()) << "\n";
        if (r.terminated_by == Termination::error)
            throw SolveFailed(r.error_message, {{"kind", "solver"},
                                                {"message", r.error_message},
                                                {"iteration", r.error_iteration},
                                                {"vertex", r.error_vertex},
                                                {"report", out}});
        return 0;
    }
};

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

struct CollectCmd : Command {
    CorpusInput corpus;
    SolveFlags flags;
    CollectConfig cc;
    std::string out = "traces.ndjson";

    explicit CollectCmd(CLI::App& root) : Command(root, "collect", "Record labelled greedy traces as NDJSON") {
        corpus.add_to(*this, "train");
        flags.add_basic(*this);
        opts.add("label-horizon", cc.label_horizon, "Steps probed when labelling the best vertex");
        opts.add("label-top-k", cc.label_top_k, "Vertices tried for the best-vertex label, by |s| (0: all)");
        opts.add("eps-horizon", cc.eps_horizon, "Steps probed when labelling the best step size");
        opts.add("eps-candidates", cc.eps_candidates, "Step-size grid size");
        opts.add("eps-max-scale", cc.eps_max_scale, "eps_max as a multiple of 1/||H||inf");
        opts.add("hard-negatives", cc.hard_negatives, "Negatives from the best vertex's neighbourhood");
        opts.add("magnitude-negatives", cc.magnitude_negatives, "Negatives from the largest |s|");
        opts.add("uniform-negatives", cc.uniform_negatives, "Uniformly drawn negatives");
        opts.add("record-every", cc.record_every, "Record one group every k iterations");
        opts.add("max-groups-per-mesh", cc.max_groups_per_mesh, "Cap on groups per mesh (0: none)");
        opts.add("out", out, "Output NDJSON");
        add_jobs();
    }

    int run() {
        cc.solve = flags.build();
        cc.seed = seed;
        if (cc.label_horizon < 1 || cc.eps_horizon < 1) throw UsageError("horizons must be at least 1");
        if (cc.record_every < 1) throw UsageError("--record-every must be at least 1");
        if (!(cc.eps_max_scale > 0.0)) throw UsageError("--eps-max-scale must be positive");
        if (cc.eps_candidates < 2) throw UsageError("--eps-candidates must be at least 2");
        const auto entries = load_corpus(corpus, seed);
        std::vector<EntryTraces> parts(entries.size());
        parallel_for(entries.size(), jobs, [&](std::size_t m) { parts[m] = collect_entry(entries[m], m, cc); });
        Dataset ds = merge_traces(std::move(parts), cc);
        if (ds.samples.empty()) throw Error("collection produced no samples; every start already meets --tau");
        ds.meta["provenance"] = provenance();
        std::ostringstream os;
        write_dataset(os, ds);
        write_text(out, os.str());
        std::cout << "samples=" << ds.samples.size() << " groups=" << ds.groups << " iterations=" << ds.iterations
                  << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmd : Command {
    std::string data;
    std::string out_selector, out_regressor;
    SelectorHyper sh;
    RegressorHyper rh;
    std::size_t epochs = 20;
    double lr = 0.05;

    explicit TrainCmd(CLI::App& root) : Command(root, "train", "Train the selector and step-size regressor") {
        opts.add("data", data, "NDJSON dataset written by 'collect'");
        opts.add("out-selector", out_selector, "Selector model output");
        opts.add("out-regressor", out_regressor, "Regressor model output");
        opts.add("epochs", epochs, "Passes over the dataset");
        opts.add("lr", lr, "SGD learning rate");
        opts.add("batch-selector", sh.batch, "Groups per selector step");
        opts.add("batch-regressor", rh.batch, "Samples per regressor step");
        opts.add("margin", sh.margin, "Selector pairwise margin");
        opts.add("clip", sh.clip, "Gradient-norm clip");
        opts.add_flag("positives-only", rh.positives_only, "Fit the regressor on best-vertex samples only");
    }

    void write_model(const std::string& path, const std::string& text, const std::vector<double>& curve,
                     const json& prov) {
        write_text(path, text);
        std::ostringstream os;
        os << "# " << prov.dump() << "\nepoch,loss\n";
        for (std::size_t e = 0; e < curve.size(); ++e) os << e << ',' << format_real(curve[e]) << '\n';
        write_text(path + ".loss.csv", os.str());
    }

    int run() {
        if (data.empty()) throw UsageError("--data is required");
        if (out_selector.empty() && out_regressor.empty())
            throw UsageError("give --out-selector and/or --out-regressor");
        if (!(lr > 0.0)) throw UsageError("--lr must be positive");
        if (!(sh.clip > 0.0)) throw UsageError("--clip must be positive");
        if (sh.batch < 1 || rh.batch < 1) throw UsageError("batch sizes must be at least 1");
        sh.epochs = rh.epochs = epochs;
        sh.lr = rh.lr = lr;
        rh.clip = sh.clip;
        sh.seed = derive_seed(seed, 0);
        rh.seed = derive_seed(seed, 1);

        std::ifstream in(data);
        if (!in) throw UsageError("cannot open '" + data + "'");
        const Dataset ds = read_dataset(in);
        json prov = provenance();
        prov["dataset"] = ds.meta;
        prov["dataset"].erase("provenance");
        if (!out_selector.empty()) {
            auto m = train_selector(ds, sh);
            m.provenance = prov;
            write_model(out_selector, serialize_model(m), m.loss_curve, prov);
            std::cout << "selector loss " << format_real(m.loss_curve.front()) << " -> "
                      << format_real(m.loss_curve.back()) << "\n";
        }
        if (!out_regressor.empty()) {
            auto m = train_regressor(ds, rh);
            m.provenance = prov;
            write_model(out_regressor, serialize_model(m), m.loss_curve, prov);
            std::cout << "regressor loss " << format_real(m.loss_curve.front()) << " -> "
                      << format_real(m.loss_curve.back()) << "\n";
        }
        return 0;
    }
};

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct MethodRow {
    std::string method;
    bool selector = false;
    bool regressor = false;
};

struct BenchCmd : Command {
    CorpusInput corpus;
    SolveFlags flags;
    std::string model_selector, model_regressor;
    std::string out = "bench.csv";
    std::string trace_dir;
    std::string format = "csv";

    explicit BenchCmd(CLI::App& root)
        : Command(root, "bench", "Compare the four selector/regressor configurations on a corpus") {
        corpus.add_to(*this, "held_out");
        flags.add_basic(*this);
        opts.add("model-selector", model_selector, "Selector model JSON");
        opts.add("model-regressor", model_regressor, "Regressor model JSON");
        opts.add("out", out, "Method table");
        opts.add("trace-dir", trace_dir, "Directory for per-method, per-mesh trace CSVs");
        opts.add("format", format, "Table format: csv | json")->check(CLI::IsMember({"csv", "json"}));
        add_jobs();
    }

    int run() {
        std::vector<std::string> missing;
        if (model_selector.empty()) missing.push_back("--model-selector");
        if (model_regressor.empty()) missing.push_back("--model-regressor");
        if (!missing.empty()) {
            std::string names;
            for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
            throw UsageError("bench needs " + names);
        }
        const SolveConfig base = flags.build();
        const auto sel = load_selector(model_selector);
        const auto reg = load_regressor(model_regressor);
        const auto entries = load_corpus(corpus, seed);
        const std::vector<MethodRow> methods{{"microricci", true, true},
                                             {"selector_only", true, false},
                                             {"regressor_only", false, true},
                                             {"greedy", false, false}};
        const json prov = provenance();

        json rows = json::array();
        for (const auto& meth : methods) {
            SolveConfig cfg = base;
            if (meth.regressor) cfg.epsilon_mode = EpsilonMode::learned;
            std::vector<SolveReport> reports(entries.size());
            parallel_for(entries.size(), jobs, [&](std::size_t k) {
                reports[k] = solve_ablation(entries[k].mesh, entries[k].x0, cfg, meth.selector ? &sel : nullptr,
                                            meth.regressor ? &reg : nullptr);
            });
            rows.push_back(summarize(meth, entries, reports));
            if (!trace_dir.empty()) {
                for (std::size_t k = 0; k < entries.size(); ++k) {
                    char file[96];
                    std::snprintf(file, sizeof file, "%s_%03zu.csv", meth.method.c_str(), k);
                    write_text(fs::path(trace_dir) / file, trace_csv_text(reports[k], prov));
                }
            }
        }

        if (format == "json") {
            write_text(out, json{{"provenance", prov}, {"methods", rows}}.dump(2) + "\n");
        } else {
            static const std::vector<std::string> cols{
                "method",     "iter_mean", "iter_std",      "ms_per_iter",   "total_s",           "iter_median",
                "converged",  "ms_matvec", "ms_select",     "ms_regress",    "ms_update",         "curv_std_mean",
                "angle_dev_median_deg",    "area_err_median", "uv_rms_mean"};
            std::ostringstream os;
            os << "# " << prov.dump() << '\n';
            for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
            os << '\n';
            for (const auto& row : rows) {
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    const auto& v = row.at(cols[c]);
                    os << (c ? "," : "");
                    if (v.is_string()) os << v.get<std::string>();
                    else if (v.is_number_float()) os << format_real(v.get<double>());
                    else if (!v.is_null()) os << v.dump();
                }
                os << '\n';
            }
            write_text(out, os.str());
        }
        for (const auto& row : rows)
            std::cout << row.at("method").get<std::string>() << " iter_median=" << row.at("iter_median")
                      << " converged=" << row.at("converged") << "\n";
        return 0;
    }

    /// Learned stages go in ms_select / ms_regress; the greedy argmax and the
    /// fixed or safe step lookup count as part of the update.
    static json summarize(const MethodRow& meth, const std::vector<CorpusEntry>& entries,
                          const std::vector<SolveReport>& reports) {
        std::vector<SolveReport> timed = reports;
        std::size_t converged = 0, total_iters = 0;
        std::vector<double> iters;
        double ns_matvec = 0, ns_select = 0, ns_regress = 0, ns_update = 0;
        double curv_std = 0, angle = 0, area = 0, uv = 0;
        std::size_t n_quality = 0, n_uv = 0;
        for (std::size_t k = 0; k < reports.size(); ++k) {
            auto& st = timed[k].stage_ns;
            for (std::size_t t = 0; t < st.matvec.size(); ++t) {
                if (!meth.selector) {
                    st.update[t] += st.select[t];
                    st.select[t] = 0;
                }
                if (!meth.regressor) {
                    st.update[t] += st.step_predict[t];
                    st.step_predict[t] = 0;
                }
                ns_matvec += static_cast<double>(st.matvec[t]);
                ns_select += static_cast<double>(st.select[t]);
                ns_regress += static_cast<double>(st.step_predict[t]);
                ns_update += static_cast<double>(st.update[t]);
            }
            iters.push_back(static_cast<double>(reports[k].iterations_used));
            total_iters += reports[k].iterations_used;
            if (reports[k].terminated_by == Termination::tolerance) ++converged;
            const json q = quality_or_null(entries[k].mesh, reports[k]);
            if (!q.is_null()) {
                curv_std += q.at("curvature_std").get<double>();
                angle += q.at("angle_dev_median_deg").get<double>();
                area += q.at("area_err_median").get<double>();
                ++n_quality;
                if (!q.at("uv_rms").is_null()) {
                    uv += q.at("uv_rms").get<double>();
                    ++n_uv;
                }
            }
        }
        const auto stats = corpus_stats(timed);
        const double per = total_iters ? 1e-6 / static_cast<double>(total_iters) : 0.0;
        auto mean_or_null = [](double sum, std::size_t n) { return n ? json(sum / static_cast<double>(n)) : json(nullptr); };
        return {{"method", meth.method},
                {"iter_mean", stats.iter_mean},
                {"iter_std", stats.iter_std},
                {"ms_per_iter", stats.ms_per_iter},
                {"total_s", stats.total_s},
                {"iter_median", median(iters)},
                {"converged", converged},
                {"meshes", reports.size()},
                {"ms_matvec", ns_matvec * per},
                {"ms_select", ns_select * per},
                {"ms_regress", ns_regress * per},
                {"ms_update", ns_update * per},
                {"curv_std_mean", mean_or_null(curv_std, n_quality)},
                {"angle_dev_median_deg", mean_or_null(angle, n_quality)},
                {"area_err_median", mean_or_null(area, n_quality)},
                {"uv_rms_mean", mean_or_null(uv, n_uv)},
                {"iterations", iters}};
    }
};

void print_error(const std::string& kind, const std::string& message, json extra = json::object()) {
    json e = {{"kind", kind}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) e[it.key()] = it.value();
    std::cerr << json{{"error", e}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Greedy and self-tuning discrete Ricci-flow solver"};
    app.set_version_flag("--version", std::string(kLibraryVersion));
    app.require_subcommand(1);
    GenCmd gen(app);
    SolveCmd solve(app);
    CollectCmd collect(app);
    TrainCmd train(app);
    BenchCmd bench(app);
    std::vector<std::pair<Command*, std::function<int()>>> cmds{{&gen, [&] { return gen.run(); }},
                                                                {&solve, [&] { return solve.run(); }},
                                                                {&collect, [&] { return collect.run(); }},
                                                                {&train, [&] { return train.run(); }},
                                                                {&bench, [&] { return bench.run(); }}};
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error("usage", e.what());
        return kExitUsage;
    }
    try {
        for (auto& [cmd, run] : cmds) {
            if (!cmd->app->parsed()) continue;
            cmd->resolve();
            return run();
        }
        return kExitUsage;
    } catch (const UsageError& e) {
        print_error("usage", e.what());
        return kExitUsage;
    } catch (const SolveFailed& e) {
        print_error("solver", e.what(), e.detail);
        return kExitRuntime;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return kExitRuntime;
    }
}
