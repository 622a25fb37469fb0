#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "microricci/checksum.hpp"
#include "microricci/features.hpp"
#include "microricci/mlp.hpp"

namespace microricci {

inline constexpr int kModelFormatVersion = 1;

inline const std::vector<std::size_t>& default_selector_dims() {
    static const std::vector<std::size_t> dims{kSelectorFeatureDim, 32, 24, 1};
    return dims;
}
inline const std::vector<std::size_t>& default_regressor_dims() {
    static const std::vector<std::size_t> dims{kRegressorFeatureDim, 16, 8, 1};
    return dims;
}

/// Per-input affine map (v − shift) / scale applied before the network.
struct InputNormalizer {
    std::vector<double> shift;
    std::vector<double> scale;

    static InputNormalizer identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

    /// Mean and population std of each column; constant columns keep scale 1.
    static InputNormalizer fit(const std::vector<std::vector<double>>& rows, std::size_t dim) {
        InputNormalizer n = identity(dim);
        if (rows.empty()) return n;
        for (std::size_t c = 0; c < dim; ++c) {
            double mean = 0.0;
            for (const auto& r : rows) mean += r[c];
            mean /= static_cast<double>(rows.size());
            double var = 0.0;
            for (const auto& r : rows) var += (r[c] - mean) * (r[c] - mean);
            double sd = std::sqrt(var / static_cast<double>(rows.size()));
            n.shift[c] = mean;
            n.scale[c] = sd > 1e-12 ? sd : 1.0;
        }
        return n;
    }

    void apply(std::span<double> v) const {
        for (std::size_t c = 0; c < v.size(); ++c) v[c] = (v[c] - shift[c]) / scale[c];
    }

    friend bool operator==(const InputNormalizer&, const InputNormalizer&) = default;
};

/// Network input of the selector: the five residual features divided by
/// ‖s‖∞ so scores do not drift as the residual shrinks, flipped so that
/// s_i ≥ 0, then normalized. Negating s negates every feature but deg(i) and
/// leaves the best vertex unchanged, so the flip builds that symmetry in.
inline std::array<double, kSelectorFeatureDim> selector_network_input(const SelectorFeatures& f, double s_inf,
                                                                      const InputNormalizer& norm) {
    std::array<double, kSelectorFeatureDim> in = f;
    double inv = s_inf > 0.0 ? 1.0 / s_inf : 0.0;
    if (f[0] < 0.0) inv = -inv;
    for (std::size_t c = 0; c < 5; ++c) in[c] *= inv;
    if (f[0] < 0.0) in[6] = -in[6];
    norm.apply(in);
    return in;
}

/// Fixed part of the selector score, log(|s_i| / ‖s‖∞). With a zero network
/// output the selector is exactly greedy argmax, and a vertex with s_i = 0
/// (whose update cannot change anything) is never preferred.
inline double selector_prior(double s_i, double s_inf) {
    const double r = s_inf > 0.0 ? std::abs(s_i) / s_inf : 0.0;
    return std::log(std::max(r, std::numeric_limits<double>::min()));
}

inline std::array<double, kRegressorFeatureDim> regressor_network_input(const RegressorFeatures& g,
                                                                        const InputNormalizer& norm) {
    std::array<double, kRegressorFeatureDim> in = g;
    norm.apply(in);
    return in;
}

struct SelectorModel {
    Mlp mlp;
    InputNormalizer norm;
    int feature_spec_version = kFeatureSpecVersion;
    std::vector<double> loss_curve;
    nlohmann::json provenance = nlohmann::json::object();

    static SelectorModel initialized(std::uint64_t seed, std::vector<std::size_t> dims = default_selector_dims()) {
        SelectorModel m;
        m.mlp = Mlp::initialized(std::move(dims), seed);
        m.norm = InputNormalizer::identity(kSelectorFeatureDim);
        return m;
    }

    [[nodiscard]] double score(const SelectorFeatures& f, double s_inf, Mlp::Workspace& ws) const {
        auto in = selector_network_input(f, s_inf, norm);
        return selector_prior(f[0], s_inf) + mlp.forward_scalar(in, ws);
    }
};

struct RegressorModel {
    Mlp mlp;
    InputNormalizer norm;
    int feature_spec_version = kFeatureSpecVersion;
    double eps_max = 0.0;
    std::vector<double> loss_curve;
    nlohmann::json provenance = nlohmann::json::object();

    static RegressorModel initialized(std::uint64_t seed, double eps_max,
                                      std::vector<std::size_t> dims = default_regressor_dims()) {
        RegressorModel m;
        m.mlp = Mlp::initialized(std::move(dims), seed);
        m.norm = InputNormalizer::identity(kRegressorFeatureDim);
        m.eps_max = eps_max;
        return m;
    }

    [[nodiscard]] double predict_raw(const RegressorFeatures& g, Mlp::Workspace& ws) const {
        auto in = regressor_network_input(g, norm);
        return mlp.forward_scalar(in, ws);
    }

    /// Prediction clipped to [0, eps_max].
    [[nodiscard]] double predict(const RegressorFeatures& g, Mlp::Workspace& ws) const {
        double e = predict_raw(g, ws);
        if (!(e > 0.0)) return 0.0;
        return std::min(e, eps_max);
    }
};

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string real_array(std::span<const double> v) {
    std::string out = "[";
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) out += ", ";
        out += format_real(v[k]);
    }
    return out + "]";
}

inline void check_finite(const Mlp& mlp) {
    for (std::size_t k = 0; k < mlp.num_layers(); ++k) {
        for (double w : mlp.weights(k))
            if (!std::isfinite(w)) throw Error("refusing to save a model with non-finite weights");
        for (double b : mlp.biases(k))
            if (!std::isfinite(b)) throw Error("refusing to save a model with non-finite biases");
    }
}

inline std::string model_text(const std::string& kind, const Mlp& mlp, const InputNormalizer& norm,
                              int feature_spec_version, double eps_max, const std::vector<double>& loss_curve,
                              const nlohmann::json& provenance) {
    check_finite(mlp);
    std::ostringstream os;
    os << "{\n";
    os << "\"format_version\": " << kModelFormatVersion << ",\n";
    os << "\"model\": \"" << kind << "\",\n";
    os << "\"feature_spec_version\": " << feature_spec_version << ",\n";
    os << "\"activation\": \"tanh\",\n";
    os << "\"eps_max\": " << format_real(eps_max) << ",\n";
    os << "\"layer_dims\": [";
    for (std::size_t k = 0; k < mlp.dims().size(); ++k) os << (k ? ", " : "") << mlp.dims()[k];
    os << "],\n";
    os << "\"param_count\": " << mlp.param_count() << ",\n";
    os << "\"input_shift\": " << real_array(norm.shift) << ",\n";
    os << "\"input_scale\": " << real_array(norm.scale) << ",\n";
    os << "\"weights\": [\n";
    for (std::size_t k = 0; k < mlp.num_layers(); ++k) {
        const std::size_t rows = mlp.dims()[k + 1], cols = mlp.dims()[k];
        os << "  [\n";
        for (std::size_t r = 0; r < rows; ++r) {
            os << "    " << real_array(std::span<const double>(mlp.weights(k).data() + r * cols, cols))
               << (r + 1 < rows ? ",\n" : "\n");
        }
        os << "  ]" << (k + 1 < mlp.num_layers() ? ",\n" : "\n");
    }
    os << "],\n";
    os << "\"biases\": [\n";
    for (std::size_t k = 0; k < mlp.num_layers(); ++k)
        os << "  " << real_array(mlp.biases(k)) << (k + 1 < mlp.num_layers() ? ",\n" : "\n");
    os << "],\n";
    os << "\"loss_curve\": " << real_array(loss_curve) << ",\n";
    os << "\"provenance\": " << provenance.dump() << ",\n";
    std::string body = os.str();
    return body + "\"checksum\": \"" + checksum_string(body) + "\"\n}\n";
}

struct ParsedModel {
    std::string kind;
    Mlp mlp;
    InputNormalizer norm;
    int feature_spec_version = 0;
    double eps_max = 0.0;
    std::vector<double> loss_curve;
    nlohmann::json provenance;
};

inline ParsedModel parse_model_text(const std::string& text) {
    static const std::string marker = "\"checksum\": \"";
    auto pos = text.rfind("\n" + marker);
    if (pos == std::string::npos) throw ChecksumError("model file has no checksum (truncated?)");
    const std::string body = text.substr(0, pos + 1);
    auto start = pos + 1 + marker.size();
    auto end = text.find('"', start);
    if (end == std::string::npos) throw ChecksumError("model file checksum is truncated");
    if (text.substr(start, end - start) != checksum_string(body)) throw ChecksumError("model file checksum mismatch");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion)
            throw VersionError("model format_version " + j.at("format_version").dump() + " is not supported (expected " +
                               std::to_string(kModelFormatVersion) + ")");
        ParsedModel m;
        m.feature_spec_version = j.at("feature_spec_version").get<int>();
        if (m.feature_spec_version != kFeatureSpecVersion)
            throw VersionError("model feature_spec_version " + std::to_string(m.feature_spec_version) +
                               " does not match the library's " + std::to_string(kFeatureSpecVersion));
        if (j.at("activation").get<std::string>() != "tanh")
            throw VersionError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
        m.kind = j.at("model").get<std::string>();
        m.eps_max = j.at("eps_max").get<double>();
        auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        m.mlp = Mlp::zeros(dims);
        const auto& w = j.at("weights");
        const auto& b = j.at("biases");
        if (w.size() != m.mlp.num_layers() || b.size() != m.mlp.num_layers())
            throw DimensionError("model layer count does not match layer_dims");
        for (std::size_t k = 0; k < m.mlp.num_layers(); ++k) {
            const std::size_t rows = dims[k + 1], cols = dims[k];
            if (w[k].size() != rows) throw DimensionError("weight block " + std::to_string(k) + " has wrong row count");
            for (std::size_t r = 0; r < rows; ++r) {
                auto row = w[k][r].get<std::vector<double>>();
                if (row.size() != cols) throw DimensionError("weight row has wrong length");
                std::copy(row.begin(), row.end(), m.mlp.weights(k).begin() + static_cast<std::ptrdiff_t>(r * cols));
            }
            auto bias = b[k].get<std::vector<double>>();
            if (bias.size() != rows) throw DimensionError("bias vector has wrong length");
            m.mlp.biases(k) = bias;
        }
        m.norm.shift = j.at("input_shift").get<std::vector<double>>();
        m.norm.scale = j.at("input_scale").get<std::vector<double>>();
        if (m.norm.shift.size() != dims.front() || m.norm.scale.size() != dims.front())
            throw DimensionError("input normalizer does not match the input dimension");
        m.loss_curve = j.at("loss_curve").get<std::vector<double>>();
        m.provenance = j.value("provenance", nlohmann::json::object());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("model file is missing a field: ") + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string serialize_model(const SelectorModel& m) {
    return detail::model_text("selector", m.mlp, m.norm, m.feature_spec_version, 0.0, m.loss_curve, m.provenance);
}
inline std::string serialize_model(const RegressorModel& m) {
    return detail::model_text("regressor", m.mlp, m.norm, m.feature_spec_version, m.eps_max, m.loss_curve,
                              m.provenance);
}

inline SelectorModel parse_selector(const std::string& text) {
    auto p = detail::parse_model_text(text);
    if (p.kind != "selector") throw Error("expected a selector model, found '" + p.kind + "'");
    if (p.mlp.input_dim() != kSelectorFeatureDim || p.mlp.output_dim() != 1)
        throw DimensionError("selector network must map 7 inputs to 1 output");
    SelectorModel m;
    m.mlp = std::move(p.mlp);
    m.norm = std::move(p.norm);
    m.feature_spec_version = p.feature_spec_version;
    m.loss_curve = std::move(p.loss_curve);
    m.provenance = std::move(p.provenance);
    return m;
}

inline RegressorModel parse_regressor(const std::string& text) {
    auto p = detail::parse_model_text(text);
    if (p.kind != "regressor") throw Error("expected a regressor model, found '" + p.kind + "'");
    if (p.mlp.input_dim() != kRegressorFeatureDim || p.mlp.output_dim() != 1)
        throw DimensionError("regressor network must map 2 inputs to 1 output");
    if (!(p.eps_max > 0.0)) throw Error("regressor eps_max must be positive");
    RegressorModel m;
    m.mlp = std::move(p.mlp);
    m.norm = std::move(p.norm);
    m.feature_spec_version = p.feature_spec_version;
    m.eps_max = p.eps_max;
    m.loss_curve = std::move(p.loss_curve);
    m.provenance = std::move(p.provenance);
    return m;
}

inline void save_model(const SelectorModel& m, const std::string& path) { detail::write_file(path, serialize_model(m)); }
inline void save_model(const RegressorModel& m, const std::string& path) { detail::write_file(path, serialize_model(m)); }
inline SelectorModel load_selector(const std::string& path) { return parse_selector(detail::read_file(path)); }
inline RegressorModel load_regressor(const std::string& path) { return parse_regressor(detail::read_file(path)); }

}  // namespace microricci
