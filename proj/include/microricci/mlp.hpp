#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "microricci/errors.hpp"

namespace microricci {

/// Fully connected network, tanh between layers, identity at the output.
/// Layer k maps dims[k] → dims[k+1] with a row-major dims[k+1] × dims[k]
/// weight block.
class Mlp {
public:
    Mlp() = default;

    static Mlp initialized(std::vector<std::size_t> dims, std::uint64_t seed) {
        Mlp m(std::move(dims));
        std::mt19937_64 rng(seed);
        for (std::size_t k = 0; k + 2 < m.dims_.size(); ++k) {
            double bound = std::sqrt(6.0 / static_cast<double>(m.dims_[k] + m.dims_[k + 1]));
            std::uniform_real_distribution<double> uni(-bound, bound);
            for (auto& w : m.weights_[k]) w = uni(rng);
        }
        return m;
    }

    /// Zero parameters with the given shape.
    static Mlp zeros(std::vector<std::size_t> dims) { return Mlp(std::move(dims)); }

    [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t num_layers() const noexcept { return weights_.size(); }
    [[nodiscard]] std::size_t input_dim() const noexcept { return dims_.front(); }
    [[nodiscard]] std::size_t output_dim() const noexcept { return dims_.back(); }
    [[nodiscard]] std::vector<double>& weights(std::size_t k) noexcept { return weights_[k]; }
    [[nodiscard]] const std::vector<double>& weights(std::size_t k) const noexcept { return weights_[k]; }
    [[nodiscard]] std::vector<double>& biases(std::size_t k) noexcept { return biases_[k]; }
    [[nodiscard]] const std::vector<double>& biases(std::size_t k) const noexcept { return biases_[k]; }

    [[nodiscard]] std::size_t param_count() const noexcept {
        std::size_t n = 0;
        for (std::size_t k = 0; k + 1 < dims_.size(); ++k) n += dims_[k] * dims_[k + 1] + dims_[k + 1];
        return n;
    }

    /// Scratch buffers for allocation-free forward passes.
    struct Workspace {
        std::vector<std::vector<double>> act;  // act[0] = input, act[L] = output
    };

    [[nodiscard]] Workspace workspace() const {
        Workspace ws;
        ws.act.resize(dims_.size());
        for (std::size_t k = 0; k < dims_.size(); ++k) ws.act[k].resize(dims_[k]);
        return ws;
    }

    /// Runs the network, leaving every layer's activation in ws.
    void forward(std::span<const double> in, Workspace& ws) const {
        if (in.size() != input_dim()) throw DimensionError("mlp input dimension mismatch");
        std::copy(in.begin(), in.end(), ws.act[0].begin());
        const std::size_t layers = num_layers();
        for (std::size_t k = 0; k < layers; ++k) {
            const auto& w = weights_[k];
            const auto& b = biases_[k];
            const auto& a = ws.act[k];
            auto& z = ws.act[k + 1];
            const std::size_t rows = dims_[k + 1], cols = dims_[k];
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = b[r];
                const double* wr = w.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * a[c];
                z[r] = k + 1 < layers ? std::tanh(acc) : acc;
            }
        }
    }

    [[nodiscard]] double forward_scalar(std::span<const double> in, Workspace& ws) const {
        forward(in, ws);
        return ws.act.back()[0];
    }

    [[nodiscard]] double forward_scalar(std::span<const double> in) const {
        auto ws = workspace();
        return forward_scalar(in, ws);
    }

    /// Gradient buffers shaped like the parameters.
    struct Gradient {
        std::vector<std::vector<double>> w;
        std::vector<std::vector<double>> b;

        void zero() {
            for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
            for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
        }
        [[nodiscard]] double norm() const {
            double acc = 0.0;
            for (const auto& v : w)
                for (double g : v) acc += g * g;
            for (const auto& v : b)
                for (double g : v) acc += g * g;
            return std::sqrt(acc);
        }
    };

    [[nodiscard]] Gradient gradient_buffer() const {
        Gradient g;
        for (std::size_t k = 0; k < num_layers(); ++k) {
            g.w.emplace_back(weights_[k].size(), 0.0);
            g.b.emplace_back(biases_[k].size(), 0.0);
        }
        return g;
    }

    /// Accumulates d(out·dout)/dθ into grad, using activations from the
    /// forward pass that filled ws. `delta` is scratch.
    void backward(const Workspace& ws, std::span<const double> dout, Gradient& grad,
                  std::vector<std::vector<double>>& delta) const {
        const std::size_t layers = num_layers();
        delta.resize(dims_.size());
        delta[layers].assign(dout.begin(), dout.end());
        for (std::size_t k = layers; k-- > 0;) {
            const std::size_t rows = dims_[k + 1], cols = dims_[k];
            const auto& a = ws.act[k];
            const auto& d = delta[k + 1];
            auto& gw = grad.w[k];
            auto& gb = grad.b[k];
            for (std::size_t r = 0; r < rows; ++r) {
                gb[r] += d[r];
                double* gwr = gw.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) gwr[c] += d[r] * a[c];
            }
            if (k == 0) break;
            auto& dn = delta[k];
            dn.assign(cols, 0.0);
            const auto& w = weights_[k];
            for (std::size_t r = 0; r < rows; ++r) {
                const double* wr = w.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) dn[c] += wr[c] * d[r];
            }
            for (std::size_t c = 0; c < cols; ++c) dn[c] *= 1.0 - a[c] * a[c];  // tanh'
        }
    }

    /// θ ← θ − lr · g · min(1, clip/‖g‖).
    void sgd_step(const Gradient& g, double lr, double clip) {
        double n = g.norm();
        double scale = (clip > 0.0 && n > clip) ? clip / n : 1.0;
        for (std::size_t k = 0; k < num_layers(); ++k) {
            for (std::size_t j = 0; j < weights_[k].size(); ++j) weights_[k][j] -= lr * scale * g.w[k][j];
            for (std::size_t j = 0; j < biases_[k].size(); ++j) biases_[k][j] -= lr * scale * g.b[k][j];
        }
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    explicit Mlp(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.size() < 2) throw DimensionError("mlp needs at least an input and an output layer");
        for (auto d : dims_)
            if (d == 0) throw DimensionError("mlp layer width must be positive");
        for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
            weights_.emplace_back(dims_[k] * dims_[k + 1], 0.0);
            biases_.emplace_back(dims_[k + 1], 0.0);
        }
    }

    std::vector<std::size_t> dims_;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> biases_;
};

}  // namespace microricci
