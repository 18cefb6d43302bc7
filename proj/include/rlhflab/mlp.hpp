#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

enum class Activation { Tanh, Identity };

inline const char* activation_name(Activation a) {
    return a == Activation::Tanh ? "tanh" : "identity";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation: " + s);
}

// Dense feed-forward network: hidden layers use the configured smooth
// nonlinearity, the output layer is linear. Zero hidden layers = affine map.
struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_widths;
    std::size_t output_dim = 1;
    Activation activation = Activation::Tanh;

    // (in, out) per affine layer, in order.
    std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const {
        std::vector<std::pair<std::size_t, std::size_t>> dims;
        std::size_t in = input_dim;
        for (std::size_t w : hidden_widths) {
            dims.emplace_back(in, w);
            in = w;
        }
        dims.emplace_back(in, output_dim);
        return dims;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (auto [in, out] : layer_dims()) n += in * out + out;
        return n;
    }

    void validate() const {
        if (input_dim == 0 || output_dim == 0) throw ConfigError("MlpSpec: zero dimension");
        for (std::size_t w : hidden_widths) {
            if (w == 0) throw ConfigError("MlpSpec: zero hidden width");
        }
    }
};

namespace detail {

inline double apply_act(Activation a, double x) {
    return a == Activation::Tanh ? std::tanh(x) : x;
}
// Derivative expressed through the activated value y = act(x).
inline double act_grad_from_y(Activation a, double y) {
    return a == Activation::Tanh ? 1.0 - y * y : 1.0;
}

}  // namespace detail

// y = W x + b with W row-major [out, in].
inline void affine_forward(std::span<const double> w, std::span<const double> b,
                           std::span<const double> x, std::span<double> y) {
    const std::size_t out = b.size();
    const std::size_t in = x.size();
    for (std::size_t o = 0; o < out; ++o) {
        const double* row = w.data() + o * in;
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Params for the whole MLP live in one contiguous span, ordered W0,b0,W1,b1,...
inline void mlp_forward_span(const MlpSpec& spec, std::span<const double> params,
                             std::span<const double> input, std::span<double> output) {
    if (input.size() != spec.input_dim) throw ConfigError("mlp_forward: input dim mismatch");
    if (output.size() != spec.output_dim) throw ConfigError("mlp_forward: output dim mismatch");
    if (params.size() != spec.param_count()) throw ConfigError("mlp_forward: param count mismatch");

    const auto dims = spec.layer_dims();
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    std::size_t off = 0;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        const auto [in, out] = dims[l];
        next.assign(out, 0.0);
        affine_forward(params.subspan(off, in * out), params.subspan(off + in * out, out),
                       cur, next);
        off += in * out + out;
        const bool hidden = l + 1 < dims.size();
        if (hidden) {
            for (double& v : next) v = detail::apply_act(spec.activation, v);
        }
        cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), output.begin());
}

// Gradients of <cotangent, mlp(input)> w.r.t. params and input.
// Accumulates into param_grad / input_grad so callers can sum over positions.
inline void mlp_backward_span(const MlpSpec& spec, std::span<const double> params,
                              std::span<const double> input, std::span<const double> cotangent,
                              std::span<double> param_grad, std::span<double> input_grad) {
    if (input.size() != spec.input_dim) throw ConfigError("mlp_backward: input dim mismatch");
    if (cotangent.size() != spec.output_dim) throw ConfigError("mlp_backward: cotangent dim mismatch");
    if (params.size() != spec.param_count() || param_grad.size() != spec.param_count())
        throw ConfigError("mlp_backward: param count mismatch");

    const auto dims = spec.layer_dims();
    const std::size_t L = dims.size();

    // Forward pass, keeping post-activation values per layer.
    std::vector<std::vector<double>> acts(L + 1);
    acts[0].assign(input.begin(), input.end());
    std::size_t off = 0;
    std::vector<std::size_t> offsets(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto [in, out] = dims[l];
        offsets[l] = off;
        acts[l + 1].assign(out, 0.0);
        affine_forward(params.subspan(off, in * out), params.subspan(off + in * out, out),
                       acts[l], acts[l + 1]);
        off += in * out + out;
        if (l + 1 < L) {
            for (double& v : acts[l + 1]) v = detail::apply_act(spec.activation, v);
        }
    }

    // Backward pass.
    std::vector<double> delta(cotangent.begin(), cotangent.end());
    std::vector<double> prev_delta;
    for (std::size_t l = L; l-- > 0;) {
        const auto [in, out] = dims[l];
        const std::size_t woff = offsets[l];
        const std::size_t boff = woff + in * out;
        const std::vector<double>& x = acts[l];

        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            double* grow = param_grad.data() + woff + o * in;
            for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
            param_grad[boff + o] += d;
        }

        prev_delta.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            const double* row = params.data() + woff + o * in;
            for (std::size_t i = 0; i < in; ++i) prev_delta[i] += d * row[i];
        }
        if (l > 0) {
            // Chain through the activation of layer l-1's output.
            for (std::size_t i = 0; i < in; ++i) {
                prev_delta[i] *= detail::act_grad_from_y(spec.activation, x[i]);
            }
        }
        delta.swap(prev_delta);
    }
    // An empty input_grad skips input accumulation (parameters-only callers).
    if (!input_grad.empty()) {
        if (input_grad.size() != spec.input_dim)
            throw ConfigError("mlp_backward: input grad dim mismatch");
        for (std::size_t i = 0; i < spec.input_dim; ++i) input_grad[i] += delta[i];
    }
}

// Convenience wrappers over a ParamVector holding exactly this MLP
// (single segment "mlp" or the full flat array).
inline std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                       std::span<const double> input) {
    std::vector<double> out(spec.output_dim, 0.0);
    mlp_forward_span(spec, params.flat(), input, out);
    return out;
}

inline std::pair<ParamVector, std::vector<double>> mlp_backward(
    const MlpSpec& spec, const ParamVector& params, std::span<const double> input,
    std::span<const double> cotangent) {
    ParamVector pg = params.zeros_like();
    std::vector<double> ig(spec.input_dim, 0.0);
    mlp_backward_span(spec, params.flat(), input, cotangent, pg.flat(), ig);
    return {std::move(pg), std::move(ig)};
}

// Per-layer scaled Gaussian init: weight stddev 1/sqrt(fan_in), biases zero.
// Each layer draws from its own keyed sub-stream.
inline void init_mlp_params(const MlpSpec& spec, std::span<double> params, const SeedTree& node,
                            double final_layer_gain = 1.0) {
    const auto dims = spec.layer_dims();
    std::size_t off = 0;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        const auto [in, out] = dims[l];
        RngStream rng = node.child("layer").child(l).stream();
        const double gain = (l + 1 == dims.size()) ? final_layer_gain : 1.0;
        const double stddev = gain / std::sqrt(static_cast<double>(in));
        init_gaussian(params.subspan(off, in * out), rng, stddev);
        // biases stay zero
        off += in * out + out;
    }
}

// Numerically stable softmax (max subtraction).
inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw ConfigError("softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// log(sum_i exp(x_i)) with max subtraction.
inline double log_sum_exp(std::span<const double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace rlhflab
