#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/mlp.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

// Shared sequence encoder for the policy and the reward models: a token
// embedding table plus a trunk MLP over the last `window` embeddings
// (positions before the sequence start contribute zero vectors). The trunk
// output is a fixed-width representation of the window ending at a position.
struct BackboneSpec {
    std::size_t vocab_size = 32;
    std::size_t embed_dim = 12;
    std::size_t window = 12;
    std::size_t repr_dim = 24;
    std::vector<std::size_t> trunk_widths = {48};
    Activation activation = Activation::Tanh;

    MlpSpec trunk_spec() const {
        return MlpSpec{window * embed_dim, trunk_widths, repr_dim, activation};
    }

    void validate() const {
        if (vocab_size < 2) throw ConfigError("backbone: vocab_size must be at least 2");
        if (embed_dim == 0 || window == 0 || repr_dim == 0)
            throw ConfigError("backbone: zero dimension");
        trunk_spec().validate();
    }
};

inline void add_backbone_segments(ParamVector& pv, const BackboneSpec& spec) {
    pv.add_segment("embed", {spec.vocab_size, spec.embed_dim});
    pv.add_segment("trunk", {spec.trunk_spec().param_count()});
}

// Embeddings are unit Gaussian; the trunk scales by 1/sqrt(fan_in), keeping
// pre-activations O(1) at init.
inline void init_backbone(const BackboneSpec& spec, ParamVector& pv, const SeedTree& node) {
    RngStream erng = node.child("embed").stream();
    init_gaussian(pv.view("embed"), erng, 1.0);
    init_mlp_params(spec.trunk_spec(), pv.view("trunk"), node.child("trunk"));
}

// Concatenated embeddings of seq[pos-window+1 .. pos], zero-padded on the left.
inline void gather_window(const BackboneSpec& spec, std::span<const double> embed,
                          std::span<const Token> seq, std::size_t pos,
                          std::span<double> out) {
    const std::size_t E = spec.embed_dim;
    for (std::size_t s = 0; s < spec.window; ++s) {
        double* dst = out.data() + s * E;
        // window slot s covers sequence position pos - window + 1 + s
        const std::ptrdiff_t sp =
            static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(spec.window) + 1 +
            static_cast<std::ptrdiff_t>(s);
        if (sp < 0) {
            std::fill(dst, dst + E, 0.0);
        } else {
            const Token tok = seq[static_cast<std::size_t>(sp)];
            if (tok >= spec.vocab_size) throw ConfigError("backbone: token out of range");
            const double* src = embed.data() + static_cast<std::size_t>(tok) * E;
            std::copy(src, src + E, dst);
        }
    }
}

inline void backbone_repr(const BackboneSpec& spec, const ParamVector& params,
                          std::span<const Token> seq, std::size_t pos,
                          std::span<double> repr_out) {
    if (pos >= seq.size()) throw ConfigError("backbone: position past sequence end");
    std::vector<double> win(spec.window * spec.embed_dim);
    gather_window(spec, params.view("embed"), seq, pos, win);
    mlp_forward_span(spec.trunk_spec(), params.view("trunk"), win, repr_out);
}

// Accumulates d<cotangent, repr>/d(params) into grad's "embed" and "trunk"
// segments. grad must share the layout of params.
inline void backbone_backward(const BackboneSpec& spec, const ParamVector& params,
                              std::span<const Token> seq, std::size_t pos,
                              std::span<const double> repr_cotangent, ParamVector& grad) {
    if (pos >= seq.size()) throw ConfigError("backbone: position past sequence end");
    const std::size_t E = spec.embed_dim;
    std::vector<double> win(spec.window * E);
    gather_window(spec, params.view("embed"), seq, pos, win);

    std::vector<double> win_grad(win.size(), 0.0);
    mlp_backward_span(spec.trunk_spec(), params.view("trunk"), win, repr_cotangent,
                      grad.view("trunk"), win_grad);

    std::span<double> eg = grad.view("embed");
    for (std::size_t s = 0; s < spec.window; ++s) {
        const std::ptrdiff_t sp =
            static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(spec.window) + 1 +
            static_cast<std::ptrdiff_t>(s);
        if (sp < 0) continue;
        const Token tok = seq[static_cast<std::size_t>(sp)];
        double* dst = eg.data() + static_cast<std::size_t>(tok) * E;
        const double* src = win_grad.data() + s * E;
        for (std::size_t i = 0; i < E; ++i) dst[i] += src[i];
    }
}

}  // namespace rlhflab
