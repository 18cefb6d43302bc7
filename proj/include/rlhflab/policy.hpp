#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "rlhflab/backbone.hpp"
#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/mlp.hpp"
#include "rlhflab/optimizer.hpp"
#include "rlhflab/param_vector.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

// Autoregressive token policy: backbone representation of the context window,
// then a linear unembedding to vocabulary logits. The highest token id is the
// end-of-response marker.
struct PolicyArch {
    BackboneSpec backbone;
    std::size_t max_response_len = 12;

    Token terminator() const { return static_cast<Token>(backbone.vocab_size - 1); }

    void validate() const {
        backbone.validate();
        if (max_response_len == 0) throw ConfigError("policy: max_response_len must be positive");
    }
};

inline ParamVector make_policy_params(const PolicyArch& arch) {
    ParamVector pv;
    add_backbone_segments(pv, arch.backbone);
    pv.add_segment("unembed_w", {arch.backbone.vocab_size, arch.backbone.repr_dim});
    pv.add_segment("unembed_b", {arch.backbone.vocab_size});
    return pv;
}

// Small unembedding weights keep initial logits near zero, so the untrained
// policy is close to uniform over the vocabulary.
inline void init_policy_params(const PolicyArch& arch, ParamVector& pv, const SeedTree& node) {
    init_backbone(arch.backbone, pv, node.child("backbone"));
    RngStream urng = node.child("unembed").stream();
    init_gaussian(pv.view("unembed_w"), urng,
                  0.1 / std::sqrt(static_cast<double>(arch.backbone.repr_dim)));
    // unembed_b stays zero
}

// Everything the update rules need about one generation step.
struct StepEval {
    std::vector<double> repr;
    std::vector<double> logits;
    std::vector<double> probs;
};

// Evaluates the next-token distribution after the last token of `context`.
inline StepEval eval_step(const PolicyArch& arch, const ParamVector& params,
                          std::span<const Token> context) {
    if (context.empty()) throw ConfigError("policy: empty context");
    const std::size_t V = arch.backbone.vocab_size;
    const std::size_t R = arch.backbone.repr_dim;

    StepEval ev;
    ev.repr.assign(R, 0.0);
    backbone_repr(arch.backbone, params, context, context.size() - 1, ev.repr);

    ev.logits.assign(V, 0.0);
    affine_forward(params.view("unembed_w"), params.view("unembed_b"), ev.repr, ev.logits);
    ev.probs = softmax(ev.logits);
    return ev;
}

inline std::vector<double> next_token_dist(const PolicyArch& arch, const ParamVector& params,
                                           std::span<const Token> context) {
    return eval_step(arch, params, context).probs;
}

// Accumulates d<cotangent, logits>/d(params) into grad. `repr` must be the
// representation eval_step computed for this context.
inline void step_backward(const PolicyArch& arch, const ParamVector& params,
                          std::span<const Token> context, std::span<const double> repr,
                          std::span<const double> logit_cotangent, ParamVector& grad) {
    const std::size_t V = arch.backbone.vocab_size;
    const std::size_t R = arch.backbone.repr_dim;
    if (logit_cotangent.size() != V) throw ConfigError("policy: cotangent size mismatch");

    std::span<const double> w = params.view("unembed_w");
    std::span<double> gw = grad.view("unembed_w");
    std::span<double> gb = grad.view("unembed_b");
    std::vector<double> d_repr(R, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
        const double c = logit_cotangent[v];
        if (c == 0.0) continue;
        const double* wrow = w.data() + v * R;
        double* grow = gw.data() + v * R;
        for (std::size_t i = 0; i < R; ++i) {
            grow[i] += c * repr[i];
            d_repr[i] += c * wrow[i];
        }
        gb[v] += c;
    }
    backbone_backward(arch.backbone, params, context, context.size() - 1, d_repr, grad);
}

// Draws from the k most probable tokens, probabilities renormalized over that
// set. Equal probabilities at the cutoff resolve toward lower token ids, so
// k = 1 is deterministic greedy decoding and consumes no randomness.
inline Token topk_sample(std::span<const double> dist, std::size_t k, RngStream& rng) {
    if (k == 0) throw ConfigError("topk_sample: k must be positive");
    const std::size_t V = dist.size();
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] > dist[b];
        return a < b;
    });
    const std::size_t kk = std::min(k, V);
    if (kk == 1) return static_cast<Token>(order[0]);

    double total = 0.0;
    for (std::size_t i = 0; i < kk; ++i) total += dist[order[i]];
    if (!(total > 0.0)) throw ConfigError("topk_sample: degenerate distribution");

    const double u = rng.uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < kk; ++i) {
        acc += dist[order[i]];
        if (u < acc) return static_cast<Token>(order[i]);
    }
    return static_cast<Token>(order[kk - 1]);
}

// A sampled continuation. `tokens` holds the content; the end marker, when
// drawn, is recorded via `terminated` rather than stored.
struct Response {
    TokenSeq tokens;
    bool terminated = false;

    // Sampling steps taken, including the terminating draw.
    std::size_t num_steps() const { return tokens.size() + (terminated ? 1 : 0); }
    bool operator==(const Response&) const = default;
};

// Tokens as the policy emitted them, end marker included.
inline TokenSeq emitted_tokens(const PolicyArch& arch, const Response& r) {
    TokenSeq out = r.tokens;
    if (r.terminated) out.push_back(arch.terminator());
    return out;
}

inline TokenSeq full_sequence(std::span<const Token> prompt, const PolicyArch& arch,
                              const Response& r) {
    TokenSeq seq(prompt.begin(), prompt.end());
    const TokenSeq em = emitted_tokens(arch, r);
    seq.insert(seq.end(), em.begin(), em.end());
    return seq;
}

inline Response generate(const PolicyArch& arch, const ParamVector& params,
                         std::span<const Token> prompt, std::size_t sample_k, RngStream& rng) {
    Response r;
    TokenSeq ctx(prompt.begin(), prompt.end());
    for (std::size_t step = 0; step < arch.max_response_len; ++step) {
        const std::vector<double> dist = next_token_dist(arch, params, ctx);
        const Token tok = topk_sample(dist, sample_k, rng);
        if (tok == arch.terminator()) {
            r.terminated = true;
            break;
        }
        r.tokens.push_back(tok);
        ctx.push_back(tok);
    }
    return r;
}

// Deterministic argmax decoding (logit ties toward lower token ids).
inline Response generate_greedy(const PolicyArch& arch, const ParamVector& params,
                                std::span<const Token> prompt) {
    RngStream never_drawn(0);
    return generate(arch, params, prompt, 1, never_drawn);
}

// Log probability of the response under the full next-token distributions
// (not the truncated sampling distribution), summed over emitted tokens.
inline double response_logprob(const PolicyArch& arch, const ParamVector& params,
                               std::span<const Token> prompt, const Response& r) {
    double lp = 0.0;
    TokenSeq ctx(prompt.begin(), prompt.end());
    for (Token tok : emitted_tokens(arch, r)) {
        const StepEval ev = eval_step(arch, params, ctx);
        lp += ev.logits[tok] - log_sum_exp(ev.logits);
        ctx.push_back(tok);
    }
    return lp;
}

// Log probability plus its parameter gradient, accumulated into `grad`.
inline double logprob_and_grad(const PolicyArch& arch, const ParamVector& params,
                               std::span<const Token> prompt, const Response& r,
                               ParamVector& grad) {
    double lp = 0.0;
    TokenSeq ctx(prompt.begin(), prompt.end());
    std::vector<double> cot(arch.backbone.vocab_size);
    for (Token tok : emitted_tokens(arch, r)) {
        const StepEval ev = eval_step(arch, params, ctx);
        lp += ev.logits[tok] - log_sum_exp(ev.logits);
        for (std::size_t v = 0; v < cot.size(); ++v) cot[v] = -ev.probs[v];
        cot[tok] += 1.0;
        step_backward(arch, params, ctx, ev.repr, cot, grad);
        ctx.push_back(tok);
    }
    return lp;
}

// Arch plus parameters, for callers that want one handle.
struct TokenPolicy {
    PolicyArch arch;
    ParamVector params;

    static TokenPolicy create(const PolicyArch& arch, const SeedTree& node) {
        TokenPolicy p;
        p.arch = arch;
        p.params = make_policy_params(arch);
        init_policy_params(arch, p.params, node);
        return p;
    }

    Response sample(std::span<const Token> prompt, std::size_t sample_k, RngStream& rng) const {
        return generate(arch, params, prompt, sample_k, rng);
    }
};

}  // namespace rlhflab
