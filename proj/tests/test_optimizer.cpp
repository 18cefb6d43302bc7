#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "rlhflab/errors.hpp"
#include "rlhflab/optimizer.hpp"

using namespace rlhflab;

namespace {
ParamVector single(double value) {
    ParamVector p;
    p.add_segment("x", {1});
    p.view("x")[0] = value;
    return p;
}
}  // namespace

TEST_CASE("one adamw step matches the closed form") {
    AdamWHyper h;
    h.lr = 0.1;
    h.beta1 = 0.9;
    h.beta2 = 0.999;
    h.eps = 1e-8;
    h.weight_decay = 0.01;
    h.clip_norm = 0.0;  // disabled

    ParamVector p = single(2.0);
    ParamVector g = single(0.5);
    OptimizerState st = OptimizerState::like(p);
    adamw_step(p, g, st, h);

    // decay first, then the bias-corrected moment update; after one step the
    // update direction is exactly -lr * sign-ish g / (|g| + eps)
    const double decayed = 2.0 * (1.0 - h.lr * h.weight_decay);
    const double m_hat = 0.5;                      // m/(1-beta1)
    const double v_hat = 0.25;                     // v/(1-beta2)
    const double expect = decayed - h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    CHECK_THAT(p.view("x")[0], Catch::Matchers::WithinAbs(expect, 1e-12));
    CHECK(st.step_count == 1);
}

TEST_CASE("zero gradient leaves only weight decay") {
    AdamWHyper h;
    h.lr = 0.05;
    h.weight_decay = 0.1;
    ParamVector p = single(3.0);
    ParamVector g = single(0.0);
    OptimizerState st = OptimizerState::like(p);
    adamw_step(p, g, st, h);
    CHECK_THAT(p.view("x")[0], Catch::Matchers::WithinAbs(3.0 * (1.0 - 0.05 * 0.1), 1e-12));
}

TEST_CASE("two steps track both moments") {
    AdamWHyper h;
    h.lr = 0.1;
    h.weight_decay = 0.0;
    h.clip_norm = 0.0;
    ParamVector p = single(1.0);
    OptimizerState st = OptimizerState::like(p);

    double m = 0.0, v = 0.0, x = 1.0;
    for (int t = 1; t <= 2; ++t) {
        const double grad = t == 1 ? 0.3 : -0.2;
        ParamVector g = single(grad);
        adamw_step(p, g, st, h);
        m = h.beta1 * m + (1 - h.beta1) * grad;
        v = h.beta2 * v + (1 - h.beta2) * grad * grad;
        const double mh = m / (1 - std::pow(h.beta1, t));
        const double vh = v / (1 - std::pow(h.beta2, t));
        x -= h.lr * mh / (std::sqrt(vh) + h.eps);
    }
    CHECK_THAT(p.view("x")[0], Catch::Matchers::WithinAbs(x, 1e-12));
    CHECK(st.step_count == 2);
}

TEST_CASE("clip rescales to the target norm exactly once") {
    ParamVector g;
    g.add_segment("x", {2});
    g.view("x")[0] = 3.0;
    g.view("x")[1] = 4.0;
    const double pre = clip_global_norm(g, 1.0);
    CHECK_THAT(pre, Catch::Matchers::WithinAbs(5.0, 1e-12));
    CHECK_THAT(g.l2_norm(), Catch::Matchers::WithinAbs(1.0, 1e-12));

    // already within bounds: untouched
    const double pre2 = clip_global_norm(g, 1.0);
    CHECK_THAT(pre2, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(g.l2_norm(), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("non-finite gradients are refused with the segment named") {
    ParamVector g;
    g.add_segment("good", {1});
    g.add_segment("bad", {2});
    g.view("bad")[1] = std::numeric_limits<double>::infinity();
    try {
        clip_global_norm(g, 1.0);
        FAIL("expected UpdateSkipped");
    } catch (const UpdateSkipped& e) {
        CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
}

TEST_CASE("optimizer state layout must match the parameters") {
    ParamVector p = single(1.0);
    ParamVector other;
    other.add_segment("y", {2});
    OptimizerState st = OptimizerState::like(other);
    ParamVector g = single(0.1);
    AdamWHyper h;
    CHECK_THROWS_AS(adamw_step(p, g, st, h), ConfigError);
}
