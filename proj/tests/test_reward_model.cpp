#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rlhflab/errors.hpp"
#include "rlhflab/reward_model.hpp"
#include "rlhflab/rng.hpp"
#include "test_util.hpp"

using namespace rlhflab;
using testutil::tiny_reward_arch;

namespace {
struct Fixture {
    RewardArch arch;
    EnnRewardModel rm;
    TokenSeq prompt{1, 2, 3};
    Response resp;

    explicit Fixture(std::size_t heads = 3, HeadKind head = HeadKind::Linear)
        : arch(tiny_reward_arch(heads, head)),
          rm(make_reward_model(arch, SeedTree(31).child("rm_init"), 0.1)) {
        resp.tokens = {4, 0};
        resp.terminated = true;
    }
};
}  // namespace

TEST_CASE("epistemic index zero reproduces the point estimate bit for bit") {
    Fixture f;
    const double base = reward(f.rm, f.prompt, f.resp, 0);
    const HeadRewards hr = all_rewards(f.rm, f.prompt, f.resp);
    CHECK(base == hr.base);
    const PooledRepr pr = pooled_repr(f.arch.backbone, f.rm.base, f.prompt, f.resp);
    CHECK(index_reward_from_repr(f.rm, pr.repr, 0) == base_reward_from_repr(f.rm, pr.repr));
}

TEST_CASE("index heads perturb the point estimate") {
    Fixture f;
    const double base = reward(f.rm, f.prompt, f.resp, 0);
    bool any_diff = false;
    for (std::size_t z = 1; z <= f.arch.num_index_heads; ++z)
        any_diff = any_diff || reward(f.rm, f.prompt, f.resp, z) != base;
    CHECK(any_diff);
    CHECK_THROWS_AS(reward(f.rm, f.prompt, f.resp, f.arch.num_index_heads + 1), ConfigError);
}

TEST_CASE("all_rewards agrees with per-index calls") {
    Fixture f;
    const HeadRewards hr = all_rewards(f.rm, f.prompt, f.resp);
    REQUIRE(hr.index.size() == f.arch.num_index_heads);
    for (std::size_t z = 1; z <= f.arch.num_index_heads; ++z)
        CHECK(hr.index[z - 1] == reward(f.rm, f.prompt, f.resp, z));
}

TEST_CASE("prior scale moves index rewards away from the base") {
    RewardArch arch = tiny_reward_arch(2);
    arch.prior_scale = 0.0;
    EnnRewardModel rm = make_reward_model(arch, SeedTree(31).child("rm_init"));
    TokenSeq prompt{1, 2, 3};
    Response resp;
    resp.tokens = {4};
    // with zero prior scale and the default zero head gain, every index
    // reward collapses onto the base exactly
    const HeadRewards hr0 = all_rewards(rm, prompt, resp);
    double spread0 = 0.0;
    for (double r : hr0.index) spread0 = std::max(spread0, std::fabs(r - hr0.base));
    CHECK(spread0 == 0.0);

    arch.prior_scale = 2.0;
    EnnRewardModel rm2 = make_reward_model(arch, SeedTree(31).child("rm_init"));
    const HeadRewards hr2 = all_rewards(rm2, prompt, resp);
    double spread2 = 0.0;
    for (double r : hr2.index) spread2 = std::max(spread2, std::fabs(r - hr2.base));
    CHECK(spread2 > spread0);
}

TEST_CASE("default construction scores every response zero until trained") {
    const RewardArch arch = tiny_reward_arch(2, HeadKind::Mlp);
    const EnnRewardModel rm = make_reward_model(arch, SeedTree(77).child("rm_init"));
    RngStream rng = SeedTree(78).child("probe").stream();
    bool priors_alive = false;
    for (int i = 0; i < 10; ++i) {
        TokenSeq prompt;
        for (int t = 0; t < 3; ++t)
            prompt.push_back(static_cast<Token>(rng.uniform_int(arch.backbone.vocab_size - 1)));
        Response resp;
        for (int t = 0; t < 2; ++t)
            resp.tokens.push_back(
                static_cast<Token>(rng.uniform_int(arch.backbone.vocab_size - 1)));
        // the point estimate starts exactly flat, so untrained choice
        // probabilities are 0.5 and carry no phantom preference signal
        CHECK(reward(rm, prompt, resp, 0) == 0.0);
        const HeadRewards hr = all_rewards(rm, prompt, resp);
        for (const double r : hr.index) priors_alive = priors_alive || r != 0.0;
    }
    // the frozen priors still disagree, which is what drives exploration
    CHECK(priors_alive);
}

TEST_CASE("choice probability is a logistic in the reward difference") {
    CHECK_THAT(choice_prob(1.0, 1.0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK_THAT(choice_prob(2.0, 1.0) + choice_prob(1.0, 2.0),
               Catch::Matchers::WithinAbs(1.0, 1e-15));
    CHECK(choice_prob(3.0, 0.0) > 0.95);
    // extreme differences saturate without overflow
    CHECK(choice_prob(-1000.0, 1000.0) == 0.0);
    CHECK(choice_prob(1000.0, -1000.0) == 1.0);
}

TEST_CASE("choice probability variance is zero without index heads") {
    Fixture f(0);
    const HeadRewards a = all_rewards(f.rm, f.prompt, f.resp);
    Response other;
    other.tokens = {2, 2};
    const HeadRewards b = all_rewards(f.rm, f.prompt, other);
    CHECK(choice_prob_variance(a, b) == 0.0);
}

TEST_CASE("infomax pair maximizes head disagreement, ties go lexicographic") {
    // two heads, hand-built rewards
    const auto hr = [](double base, double i1, double i2) {
        HeadRewards h;
        h.base = base;
        h.index = {i1, i2};
        return h;
    };
    // pair (0,2) has the largest spread in head disagreement
    std::vector<HeadRewards> rewards{hr(0.0, 1.0, -1.0), hr(0.0, 0.1, 0.1),
                                     hr(0.0, -1.0, 1.0)};
    double var = 0.0;
    const auto [i, j] = infomax_pair(rewards, &var);
    CHECK(i == 0);
    CHECK(j == 2);
    CHECK(var > 0.0);

    // identical entries give zero variance everywhere; first pair wins
    std::vector<HeadRewards> flat{hr(0, 0, 0), hr(0, 0, 0), hr(0, 0, 0)};
    const auto [fi, fj] = infomax_pair(flat);
    CHECK(fi == 0);
    CHECK(fj == 1);

    CHECK_THROWS_AS(infomax_pair({hr(0, 0, 0)}), ConfigError);
}

TEST_CASE("pooled representation covers the terminator and rejects empty responses") {
    Fixture f;
    const PooledRepr pr = pooled_repr(f.arch.backbone, f.rm.base, f.prompt, f.resp);
    CHECK(pr.resp_begin == f.prompt.size());
    CHECK(pr.seq.size() == f.prompt.size() + f.resp.tokens.size() + 1);
    CHECK(pr.seq.back() == f.arch.backbone.vocab_size - 1);

    Response empty;  // no tokens, unterminated
    CHECK_THROWS_AS(pooled_repr(f.arch.backbone, f.rm.base, f.prompt, empty), ConfigError);

    Response bare;  // immediate termination still has the end marker position
    bare.terminated = true;
    const PooledRepr pb = pooled_repr(f.arch.backbone, f.rm.base, f.prompt, bare);
    CHECK(pb.seq.size() == f.prompt.size() + 1);
}

TEST_CASE("base reward gradient matches finite differences") {
    for (const HeadKind head : {HeadKind::Linear, HeadKind::Mlp}) {
        Fixture f(0, head);
        ParamVector grad = f.rm.base.zeros_like();
        base_reward_backward(f.rm, f.prompt, f.resp, 1.0, grad);
        const auto objective = [&] { return reward(f.rm, f.prompt, f.resp, 0); };
        CHECK(testutil::max_grad_mismatch(f.rm.base, objective, grad) < 1e-3);
    }
}

TEST_CASE("diff gradient touches only the diff head and matches finite differences") {
    Fixture f(2);
    const EpistemicIndex z = 1;
    ParamVector grad = f.rm.diffs[z - 1].zeros_like();
    diff_reward_backward(f.rm, f.prompt, f.resp, z, 1.0, grad);

    const auto objective = [&] { return reward(f.rm, f.prompt, f.resp, z); };
    CHECK(testutil::max_grad_mismatch(f.rm.diffs[z - 1], objective, grad) < 1e-3);

    // perturbing the diff head of z=1 must not change head z=2 or the base
    const double base_before = reward(f.rm, f.prompt, f.resp, 0);
    const double z2_before = reward(f.rm, f.prompt, f.resp, 2);
    f.rm.diffs[z - 1].fill(0.5);
    CHECK(reward(f.rm, f.prompt, f.resp, 0) == base_before);
    CHECK(reward(f.rm, f.prompt, f.resp, 2) == z2_before);
}

TEST_CASE("reward model construction is deterministic per seed node") {
    const RewardArch arch = tiny_reward_arch(2);
    const EnnRewardModel a = make_reward_model(arch, SeedTree(31).child("rm_init"), 0.1);
    const EnnRewardModel b = make_reward_model(arch, SeedTree(31).child("rm_init"), 0.1);
    CHECK(a.base.hash() == b.base.hash());
    CHECK(a.priors.hash() == b.priors.hash());
    REQUIRE(a.diffs.size() == b.diffs.size());
    for (std::size_t i = 0; i < a.diffs.size(); ++i)
        CHECK(a.diffs[i].hash() == b.diffs[i].hash());
}
