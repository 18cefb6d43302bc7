#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "rlhflab/rng.hpp"

using namespace rlhflab;

TEST_CASE("streams with the same seed agree, different seeds diverge") {
    RngStream a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double xa = a.uniform01(), xb = b.uniform01(), xc = c.uniform01();
        all_equal = all_equal && xa == xb;
        any_diff = any_diff || xa != xc;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform01 stays in [0, 1)") {
    RngStream rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.uniform01();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
    }
}

TEST_CASE("uniform_int covers the full range and nothing else") {
    RngStream rng(11);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 5000; ++i) {
        const std::uint64_t x = rng.uniform_int(7);
        REQUIRE(x < 7);
        seen.insert(x);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("gaussian moments are near standard normal") {
    RngStream rng(5);
    const int n = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gaussian();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.03);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("seed tree children are independent and reproducible") {
    SeedTree root(123);
    CHECK(root.child("alpha").stream().uniform01() ==
          SeedTree(123).child("alpha").stream().uniform01());
    CHECK(root.child("alpha").stream().uniform01() !=
          root.child("beta").stream().uniform01());
    CHECK(root.child(0).raw() != root.child(1).raw());
    CHECK(root.child("a").child(2).raw() != root.child("a").child(3).raw());
    // sibling draws do not disturb each other
    const double before = root.child("x").stream().uniform01();
    RngStream other = root.child("y").stream();
    for (int i = 0; i < 10; ++i) other.uniform01();
    CHECK(root.child("x").stream().uniform01() == before);
}

TEST_CASE("string and index children with colliding spellings stay distinct") {
    SeedTree root(9);
    CHECK(root.child("1").raw() != root.child(1).raw());
    CHECK(root.child("batch").child(2).raw() != root.child("batch2").raw());
}

TEST_CASE("bernoulli respects its probability roughly") {
    RngStream rng(77);
    int hits = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.25) ? 1 : 0;
    const double rate = static_cast<double>(hits) / n;
    CHECK(rate > 0.22);
    CHECK(rate < 0.28);
}
