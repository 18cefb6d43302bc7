#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "rlhflab/corpus.hpp"
#include "rlhflab/errors.hpp"
#include "rlhflab/rng.hpp"

using namespace rlhflab;

namespace {
CorpusSpec small_spec() {
    CorpusSpec s;
    s.vocab_size = 16;
    s.train_size = 30;
    s.test_size = 8;
    s.eval_size = 6;
    s.prompt_len_min = 3;
    s.prompt_len_max = 5;
    return s;
}
}  // namespace

TEST_CASE("split sizes and token ranges follow the spec") {
    const PromptCorpus c = build_corpus(small_spec(), SeedTree(4).child("corpus"));
    CHECK(c.train.size() == 30);
    CHECK(c.test.size() == 8);
    CHECK(c.eval.size() == 6);
    for (const auto* split : {&c.train, &c.test, &c.eval}) {
        for (const Prompt& p : *split) {
            REQUIRE(p.tokens.size() >= 3);
            REQUIRE(p.tokens.size() <= 5);
            // the terminator (vocab_size - 1) never appears in prompts
            for (const Token t : p.tokens) REQUIRE(t < 15);
        }
    }
}

TEST_CASE("prompt ids are unique across splits") {
    const PromptCorpus c = build_corpus(small_spec(), SeedTree(4).child("corpus"));
    std::set<std::uint64_t> ids;
    for (const auto* split : {&c.train, &c.test, &c.eval})
        for (const Prompt& p : *split) ids.insert(p.id);
    CHECK(ids.size() == 30 + 8 + 6);
}

TEST_CASE("rebuilding with the same seed reproduces every token") {
    const PromptCorpus a = build_corpus(small_spec(), SeedTree(9).child("corpus"));
    const PromptCorpus b = build_corpus(small_spec(), SeedTree(9).child("corpus"));
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].id == b.train[i].id);
        CHECK(a.train[i].tokens == b.train[i].tokens);
    }
    const PromptCorpus c = build_corpus(small_spec(), SeedTree(10).child("corpus"));
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size(); ++i)
        any_diff = any_diff || a.train[i].tokens != c.train[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("growing one split leaves the others untouched") {
    CorpusSpec s = small_spec();
    const PromptCorpus before = build_corpus(s, SeedTree(4).child("corpus"));
    s.train_size = 60;
    const PromptCorpus after = build_corpus(s, SeedTree(4).child("corpus"));
    for (std::size_t i = 0; i < before.test.size(); ++i)
        CHECK(before.test[i].tokens == after.test[i].tokens);
    for (std::size_t i = 0; i < before.train.size(); ++i)
        CHECK(before.train[i].tokens == after.train[i].tokens);
}

TEST_CASE("export then import round-trips exactly") {
    const PromptCorpus c = build_corpus(small_spec(), SeedTree(4).child("corpus"));
    std::stringstream buf;
    export_prompts(c.train, buf);
    const std::vector<Prompt> back = import_prompts(buf);
    REQUIRE(back.size() == c.train.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == c.train[i].id);
        CHECK(back[i].tokens == c.train[i].tokens);
    }
}

TEST_CASE("import reports the offending line") {
    std::stringstream buf("3\t1 2 4\nnot-a-prompt\n");
    try {
        import_prompts(buf);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("split lookup by name") {
    const PromptCorpus c = build_corpus(small_spec(), SeedTree(4).child("corpus"));
    CHECK(&c.split("train") == &c.train);
    CHECK(&c.split("test") == &c.test);
    CHECK(&c.split("eval") == &c.eval);
    CHECK_THROWS_AS(c.split("validation"), ConfigError);
}

TEST_CASE("invalid specs are rejected") {
    CorpusSpec s = small_spec();
    s.vocab_size = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.prompt_len_min = 6;  // exceeds max
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.prompt_len_min = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_spec();
    s.test_size = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}
