#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rlhflab/errors.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

struct Prompt {
    std::uint64_t id = 0;
    TokenSeq tokens;
};

struct CorpusSpec {
    std::size_t vocab_size = 32;  // last token id is the terminator
    std::size_t train_size = 2000;
    std::size_t test_size = 200;
    std::size_t eval_size = 200;
    std::size_t prompt_len_min = 5;
    std::size_t prompt_len_max = 5;

    void validate() const {
        if (vocab_size < 2) throw ConfigError("corpus: vocab_size must be at least 2");
        if (prompt_len_min == 0 || prompt_len_min > prompt_len_max)
            throw ConfigError("corpus: bad prompt length range");
        if (train_size == 0 || test_size == 0 || eval_size == 0)
            throw ConfigError("corpus: all splits must be non-empty");
    }
};

// train feeds queries and policy updates, test drives in-run measurements and
// checkpoint selection, eval is touched only by the final report.
struct PromptCorpus {
    std::vector<Prompt> train;
    std::vector<Prompt> test;
    std::vector<Prompt> eval;

    const std::vector<Prompt>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "test") return test;
        if (name == "eval") return eval;
        throw ConfigError("corpus: unknown split '" + name + "'");
    }
};

// Prompts draw uniformly from the non-terminator vocabulary. Split contents
// depend only on (seed node, spec), and each split has its own sub-stream so
// resizing one split never shifts the others.
inline PromptCorpus build_corpus(const CorpusSpec& spec, const SeedTree& node) {
    spec.validate();
    const Token hi = static_cast<Token>(spec.vocab_size - 1);  // terminator, excluded

    auto make_split = [&](const std::string& name, std::size_t count,
                          std::uint64_t id_base) {
        std::vector<Prompt> out;
        out.reserve(count);
        SeedTree split_node = node.child(name);
        for (std::size_t i = 0; i < count; ++i) {
            RngStream rng = split_node.child(i).stream();
            const std::size_t len =
                spec.prompt_len_min +
                rng.uniform_int(spec.prompt_len_max - spec.prompt_len_min + 1);
            Prompt p;
            p.id = id_base + i;
            p.tokens.reserve(len);
            for (std::size_t t = 0; t < len; ++t) {
                p.tokens.push_back(static_cast<Token>(rng.uniform_int(hi)));
            }
            out.push_back(std::move(p));
        }
        return out;
    };

    PromptCorpus corpus;
    corpus.train = make_split("train", spec.train_size, 0);
    corpus.test = make_split("test", spec.test_size, 1'000'000'000ull);
    corpus.eval = make_split("eval", spec.eval_size, 2'000'000'000ull);
    return corpus;
}

// One prompt per line: "<id>\t<tok> <tok> ...".
inline void export_prompts(const std::vector<Prompt>& prompts, std::ostream& os) {
    for (const Prompt& p : prompts) {
        os << p.id << '\t';
        for (std::size_t i = 0; i < p.tokens.size(); ++i) {
            if (i) os << ' ';
            os << p.tokens[i];
        }
        os << '\n';
    }
}

inline void export_prompts_file(const std::vector<Prompt>& prompts, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for write: " + path);
    export_prompts(prompts, os);
}

inline std::vector<Prompt> import_prompts(std::istream& is) {
    std::vector<Prompt> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ConfigError("prompt file line " + std::to_string(lineno) + ": missing tab");
        Prompt p;
        try {
            p.id = std::stoull(line.substr(0, tab));
        } catch (const std::exception&) {
            throw ConfigError("prompt file line " + std::to_string(lineno) + ": bad id");
        }
        std::istringstream toks(line.substr(tab + 1));
        std::string tok;
        while (toks >> tok) {
            try {
                p.tokens.push_back(static_cast<Token>(std::stoul(tok)));
            } catch (const std::exception&) {
                throw ConfigError("prompt file line " + std::to_string(lineno) + ": bad token");
            }
        }
        if (p.tokens.empty())
            throw ConfigError("prompt file line " + std::to_string(lineno) + ": empty prompt");
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<Prompt> import_prompts_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open for read: " + path);
    return import_prompts(is);
}

}  // namespace rlhflab
