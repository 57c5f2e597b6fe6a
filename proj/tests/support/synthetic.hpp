#pragma once

// Seeded synthetic data shared by the fixture generator and the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eg/corpus.hpp"
#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/lexicon.hpp"
#include "eg/rng.hpp"

namespace eg::synth {

inline const std::vector<std::vector<std::string>>& filler_vocabularies() {
    static const std::vector<std::vector<std::string>> v = {
        {"the", "council", "budget", "road", "repair", "schedule", "funds", "district", "vote", "meeting", "plan",
         "tax", "bridge", "school", "water", "permit", "zoning", "report", "mayor", "project"},
        {"the", "model", "answer", "question", "user", "data", "response", "system", "context", "prompt", "output",
         "token", "reply", "assistant", "task", "example", "result", "format", "request", "input"},
        {"the", "view", "people", "change", "argument", "post", "comment", "reason", "debate", "opinion", "point",
         "side", "policy", "society", "culture", "value", "choice", "topic", "thread", "reply"},
        {"the", "statement", "senator", "governor", "speech", "ad", "campaign", "record", "bill", "law", "state",
         "jobs", "spending", "deficit", "voters", "office", "election", "rate", "figure", "number"},
        {"the", "study", "paper", "method", "experiment", "sample", "analysis", "finding", "effect", "test", "trial",
         "dataset", "measure", "variable", "outcome", "protein", "cell", "signal", "rate", "group"},
    };
    return v;
}

inline std::string pick(Rng& rng, const std::vector<std::string>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

// Filler tokens from `vocab` with the requested number of hedge and booster
// phrases spliced in at random positions.
inline std::string marker_text(Rng& rng, const lexicon::MarkerLexicon& lex, const std::vector<std::string>& vocab,
                               int hedges, int boosters, std::size_t filler) {
    const std::vector<std::string> hl(lex.hedges().begin(), lex.hedges().end());
    const std::vector<std::string> bl(lex.boosters().begin(), lex.boosters().end());
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < filler; ++i) {
        auto w = pick(rng, vocab);
        if (lex.lookup(w) >= 0) throw ValidationError("filler word '" + w + "' is a marker");
        tokens.push_back(std::move(w));
    }
    const auto insert = [&](const std::string& phrase) {
        const auto pos = static_cast<std::ptrdiff_t>(rng.below(tokens.size() + 1));
        tokens.insert(tokens.begin() + pos, phrase);
    };
    for (int i = 0; i < hedges; ++i) insert(pick(rng, hl));
    for (int i = 0; i < boosters; ++i) insert(pick(rng, bl));
    std::string out;
    for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out + ".";
}

struct MarkerCorpusParams {
    std::vector<std::string> sources{"Anthropic", "GM", "CMV", "Llama3Liar", "Pei"};
    std::size_t per_source = 160;
    std::size_t coders = 3;
    double label_noise = 0.2;  // sd of the latent label noise
    double coder_noise = 0.3;  // sd of each coder's rating noise
};

// label = 5 + 4 booster_rate - 4 hedge_rate + noise, with rates measured by the
// feature extractor on the generated text. Coders rate label + noise, rounded
// to one decimal.
inline std::vector<corpus::AnnotatedSample> marker_corpus(std::uint64_t seed, const MarkerCorpusParams& params = {}) {
    const auto& lex = lexicon::MarkerLexicon::builtin();
    Rng rng(seed);
    std::vector<corpus::AnnotatedSample> out;
    for (std::size_t s = 0; s < params.sources.size(); ++s) {
        const auto& vocab = filler_vocabularies()[s % filler_vocabularies().size()];
        for (std::size_t i = 0; i < params.per_source; ++i) {
            const int h = static_cast<int>(rng.below(4));
            const int b = static_cast<int>(rng.below(4));
            const auto filler = 4 + static_cast<std::size_t>(rng.below(7));
            corpus::AnnotatedSample sample;
            sample.id = fmt::format("{}-{:03d}", params.sources[s], i);
            sample.source = params.sources[s];
            sample.text = marker_text(rng, lex, vocab, h, b, filler);
            const auto fv = lexicon::extract_features(sample.text, lex);
            const double label = 5.0 + 4.0 * fv.booster_rate - 4.0 * fv.hedge_rate + params.label_noise * rng.normal();
            for (std::size_t c = 0; c < params.coders; ++c) {
                const double r = std::clamp(label + params.coder_noise * rng.normal(), 0.0, 10.0);
                sample.coder_scores[fmt::format("coder{}", c + 1)] = corpus::round_half_away(r, 1);
            }
            sample.mean_score = corpus::mean_rating(sample.coder_scores);
            out.push_back(std::move(sample));
        }
    }
    return out;
}

inline std::string corpus_csv(const std::vector<corpus::AnnotatedSample>& samples) {
    std::vector<std::string> coders;
    for (const auto& s : samples) {
        for (const auto& [c, v] : s.coder_scores) {
            if (std::find(coders.begin(), coders.end(), c) == coders.end()) coders.push_back(c);
        }
    }
    std::sort(coders.begin(), coders.end());
    std::vector<std::string> header{"id", "text", "source"};
    header.insert(header.end(), coders.begin(), coders.end());
    std::string out = io::csv_line(header);
    for (const auto& s : samples) {
        std::vector<std::string> row{s.id, s.text, s.source};
        for (const auto& c : coders) {
            const auto it = s.coder_scores.find(c);
            row.push_back(it == s.coder_scores.end() ? "" : corpus::format_score(it->second, 1));
        }
        out += io::csv_line(row);
    }
    return out;
}

}  // namespace eg::synth
