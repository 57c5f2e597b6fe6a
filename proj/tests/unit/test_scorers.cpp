#include <doctest.h>

#include <filesystem>

#include "eg/error.hpp"
#include "eg/prompts.hpp"
#include "eg/rng.hpp"
#include "eg/scorers.hpp"
#include "oracles/oracles.hpp"
#include "support/scripted.hpp"
#include "support/synthetic.hpp"

using namespace eg;
using doctest::Approx;
using Scripted = synth::ScriptedTransport;

namespace {

scorers::PromptConfig prompt_config() {
    scorers::PromptConfig c;
    c.model_name = "rater";
    return c;
}

}  // namespace

TEST_CASE("parse_score_reply: numbers, fractions and clamping") {
    CHECK(scorers::parse_score_reply("7.5")->raw == 7.5);
    const auto over = scorers::parse_score_reply("Assertiveness: 11");
    REQUIRE(over);
    CHECK(over->raw == 10.0);
    CHECK(over->clamped);
    CHECK(scorers::parse_score_reply("-2")->raw == 0.0);
    CHECK(scorers::parse_score_reply("I'd say 8/10.")->raw == 8.0);
    CHECK(scorers::parse_score_reply("75/100")->raw == Approx(7.5));
    CHECK(scorers::parse_score_reply(".5")->raw == 0.5);
    CHECK_FALSE(scorers::parse_score_reply("I cannot rate this"));
    CHECK_FALSE(scorers::parse_score_reply(""));
}

TEST_CASE("prompt scorer: value on [0,1], retry after an unparseable reply") {
    auto state = std::make_shared<Scripted::State>();
    state->queue = {std::string("7.5"), std::string("Assertiveness: 11"), std::string("I cannot rate this"),
                    std::string("6.0")};
    auto adapter = synth::scripted_adapter(state);
    scorers::PromptScorer scorer(*adapter, prompt_config());
    CHECK(scorer.id() == "prompt:rater");

    const auto a = scorer.score("Some text.");
    CHECK(a.value == Approx(0.75));
    CHECK(a.raw_value == Approx(7.5));
    CHECK(a.retries_used == 0);
    CHECK_FALSE(a.clamped);

    const auto b = scorer.score("Some text.");
    CHECK(b.value == 1.0);
    CHECK(b.clamped);

    const auto c = scorer.score("Some text.");
    CHECK(c.value == Approx(0.6));
    CHECK(c.retries_used == 1);
    CHECK(state->posts == 4);
}

TEST_CASE("prompt scorer: exhausted retries keep the whole transcript") {
    auto state = std::make_shared<Scripted::State>();
    state->queue = {std::string("no"), std::string("still no"), std::string("never")};
    auto adapter = synth::scripted_adapter(state);
    try {
        scorers::prompt_score(*adapter, "text", prompt_config());
        FAIL("expected ReplyParseError");
    } catch (const ReplyParseError& e) {
        CHECK(e.transcript() == std::vector<std::string>{"no", "still no", "never"});
    }
    CHECK_THROWS_AS(scorers::prompt_score(*adapter, "   ", prompt_config()), ValidationError);
}

TEST_CASE("prompt request: coder instructions and template") {
    auto cfg = prompt_config();
    cfg.user_template = "Rate: {text}";
    const auto r = scorers::prompt_request("abc", cfg);
    REQUIRE(r.messages.size() == 2);
    CHECK(r.messages[0].role == "system");
    CHECK(r.messages[0].content == prompts::kCoderRating);
    CHECK(r.messages[1].content == "Rate: abc");
    CHECK(r.params.temperature == 0.0);
}

TEST_CASE("standardized MSE: worked examples") {
    const std::vector<double> a{1, 2, 3, 4, 5}, rev{5, 4, 3, 2, 1};
    CHECK(*scorers::standardized_mse(a, a) == Approx(0.0).epsilon(1e-15));
    CHECK(*scorers::standardized_mse(a, rev) == Approx(4.0).epsilon(1e-14));
    CHECK_FALSE(scorers::standardized_mse(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 3}));
}

TEST_CASE("standardized MSE equals 2(1 - r) for Pearson r") {
    Rng rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 3 + rng.below(60);
        std::vector<double> x(n), y(n);
        const double w = rng.uniform() * 2 - 1;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal() * 3 + 5;
            y[i] = w * x[i] + rng.normal();
        }
        const double r = static_cast<double>(oracle::pearson(x, y));
        CHECK(std::abs(*scorers::standardized_mse(x, y) - 2.0 * (1.0 - r)) < 1e-10);
    }
}

TEST_CASE("evaluate_predictions: raw MSE and undefined standardized") {
    const std::vector<double> labels{2, 4, 6, 8};
    const std::vector<double> constant(4, 5.0);
    const auto ev = scorers::evaluate_predictions(constant, labels);
    CHECK_FALSE(ev.mse_standardized);
    CHECK(ev.mse_raw == Approx(5.0));  // population variance of the labels
    CHECK_FALSE(ev.note.empty());
    CHECK_THROWS_AS(scorers::evaluate_predictions(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                    ValidationError);
    CHECK_THROWS_AS(scorers::evaluate_predictions(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}),
                    ValidationError);
}

TEST_CASE("forest scorer: lexicon version must match") {
    synth::MarkerCorpusParams params;
    params.per_source = 30;
    const auto corpus = synth::marker_corpus(4, params);
    forest::ForestParams p;
    p.n_trees = 10;
    const auto model = scorers::train_on_corpus(corpus, lexicon::MarkerLexicon::builtin(), p);
    CHECK(model.lexicon_version == lexicon::MarkerLexicon::builtin().version());

    scorers::ForestScorer scorer(model, lexicon::MarkerLexicon::builtin());
    const auto s = scorer.score(corpus[0].text);
    CHECK(s.value >= 0.0);
    CHECK(s.value <= 1.0);
    CHECK(s.value == Approx(s.raw_value / 10.0));
    CHECK(s.scorer_id == "forest");

    const lexicon::MarkerLexicon other("other-1", {"maybe"}, {"surely"});
    CHECK_THROWS_AS(scorers::predict_forest(model, "maybe so", other), ValidationError);
}

TEST_CASE("forest scorer: more boosters score higher on the synthetic corpus") {
    const auto corpus = synth::marker_corpus(9);
    forest::ForestParams p;
    p.n_trees = 40;
    const auto model = scorers::train_on_corpus(corpus, lexicon::MarkerLexicon::builtin(), p);
    scorers::ForestScorer scorer(model, lexicon::MarkerLexicon::builtin());
    Rng rng(10);
    const auto& lex = lexicon::MarkerLexicon::builtin();
    const auto& vocab = synth::filler_vocabularies()[1];
    int ordered = 0;
    for (int i = 0; i < 50; ++i) {
        const auto hedged = synth::marker_text(rng, lex, vocab, 3, 0, 6);
        const auto boosted = synth::marker_text(rng, lex, vocab, 0, 3, 6);
        ordered += scorer.score(hedged).value < scorer.score(boosted).value;
    }
    CHECK(ordered >= 45);
}
