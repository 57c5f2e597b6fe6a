#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eg/corpus.hpp"
#include "eg/forest.hpp"
#include "eg/lexicon.hpp"
#include "eg/llm_adapter.hpp"

namespace eg::scorers {

// Canonical assertiveness on [0,1]; raw_value keeps the scorer's native 0-10 scale.
struct AssertivenessScore {
    double value = 0.0;
    double raw_value = 0.0;
    std::string scorer_id;
    bool clamped = false;
    int retries_used = 0;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string id() const = 0;
    virtual AssertivenessScore score(std::string_view text) = 0;
};

// Throws ValidationError if the model was trained with another lexicon version.
AssertivenessScore predict_forest(const forest::ForestModel& model, std::string_view text,
                                  const lexicon::MarkerLexicon& lexicon);

class ForestScorer final : public Scorer {
public:
    ForestScorer(forest::ForestModel model, lexicon::MarkerLexicon lexicon);
    std::string id() const override { return "forest"; }
    AssertivenessScore score(std::string_view text) override;
    const forest::ForestModel& model() const { return model_; }

private:
    forest::ForestModel model_;
    lexicon::MarkerLexicon lexicon_;
};

// Trains a forest on a corpus: features from the text, labels from mean_score.
forest::ForestModel train_on_corpus(const std::vector<corpus::AnnotatedSample>& samples,
                                    const lexicon::MarkerLexicon& lexicon, const forest::ForestParams& params);

struct ParsedNumber {
    double raw = 0.0;  // on the 0-10 scale, clamped
    bool clamped = false;
};

// First number in the reply. "x/10" reads as x; "x/N" is rescaled to 0-10.
std::optional<ParsedNumber> parse_score_reply(std::string_view reply);

struct PromptConfig {
    std::string model_name;
    std::string user_template = "{text}";
    int max_retries = 2;  // extra attempts after an unparseable reply
    llm::ChatParams params{16, 0.0, 1.0, 1};
};

// The coder rating prompt as system message plus the templated text.
llm::ChatRequest prompt_request(std::string_view text, const PromptConfig& config);

// Throws ReplyParseError carrying every reply when none parses.
AssertivenessScore prompt_score(llm::ChatAdapter& adapter, std::string_view text, const PromptConfig& config);

class PromptScorer final : public Scorer {
public:
    PromptScorer(llm::ChatAdapter& adapter, PromptConfig config) : adapter_(adapter), config_(std::move(config)) {}
    std::string id() const override { return "prompt:" + config_.model_name; }
    AssertivenessScore score(std::string_view text) override { return prompt_score(adapter_, text, config_); }

private:
    llm::ChatAdapter& adapter_;
    PromptConfig config_;
};

struct ScorerEvaluation {
    std::optional<double> mse_standardized;  // nullopt when predictions have zero variance
    double mse_raw = 0.0;                    // on the 0-10 scale
    std::size_t n = 0;
    std::string note;
};

// Each series z-scored with its own mean and population standard deviation, so
// the result equals 2(1 - r) for Pearson r.
std::optional<double> standardized_mse(std::span<const double> predictions, std::span<const double> labels);

// Predictions (value x 10) against the human mean labels. Needs n >= 3 and
// non-constant labels.
ScorerEvaluation evaluate_predictions(std::span<const double> predictions_0_10, std::span<const double> labels);
ScorerEvaluation evaluate_scorer(Scorer& scorer, const std::vector<corpus::AnnotatedSample>& test);

}  // namespace eg::scorers
