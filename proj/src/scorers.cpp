#include "eg/scorers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include "eg/error.hpp"
#include "eg/prompts.hpp"
#include "eg/stats.hpp"
#include "eg/text.hpp"

namespace eg::scorers {

AssertivenessScore predict_forest(const forest::ForestModel& model, std::string_view text,
                                  const lexicon::MarkerLexicon& lexicon) {
    if (model.lexicon_version != lexicon.version()) {
        throw ValidationError("model trained with lexicon '" + model.lexicon_version + "', given '" +
                              lexicon.version() + "'");
    }
    const auto fv = lexicon::extract_features(text, lexicon);
    const double raw = model.predict_row(fv.as_row());
    const double value = raw / model.scale.high;
    AssertivenessScore s;
    s.raw_value = raw;
    s.value = std::clamp(value, 0.0, 1.0);
    s.clamped = s.value != value;
    s.scorer_id = "forest";
    return s;
}

ForestScorer::ForestScorer(forest::ForestModel model, lexicon::MarkerLexicon lexicon)
    : model_(std::move(model)), lexicon_(std::move(lexicon)) {
    if (model_.lexicon_version != lexicon_.version()) {
        throw ValidationError("model trained with lexicon '" + model_.lexicon_version + "', given '" +
                              lexicon_.version() + "'");
    }
}

AssertivenessScore ForestScorer::score(std::string_view text) { return predict_forest(model_, text, lexicon_); }

forest::ForestModel train_on_corpus(const std::vector<corpus::AnnotatedSample>& samples,
                                    const lexicon::MarkerLexicon& lexicon, const forest::ForestParams& params) {
    std::vector<lexicon::FeatureVector> features;
    std::vector<double> labels;
    features.reserve(samples.size());
    for (const auto& s : samples) {
        features.push_back(lexicon::extract_features(s.text, lexicon));
        labels.push_back(s.mean_score);
    }
    return forest::train_forest(features, labels, params);
}

std::optional<ParsedNumber> parse_score_reply(std::string_view reply) {
    static const std::regex number(R"(([-+]?\d+(?:\.\d+)?|[-+]?\.\d+)(?:\s*/\s*(\d+(?:\.\d+)?))?)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(reply.begin(), reply.end(), m, number)) return std::nullopt;
    auto to_double = [](const std::string& s) {
        double v = 0.0;
        const char* b = s.data();
        if (!s.empty() && s.front() == '+') ++b;
        std::from_chars(b, s.data() + s.size(), v);
        return v;
    };
    double raw = to_double(m[1].str());
    if (m[2].matched) {
        const double denom = to_double(m[2].str());
        if (denom > 0.0) raw = raw * 10.0 / denom;
    }
    if (!std::isfinite(raw)) return std::nullopt;
    ParsedNumber out;
    out.raw = std::clamp(raw, 0.0, 10.0);
    out.clamped = out.raw != raw;
    return out;
}

llm::ChatRequest prompt_request(std::string_view text, const PromptConfig& config) {
    llm::ChatRequest req;
    req.model_name = config.model_name;
    req.params = config.params;
    req.messages.push_back({"system", std::string(prompts::kCoderRating)});
    req.messages.push_back({"user", text::replace_all(config.user_template, prompts::kTextPlaceholder, text)});
    return req;
}

AssertivenessScore prompt_score(llm::ChatAdapter& adapter, std::string_view input, const PromptConfig& config) {
    if (text::trim(input).empty()) throw ValidationError("cannot score empty text");
    const auto req = prompt_request(input, config);
    std::vector<std::string> transcript;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        const auto ex = adapter.send_chat(req);
        transcript.push_back(ex.reply_text);
        if (const auto parsed = parse_score_reply(ex.reply_text)) {
            AssertivenessScore s;
            s.raw_value = parsed->raw;
            s.value = parsed->raw / 10.0;
            s.clamped = parsed->clamped;
            s.retries_used = attempt;
            s.scorer_id = "prompt:" + config.model_name;
            return s;
        }
    }
    throw ReplyParseError("no parseable assertiveness score in " + std::to_string(transcript.size()) + " replies",
                          std::move(transcript));
}

std::optional<double> standardized_mse(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.size() != labels.size()) throw ValidationError("prediction and label counts differ");
    if (predictions.empty()) return std::nullopt;
    const double sp = stats::stddev(predictions, 0);
    const double sl = stats::stddev(labels, 0);
    if (!(sp > 0.0) || !(sl > 0.0) || !stats::pearson_r(predictions, labels)) return std::nullopt;
    const double mp = stats::mean(predictions);
    const double ml = stats::mean(labels);
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double d = (predictions[i] - mp) / sp - (labels[i] - ml) / sl;
        sum += d * d;
    }
    return sum / static_cast<double>(labels.size());
}

ScorerEvaluation evaluate_predictions(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.size() != labels.size()) throw ValidationError("prediction and label counts differ");
    if (labels.size() < 3) throw ValidationError("evaluation needs at least 3 samples");
    if (!(stats::variance(labels, 0) > 0.0)) throw ValidationError("evaluation labels have zero variance");
    ScorerEvaluation ev;
    ev.n = labels.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) sum += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
    ev.mse_raw = sum / static_cast<double>(labels.size());
    ev.mse_standardized = standardized_mse(predictions, labels);
    if (!ev.mse_standardized) ev.note = "undefined-standardized: predictions have zero variance";
    return ev;
}

ScorerEvaluation evaluate_scorer(Scorer& scorer, const std::vector<corpus::AnnotatedSample>& test) {
    std::vector<double> predictions, labels;
    predictions.reserve(test.size());
    labels.reserve(test.size());
    for (const auto& s : test) {
        predictions.push_back(scorer.score(s.text).value * 10.0);
        labels.push_back(s.mean_score);
    }
    return evaluate_predictions(predictions, labels);
}

}  // namespace eg::scorers
