#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eg/diagnostics.hpp"
#include "eg/llm_adapter.hpp"

namespace eg::survey {

inline constexpr int kLow = -1;
inline constexpr int kOriginal = 0;
inline constexpr int kHigh = 1;

std::string level_name(int level);  // low | original | high
std::string item_id(std::string_view statement_id, int level);

struct StimulusItem {
    std::string item_id;
    std::string statement_id;
    int level = kOriginal;
    std::string explanation;
    std::size_t target_length = 0;  // word count of the original explanation
    std::size_t word_count = 0;
    bool length_flagged = false;    // outside tolerance after every retry
    int retries_used = 0;

    nlohmann::json to_json() const;
    static StimulusItem from_json(const nlohmann::json& j);
};

struct GenerationConfig {
    std::string model_name;
    llm::ChatParams params{750, 1.5, 0.9, 1};
    double length_tolerance = 0.5;  // relative deviation from target word count
    int max_retries = 2;
};

llm::ChatRequest variant_request(std::string_view original, int level, const GenerationConfig& config);

struct VariantPair {
    StimulusItem low;
    StimulusItem high;
};

// Low and high rewrites of `original`. A variant whose length misses the target
// after all retries is kept with length_flagged set.
VariantPair generate_variants(llm::ChatAdapter& adapter, std::string_view statement_id, std::string_view original,
                              const GenerationConfig& config);

struct ContentQuestion {
    std::string question;
    std::vector<std::string> options;
    int answer = 0;  // index into options
};

struct SurveyStatement {
    std::string statement_id;
    std::string statement;
    std::string verdict;
    std::optional<ContentQuestion> question;
    std::array<StimulusItem, 3> variants;  // low, original, high
};

struct Assignment {
    std::string respondent_id;
    std::vector<std::string> item_ids;
    std::size_t easy_check_slot = 0;  // index into item_ids whose text carries the check
};

struct SurveyDefinition {
    std::uint64_t seed = 0;
    std::size_t items_per_respondent = 4;
    std::vector<SurveyStatement> statements;
    std::vector<Assignment> assignments;

    std::size_t rating_slots() const;
    std::map<std::string, int> item_levels() const;
    nlohmann::json to_json() const;
    static SurveyDefinition from_json(const nlohmann::json& j);
};

// Each respondent gets `items_per_respondent` items from distinct statements.
// Levels follow a global round-robin so each level fills a third of all slots.
// Throws ValidationError when there are fewer statements than items per
// respondent, or when max_uses_per_item (0 = unbounded) cannot cover all slots.
SurveyDefinition assemble_survey(const std::vector<SurveyStatement>& statements, std::size_t respondents,
                                 std::uint64_t seed, std::size_t items_per_respondent = 4,
                                 std::size_t max_uses_per_item = 0);

struct RespondentRecord {
    std::string respondent_id;
    std::vector<std::pair<std::string, double>> ratings;  // item id, rating 0-10
    int easy_check_value = 0;
    bool easy_check_passed = false;
    int attention_score = 0;  // correct content answers, 0-5
    std::map<std::string, std::string> demographics;
};

// CSV: respondent_id,item_id,rating,easy_check_value,attention_correct_count,<demographics...>
// One row per rating. expected_ratings = 0 skips the per-respondent count check.
std::vector<RespondentRecord> load_ratings(const std::filesystem::path& path, std::size_t expected_ratings = 4);

struct Exclusion {
    std::string respondent_id;
    std::vector<std::string> reasons;  // "easy check", "score < 4"
};

struct FilterResult {
    std::vector<RespondentRecord> retained;
    std::vector<Exclusion> excluded;
};

// Keep a respondent iff the easy check was passed and attention_score >= min_attention.
FilterResult filter_respondents(const std::vector<RespondentRecord>& records, int min_attention = 4);

struct LevelStats {
    int level = kOriginal;
    std::size_t n = 0;
    std::optional<double> mean;      // 0-10 axis
    std::optional<double> variance;  // sample variance
    std::optional<double> stddev;
    std::optional<double> scaled_mean;  // [0,1] axis
    std::optional<double> scaled_variance;
    std::optional<double> scaled_stddev;
    bool empty = true;
};

struct PerceptionStats {
    std::array<LevelStats, 3> levels;  // low, original, high
    diagnostics::DistributionSummary overall_scaled;
    bool monotone = false;
    std::string diagnostic;

    std::string levels_csv() const;
    nlohmann::json to_json() const;
};

// Items missing from item_levels fall back to the "@low/@original/@high" id suffix.
PerceptionStats perception_stats(const std::vector<RespondentRecord>& retained,
                                 const std::map<std::string, int>& item_levels);

}  // namespace eg::survey
