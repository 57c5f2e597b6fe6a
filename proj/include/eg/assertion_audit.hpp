#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eg/llm_adapter.hpp"

namespace eg::audit {

enum class Rater { Model, Human };

struct AssertionLabel {
    int value = 0;  // +1 asserts true, -1 asserts false, 0 neither
    Rater rater = Rater::Model;
    int retries_used = 0;
};

enum class AssertionPrompt { ThreeWay, Scale100, TrueFalseNeither };

struct ClassifyConfig {
    std::string model_name;
    int max_retries = 2;
    llm::ChatParams params{8, 0.0, 1.0, 1};
    // Only ThreeWay replies are parsed into labels; the others are shipped for
    // manual experiments.
    AssertionPrompt prompt = AssertionPrompt::ThreeWay;
};

// Exactly "1", "+1", "-1" or "0" after trimming whitespace.
std::optional<int> parse_assertion_reply(std::string_view reply);

llm::ChatRequest classification_request(std::string_view explanation, const ClassifyConfig& config);

// Throws ReplyParseError with the transcript when no reply parses.
AssertionLabel classify_assertion(llm::ChatAdapter& adapter, std::string_view explanation,
                                  const ClassifyConfig& config);

struct PlanBin {
    double lower = 0.0;  // inclusive
    double upper = 0.0;  // exclusive, except the last bin which is closed
    std::size_t count = 0;
};

struct SamplingPlan {
    std::vector<PlanBin> bins;
    std::size_t total = 0;

    // 5 each from 0-5, 5-15, 15-25, 25-35, 65-75, 75-85, 85-95, 95-100;
    // 15 each from 35-45 and 55-65; 30 from 45-55. Total 100.
    static SamplingPlan standard();
    void validate() const;
};

struct DrawnPlan {
    SamplingPlan plan;
    std::vector<std::vector<std::string>> ids_per_bin;
    std::vector<std::string> ids;  // bins in order
};

// Uniform draw without replacement inside each bin. Certainties are on 0-100.
// Throws ValidationError naming every underfull bin and its shortfall.
DrawnPlan build_plan(const std::vector<std::pair<std::string, double>>& certainties, std::uint64_t seed,
                     const SamplingPlan& plan = SamplingPlan::standard());

struct KappaResult {
    std::optional<double> kappa;  // nullopt when expected agreement is 1
    double percent_agreement = 0.0;
    double expected_agreement = 0.0;
    std::size_t n = 0;
    std::vector<int> alphabet;
    std::vector<std::vector<std::size_t>> confusion;  // rows rater A, columns rater B

    nlohmann::json to_json() const;
};

KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b);

}  // namespace eg::audit
