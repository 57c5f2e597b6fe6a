#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eg/llm_adapter.hpp"

namespace eg::certainty {

enum class Verdict { True, False };
std::string_view verdict_name(Verdict v);

struct CertaintyRecord {
    std::string statement_id;
    std::string statement;
    std::optional<Verdict> verdict;
    // Score for "true" on the declared scale: a False verdict with confidence c
    // is stored as scale - c.
    std::optional<double> raw_confidence;
    double scale = 100.0;
    std::optional<double> calibrated_p;  // probability the statement is true
    std::string explanation;
    std::optional<bool> gold_label;
    std::optional<int> level;            // stimulus variant level when known

    nlohmann::json to_json() const;
    static CertaintyRecord from_json(const nlohmann::json& j);
};

std::vector<CertaintyRecord> load_records(const std::filesystem::path& path);
void save_records(const std::vector<CertaintyRecord>& records, const std::filesystem::path& path);

struct ElicitConfig {
    std::string model_name;
    int max_retries = 2;
    llm::ChatParams params{750, 0.0, 1.0, 1};
    double scale = 100.0;
};

struct ParsedElicitation {
    Verdict verdict = Verdict::True;
    double confidence = 0.0;  // as stated, on the declared scale
    std::string explanation;
};

// Expects a trailing "Verdict: True|False, Score: N" (optionally "N/D"); the last
// such marker wins and everything before it is the explanation.
std::optional<ParsedElicitation> parse_elicitation(std::string_view reply, double scale);

llm::ChatRequest elicitation_request(std::string_view statement, const ElicitConfig& config);

// Explain-then-score. Throws ReplyParseError with every reply when none parses.
CertaintyRecord elicit(llm::ChatAdapter& adapter, std::string statement_id, std::string_view statement,
                       const ElicitConfig& config);

// Six-way fact-check label to boolean. Default split: half-true, mostly-true and
// true are true; pants-fire, false and barely-true are false.
struct LiarBinarization {
    std::set<std::string> true_labels{"half-true", "mostly-true", "true"};
    std::set<std::string> false_labels{"pants-fire", "false", "barely-true"};
};
bool binarize_liar_label(std::string_view six_way, const LiarBinarization& mapping = {});

struct PlattFitMeta {
    std::size_t n = 0;
    int iterations = 0;
    double final_nll = 0.0;
    bool converged = false;
    std::vector<double> nll_trace;
};

// p(true | f) = 1 / (1 + exp(A f + B))
struct PlattParams {
    double A = 0.0;
    double B = 0.0;
    PlattFitMeta fit_meta;

    nlohmann::json to_json() const;
    static PlattParams from_json(const nlohmann::json& j);
};

// Newton iterations with backtracking on the NLL against smoothed targets
// t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2). Stops when |dNLL| < 1e-9 or the
// gradient vanishes; throws FitError after 100 iterations without convergence.
PlattParams fit_platt(std::span<const double> raw_scores, const std::vector<bool>& labels);

double apply_platt(const PlattParams& params, double raw);

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::optional<double> mean_predicted_p;
    std::optional<double> empirical_frequency;
    std::size_t count = 0;
};

struct ReliabilityTable {
    std::vector<ReliabilityBin> bins;
    double ece = 0.0;
    std::size_t n = 0;
};

// Equal-width bins over [0,1]; the last bin is closed at 1.
ReliabilityTable reliability(std::span<const double> probabilities, const std::vector<bool>& labels,
                             std::size_t n_bins);
// Uses calibrated_p and gold_label; every record must carry both.
ReliabilityTable reliability(const std::vector<CertaintyRecord>& records, std::size_t n_bins);

// Direction-free certainty |2p - 1|.
double verdict_confidence(double calibrated_p);

}  // namespace eg::certainty
