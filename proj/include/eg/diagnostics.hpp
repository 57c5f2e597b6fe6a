#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eg/certainty.hpp"
#include "eg/corpus.hpp"
#include "eg/scorers.hpp"
#include "eg/stats.hpp"

namespace eg::diagnostics {

struct StarThresholds {
    double one = 0.05;
    double two = 0.01;
    double three = 0.001;
};

// "", "*", "**" or "***".
std::string significance_stars(std::optional<double> p, const StarThresholds& thresholds = {});

// Column order of every stratified table.
inline constexpr std::array<const char*, 4> kStrata = {"Overall", "Low", "Medium", "High"};

// One joined row: a text's predicted assertiveness, optional human rating (both
// on [0,1]), the internal certainty channel and the variant level (-1, 0, +1).
struct DiagnosticRecord {
    std::string id;
    std::optional<int> level;
    double predicted = 0.0;
    std::optional<double> human;
    double certainty = 0.0;
};

struct StratifiedCell {
    stats::CorrelationResult result;
    std::string stars;
    bool insufficient = false;  // fewer than 3 rows in the stratum
};

struct StratifiedRow {
    std::string name;
    std::array<StratifiedCell, 4> cells;
};

struct StratifiedTable {
    stats::Method method = stats::Method::Spearman;
    std::string certainty_channel;  // "calibrated_p" or "verdict_confidence"
    std::vector<StratifiedRow> rows;

    bool all_cells_defined() const;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Rows: predicted vs human, certainty vs predicted, certainty vs human; each over
// all records and per level. Untagged records only enter Overall.
StratifiedTable stratify(const std::vector<DiagnosticRecord>& records, stats::Method method,
                         const StarThresholds& thresholds = {}, std::string certainty_channel = "calibrated_p");

struct DistributionSummary {
    std::vector<std::size_t> histogram;  // equal-width bins over [lower, upper]
    double lower = 0.0;
    double upper = 1.0;
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1) estimator
    double skew = 0.0;    // moment coefficient g1; 0 for constant data
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;     // concentration

    nlohmann::json to_json() const;
};

DistributionSummary distribution_summary(std::span<const double> scores, std::size_t bins = 20, double lower = 0.0,
                                         double upper = 1.0);

// IQR of `a` over IQR of `b`; below 1 means `a` is more concentrated.
std::optional<double> iqr_ratio(const DistributionSummary& a, const DistributionSummary& b);

// --- leave-one-source-out ablation ---------------------------------------------------

using ScorerFactory = std::function<std::unique_ptr<scorers::Scorer>(const std::vector<corpus::AnnotatedSample>&)>;
using EvalOp = std::function<scorers::ScorerEvaluation(scorers::Scorer&, const std::vector<corpus::AnnotatedSample>&)>;

enum class AblationMetric { Standardized, Raw };

struct AblationCell {
    std::string held_out;
    std::optional<double> value;  // chosen metric; nullopt when failed or undefined
    std::optional<scorers::ScorerEvaluation> evaluation;
    std::string error;            // training/evaluation failure or undefined-metric note
};

struct AblationRow {
    std::string model;
    std::vector<AblationCell> cells;
    std::optional<double> mean;   // over cells with a value
    std::size_t completed = 0;
    std::string annotation;       // set when the mean skips cells
};

struct AblationMatrix {
    std::vector<std::string> sources;
    AblationMetric metric = AblationMetric::Standardized;
    std::vector<AblationRow> rows;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Fills `mean`, `completed` and `annotation` from the row's cells.
void finalize_row(AblationRow& row);

// A row of externally measured values, one per source, sent through the same
// row-mean path as computed rows.
AblationRow external_row(std::string model, const std::vector<std::string>& sources,
                         const std::vector<std::optional<double>>& values);

struct AblationModel {
    std::string name;
    ScorerFactory factory;
};

// For each held-out source: train on every other source, evaluate on it.
// `sources` fixes the column order; empty means sorted distinct sources.
AblationMatrix ablation(const std::vector<corpus::AnnotatedSample>& samples, const std::vector<AblationModel>& models,
                        EvalOp eval = {}, AblationMetric metric = AblationMetric::Standardized,
                        std::vector<std::string> sources = {});

// --- certainty / assertiveness gap --------------------------------------------------

struct GapRecord {
    std::string statement_id;
    double assertiveness = 0.0;
    double calibrated_p = 0.0;
    double verdict_confidence = 0.0;
    double gap = 0.0;  // assertiveness - verdict_confidence
    bool over_assertive = false;
};

struct GapAnalysis {
    std::vector<GapRecord> records;
    stats::CorrelationResult spearman_p;
    stats::CorrelationResult spearman_verdict_confidence;
    double threshold = 0.3;
    double over_assertive_share = 0.0;
    std::vector<std::string> missing_assertiveness;  // certainty ids with no score
    std::vector<std::string> missing_certainty;      // scored ids with no calibrated record

    nlohmann::json summary_json() const;
    std::string records_csv() const;
};

GapAnalysis gap_analysis(const std::vector<certainty::CertaintyRecord>& certainty,
                         const std::map<std::string, double>& assertiveness, double threshold = 0.3);

}  // namespace eg::diagnostics
