#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eg::corpus {

// Source tags are open strings; these are the ones the reference corpus uses.
namespace sources {
inline constexpr std::string_view kAnthropic = "Anthropic";
inline constexpr std::string_view kGM = "GM";
inline constexpr std::string_view kCMV = "CMV";
inline constexpr std::string_view kLlama3Liar = "Llama3Liar";
inline constexpr std::string_view kPei = "Pei";
}  // namespace sources

struct AnnotatedSample {
    std::string id;
    std::string text;
    std::string source;
    std::map<std::string, double> coder_scores;  // coder id -> rating in [0, 10]
    double mean_score = 0.0;
};

// Throws ValidationError when a sample breaks an invariant (rating bounds,
// mean consistency, empty text, no ratings).
void validate(const AnnotatedSample& sample);

// Arithmetic mean over the ratings present.
double mean_rating(const std::map<std::string, double>& coder_scores);

struct IngestConfig {
    enum class Format { Auto, Csv, Jsonl };
    Format format = Format::Auto;
    std::string id_column = "id";
    std::string text_column = "text";
    std::string source_column = "source";
    // When set, every row of the file gets this source and the source column is optional.
    std::optional<std::string> source_override;
};

// Every column other than id/text/source is a coder. Empty CSV cells and JSON
// nulls are missing ratings. Duplicate ids across all files are rejected.
std::vector<AnnotatedSample> load_corpus(const std::vector<std::filesystem::path>& paths,
                                         const IngestConfig& config = {});

struct AgreementRow {
    std::string coder;
    std::size_t n = 0;                     // pairwise-complete sample count
    std::optional<double> correlation;     // nullopt when either series has zero variance
};

struct AgreementTable {
    std::vector<AgreementRow> rows;
    std::optional<double> mean_agreement;  // mean over defined rows
    // The mean each coder is compared with includes that coder's own rating.
    bool self_included = true;
};

// Pearson correlation of each coder's ratings with the per-sample mean score.
// Coders with fewer than two ratings get no row. Requires at least two such coders.
AgreementTable intercoder_agreement(const std::vector<AnnotatedSample>& samples);

struct SplitStrategy {
    enum class Kind { Random, LeaveOneSourceOut };
    Kind kind = Kind::Random;
    double train_ratio = 0.8;
    std::string held_out_source;

    static SplitStrategy random(double train_ratio) { return {Kind::Random, train_ratio, {}}; }
    static SplitStrategy leave_one_source_out(std::string source) {
        return {Kind::LeaveOneSourceOut, 0.0, std::move(source)};
    }
    std::string describe() const;
};

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    SplitStrategy strategy;
    std::uint64_t seed = 0;
};

CorpusSplit split(const std::vector<AnnotatedSample>& samples, const SplitStrategy& strategy,
                  std::uint64_t seed);

// Selects the samples named by `ids`, in that order.
std::vector<AnnotatedSample> select(const std::vector<AnnotatedSample>& samples,
                                    const std::vector<std::string>& ids);

// Half-away-from-zero rounding done on the shortest decimal representation of
// `value`, so 3.25 rounds to 3.3 even though the binary double sits just below it.
double round_half_away(double value, int decimals);

std::vector<AnnotatedSample> round_scores(const std::vector<AnnotatedSample>& samples, int decimals);

// Fixed-point label text used as the assistant message, e.g. 7.7 -> "7.7", 5 -> "5.0".
std::string format_score(double value, int decimals);

// Writes one chat-format JSONL record per sample and returns the record count.
// The template must contain "{text}".
std::size_t export_finetune(const std::vector<AnnotatedSample>& samples, std::string_view user_template,
                            const std::filesystem::path& path, int decimals = 1);

// Reads an export back; text is recovered by stripping the template around "{text}".
std::vector<AnnotatedSample> load_finetune_export(const std::filesystem::path& path,
                                                  std::string_view user_template);

}  // namespace eg::corpus
