#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace eg::lexicon {

// Hedge and booster terms. Multiword entries are stored as space-joined tokens.
class MarkerLexicon {
public:
    MarkerLexicon() = default;
    // Throws ValidationError if the sets overlap or an entry is empty or not lowercase.
    MarkerLexicon(std::string version, std::set<std::string> hedges, std::set<std::string> boosters);

    static MarkerLexicon from_json(const nlohmann::json& j);
    static MarkerLexicon load(const std::filesystem::path& path);
    // The versioned lexicon compiled into the library.
    static const MarkerLexicon& builtin();

    nlohmann::json to_json() const;

    const std::string& version() const { return version_; }
    const std::set<std::string>& hedges() const { return hedges_; }
    const std::set<std::string>& boosters() const { return boosters_; }

    // Feature order: hedges (sorted) then boosters (sorted).
    const std::vector<std::string>& marker_names() const { return names_; }
    std::size_t hedge_count() const { return hedges_.size(); }
    std::size_t longest_phrase() const { return longest_; }

    // Marker index of an exact token sequence, or -1.
    int lookup(std::string_view joined_tokens) const;

private:
    std::string version_;
    std::set<std::string> hedges_;
    std::set<std::string> boosters_;
    std::vector<std::string> names_;
    std::map<std::string, int, std::less<>> index_;
    std::size_t longest_ = 1;
};

struct FeatureVector {
    std::string lexicon_version;
    std::vector<double> marker_rates;  // count / token_count, aligned with marker_names()
    std::size_t token_count = 0;
    std::size_t hedge_hits = 0;
    std::size_t booster_hits = 0;
    double hedge_rate = 0.0;
    double booster_rate = 0.0;

    // Model input: marker rates followed by hedge_rate and booster_rate.
    std::vector<double> as_row() const;
};

// Names of the columns of FeatureVector::as_row() for a lexicon.
std::vector<std::string> feature_names(const MarkerLexicon& lexicon);

// Case-insensitive tokenization; at each position the longest matching lexicon
// phrase wins and consumes its tokens. Throws ValidationError on zero tokens.
FeatureVector extract_features(std::string_view text, const MarkerLexicon& lexicon);

}  // namespace eg::lexicon
