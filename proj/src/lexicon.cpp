#include "eg/lexicon.hpp"

#include <algorithm>

#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/text.hpp"

namespace eg::lexicon {

extern const char* const kBuiltinLexiconJson;  // generated from data/marker_lexicon.json

namespace {

std::string normalize_entry(const std::string& entry, std::string_view kind) {
    if (text::trim(entry).empty()) throw ValidationError(std::string(kind) + " entry is empty");
    if (text::to_lower_ascii(entry) != entry) {
        throw ValidationError(std::string(kind) + " entry '" + entry + "' is not lowercase");
    }
    const auto tokens = text::tokenize(entry);
    if (tokens.empty()) throw ValidationError(std::string(kind) + " entry '" + entry + "' has no word tokens");
    std::string joined;
    for (const auto& t : tokens) {
        if (!joined.empty()) joined += ' ';
        joined += t;
    }
    return joined;
}

}  // namespace

MarkerLexicon::MarkerLexicon(std::string version, std::set<std::string> hedges, std::set<std::string> boosters)
    : version_(std::move(version)) {
    if (version_.empty()) throw ValidationError("lexicon version is empty");
    for (const auto& h : hedges) hedges_.insert(normalize_entry(h, "hedge"));
    for (const auto& b : boosters) boosters_.insert(normalize_entry(b, "booster"));
    for (const auto& h : hedges_) {
        if (boosters_.contains(h)) throw ValidationError("'" + h + "' is both a hedge and a booster");
    }
    names_.assign(hedges_.begin(), hedges_.end());
    names_.insert(names_.end(), boosters_.begin(), boosters_.end());
    for (std::size_t i = 0; i < names_.size(); ++i) {
        index_.emplace(names_[i], static_cast<int>(i));
        longest_ = std::max<std::size_t>(longest_, std::count(names_[i].begin(), names_[i].end(), ' ') + 1);
    }
}

MarkerLexicon MarkerLexicon::from_json(const nlohmann::json& j) {
    try {
        return MarkerLexicon(j.at("version").get<std::string>(), j.at("hedges").get<std::set<std::string>>(),
                             j.at("boosters").get<std::set<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed lexicon: ") + e.what());
    }
}

MarkerLexicon MarkerLexicon::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(io::read_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

const MarkerLexicon& MarkerLexicon::builtin() {
    static const MarkerLexicon lex = from_json(nlohmann::json::parse(kBuiltinLexiconJson));
    return lex;
}

nlohmann::json MarkerLexicon::to_json() const {
    return {{"version", version_}, {"hedges", hedges_}, {"boosters", boosters_}};
}

int MarkerLexicon::lookup(std::string_view joined_tokens) const {
    const auto it = index_.find(joined_tokens);
    return it == index_.end() ? -1 : it->second;
}

std::vector<double> FeatureVector::as_row() const {
    std::vector<double> row = marker_rates;
    row.push_back(hedge_rate);
    row.push_back(booster_rate);
    return row;
}

std::vector<std::string> feature_names(const MarkerLexicon& lexicon) {
    std::vector<std::string> names = lexicon.marker_names();
    names.emplace_back("hedge_rate");
    names.emplace_back("booster_rate");
    return names;
}

FeatureVector extract_features(std::string_view input, const MarkerLexicon& lexicon) {
    const auto tokens = text::tokenize(input);
    if (tokens.empty()) throw ValidationError("text has no word tokens");

    FeatureVector fv;
    fv.lexicon_version = lexicon.version();
    fv.token_count = tokens.size();
    std::vector<std::size_t> counts(lexicon.marker_names().size(), 0);

    std::string candidate;
    for (std::size_t i = 0; i < tokens.size();) {
        const auto max_len = std::min(lexicon.longest_phrase(), tokens.size() - i);
        std::size_t matched = 0;
        for (auto len = max_len; len >= 1; --len) {
            candidate.clear();
            for (std::size_t k = 0; k < len; ++k) {
                if (k) candidate += ' ';
                candidate += tokens[i + k];
            }
            if (const int idx = lexicon.lookup(candidate); idx >= 0) {
                ++counts[static_cast<std::size_t>(idx)];
                if (static_cast<std::size_t>(idx) < lexicon.hedge_count()) {
                    ++fv.hedge_hits;
                } else {
                    ++fv.booster_hits;
                }
                matched = len;
                break;
            }
        }
        i += matched ? matched : 1;
    }

    const auto n = static_cast<double>(fv.token_count);
    fv.marker_rates.reserve(counts.size());
    for (auto c : counts) fv.marker_rates.push_back(static_cast<double>(c) / n);
    fv.hedge_rate = static_cast<double>(fv.hedge_hits) / n;
    fv.booster_rate = static_cast<double>(fv.booster_hits) / n;
    return fv;
}

}  // namespace eg::lexicon
