#include "eg/survey.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/prompts.hpp"
#include "eg/rng.hpp"
#include "eg/stats.hpp"
#include "eg/text.hpp"

namespace eg::survey {

std::string level_name(int level) {
    switch (level) {
        case kLow: return "low";
        case kOriginal: return "original";
        case kHigh: return "high";
    }
    throw ValidationError(fmt::format("level {} outside {{-1,0,+1}}", level));
}

std::string item_id(std::string_view statement_id, int level) {
    return std::string(statement_id) + "@" + level_name(level);
}

namespace {

int level_index(int level) { return level + 1; }

std::optional<int> level_from_suffix(std::string_view id) {
    if (id.ends_with("@low")) return kLow;
    if (id.ends_with("@original")) return kOriginal;
    if (id.ends_with("@high")) return kHigh;
    return std::nullopt;
}

}  // namespace

nlohmann::json StimulusItem::to_json() const {
    return {{"item_id", item_id},           {"statement_id", statement_id}, {"level", level},
            {"explanation", explanation},   {"target_length", target_length}, {"word_count", word_count},
            {"length_flagged", length_flagged}, {"retries_used", retries_used}};
}

StimulusItem StimulusItem::from_json(const nlohmann::json& j) {
    StimulusItem s;
    s.item_id = j.at("item_id").get<std::string>();
    s.statement_id = j.at("statement_id").get<std::string>();
    s.level = j.at("level").get<int>();
    s.explanation = j.at("explanation").get<std::string>();
    s.target_length = j.value("target_length", std::size_t{0});
    s.word_count = j.value("word_count", text::word_count(s.explanation));
    s.length_flagged = j.value("length_flagged", false);
    s.retries_used = j.value("retries_used", 0);
    return s;
}

llm::ChatRequest variant_request(std::string_view original, int level, const GenerationConfig& config) {
    if (level != kLow && level != kHigh) throw ValidationError("variants are generated for low and high only");
    const auto target = text::word_count(original);
    const auto instruction = text::replace_all(level == kHigh ? prompts::kStimulusHigh : prompts::kStimulusLow,
                                               "{original_length}", std::to_string(target));
    llm::ChatRequest req;
    req.model_name = config.model_name;
    req.params = config.params;
    req.messages.push_back({"system", std::string(prompts::kStimulusSystem)});
    req.messages.push_back({"user", "Original explanation:\n" + std::string(original)});
    req.messages.push_back({"user", instruction});
    return req;
}

namespace {

StimulusItem generate_one(llm::ChatAdapter& adapter, std::string_view statement_id, std::string_view original,
                          int level, const GenerationConfig& config) {
    const auto req = variant_request(original, level, config);
    StimulusItem item;
    item.item_id = item_id(statement_id, level);
    item.statement_id = std::string(statement_id);
    item.level = level;
    item.target_length = text::word_count(original);
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        const auto ex = adapter.send_chat(req);
        item.explanation = std::string(text::trim(ex.reply_text));
        item.word_count = text::word_count(item.explanation);
        item.retries_used = attempt;
        const double deviation = std::abs(static_cast<double>(item.word_count) - static_cast<double>(item.target_length)) /
                                 static_cast<double>(item.target_length);
        item.length_flagged = item.explanation.empty() || deviation > config.length_tolerance;
        if (!item.length_flagged) break;
    }
    return item;
}

}  // namespace

VariantPair generate_variants(llm::ChatAdapter& adapter, std::string_view statement_id, std::string_view original,
                              const GenerationConfig& config) {
    if (text::trim(original).empty()) throw ValidationError("original explanation is empty");
    return {generate_one(adapter, statement_id, original, kLow, config),
            generate_one(adapter, statement_id, original, kHigh, config)};
}

std::size_t SurveyDefinition::rating_slots() const {
    std::size_t n = 0;
    for (const auto& a : assignments) n += a.item_ids.size();
    return n;
}

std::map<std::string, int> SurveyDefinition::item_levels() const {
    std::map<std::string, int> out;
    for (const auto& s : statements) {
        for (const auto& v : s.variants) out[v.item_id] = v.level;
    }
    return out;
}

nlohmann::json SurveyDefinition::to_json() const {
    nlohmann::json items = nlohmann::json::array();
    nlohmann::json stmts = nlohmann::json::array();
    for (const auto& s : statements) {
        nlohmann::json sj = {{"statement_id", s.statement_id}, {"statement", s.statement}, {"verdict", s.verdict}};
        if (s.question) {
            sj["content_question"] = {{"question", s.question->question},
                                      {"options", s.question->options},
                                      {"answer", s.question->answer}};
        }
        stmts.push_back(std::move(sj));
        for (const auto& v : s.variants) items.push_back(v.to_json());
    }
    nlohmann::json assigns = nlohmann::json::array();
    for (const auto& a : assignments) {
        assigns.push_back(
            {{"respondent_id", a.respondent_id}, {"item_ids", a.item_ids}, {"easy_check_slot", a.easy_check_slot}});
    }
    return {{"format", "eg-survey"},
            {"format_version", 1},
            {"seed", seed},
            {"items_per_respondent", items_per_respondent},
            {"instructions", prompts::kSurveyInstructions},
            {"easy_check", {{"text", prompts::kEasyAttentionCheck}, {"expected_rating", prompts::kEasyAttentionExpected}}},
            {"statements", std::move(stmts)},
            {"items", std::move(items)},
            {"assignments", std::move(assigns)},
            {"rating_slots", rating_slots()}};
}

SurveyDefinition SurveyDefinition::from_json(const nlohmann::json& j) {
    SurveyDefinition d;
    d.seed = j.value("seed", std::uint64_t{0});
    d.items_per_respondent = j.value("items_per_respondent", std::size_t{4});
    std::map<std::string, std::array<StimulusItem, 3>> variants;
    for (const auto& ij : j.at("items")) {
        auto item = StimulusItem::from_json(ij);
        variants[item.statement_id][static_cast<std::size_t>(level_index(item.level))] = item;
    }
    for (const auto& sj : j.at("statements")) {
        SurveyStatement s;
        s.statement_id = sj.at("statement_id").get<std::string>();
        s.statement = sj.value("statement", "");
        s.verdict = sj.value("verdict", "");
        if (sj.contains("content_question")) {
            const auto& q = sj.at("content_question");
            s.question = ContentQuestion{q.at("question").get<std::string>(),
                                         q.at("options").get<std::vector<std::string>>(), q.at("answer").get<int>()};
        }
        s.variants = variants[s.statement_id];
        d.statements.push_back(std::move(s));
    }
    for (const auto& aj : j.at("assignments")) {
        d.assignments.push_back({aj.at("respondent_id").get<std::string>(),
                                 aj.at("item_ids").get<std::vector<std::string>>(),
                                 aj.at("easy_check_slot").get<std::size_t>()});
    }
    return d;
}

SurveyDefinition assemble_survey(const std::vector<SurveyStatement>& statements, std::size_t respondents,
                                 std::uint64_t seed, std::size_t items_per_respondent,
                                 std::size_t max_uses_per_item) {
    if (items_per_respondent == 0) throw ValidationError("items_per_respondent must be positive");
    for (const auto& s : statements) {
        for (int level : {kLow, kOriginal, kHigh}) {
            const auto& v = s.variants[static_cast<std::size_t>(level_index(level))];
            if (v.explanation.empty() || v.level != level) {
                throw ValidationError("statement " + s.statement_id + " lacks its " + level_name(level) + " variant");
            }
        }
    }
    if (statements.size() < items_per_respondent) {
        throw ValidationError(fmt::format("{} statements cannot give {} distinct items per respondent",
                                          statements.size(), items_per_respondent));
    }
    const auto slots = respondents * items_per_respondent;
    if (max_uses_per_item && 3 * statements.size() * max_uses_per_item < slots) {
        throw ValidationError(fmt::format("{} items x {} uses cannot cover {} rating slots", 3 * statements.size(),
                                          max_uses_per_item, slots));
    }

    SurveyDefinition def;
    def.seed = seed;
    def.items_per_respondent = items_per_respondent;
    def.statements = statements;

    Rng rng(seed);
    const auto n_stmt = statements.size();
    std::vector<std::array<std::size_t, 3>> uses(n_stmt, {0, 0, 0});
    std::vector<std::uint64_t> tiebreak(n_stmt);
    const auto width = std::max<std::size_t>(6, fmt::format("{}", respondents).size());

    for (std::size_t r = 0; r < respondents; ++r) {
        Assignment a;
        a.respondent_id = fmt::format("r{:0{}}", r + 1, width);
        std::vector<bool> taken(n_stmt, false);
        for (std::size_t j = 0; j < items_per_respondent; ++j) {
            const auto slot = r * items_per_respondent + j;
            const auto li = slot % 3;
            for (auto& t : tiebreak) t = rng.next();
            std::optional<std::size_t> best;
            for (std::size_t s = 0; s < n_stmt; ++s) {
                if (taken[s]) continue;
                if (max_uses_per_item && uses[s][li] >= max_uses_per_item) continue;
                if (!best || uses[s][li] < uses[*best][li] ||
                    (uses[s][li] == uses[*best][li] && tiebreak[s] < tiebreak[*best])) {
                    best = s;
                }
            }
            if (!best) throw ValidationError("item capacity exhausted while assigning respondent " + a.respondent_id);
            taken[*best] = true;
            ++uses[*best][li];
            a.item_ids.push_back(statements[*best].variants[li].item_id);
        }
        rng.shuffle(std::span(a.item_ids));
        a.easy_check_slot = static_cast<std::size_t>(rng.below(items_per_respondent));
        def.assignments.push_back(std::move(a));
    }
    return def;
}

std::vector<RespondentRecord> load_ratings(const std::filesystem::path& path, std::size_t expected_ratings) {
    const auto table = io::read_csv(path);
    const auto file = path.string();
    const auto col = [&](const char* name) {
        const auto c = table.column(name);
        if (!c) throw ParseError(file, 1, std::string("missing column ") + name);
        return *c;
    };
    const auto c_resp = col("respondent_id");
    const auto c_item = col("item_id");
    const auto c_rating = col("rating");
    const auto c_easy = col("easy_check_value");
    const auto c_att = col("attention_correct_count");

    auto number = [&](const std::string& s, std::size_t line, const char* what) {
        const auto t = text::trim(s);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || ptr != t.data() + t.size()) {
            throw ParseError(file, line, fmt::format("{} '{}' is not a number", what, s));
        }
        return v;
    };

    std::vector<RespondentRecord> out;
    std::map<std::string, std::size_t> index;
    for (const auto& row : table.rows) {
        const auto id = std::string(text::trim(row.fields[c_resp]));
        if (id.empty()) throw ParseError(file, row.line, "empty respondent_id");
        const double rating = number(row.fields[c_rating], row.line, "rating");
        if (!(rating >= 0.0 && rating <= 10.0)) throw ParseError(file, row.line, "rating outside [0,10]");
        const double easy = number(row.fields[c_easy], row.line, "easy_check_value");
        const double att = number(row.fields[c_att], row.line, "attention_correct_count");
        if (att < 0.0 || att > 5.0 || att != std::floor(att)) {
            throw ParseError(file, row.line, "attention_correct_count must be an integer in [0,5]");
        }
        auto [it, inserted] = index.emplace(id, out.size());
        if (inserted) {
            RespondentRecord rec;
            rec.respondent_id = id;
            rec.easy_check_value = static_cast<int>(std::lround(easy));
            rec.easy_check_passed = easy == prompts::kEasyAttentionExpected;
            rec.attention_score = static_cast<int>(att);
            for (std::size_t c = 0; c < table.header.size(); ++c) {
                if (c == c_resp || c == c_item || c == c_rating || c == c_easy || c == c_att) continue;
                rec.demographics[table.header[c]] = row.fields[c];
            }
            out.push_back(std::move(rec));
        } else {
            const auto& rec = out[it->second];
            if (rec.attention_score != static_cast<int>(att) || rec.easy_check_value != static_cast<int>(std::lround(easy))) {
                throw ParseError(file, row.line, "respondent " + id + " has inconsistent attention fields");
            }
        }
        auto& rec = out[it->second];
        const auto item = std::string(text::trim(row.fields[c_item]));
        for (const auto& [seen, r] : rec.ratings) {
            if (seen == item) throw ParseError(file, row.line, "respondent " + id + " rated " + item + " twice");
        }
        rec.ratings.emplace_back(item, rating);
    }
    if (expected_ratings) {
        for (const auto& rec : out) {
            if (rec.ratings.size() != expected_ratings) {
                throw ValidationError(fmt::format("respondent {} has {} ratings, expected {}", rec.respondent_id,
                                                  rec.ratings.size(), expected_ratings));
            }
        }
    }
    return out;
}

FilterResult filter_respondents(const std::vector<RespondentRecord>& records, int min_attention) {
    FilterResult out;
    for (const auto& rec : records) {
        Exclusion ex{rec.respondent_id, {}};
        if (!rec.easy_check_passed) ex.reasons.emplace_back("easy check");
        if (rec.attention_score < min_attention) ex.reasons.push_back(fmt::format("score < {}", min_attention));
        if (ex.reasons.empty()) {
            out.retained.push_back(rec);
        } else {
            out.excluded.push_back(std::move(ex));
        }
    }
    return out;
}

PerceptionStats perception_stats(const std::vector<RespondentRecord>& retained,
                                 const std::map<std::string, int>& item_levels) {
    std::array<std::vector<double>, 3> by_level;
    std::vector<double> all_scaled;
    for (const auto& rec : retained) {
        for (const auto& [item, rating] : rec.ratings) {
            std::optional<int> level;
            if (const auto it = item_levels.find(item); it != item_levels.end()) {
                level = it->second;
            } else {
                level = level_from_suffix(item);
            }
            if (!level) throw ValidationError("item " + item + " has no known variant level");
            by_level[static_cast<std::size_t>(level_index(*level))].push_back(rating);
            all_scaled.push_back(rating / 10.0);
        }
    }
    if (all_scaled.empty()) throw ValidationError("no retained ratings");

    PerceptionStats out;
    std::vector<std::string> empty_levels;
    for (int level : {kLow, kOriginal, kHigh}) {
        const auto& xs = by_level[static_cast<std::size_t>(level_index(level))];
        auto& ls = out.levels[static_cast<std::size_t>(level_index(level))];
        ls.level = level;
        ls.n = xs.size();
        ls.empty = xs.empty();
        if (xs.empty()) {
            empty_levels.push_back(level_name(level));
            continue;
        }
        ls.mean = stats::mean(xs);
        ls.variance = stats::variance(xs, 1);
        ls.stddev = std::sqrt(*ls.variance);
        ls.scaled_mean = *ls.mean / 10.0;
        ls.scaled_variance = *ls.variance / 100.0;
        ls.scaled_stddev = *ls.stddev / 10.0;
    }
    out.overall_scaled = diagnostics::distribution_summary(all_scaled);

    if (!empty_levels.empty()) {
        std::string names;
        for (const auto& n : empty_levels) names += (names.empty() ? "" : ", ") + n;
        out.diagnostic = "empty level(s): " + names;
        return out;
    }
    const double lo = *out.levels[0].mean, orig = *out.levels[1].mean, hi = *out.levels[2].mean;
    out.monotone = lo < orig && orig < hi;
    if (!out.monotone) {
        out.diagnostic = fmt::format("means not strictly increasing: low {:.4f}, original {:.4f}, high {:.4f}", lo,
                                     orig, hi);
    }
    return out;
}

std::string PerceptionStats::levels_csv() const {
    std::string out = io::csv_line({"level", "n", "mean", "variance", "stddev", "scaled_mean", "scaled_variance",
                                    "scaled_stddev"});
    for (const auto& l : levels) {
        out += io::csv_line({level_name(l.level), std::to_string(l.n), io::fmt_opt(l.mean), io::fmt_opt(l.variance),
                             io::fmt_opt(l.stddev), io::fmt_opt(l.scaled_mean), io::fmt_opt(l.scaled_variance),
                             io::fmt_opt(l.scaled_stddev)});
    }
    return out;
}

nlohmann::json PerceptionStats::to_json() const {
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& l : levels) {
        lv.push_back({{"level", l.level},
                      {"name", level_name(l.level)},
                      {"n", l.n},
                      {"mean", io::json_num(l.mean)},
                      {"variance", io::json_num(l.variance)},
                      {"stddev", io::json_num(l.stddev)},
                      {"scaled_mean", io::json_num(l.scaled_mean)},
                      {"scaled_variance", io::json_num(l.scaled_variance)},
                      {"scaled_stddev", io::json_num(l.scaled_stddev)}});
    }
    return {{"levels", std::move(lv)},
            {"overall_scaled", overall_scaled.to_json()},
            {"monotone", monotone},
            {"diagnostic", diagnostic}};
}

}  // namespace eg::survey
