#include "eg/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/prompts.hpp"
#include "eg/rng.hpp"
#include "eg/stats.hpp"
#include "eg/text.hpp"

namespace eg::corpus {

double mean_rating(const std::map<std::string, double>& coder_scores) {
    if (coder_scores.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [coder, rating] : coder_scores) sum += rating;
    return sum / static_cast<double>(coder_scores.size());
}

void validate(const AnnotatedSample& sample) {
    if (sample.id.empty()) throw ValidationError("sample with empty id");
    if (text::trim(sample.text).empty()) throw ValidationError("sample " + sample.id + ": empty text");
    if (sample.coder_scores.empty()) throw ValidationError("sample " + sample.id + ": no coder ratings");
    for (const auto& [coder, rating] : sample.coder_scores) {
        if (!std::isfinite(rating) || rating < 0.0 || rating > 10.0) {
            throw ValidationError(fmt::format("sample {}: coder {} rating {} outside [0,10]", sample.id,
                                              coder, rating));
        }
    }
    if (std::abs(mean_rating(sample.coder_scores) - sample.mean_score) > 1e-9) {
        throw ValidationError("sample " + sample.id + ": mean_score disagrees with coder ratings");
    }
}

namespace {

IngestConfig::Format resolve_format(const std::filesystem::path& path, IngestConfig::Format f) {
    if (f != IngestConfig::Format::Auto) return f;
    const auto ext = text::to_lower_ascii(path.extension().string());
    if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return IngestConfig::Format::Jsonl;
    return IngestConfig::Format::Csv;
}

double parse_rating(const std::string& raw, const std::string& file, std::size_t line,
                    const std::string& coder) {
    const auto t = text::trim(raw);
    double value = 0.0;
    const auto* end = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError(file, line, fmt::format("coder {}: rating '{}' is not a number", coder, raw));
    }
    return value;
}

void finish_sample(AnnotatedSample& s, const std::string& file, std::size_t line) {
    s.mean_score = mean_rating(s.coder_scores);
    try {
        validate(s);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}:{}: {}", file, line, e.what()));
    }
}

void load_csv(const std::filesystem::path& path, const IngestConfig& cfg,
              std::vector<std::pair<AnnotatedSample, std::size_t>>& out) {
    const auto table = io::read_csv(path);
    const auto file = path.string();
    const auto id_col = table.column(cfg.id_column);
    const auto text_col = table.column(cfg.text_column);
    const auto source_col = table.column(cfg.source_column);
    if (!id_col || !text_col) throw ParseError(file, 1, "header must contain id and text columns");
    if (!source_col && !cfg.source_override) throw ParseError(file, 1, "header lacks a source column");

    std::vector<std::size_t> coder_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c != *id_col && c != *text_col && (!source_col || c != *source_col)) coder_cols.push_back(c);
    }
    for (const auto& row : table.rows) {
        AnnotatedSample s;
        s.id = std::string(text::trim(row.fields[*id_col]));
        s.text = row.fields[*text_col];
        s.source = cfg.source_override ? *cfg.source_override
                                       : std::string(text::trim(row.fields[*source_col]));
        if (s.id.empty()) throw ParseError(file, row.line, "empty id");
        for (auto c : coder_cols) {
            if (text::trim(row.fields[c]).empty()) continue;
            s.coder_scores[table.header[c]] = parse_rating(row.fields[c], file, row.line, table.header[c]);
        }
        finish_sample(s, file, row.line);
        out.emplace_back(std::move(s), row.line);
    }
}

void load_jsonl(const std::filesystem::path& path, const IngestConfig& cfg,
                std::vector<std::pair<AnnotatedSample, std::size_t>>& out) {
    const auto file = path.string();
    for (const auto& rec : io::read_jsonl(path)) {
        const auto& j = rec.value;
        if (!j.is_object()) throw ParseError(file, rec.line, "record is not an object");
        auto get_string = [&](const std::string& key) -> std::optional<std::string> {
            if (!j.contains(key)) return std::nullopt;
            const auto& v = j.at(key);
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_integer()) return std::to_string(v.get<long long>());
            throw ParseError(file, rec.line, key + " must be a string");
        };
        AnnotatedSample s;
        auto id = get_string(cfg.id_column);
        auto txt = get_string(cfg.text_column);
        if (!id || id->empty()) throw ParseError(file, rec.line, "missing id");
        if (!txt) throw ParseError(file, rec.line, "missing text");
        s.id = *id;
        s.text = *txt;
        if (cfg.source_override) {
            s.source = *cfg.source_override;
        } else {
            auto src = get_string(cfg.source_column);
            if (!src) throw ParseError(file, rec.line, "missing source");
            s.source = *src;
        }
        for (const auto& [key, value] : j.items()) {
            if (key == cfg.id_column || key == cfg.text_column || key == cfg.source_column) continue;
            if (value.is_null()) continue;
            if (!value.is_number()) {
                throw ParseError(file, rec.line, fmt::format("coder {}: rating is not a number", key));
            }
            s.coder_scores[key] = value.get<double>();
        }
        finish_sample(s, file, rec.line);
        out.emplace_back(std::move(s), rec.line);
    }
}

}  // namespace

std::vector<AnnotatedSample> load_corpus(const std::vector<std::filesystem::path>& paths,
                                         const IngestConfig& config) {
    std::vector<AnnotatedSample> samples;
    std::unordered_set<std::string> seen;
    for (const auto& path : paths) {
        std::vector<std::pair<AnnotatedSample, std::size_t>> loaded;
        if (resolve_format(path, config.format) == IngestConfig::Format::Jsonl) {
            load_jsonl(path, config, loaded);
        } else {
            load_csv(path, config, loaded);
        }
        for (auto& [s, line] : loaded) {
            if (!seen.insert(s.id).second) {
                throw ParseError(path.string(), line, "duplicate id " + s.id);
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

AgreementTable intercoder_agreement(const std::vector<AnnotatedSample>& samples) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_coder;
    for (const auto& s : samples) {
        for (const auto& [coder, rating] : s.coder_scores) {
            auto& [mine, means] = per_coder[coder];
            mine.push_back(rating);
            means.push_back(s.mean_score);
        }
    }
    AgreementTable table;
    for (const auto& [coder, series] : per_coder) {
        if (series.first.size() < 2) continue;
        table.rows.push_back({coder, series.first.size(), stats::pearson_r(series.first, series.second)});
    }
    if (table.rows.size() < 2) {
        throw ValidationError("intercoder agreement needs at least two coders with two or more ratings");
    }
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& row : table.rows) {
        if (row.correlation) {
            sum += *row.correlation;
            ++defined;
        }
    }
    if (defined) table.mean_agreement = sum / static_cast<double>(defined);
    return table;
}

std::string SplitStrategy::describe() const {
    if (kind == Kind::LeaveOneSourceOut) return "leave-one-source-out(" + held_out_source + ")";
    return fmt::format("random({})", train_ratio);
}

CorpusSplit split(const std::vector<AnnotatedSample>& samples, const SplitStrategy& strategy,
                  std::uint64_t seed) {
    CorpusSplit out{{}, {}, strategy, seed};
    if (strategy.kind == SplitStrategy::Kind::LeaveOneSourceOut) {
        for (const auto& s : samples) {
            (s.source == strategy.held_out_source ? out.test : out.train).push_back(s.id);
        }
        if (out.test.empty()) throw ValidationError("source " + strategy.held_out_source + " not present");
    } else {
        if (!(strategy.train_ratio > 0.0 && strategy.train_ratio < 1.0)) {
            throw ValidationError("train ratio must lie in (0,1)");
        }
        std::vector<std::string> ids;
        ids.reserve(samples.size());
        for (const auto& s : samples) ids.push_back(s.id);
        Rng rng(seed);
        rng.shuffle(std::span(ids));
        const auto n_train =
            static_cast<std::size_t>(std::llround(strategy.train_ratio * static_cast<double>(ids.size())));
        out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    }
    if (out.train.empty() || out.test.empty()) throw ValidationError("split leaves train or test empty");
    return out;
}

std::vector<AnnotatedSample> select(const std::vector<AnnotatedSample>& samples,
                                    const std::vector<std::string>& ids) {
    std::map<std::string_view, const AnnotatedSample*> by_id;
    for (const auto& s : samples) by_id.emplace(s.id, &s);
    std::vector<AnnotatedSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("unknown sample id " + id);
        out.push_back(*it->second);
    }
    return out;
}

double round_half_away(double value, int decimals) {
    if (decimals < 0) throw ValidationError("decimals must be >= 0");
    if (!std::isfinite(value)) return value;
    const bool negative = std::signbit(value);
    char buf[512];
    const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(value), std::chars_format::fixed);
    std::string digits(buf, res.ptr);
    auto dot = digits.find('.');
    if (dot == std::string::npos) {
        digits += '.';
        dot = digits.size() - 1;
    }
    const auto frac_len = digits.size() - dot - 1;
    if (frac_len <= static_cast<std::size_t>(decimals)) return value;

    const bool round_up = digits[dot + 1 + static_cast<std::size_t>(decimals)] >= '5';
    std::string kept = digits.substr(0, dot) + digits.substr(dot + 1, static_cast<std::size_t>(decimals));
    if (round_up) {
        int i = static_cast<int>(kept.size()) - 1;
        for (; i >= 0; --i) {
            if (kept[static_cast<std::size_t>(i)] == '9') {
                kept[static_cast<std::size_t>(i)] = '0';
            } else {
                ++kept[static_cast<std::size_t>(i)];
                break;
            }
        }
        if (i < 0) kept.insert(kept.begin(), '1');
    }
    const auto int_len = kept.size() - static_cast<std::size_t>(decimals);
    std::string rebuilt = kept.substr(0, int_len);
    if (decimals > 0) rebuilt += "." + kept.substr(int_len);
    double out = 0.0;
    std::from_chars(rebuilt.data(), rebuilt.data() + rebuilt.size(), out);
    return negative ? -out : out;
}

std::vector<AnnotatedSample> round_scores(const std::vector<AnnotatedSample>& samples, int decimals) {
    std::vector<AnnotatedSample> out = samples;
    for (auto& s : out) s.mean_score = round_half_away(s.mean_score, decimals);
    return out;
}

std::string format_score(double value, int decimals) {
    return fmt::format("{:.{}f}", round_half_away(value, decimals), decimals);
}

std::size_t export_finetune(const std::vector<AnnotatedSample>& samples, std::string_view user_template,
                            const std::filesystem::path& path, int decimals) {
    if (user_template.find(prompts::kTextPlaceholder) == std::string_view::npos) {
        throw ValidationError("prompt template lacks the {text} placeholder");
    }
    std::string content;
    for (const auto& s : samples) {
        io::Json rec;
        rec["messages"] = io::Json::array({
            {{"role", "system"}, {"content", prompts::kCoderRating}},
            {{"role", "user"}, {"content", text::replace_all(user_template, prompts::kTextPlaceholder, s.text)}},
            {{"role", "assistant"}, {"content", format_score(s.mean_score, decimals)}},
        });
        content += rec.dump() + "\n";
    }
    io::write_text(path, content);
    return samples.size();
}

std::vector<AnnotatedSample> load_finetune_export(const std::filesystem::path& path,
                                                  std::string_view user_template) {
    const auto at = user_template.find(prompts::kTextPlaceholder);
    if (at == std::string_view::npos) throw ValidationError("prompt template lacks the {text} placeholder");
    const auto prefix = user_template.substr(0, at);
    const auto suffix = user_template.substr(at + prompts::kTextPlaceholder.size());

    std::vector<AnnotatedSample> out;
    for (const auto& rec : io::read_jsonl(path)) {
        const auto& msgs = rec.value.at("messages");
        std::string user;
        std::string assistant;
        for (const auto& m : msgs) {
            if (m.at("role") == "user") user = m.at("content").get<std::string>();
            if (m.at("role") == "assistant") assistant = m.at("content").get<std::string>();
        }
        if (!user.starts_with(prefix) || !user.ends_with(suffix) || user.size() < prefix.size() + suffix.size()) {
            throw ParseError(path.string(), rec.line, "user message does not match the template");
        }
        AnnotatedSample s;
        s.id = fmt::format("ft-{}", out.size() + 1);
        s.text = user.substr(prefix.size(), user.size() - prefix.size() - suffix.size());
        s.source = "finetune";
        s.coder_scores["label"] = parse_rating(assistant, path.string(), rec.line, "label");
        s.mean_score = s.coder_scores["label"];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace eg::corpus
