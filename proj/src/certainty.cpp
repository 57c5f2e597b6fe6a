#include "eg/certainty.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/prompts.hpp"
#include "eg/text.hpp"

namespace eg::certainty {

std::string_view verdict_name(Verdict v) { return v == Verdict::True ? "True" : "False"; }

nlohmann::json CertaintyRecord::to_json() const {
    nlohmann::json j = {{"statement_id", statement_id},
                        {"statement", statement},
                        {"verdict", verdict ? nlohmann::json(verdict_name(*verdict)) : nlohmann::json(nullptr)},
                        {"raw_confidence", io::json_num(raw_confidence)},
                        {"scale", scale},
                        {"calibrated_p", io::json_num(calibrated_p)},
                        {"explanation", explanation},
                        {"gold_label", gold_label ? nlohmann::json(*gold_label) : nlohmann::json(nullptr)}};
    if (level) j["level"] = *level;
    return j;
}

CertaintyRecord CertaintyRecord::from_json(const nlohmann::json& j) {
    CertaintyRecord r;
    r.statement_id = j.at("statement_id").get<std::string>();
    r.statement = j.value("statement", "");
    if (j.contains("verdict") && !j.at("verdict").is_null()) {
        const auto v = text::to_lower_ascii(j.at("verdict").get<std::string>());
        if (v != "true" && v != "false") throw ValidationError("verdict must be True or False");
        r.verdict = v == "true" ? Verdict::True : Verdict::False;
    }
    if (j.contains("raw_confidence") && !j.at("raw_confidence").is_null()) {
        r.raw_confidence = j.at("raw_confidence").get<double>();
    }
    r.scale = j.value("scale", 100.0);
    if (j.contains("calibrated_p") && !j.at("calibrated_p").is_null()) {
        r.calibrated_p = j.at("calibrated_p").get<double>();
        if (!(*r.calibrated_p >= 0.0 && *r.calibrated_p <= 1.0)) {
            throw ValidationError("calibrated_p outside [0,1] for " + r.statement_id);
        }
    }
    r.explanation = j.value("explanation", "");
    if (j.contains("gold_label") && !j.at("gold_label").is_null()) {
        const auto& g = j.at("gold_label");
        if (g.is_boolean()) {
            r.gold_label = g.get<bool>();
        } else if (g.is_string()) {
            r.gold_label = binarize_liar_label(g.get<std::string>());
        } else {
            throw ValidationError("gold_label must be boolean or a six-way label");
        }
    }
    if (j.contains("level") && !j.at("level").is_null()) r.level = j.at("level").get<int>();
    if (r.verdict && text::trim(r.explanation).empty()) {
        throw ValidationError("record " + r.statement_id + " has a verdict but no explanation");
    }
    return r;
}

std::vector<CertaintyRecord> load_records(const std::filesystem::path& path) {
    std::vector<CertaintyRecord> out;
    for (const auto& rec : io::read_jsonl(path)) {
        try {
            out.push_back(CertaintyRecord::from_json(rec.value));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), rec.line, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(path.string(), rec.line, e.what());
        }
    }
    return out;
}

void save_records(const std::vector<CertaintyRecord>& records, const std::filesystem::path& path) {
    std::string content;
    for (const auto& r : records) content += r.to_json().dump() + "\n";
    io::write_text(path, content);
}

namespace {

double to_double(const std::string& s) {
    double v = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

}  // namespace

std::optional<ParsedElicitation> parse_elicitation(std::string_view reply, double scale) {
    static const std::regex marker(
        R"(verdict\s*[:=\-]?\s*\**\s*(true|false)\b[\s\S]*?score\s*[:=\-]?\s*\**\s*(\d+(?:\.\d+)?)(?:\s*/\s*(\d+(?:\.\d+)?))?)",
        std::regex::icase);
    using It = std::string_view::const_iterator;
    std::match_results<It> last;
    bool found = false;
    for (std::regex_iterator<It> it(reply.begin(), reply.end(), marker), end; it != end; ++it) {
        last = *it;
        found = true;
    }
    if (!found) return std::nullopt;

    ParsedElicitation out;
    out.verdict = text::to_lower_ascii(last[1].str()) == "true" ? Verdict::True : Verdict::False;
    double c = to_double(last[2].str());
    if (last[3].matched) {
        const double denom = to_double(last[3].str());
        if (!(denom > 0.0)) return std::nullopt;
        c = c * scale / denom;
    }
    if (!(c >= 0.0 && c <= scale)) return std::nullopt;
    out.confidence = c;
    const auto prefix = reply.substr(0, static_cast<std::size_t>(last.position(0)));
    out.explanation = std::string(text::trim(prefix));
    if (out.explanation.empty()) return std::nullopt;
    return out;
}

llm::ChatRequest elicitation_request(std::string_view statement, const ElicitConfig& config) {
    llm::ChatRequest req;
    req.model_name = config.model_name;
    req.params = config.params;
    req.messages.push_back({"system", std::string(prompts::kExplainThenScoreSystem)});
    req.messages.push_back({"user", text::replace_all(prompts::kExplainThenScoreUser, "{statement}", statement)});
    return req;
}

CertaintyRecord elicit(llm::ChatAdapter& adapter, std::string statement_id, std::string_view statement,
                       const ElicitConfig& config) {
    if (text::trim(statement).empty()) throw ValidationError("cannot elicit certainty for an empty statement");
    const auto req = elicitation_request(statement, config);
    std::vector<std::string> transcript;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        const auto ex = adapter.send_chat(req);
        transcript.push_back(ex.reply_text);
        if (auto parsed = parse_elicitation(ex.reply_text, config.scale)) {
            CertaintyRecord r;
            r.statement_id = std::move(statement_id);
            r.statement = std::string(statement);
            r.verdict = parsed->verdict;
            r.scale = config.scale;
            r.raw_confidence = parsed->verdict == Verdict::True ? parsed->confidence : config.scale - parsed->confidence;
            r.explanation = std::move(parsed->explanation);
            return r;
        }
    }
    throw ReplyParseError(fmt::format("no verdict and score in {} replies for statement {}", transcript.size(),
                                      statement_id),
                          std::move(transcript));
}

bool binarize_liar_label(std::string_view six_way, const LiarBinarization& mapping) {
    const auto key = text::to_lower_ascii(text::trim(six_way));
    if (mapping.true_labels.contains(key)) return true;
    if (mapping.false_labels.contains(key)) return false;
    throw ValidationError("unknown fact-check label '" + std::string(six_way) + "'");
}

nlohmann::json PlattParams::to_json() const {
    return {{"A", A},
            {"B", B},
            {"fit_meta",
             {{"n", fit_meta.n},
              {"iterations", fit_meta.iterations},
              {"final_nll", fit_meta.final_nll},
              {"converged", fit_meta.converged}}}};
}

PlattParams PlattParams::from_json(const nlohmann::json& j) {
    PlattParams p;
    p.A = j.at("A").get<double>();
    p.B = j.at("B").get<double>();
    if (j.contains("fit_meta")) {
        const auto& m = j.at("fit_meta");
        p.fit_meta.n = m.value("n", std::size_t{0});
        p.fit_meta.iterations = m.value("iterations", 0);
        p.fit_meta.final_nll = m.value("final_nll", 0.0);
        p.fit_meta.converged = m.value("converged", false);
    }
    if (!std::isfinite(p.A) || !std::isfinite(p.B)) throw ValidationError("Platt parameters must be finite");
    return p;
}

namespace {

// NLL of targets t under p = 1/(1+exp(fApB)), in a form that never overflows.
double platt_nll(std::span<const double> f, std::span<const double> t, double A, double B) {
    double nll = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double z = A * f[i] + B;
        nll += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return nll;
}

}  // namespace

PlattParams fit_platt(std::span<const double> raw, const std::vector<bool>& labels) {
    if (raw.size() != labels.size()) throw ValidationError("score and label counts differ");
    if (raw.size() < 10) throw FitError("Platt fit needs at least 10 examples");
    for (double f : raw) {
        if (!std::isfinite(f)) throw FitError("Platt fit needs finite scores");
    }
    const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
    const auto n_neg = static_cast<double>(labels.size()) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw FitError("Platt fit needs both classes");

    const double hi = (n_pos + 1.0) / (n_pos + 2.0);
    const double lo = 1.0 / (n_neg + 2.0);
    std::vector<double> t(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] ? hi : lo;

    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10;
    constexpr double kSigma = 1e-12;
    constexpr double kTol = 1e-9;

    double A = 0.0;
    double B = std::log((n_neg + 1.0) / (n_pos + 1.0));
    double nll = platt_nll(raw, t, A, B);
    PlattParams out;
    out.fit_meta.n = raw.size();
    out.fit_meta.nll_trace.push_back(nll);

    for (int iter = 1; iter <= kMaxIter; ++iter) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double z = A * raw[i] + B;
            double p, q;  // p = 1/(1+exp(z)), q = 1 - p
            if (z >= 0.0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += raw[i] * raw[i] * d2;
            h22 += d2;
            h21 += raw[i] * d2;
            const double d1 = t[i] - p;
            g1 += raw[i] * d1;
            g2 += d1;
        }
        out.fit_meta.iterations = iter;
        if (std::abs(g1) < 1e-12 * static_cast<double>(raw.size()) &&
            std::abs(g2) < 1e-12 * static_cast<double>(raw.size())) {
            out.fit_meta.converged = true;
            break;
        }
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;

        double step = 1.0;
        bool accepted = false;
        double new_nll = nll;
        while (step >= kMinStep) {
            const double nA = A + step * dA;
            const double nB = B + step * dB;
            new_nll = platt_nll(raw, t, nA, nB);
            if (new_nll < nll + 1e-4 * step * gd) {
                A = nA;
                B = nB;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if (!accepted) {
            // No descent left within rounding: the current point is the optimum.
            if (std::abs(gd) < 1e-9 * std::max(1.0, nll)) {
                out.fit_meta.converged = true;
                break;
            }
            throw FitError("Platt line search failed", out.fit_meta.nll_trace);
        }
        const double delta = nll - new_nll;
        nll = new_nll;
        out.fit_meta.nll_trace.push_back(nll);
        if (std::abs(delta) < kTol) {
            out.fit_meta.converged = true;
            break;
        }
    }
    if (!out.fit_meta.converged) {
        throw FitError(fmt::format("Platt fit did not converge in {} iterations", kMaxIter), out.fit_meta.nll_trace);
    }
    if (!std::isfinite(A) || !std::isfinite(B)) throw FitError("Platt fit diverged", out.fit_meta.nll_trace);
    out.A = A;
    out.B = B;
    out.fit_meta.final_nll = nll;
    return out;
}

double apply_platt(const PlattParams& params, double raw) {
    const double z = params.A * raw + params.B;
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

ReliabilityTable reliability(std::span<const double> p, const std::vector<bool>& labels, std::size_t n_bins) {
    if (p.size() != labels.size()) throw ValidationError("probability and label counts differ");
    if (p.empty()) throw ValidationError("reliability needs at least one record");
    if (n_bins < 2) throw ValidationError("reliability needs at least 2 bins");

    std::vector<double> sum_p(n_bins, 0.0), sum_y(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ValidationError("probability outside [0,1]");
        const auto b = std::min(n_bins - 1, static_cast<std::size_t>(p[i] * static_cast<double>(n_bins)));
        sum_p[b] += p[i];
        sum_y[b] += labels[i] ? 1.0 : 0.0;
        ++count[b];
    }
    ReliabilityTable table;
    table.n = p.size();
    for (std::size_t b = 0; b < n_bins; ++b) {
        ReliabilityBin bin;
        bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
        bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        bin.count = count[b];
        if (count[b]) {
            const auto c = static_cast<double>(count[b]);
            bin.mean_predicted_p = sum_p[b] / c;
            bin.empirical_frequency = sum_y[b] / c;
            table.ece += c / static_cast<double>(p.size()) * std::abs(*bin.mean_predicted_p - *bin.empirical_frequency);
        }
        table.bins.push_back(bin);
    }
    return table;
}

ReliabilityTable reliability(const std::vector<CertaintyRecord>& records, std::size_t n_bins) {
    std::vector<double> p;
    std::vector<bool> y;
    for (const auto& r : records) {
        if (!r.gold_label) throw ValidationError("record " + r.statement_id + " has no gold label");
        if (!r.calibrated_p) throw ValidationError("record " + r.statement_id + " is not calibrated");
        p.push_back(*r.calibrated_p);
        y.push_back(*r.gold_label);
    }
    return reliability(p, y, n_bins);
}

double verdict_confidence(double calibrated_p) {
    if (!(calibrated_p >= 0.0 && calibrated_p <= 1.0)) throw ValidationError("probability outside [0,1]");
    return std::abs(2.0 * calibrated_p - 1.0);
}

}  // namespace eg::certainty
