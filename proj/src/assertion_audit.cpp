#include "eg/assertion_audit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/prompts.hpp"
#include "eg/rng.hpp"
#include "eg/text.hpp"

namespace eg::audit {

std::optional<int> parse_assertion_reply(std::string_view reply) {
    const auto t = text::trim(reply);
    if (t == "1" || t == "+1") return 1;
    if (t == "-1") return -1;
    if (t == "0") return 0;
    return std::nullopt;
}

llm::ChatRequest classification_request(std::string_view explanation, const ClassifyConfig& config) {
    std::string_view instruction = prompts::kAssertionThreeWay;
    if (config.prompt == AssertionPrompt::Scale100) instruction = prompts::kAssertionScale100;
    if (config.prompt == AssertionPrompt::TrueFalseNeither) instruction = prompts::kAssertionTfn;
    llm::ChatRequest req;
    req.model_name = config.model_name;
    req.params = config.params;
    req.messages.push_back({"system", std::string(instruction)});
    req.messages.push_back({"user", std::string(explanation)});
    return req;
}

AssertionLabel classify_assertion(llm::ChatAdapter& adapter, std::string_view explanation,
                                  const ClassifyConfig& config) {
    if (text::trim(explanation).empty()) throw ValidationError("cannot classify an empty explanation");
    if (config.prompt != AssertionPrompt::ThreeWay) {
        throw ConfigError("only the three-way prompt yields assertion labels");
    }
    const auto req = classification_request(explanation, config);
    std::vector<std::string> transcript;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        const auto ex = adapter.send_chat(req);
        transcript.push_back(ex.reply_text);
        if (const auto v = parse_assertion_reply(ex.reply_text)) return {*v, Rater::Model, attempt};
    }
    throw ReplyParseError(fmt::format("no numeric categorization in {} replies", transcript.size()),
                          std::move(transcript));
}

SamplingPlan SamplingPlan::standard() {
    SamplingPlan p;
    p.bins = {{0, 5, 5},   {5, 15, 5},   {15, 25, 5},  {25, 35, 5},  {35, 45, 15}, {45, 55, 30},
              {55, 65, 15}, {65, 75, 5}, {75, 85, 5}, {85, 95, 5}, {95, 100, 5}};
    for (const auto& b : p.bins) p.total += b.count;
    return p;
}

void SamplingPlan::validate() const {
    std::size_t sum = 0;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (!(bins[i].upper > bins[i].lower)) throw ValidationError("plan bin with empty interval");
        if (i > 0 && bins[i].lower < bins[i - 1].upper) throw ValidationError("plan bins overlap");
        sum += bins[i].count;
    }
    if (sum != total) throw ValidationError("plan total differs from the sum of bin counts");
}

DrawnPlan build_plan(const std::vector<std::pair<std::string, double>>& certainties, std::uint64_t seed,
                     const SamplingPlan& plan) {
    plan.validate();
    DrawnPlan out;
    out.plan = plan;
    std::vector<std::vector<std::string>> members(plan.bins.size());
    for (const auto& [id, c] : certainties) {
        for (std::size_t b = 0; b < plan.bins.size(); ++b) {
            const auto& bin = plan.bins[b];
            const bool last = b + 1 == plan.bins.size();
            if (c >= bin.lower && (c < bin.upper || (last && c <= bin.upper))) {
                members[b].push_back(id);
                break;
            }
        }
    }
    std::vector<std::string> shortfalls;
    for (std::size_t b = 0; b < plan.bins.size(); ++b) {
        if (members[b].size() < plan.bins[b].count) {
            shortfalls.push_back(fmt::format("[{}, {}{} needs {} has {} (short {})", plan.bins[b].lower,
                                             plan.bins[b].upper, b + 1 == plan.bins.size() ? "]" : ")",
                                             plan.bins[b].count, members[b].size(),
                                             plan.bins[b].count - members[b].size()));
        }
    }
    if (!shortfalls.empty()) {
        std::string msg = "underfull sampling bins:";
        for (const auto& s : shortfalls) msg += " " + s + ";";
        throw ValidationError(msg);
    }
    Rng rng(seed);
    for (std::size_t b = 0; b < plan.bins.size(); ++b) {
        auto pool = members[b];
        // Partial Fisher-Yates draw of `count` ids.
        const auto k = plan.bins[b].count;
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        out.ids.insert(out.ids.end(), pool.begin(), pool.end());
        out.ids_per_bin.push_back(std::move(pool));
    }
    return out;
}

KappaResult cohen_kappa(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ValidationError("label vectors differ in length");
    if (a.empty()) throw ValidationError("kappa needs at least one label pair");
    std::set<int> alphabet(a.begin(), a.end());
    alphabet.insert(b.begin(), b.end());
    KappaResult r;
    r.n = a.size();
    r.alphabet.assign(alphabet.begin(), alphabet.end());
    const auto k = r.alphabet.size();
    auto index = [&](int v) {
        return static_cast<std::size_t>(std::lower_bound(r.alphabet.begin(), r.alphabet.end(), v) - r.alphabet.begin());
    };
    r.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < a.size(); ++i) ++r.confusion[index(a[i])][index(b[i])];

    const auto n = static_cast<double>(r.n);
    double agree = 0.0;
    double expected = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        agree += static_cast<double>(r.confusion[i][i]);
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row += static_cast<double>(r.confusion[i][j]);
            col += static_cast<double>(r.confusion[j][i]);
        }
        expected += (row / n) * (col / n);
    }
    r.percent_agreement = agree / n;
    r.expected_agreement = expected;
    if (std::abs(1.0 - expected) > 1e-15) r.kappa = (r.percent_agreement - expected) / (1.0 - expected);
    return r;
}

nlohmann::json KappaResult::to_json() const {
    return {{"kappa", kappa ? nlohmann::json(*kappa) : nlohmann::json(nullptr)},
            {"kappa_note", kappa ? "" : "undefined: expected agreement is 1"},
            {"percent_agreement", percent_agreement},
            {"expected_agreement", expected_agreement},
            {"n", n},
            {"alphabet", alphabet},
            {"confusion", confusion}};
}

}  // namespace eg::audit
