// Regenerates tests/fixtures. Model exchanges are recorded through the CLI in
// record mode against a scripted transport, so the stores hold exactly the
// requests the replaying commands will send.

#include <cmath>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "eg/assertion_audit.hpp"
#include "eg/certainty.hpp"
#include "eg/cli.hpp"
#include "eg/io.hpp"
#include "eg/prompts.hpp"
#include "eg/rng.hpp"
#include "eg/scorers.hpp"
#include "eg/stats.hpp"
#include "eg/survey.hpp"
#include "eg/text.hpp"

#include "../tests/support/synthetic.hpp"

namespace fs = std::filesystem;
using eg::io::Json;

namespace {

class Script {
public:
    void add(const eg::llm::ChatRequest& req, std::string reply) {
        replies_[key(req.model_name, req.to_json().at("messages"))].push_back(std::move(reply));
    }

    std::optional<std::string> take(const std::string& model, const Json& messages) {
        auto it = replies_.find(key(model, messages));
        if (it == replies_.end() || it->second.empty()) return std::nullopt;
        auto r = std::move(it->second.front());
        it->second.pop_front();
        return r;
    }

private:
    static std::string key(const std::string& model, const Json& messages) { return model + "\n" + messages.dump(); }
    std::map<std::string, std::deque<std::string>> replies_;
};

class ScriptedTransport final : public eg::llm::Transport {
public:
    explicit ScriptedTransport(std::shared_ptr<Script> s) : script_(std::move(s)) {}
    eg::llm::HttpResponse post(const std::string&, const std::string& body,
                               const std::vector<std::pair<std::string, std::string>>&) override {
        const auto j = Json::parse(body);
        const auto reply = script_->take(j.at("model").get<std::string>(), j.at("messages"));
        if (!reply) return {400, R"({"error":"no scripted reply"})"};
        Json out = {{"choices", Json::array({{{"message", {{"role", "assistant"}, {"content", *reply}}}}})}};
        return {200, out.dump()};
    }

private:
    std::shared_ptr<Script> script_;
};

void run(const std::vector<std::string>& args, const std::shared_ptr<Script>& script = nullptr) {
    std::ostringstream out, err;
    eg::cli::TransportFactory factory;
    if (script) factory = [script] { return std::make_unique<ScriptedTransport>(script); };
    const int code = eg::cli::run_cli(args, out, err, factory);
    if (code != 0) {
        throw std::runtime_error(fmt::format("{} failed ({}): {}", args.front(), code, err.str()));
    }
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double round1(double x) { return eg::corpus::round_half_away(x, 1); }

void write_json(const fs::path& p, const Json& j) { eg::io::write_text(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

void make_corpus5(const fs::path& dir, std::uint64_t seed) {
    const auto samples = eg::synth::marker_corpus(eg::derive_seed(seed, "corpus5"));
    eg::io::write_text(dir / "corpus.csv", eg::synth::corpus_csv(samples));
    write_json(dir / "config.json",
               {{"seed", seed},
                {"out_dir", "out"},
                {"score",
                 {{"scorer", "forest"}, {"corpus", "corpus.csv"}, {"train_corpus", "corpus.csv"},
                  {"forest", {{"n_trees", 60}}}}},
                {"ablate",
                 {{"corpus", "corpus.csv"},
                  {"models", {"forest"}},
                  {"forest", {{"n_trees", 60}}},
                  {"sources", {"Anthropic", "Pei", "Llama3Liar", "GM", "CMV"}},
                  {"external_rows",
                   {{{"model", "reported fine-tuned (rounded)"}, {"values", {0.99, 1.05, 1.42, 0.98, 0.94}}}}}}}});
    std::cout << "corpus5: " << samples.size() << " samples\n";
}

// Gaussian copula: latent (z1, z2) with correlation rho drive the raw certainty
// and the scored assertiveness. Seeds are searched until the realized Spearman
// correlation of the quantized series is within 0.01 of 0.30.
struct E2eDraw {
    std::vector<std::string> ids, statements, explanations;
    std::vector<int> raw, level;
    std::vector<bool> gold;
    std::vector<double> assertiveness, human;
    double rho = 0.0;
};

E2eDraw draw_e2e(std::uint64_t seed) {
    constexpr std::size_t n = 100;
    constexpr double latent_rho = 0.33;
    const auto& lex = eg::lexicon::MarkerLexicon::builtin();
    const auto& vocab = eg::synth::filler_vocabularies()[3];
    eg::Rng rng(seed);
    E2eDraw d;
    for (std::size_t i = 0; i < n; ++i) {
        const double z1 = rng.normal();
        const double z2 = latent_rho * z1 + std::sqrt(1.0 - latent_rho * latent_rho) * rng.normal();
        const int level = static_cast<int>(i % 3) - 1;
        const double u1 = phi(z1);
        d.ids.push_back(fmt::format("e2e-{:03d}", i + 1));
        d.level.push_back(level);
        d.raw.push_back(std::clamp(static_cast<int>(std::lround(100.0 * u1)), 2, 98));
        d.gold.push_back(rng.bernoulli(0.1 + 0.8 * u1));
        const double a = std::clamp(round1(10.0 * phi(z2 + 0.3 * level)), 0.5, 9.5);
        d.assertiveness.push_back(a);
        d.human.push_back(std::clamp(round1(a + 0.7 * level + rng.normal()), 0.0, 10.0));
        const int hedges = a < 4.0 ? 2 : (a < 6.0 ? 1 : 0);
        const int boosters = a > 6.0 ? 2 : (a > 4.0 ? 1 : 0);
        d.statements.push_back(fmt::format("Statement {}: the {} {} went up by {} percent last year.", i + 1,
                                           eg::synth::pick(rng, vocab), eg::synth::pick(rng, vocab),
                                           5 + rng.below(40)));
        d.explanations.push_back(fmt::format("On statement {}, {}", i + 1,
                                             eg::synth::marker_text(rng, lex, vocab, hedges, boosters, 12)));
    }
    std::vector<double> raw(d.raw.begin(), d.raw.end());
    d.rho = *eg::stats::spearman(raw, d.assertiveness).coefficient;
    return d;
}

void make_e2e(const fs::path& dir, std::uint64_t seed) {
    const auto store = dir / "store.jsonl";
    const auto config = dir / "config.json";
    const auto tmp = fs::temp_directory_path() / "eg_make_fixtures_e2e";
    const Json cfg = {
        {"seed", seed},
        {"out_dir", "out"},
        {"report_tag", "engineered Gaussian-copula fixture: spearman(certainty, assertiveness) set to 0.30 by construction"},
        {"adapter", {{"mode", "replay"}, {"store", "store.jsonl"}, {"max_inflight", 4}}},
        {"score",
         {{"scorer", "prompt:fixture-rater"},
          {"input", "statements.jsonl"},
          {"id_field", "statement_id"},
          {"text_field", "explanation"}}},
        {"calibrate", {{"statements", "statements.jsonl"}, {"model", "fixture-model"}, {"validation_fraction", 0.5}, {"bins", 10}}},
        {"diagnose", {{"human", "human.csv"}, {"method", "spearman"}, {"certainty_channel", "calibrated_p"}, {"threshold", 0.3}}}};

    for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt > 5000) throw std::runtime_error("no e2e seed met the target correlation");
        const auto d = draw_e2e(eg::derive_seed(seed, attempt));
        if (std::abs(d.rho - 0.30) > 0.01) continue;

        std::string jsonl, human = "id,human\n";
        auto script = std::make_shared<Script>();
        eg::scorers::PromptConfig pc;
        pc.model_name = "fixture-rater";
        eg::certainty::ElicitConfig ec;
        ec.model_name = "fixture-model";
        for (std::size_t i = 0; i < d.ids.size(); ++i) {
            jsonl += Json{{"statement_id", d.ids[i]},
                          {"statement", d.statements[i]},
                          {"gold_label", static_cast<bool>(d.gold[i])},
                          {"level", d.level[i]},
                          {"explanation", d.explanations[i]}}
                         .dump() +
                     "\n";
            human += eg::io::csv_line({d.ids[i], eg::corpus::format_score(d.human[i], 1)});

            const auto sreq = eg::scorers::prompt_request(d.explanations[i], pc);
            if (i % 37 == 5) script->add(sreq, "I would rather not put a number on this.");
            script->add(sreq, eg::corpus::format_score(d.assertiveness[i], 1));

            const auto ereq = eg::certainty::elicitation_request(d.statements[i], ec);
            if (i == 11) script->add(ereq, "Let me think about the figures involved first.");
            const bool is_true = d.raw[i] >= 50;
            script->add(ereq, fmt::format("{}\n\nVerdict: {}, Score: {}", d.explanations[i], is_true ? "True" : "False",
                                          is_true ? d.raw[i] : 100 - d.raw[i]));
        }
        eg::io::write_text(dir / "statements.jsonl", jsonl);
        eg::io::write_text(dir / "human.csv", human);
        write_json(config, cfg);
        fs::remove(store);
        fs::remove_all(tmp);
        for (const char* cmd : {"score", "calibrate"}) {
            run({cmd, "--config", config.string(), "--record", store.string(), "--max-inflight", "1", "--out",
                 tmp.string()},
                script);
        }
        fs::remove_all(tmp);
        for (const char* cmd : {"score", "calibrate", "diagnose"}) {
            run({cmd, "--config", config.string(), "--out", tmp.string()});
        }
        const auto gap = Json::parse(eg::io::read_text(tmp / "gap_summary.json"));
        const auto strat = Json::parse(eg::io::read_text(tmp / "stratified.json"));
        const double rho = gap.at("spearman_calibrated_p_vs_assertiveness").at("coefficient").get<double>();
        fs::remove_all(tmp);
        if (std::abs(rho - 0.30) > 0.01 || !strat.at("all_cells_defined").get<bool>()) continue;
        std::cout << fmt::format("e2e: seed attempt {}, generator spearman {:.4f}, pipeline spearman {:.4f}\n",
                                 attempt, d.rho, rho);
        return;
    }
}

void make_audit(const fs::path& dir, std::uint64_t seed) {
    const auto& lex = eg::lexicon::MarkerLexicon::builtin();
    const auto& vocab = eg::synth::filler_vocabularies()[1];
    eg::Rng rng(eg::derive_seed(seed, "audit"));
    const auto plan = eg::audit::SamplingPlan::standard();
    auto script = std::make_shared<Script>();
    eg::audit::ClassifyConfig cc;
    cc.model_name = "fixture-auditor";
    std::string jsonl, human = "statement_id,human_label\n";
    std::size_t n = 0;
    for (const auto& bin : plan.bins) {
        for (std::size_t k = 0; k < 2 * bin.count; ++k) {
            const auto id = fmt::format("au-{:03d}", ++n);
            double c = round1(bin.lower + (bin.upper - bin.lower) * rng.uniform());
            if (c >= bin.upper && bin.upper < 100.0) c = bin.lower;
            const double u = rng.uniform();
            const int h = u < 0.45 ? 1 : (u < 0.85 ? -1 : 0);
            int m = h;
            if (rng.bernoulli(0.15)) m = (h + 2 + static_cast<int>(rng.below(2))) % 3 - 1;
            const auto expl = fmt::format("Case {}: {}", n, eg::synth::marker_text(rng, lex, vocab, 1, 1, 10));
            jsonl += Json{{"statement_id", id}, {"explanation", expl}, {"certainty", c}}.dump() + "\n";
            human += eg::io::csv_line({id, std::to_string(h)});
            const auto req = eg::audit::classification_request(expl, cc);
            if (n % 41 == 3) script->add(req, "The explanation asserts a verdict.");
            script->add(req, std::to_string(m));
        }
    }
    eg::io::write_text(dir / "explanations.jsonl", jsonl);
    eg::io::write_text(dir / "human_labels.csv", human);
    const auto config = dir / "config.json";
    write_json(config, {{"seed", seed},
                        {"out_dir", "out"},
                        {"adapter", {{"mode", "replay"}, {"store", "store.jsonl"}}},
                        {"audit", {{"explanations", "explanations.jsonl"}, {"human_labels", "human_labels.csv"}, {"model", "fixture-auditor"}}}});
    const auto store = dir / "store.jsonl";
    const auto tmp = fs::temp_directory_path() / "eg_make_fixtures_audit";
    fs::remove(store);
    run({"audit", "--config", config.string(), "--record", store.string(), "--max-inflight", "1", "--out", tmp.string()},
        script);
    fs::remove_all(tmp);
    std::cout << "audit: " << n << " explanations\n";
}

void make_stimuli(const fs::path& dir, std::uint64_t seed) {
    const auto& lex = eg::lexicon::MarkerLexicon::builtin();
    const auto& vocab = eg::synth::filler_vocabularies()[3];
    eg::Rng rng(eg::derive_seed(seed, "stimuli"));
    auto script = std::make_shared<Script>();
    eg::survey::GenerationConfig gc;
    gc.model_name = "fixture-writer";
    std::string jsonl;
    for (std::size_t i = 1; i <= 50; ++i) {
        const auto id = fmt::format("st-{:03d}", i);
        const auto filler = 14 + static_cast<std::size_t>(rng.below(8));
        const auto orig = eg::synth::marker_text(rng, lex, vocab, 1, 1, filler);
        const auto words = eg::text::word_count(orig);
        const auto options = std::vector<std::string>{eg::synth::pick(rng, vocab), eg::synth::pick(rng, vocab), "none of these"};
        jsonl += Json{{"statement_id", id},
                      {"statement", fmt::format("Statement {} about the {}.", i, options[0])},
                      {"verdict", i % 2 ? "True" : "False"},
                      {"explanation", orig},
                      {"content_question", {{"question", "Which topic did the explanation discuss?"}, {"options", options}, {"answer", 0}}}}
                     .dump() +
                 "\n";
        const auto low_req = eg::survey::variant_request(orig, eg::survey::kLow, gc);
        const auto high_req = eg::survey::variant_request(orig, eg::survey::kHigh, gc);
        const auto body = words > 4 ? words - 4 : 1;
        if (i % 17 == 2) script->add(low_req, "Perhaps.");
        if (i == 25) {
            for (int k = 0; k < 3; ++k) script->add(high_req, "Certainly.");
        } else {
            script->add(high_req, eg::synth::marker_text(rng, lex, vocab, 0, 4, body));
        }
        script->add(low_req, eg::synth::marker_text(rng, lex, vocab, 4, 0, body));
    }
    eg::io::write_text(dir / "statements.jsonl", jsonl);
    const auto config = dir / "config.json";
    write_json(config, {{"seed", seed},
                        {"out_dir", "out"},
                        {"adapter", {{"mode", "replay"}, {"store", "store.jsonl"}}},
                        {"stimuli", {{"statements", "statements.jsonl"}, {"model", "fixture-writer"}, {"respondents", 30}, {"items_per_respondent", 4}}}});
    const auto store = dir / "store.jsonl";
    const auto tmp = fs::temp_directory_path() / "eg_make_fixtures_stimuli";
    fs::remove(store);
    run({"stimuli", "--config", config.string(), "--record", store.string(), "--max-inflight", "1", "--out", tmp.string()},
        script);
    fs::remove_all(tmp);
    std::cout << "stimuli: 50 statements\n";
}

// 20 respondents: r03, r08, r12 fail the easy check; r05, r12, r15, r18 score
// below 4 on the content questions. 14 remain.
void make_survey(const fs::path& dir, std::uint64_t seed) {
    eg::Rng rng(eg::derive_seed(seed, "survey"));
    const std::map<int, int> easy_fail = {{3, 7}, {8, 5}, {12, 1}};
    const std::map<int, int> low_score = {{5, 2}, {12, 3}, {15, 3}, {18, 1}};
    const std::vector<std::string> ages = {"18-24", "25-34", "35-44", "45-54", "55+"};
    const std::vector<std::string> countries = {"US", "UK", "CA", "AU"};
    std::string csv = "respondent_id,item_id,rating,easy_check_value,attention_correct_count,age_band,country\n";
    // Level means around an overall centre of 6 on the 0-10 axis.
    const double means[3] = {4.5, 6.0, 7.5};
    for (int r = 1; r <= 20; ++r) {
        const int easy = easy_fail.count(r) ? easy_fail.at(r) : 6;
        const int score = low_score.count(r) ? low_score.at(r) : 4 + static_cast<int>(rng.below(2));
        const auto age = eg::synth::pick(rng, ages);
        const auto country = eg::synth::pick(rng, countries);
        for (int j = 0; j < 4; ++j) {
            const int li = (4 * (r - 1) + j) % 3;
            const auto item = eg::survey::item_id(fmt::format("st-{:03d}", (4 * (r - 1) + j) % 50 + 1), li - 1);
            const double rating = std::clamp(std::round(means[li] + rng.normal()), 0.0, 10.0);
            csv += eg::io::csv_line({fmt::format("r{:02d}", r), item, fmt::format("{}", rating), std::to_string(easy),
                                     std::to_string(score), age, country});
        }
    }
    eg::io::write_text(dir / "ratings.csv", csv);
    write_json(dir / "config.json",
               {{"seed", seed}, {"out_dir", "out"}, {"survey_stats", {{"ratings", "ratings.csv"}, {"min_attention", 4}}}});
    std::cout << "survey: 20 respondents\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate the test fixtures."};
    std::string out = "tests/fixtures";
    std::uint64_t seed = 20240607;
    app.add_option("--out", out, "fixture root");
    app.add_option("--seed", seed, "master seed");
    CLI11_PARSE(app, argc, argv);

    setenv("EG_API_BASE", "http://scripted.invalid/v1", 1);
    setenv("EG_API_KEY", "fixture-key", 1);
    try {
        const fs::path root = fs::absolute(out);
        make_corpus5(root / "corpus5", seed);
        make_e2e(root / "e2e", seed);
        make_audit(root / "audit", seed);
        make_stimuli(root / "stimuli", seed);
        make_survey(root / "survey", seed);
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
