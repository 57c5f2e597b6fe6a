#include "eg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "eg/assertion_audit.hpp"
#include "eg/certainty.hpp"
#include "eg/corpus.hpp"
#include "eg/diagnostics.hpp"
#include "eg/error.hpp"
#include "eg/forest.hpp"
#include "eg/io.hpp"
#include "eg/lexicon.hpp"
#include "eg/rng.hpp"
#include "eg/scorers.hpp"
#include "eg/stats.hpp"
#include "eg/survey.hpp"
#include "eg/text.hpp"

namespace eg::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

constexpr const char* kToolVersion = "epistemic-gauge 0.1.0";

class MissingInput : public Error {
public:
    using Error::Error;
};

struct Run {
    std::string command;
    Json config;
    fs::path base;
    fs::path out;
    std::uint64_t seed = 0;
    std::ostream& log;
    TransportFactory transport;
    std::unique_ptr<llm::ChatAdapter> adapter;
    std::vector<std::string> outputs;

    Run(std::ostream& o) : log(o) {}

    Json section(const std::string& name) const {
        const auto it = config.find(name);
        return it == config.end() ? Json::object() : *it;
    }

    fs::path resolve(const std::string& p) const {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    }

    fs::path input(const Json& sec, const std::string& key, std::optional<fs::path> fallback = std::nullopt) const {
        fs::path p;
        if (sec.contains(key)) {
            p = resolve(sec.at(key).get<std::string>());
        } else if (fallback) {
            p = *fallback;
        } else {
            throw MissingInput(fmt::format("{}: config lacks '{}'", command, key));
        }
        if (!fs::exists(p)) throw MissingInput("input not found: " + p.string());
        return p;
    }

    std::vector<fs::path> inputs(const Json& sec, const std::string& key) const {
        if (!sec.contains(key)) throw MissingInput(fmt::format("{}: config lacks '{}'", command, key));
        std::vector<fs::path> out;
        const auto& v = sec.at(key);
        const auto one = [&](const Json& s) {
            auto p = resolve(s.get<std::string>());
            if (!fs::exists(p)) throw MissingInput("input not found: " + p.string());
            out.push_back(std::move(p));
        };
        if (v.is_array()) {
            for (const auto& s : v) one(s);
        } else {
            one(v);
        }
        return out;
    }

    void record(const std::string& name) {
        if (std::find(outputs.begin(), outputs.end(), name) == outputs.end()) outputs.push_back(name);
    }

    void write(const std::string& name, std::string_view content) {
        io::write_text(out / name, content);
        record(name);
    }

    void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

    llm::ChatAdapter& chat() {
        if (adapter) return *adapter;
        const auto a = section("adapter");
        llm::AdapterConfig c;
        c.mode = llm::parse_mode(a.value("mode", "live"));
        if (a.contains("store")) c.store = resolve(a.at("store").get<std::string>());
        c.api_base = a.value("api_base", "");
        c.max_attempts = a.value("max_attempts", 5);
        c.backoff_base = std::chrono::milliseconds(a.value("backoff_base_ms", 500));
        c.backoff_cap = std::chrono::milliseconds(a.value("backoff_cap_ms", 20000));
        c.max_inflight = a.value("max_inflight", std::size_t{4});
        c.jitter_seed = derive_seed(seed, "adapter.jitter");
        c.apply_environment();
        const std::string audit_name = a.value("audit_log", "adapter_audit." + command + ".jsonl");
        c.audit_log = out / audit_name;
        std::unique_ptr<llm::Transport> t;
        if (transport && c.mode != llm::Mode::Replay) t = transport();
        adapter = std::make_unique<llm::ChatAdapter>(c, std::move(t));
        io::write_text(*c.audit_log, "");
        record(audit_name);
        return *adapter;
    }

    // Replay runs stay sequential so audit logs are reproducible.
    std::size_t workers() {
        auto& a = chat();
        return a.config().mode == llm::Mode::Replay ? 1 : a.config().max_inflight;
    }
};

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const auto i = next++;
                if (i >= n || failed) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                    failed = true;
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct TextItem {
    std::string id;
    std::string text;
};

std::vector<TextItem> read_texts(const fs::path& path, const std::string& id_field, const std::string& text_field) {
    std::vector<TextItem> items;
    if (path.extension() == ".csv") {
        const auto t = io::read_csv(path);
        const auto ci = t.column(id_field);
        const auto ct = t.column(text_field);
        if (!ci || !ct) throw ParseError(path.string(), 1, "missing column " + (ci ? text_field : id_field));
        for (const auto& r : t.rows) items.push_back({r.fields[*ci], r.fields[*ct]});
    } else {
        for (const auto& r : io::read_jsonl(path)) {
            if (!r.value.contains(id_field) || !r.value.contains(text_field)) {
                throw ParseError(path.string(), r.line, "record lacks '" + id_field + "' or '" + text_field + "'");
            }
            const auto& id = r.value.at(id_field);
            items.push_back({id.is_string() ? id.get<std::string>() : id.dump(),
                             r.value.at(text_field).get<std::string>()});
        }
    }
    std::set<std::string> seen;
    for (const auto& it : items) {
        if (!seen.insert(it.id).second) throw ValidationError("duplicate id " + it.id + " in " + path.string());
    }
    return items;
}

forest::ForestParams forest_params(const Json& j, std::uint64_t seed) {
    forest::ForestParams p;
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.min_leaf = j.value("min_leaf", p.min_leaf);
    p.mtry = j.value("mtry", p.mtry);
    p.bootstrap = j.value("bootstrap", p.bootstrap);
    p.seed = j.value("seed", seed);
    return p;
}

lexicon::MarkerLexicon load_lexicon(const Run& run, const Json& sec) {
    if (sec.contains("lexicon")) return lexicon::MarkerLexicon::load(run.input(sec, "lexicon"));
    return lexicon::MarkerLexicon::builtin();
}

scorers::PromptConfig prompt_config(const std::string& model, const Json& sec) {
    scorers::PromptConfig pc;
    pc.model_name = model;
    const auto p = sec.value("prompt", Json::object());
    pc.user_template = p.value("user_template", pc.user_template);
    pc.max_retries = p.value("max_retries", pc.max_retries);
    pc.params.max_tokens = p.value("max_tokens", pc.params.max_tokens);
    return pc;
}

bool is_prompt_scorer(const std::string& name) { return name.starts_with("prompt:") && name.size() > 7; }

std::unique_ptr<scorers::Scorer> make_scorer(Run& run, const std::string& name, const Json& sec) {
    if (name == "forest") {
        auto lex = load_lexicon(run, sec);
        forest::ForestModel model;
        if (sec.contains("model")) {
            model = forest::ForestModel::load(run.input(sec, "model"));
        } else if (sec.contains("train_corpus")) {
            const auto train = corpus::load_corpus(run.inputs(sec, "train_corpus"));
            model = scorers::train_on_corpus(
                train, lex, forest_params(sec.value("forest", Json::object()), derive_seed(run.seed, "forest")));
            model.save(run.out / "forest_model.json");
            run.record("forest_model.json");
        } else {
            throw ConfigError("forest scorer needs 'model' or 'train_corpus'");
        }
        return std::make_unique<scorers::ForestScorer>(std::move(model), std::move(lex));
    }
    if (is_prompt_scorer(name)) {
        return std::make_unique<scorers::PromptScorer>(run.chat(), prompt_config(name.substr(7), sec));
    }
    throw ConfigError("unknown scorer '" + name + "' (forest | prompt:<model>)");
}

// ---------------------------------------------------------------------------

void cmd_score(Run& run) {
    const auto sec = run.section("score");
    const std::string scorer_name = sec.value("scorer", "forest");
    std::vector<TextItem> items;
    std::vector<corpus::AnnotatedSample> labelled;
    if (sec.contains("corpus")) {
        labelled = corpus::load_corpus(run.inputs(sec, "corpus"));
        for (const auto& s : labelled) items.push_back({s.id, s.text});
    } else {
        items = read_texts(run.input(sec, "input"), sec.value("id_field", "id"), sec.value("text_field", "text"));
    }
    if (items.empty()) throw ValidationError("nothing to score");

    auto scorer = make_scorer(run, scorer_name, sec);
    const std::size_t workers = is_prompt_scorer(scorer_name) ? run.workers() : 1;
    std::vector<scorers::AssertivenessScore> scores(items.size());
    parallel_for(items.size(), workers, [&](std::size_t i) { scores[i] = scorer->score(items[i].text); });

    std::string csv = io::csv_line({"id", "value", "raw_value", "scorer_id", "clamped", "retries_used"});
    std::vector<double> values;
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& s = scores[i];
        csv += io::csv_line({items[i].id, io::fmt_num(s.value), io::fmt_num(s.raw_value), s.scorer_id,
                             s.clamped ? "1" : "0", std::to_string(s.retries_used)});
        values.push_back(s.value);
        clamped += s.clamped;
    }
    run.write("scores.csv", csv);

    const auto dist = diagnostics::distribution_summary(values);
    Json summary = {{"scorer", scorer->id()}, {"n", items.size()}, {"clamped", clamped}, {"distribution", dist.to_json()}};
    if (!labelled.empty()) {
        std::vector<double> pred, labels;
        for (std::size_t i = 0; i < labelled.size(); ++i) {
            pred.push_back(scores[i].value * 10.0);
            labels.push_back(labelled[i].mean_score);
        }
        try {
            const auto ev = scorers::evaluate_predictions(pred, labels);
            summary["evaluation"] = {{"mse_standardized", io::json_num(ev.mse_standardized)},
                                     {"mse_raw", ev.mse_raw},
                                     {"n", ev.n},
                                     {"note", ev.note}};
        } catch (const ValidationError& e) {
            summary["evaluation"] = {{"note", e.what()}};
        }
    }
    run.write_json("score_summary.json", summary);
    run.log << fmt::format("scored {} texts with {}: mean {:.4f}, sd {:.4f}, clamped {}\n", items.size(),
                           scorer->id(), dist.mean, dist.stddev, clamped);
}

void cmd_calibrate(Run& run) {
    const auto sec = run.section("calibrate");
    std::vector<certainty::CertaintyRecord> records;
    if (sec.contains("records")) {
        records = certainty::load_records(run.input(sec, "records"));
    } else {
        const auto path = run.input(sec, "statements");
        if (!sec.contains("model")) throw ConfigError("calibrate: eliciting certainty needs 'model'");
        certainty::ElicitConfig ec;
        ec.model_name = sec.at("model").get<std::string>();
        ec.max_retries = sec.value("max_retries", ec.max_retries);
        ec.params.max_tokens = sec.value("max_tokens", ec.params.max_tokens);
        const auto lines = io::read_jsonl(path);
        std::vector<certainty::CertaintyRecord> stubs;
        for (const auto& l : lines) {
            try {
                stubs.push_back(certainty::CertaintyRecord::from_json(l.value));
            } catch (const std::exception& e) {
                throw ParseError(path.string(), l.line, e.what());
            }
        }
        records.resize(stubs.size());
        auto& adapter = run.chat();
        parallel_for(stubs.size(), run.workers(), [&](std::size_t i) {
            auto r = certainty::elicit(adapter, stubs[i].statement_id, stubs[i].statement, ec);
            r.gold_label = stubs[i].gold_label;
            r.level = stubs[i].level;
            records[i] = std::move(r);
        });
        certainty::save_records(records, run.out / "certainty_raw.jsonl");
        run.record("certainty_raw.jsonl");
    }
    if (records.empty()) throw ValidationError("calibrate: no records");
    for (const auto& r : records) {
        if (!r.gold_label) throw ValidationError("record " + r.statement_id + " has no gold label");
        if (!r.raw_confidence) throw ValidationError("record " + r.statement_id + " has no raw confidence");
    }

    const double fraction = sec.value("validation_fraction", 0.5);
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("validation_fraction must lie in (0,1]");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(run.seed, "calibrate.split"));
    rng.shuffle(std::span(order));
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(records.size()))), 1, records.size());
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(rest.begin(), rest.end());

    const auto feature = [&](std::size_t i) { return *records[i].raw_confidence / records[i].scale; };
    std::vector<double> f;
    std::vector<bool> y;
    for (auto i : val) {
        f.push_back(feature(i));
        y.push_back(*records[i].gold_label);
    }
    const auto platt = certainty::fit_platt(f, y);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].calibrated_p = certainty::apply_platt(platt, feature(i));

    const auto& eval_idx = rest.empty() ? val : rest;
    std::vector<double> p;
    std::vector<bool> ey;
    for (auto i : eval_idx) {
        p.push_back(*records[i].calibrated_p);
        ey.push_back(*records[i].gold_label);
    }
    const auto rel = certainty::reliability(p, ey, sec.value("bins", std::size_t{10}));

    certainty::save_records(records, run.out / "calibrated.jsonl");
    run.record("calibrated.jsonl");

    std::string csv = io::csv_line({"bin_lower", "bin_upper", "count", "mean_predicted_p", "empirical_frequency"});
    for (const auto& b : rel.bins) {
        csv += io::csv_line({io::fmt_num(b.lower), io::fmt_num(b.upper), std::to_string(b.count),
                             io::fmt_opt(b.mean_predicted_p), io::fmt_opt(b.empirical_frequency)});
    }
    run.write("reliability.csv", csv);

    Json pj = platt.to_json();
    pj["fit_meta"]["nll_trace"] = platt.fit_meta.nll_trace;
    pj["feature"] = "raw_confidence / scale";
    pj["validation_fraction"] = fraction;
    pj["n_validation"] = val.size();
    pj["evaluation_split"] = rest.empty() ? "validation" : "held-out";
    pj["n_evaluation"] = rel.n;
    pj["ece"] = rel.ece;
    std::vector<std::string> ids;
    for (auto i : val) ids.push_back(records[i].statement_id);
    pj["validation_ids"] = ids;
    run.write_json("platt.json", pj);
    run.log << fmt::format("platt A={:.6f} B={:.6f} ({} iterations) on {} validation records; ece {:.4f} over {}\n",
                           platt.A, platt.B, platt.fit_meta.iterations, val.size(), rel.ece, rel.n);
}

std::string cell_text(const diagnostics::StratifiedCell& c) {
    if (!c.result.coefficient) return fmt::format("n/a (n={})", c.result.n);
    return fmt::format("{:.3f}{} (n={})", *c.result.coefficient, c.stars, c.result.n);
}

void cmd_diagnose(Run& run) {
    const auto sec = run.section("diagnose");
    const auto records = certainty::load_records(run.input(sec, "certainty", run.out / "calibrated.jsonl"));
    const auto scores_path = run.input(sec, "assertiveness", run.out / "scores.csv");
    const auto table = io::read_csv(scores_path);
    const auto sid = table.column(sec.value("id_column", "id"));
    const auto sval = table.column(sec.value("assertiveness_column", "value"));
    if (!sid || !sval) throw ParseError(scores_path.string(), 1, "scores file lacks id or value column");
    std::map<std::string, double> assertiveness;
    for (const auto& r : table.rows) assertiveness[r.fields[*sid]] = std::stod(r.fields[*sval]);

    std::map<std::string, double> human;
    if (sec.contains("human")) {
        const auto hp = run.input(sec, "human");
        const auto ht = io::read_csv(hp);
        const auto hid = ht.column(sec.value("human_id_column", "id"));
        const auto hval = ht.column(sec.value("human_column", "human"));
        if (!hid || !hval) throw ParseError(hp.string(), 1, "human ratings file lacks id or rating column");
        const double scale = sec.value("human_scale", 10.0);
        for (const auto& r : ht.rows) {
            if (!text::trim(r.fields[*hval]).empty()) human[r.fields[*hid]] = std::stod(r.fields[*hval]) / scale;
        }
    }

    const std::string channel = sec.value("certainty_channel", "calibrated_p");
    if (channel != "calibrated_p" && channel != "verdict_confidence") {
        throw ConfigError("certainty_channel must be calibrated_p or verdict_confidence");
    }
    const std::string method_s = sec.value("method", "spearman");
    stats::Method method;
    if (method_s == "spearman") {
        method = stats::Method::Spearman;
    } else if (method_s == "pearson") {
        method = stats::Method::Pearson;
    } else {
        throw ConfigError("method must be spearman or pearson");
    }
    diagnostics::StarThresholds stars;
    if (sec.contains("stars")) {
        const auto s = sec.at("stars");
        stars = {s.value("one", stars.one), s.value("two", stars.two), s.value("three", stars.three)};
    }

    std::vector<diagnostics::DiagnosticRecord> joined;
    for (const auto& r : records) {
        const auto a = assertiveness.find(r.statement_id);
        if (!r.calibrated_p || a == assertiveness.end()) continue;
        diagnostics::DiagnosticRecord d;
        d.id = r.statement_id;
        d.level = r.level;
        d.predicted = a->second;
        if (const auto h = human.find(r.statement_id); h != human.end()) d.human = h->second;
        d.certainty = channel == "calibrated_p" ? *r.calibrated_p : certainty::verdict_confidence(*r.calibrated_p);
        joined.push_back(std::move(d));
    }
    if (joined.size() < 3) {
        throw ValidationError(fmt::format("diagnose: join of certainty and assertiveness yields n={} (< 3)", joined.size()));
    }

    const auto strat = diagnostics::stratify(joined, method, stars, channel);
    const auto gap = diagnostics::gap_analysis(records, assertiveness, sec.value("threshold", 0.3));
    const std::string tag = run.config.value("report_tag", "");

    Json sj = strat.to_json();
    sj["n_joined"] = joined.size();
    sj["tag"] = tag;
    run.write_json("stratified.json", sj);
    run.write("stratified.csv", strat.to_csv());

    std::string scatter = io::csv_line({"id", "level", "certainty", "assertiveness", "human"});
    for (const auto& d : joined) {
        scatter += io::csv_line({d.id, d.level ? std::to_string(*d.level) : "", io::fmt_num(d.certainty),
                                 io::fmt_num(d.predicted), io::fmt_opt(d.human)});
    }
    run.write("scatter.csv", scatter);
    run.write("gap_records.csv", gap.records_csv());
    Json gj = gap.summary_json();
    gj["tag"] = tag;
    run.write_json("gap_summary.json", gj);

    std::string report = fmt::format("Stratified {} correlations (certainty channel: {}, n joined = {})\n",
                                     stats::method_name(method), channel, joined.size());
    if (!tag.empty()) report += "tag: " + tag + "\n";
    report += fmt::format("{:<48}", "");
    for (const auto* s : diagnostics::kStrata) report += fmt::format("{:<22}", s);
    report += "\n";
    for (const auto& row : strat.rows) {
        report += fmt::format("{:<48}", row.name);
        for (const auto& c : row.cells) report += fmt::format("{:<22}", cell_text(c));
        report += "\n";
    }
    const auto& rho = gap.spearman_p;
    report += fmt::format("spearman(calibrated certainty, assertiveness) = {} (p = {}, n = {})\n",
                          rho.coefficient ? fmt::format("{:.4f}", *rho.coefficient) : "undefined",
                          rho.p_value ? fmt::format("{:.3g}", *rho.p_value) : "undefined", rho.n);
    report += fmt::format("over-assertive share (gap > {:.2f}) = {:.4f}\n", gap.threshold, gap.over_assertive_share);
    run.write("report.txt", report);
    run.log << report;
}

void cmd_ablate(Run& run) {
    const auto sec = run.section("ablate");
    const auto samples = corpus::load_corpus(run.inputs(sec, "corpus"));
    const auto names = sec.value("models", std::vector<std::string>{"forest"});
    const auto lex = load_lexicon(run, sec);
    const auto fparams = forest_params(sec.value("forest", Json::object()), derive_seed(run.seed, "ablate.forest"));

    std::vector<diagnostics::AblationModel> models;
    for (const auto& name : names) {
        if (name == "forest") {
            models.push_back({name, [lex, fparams](const std::vector<corpus::AnnotatedSample>& train) {
                                  return std::make_unique<scorers::ForestScorer>(
                                      scorers::train_on_corpus(train, lex, fparams), lex);
                              }});
        } else if (is_prompt_scorer(name)) {
            auto& adapter = run.chat();
            const auto pc = prompt_config(name.substr(7), sec);
            models.push_back({name, [&adapter, pc](const std::vector<corpus::AnnotatedSample>&) {
                                  return std::make_unique<scorers::PromptScorer>(adapter, pc);
                              }});
        } else {
            throw ConfigError("unknown ablation model '" + name + "'");
        }
    }
    const std::string metric_s = sec.value("metric", "standardized");
    if (metric_s != "standardized" && metric_s != "raw") throw ConfigError("metric must be standardized or raw");
    const auto metric =
        metric_s == "raw" ? diagnostics::AblationMetric::Raw : diagnostics::AblationMetric::Standardized;

    auto matrix = diagnostics::ablation(samples, models, {}, metric,
                                        sec.value("sources", std::vector<std::string>{}));
    for (const auto& ext : sec.value("external_rows", Json::array())) {
        std::vector<std::optional<double>> values;
        for (const auto& v : ext.at("values")) {
            values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
        matrix.rows.push_back(diagnostics::external_row(ext.at("model").get<std::string>(), matrix.sources, values));
    }
    run.write("ablation.csv", matrix.to_csv());
    run.write_json("ablation.json", matrix.to_json());
    run.log << matrix.to_csv();
}

void cmd_audit(Run& run) {
    const auto sec = run.section("audit");
    const auto path = run.input(sec, "explanations");
    const std::string id_field = sec.value("id_field", "statement_id");
    const std::string text_field = sec.value("text_field", "explanation");
    const std::string cert_field = sec.value("certainty_field", "certainty");
    std::map<std::string, std::string> explanations;
    std::vector<std::pair<std::string, double>> certainties;
    for (const auto& l : io::read_jsonl(path)) {
        const auto& v = l.value;
        if (!v.contains(id_field) || !v.contains(text_field)) {
            throw ParseError(path.string(), l.line, "record lacks '" + id_field + "' or '" + text_field + "'");
        }
        double c;
        if (v.contains(cert_field) && !v.at(cert_field).is_null()) {
            c = v.at(cert_field).get<double>();
        } else if (v.contains("calibrated_p") && !v.at("calibrated_p").is_null()) {
            c = 100.0 * v.at("calibrated_p").get<double>();
        } else {
            throw ParseError(path.string(), l.line, "record lacks a certainty value");
        }
        const auto id = v.at(id_field).get<std::string>();
        if (!explanations.emplace(id, v.at(text_field).get<std::string>()).second) {
            throw ParseError(path.string(), l.line, "duplicate id " + id);
        }
        certainties.emplace_back(id, c);
    }

    auto plan = audit::SamplingPlan::standard();
    if (sec.contains("plan")) {
        plan = {};
        for (const auto& b : sec.at("plan")) {
            plan.bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("count").get<std::size_t>()});
            plan.total += plan.bins.back().count;
        }
    }
    const auto drawn = audit::build_plan(certainties, derive_seed(run.seed, "audit.plan"), plan);

    Json pj = {{"total", drawn.plan.total}, {"bins", Json::array()}};
    for (std::size_t b = 0; b < drawn.plan.bins.size(); ++b) {
        const auto& bin = drawn.plan.bins[b];
        pj["bins"].push_back({{"lower", bin.lower}, {"upper", bin.upper}, {"count", bin.count}, {"ids", drawn.ids_per_bin[b]}});
    }
    run.write_json("plan.json", pj);

    if (!sec.contains("model")) throw ConfigError("audit needs 'model'");
    audit::ClassifyConfig cc;
    cc.model_name = sec.at("model").get<std::string>();
    cc.max_retries = sec.value("max_retries", cc.max_retries);
    std::vector<int> model_labels(drawn.ids.size());
    auto& adapter = run.chat();
    parallel_for(drawn.ids.size(), run.workers(), [&](std::size_t i) {
        model_labels[i] = audit::classify_assertion(adapter, explanations.at(drawn.ids[i]), cc).value;
    });

    std::map<std::string, int> human;
    if (sec.contains("human_labels")) {
        const auto hp = run.input(sec, "human_labels");
        const auto ht = io::read_csv(hp);
        const auto hid = ht.column("statement_id");
        const auto hl = ht.column("human_label");
        if (!hid || !hl) throw ParseError(hp.string(), 1, "human labels need statement_id,human_label");
        for (const auto& r : ht.rows) {
            const auto v = audit::parse_assertion_reply(r.fields[*hl]);
            if (!v) throw ParseError(hp.string(), r.line, "human_label must be -1, 0 or 1");
            human[r.fields[*hid]] = *v;
        }
    }

    std::string csv = io::csv_line({"statement_id", "model_label", "human_label"});
    std::vector<int> a, b;
    for (std::size_t i = 0; i < drawn.ids.size(); ++i) {
        const auto h = human.find(drawn.ids[i]);
        csv += io::csv_line({drawn.ids[i], std::to_string(model_labels[i]),
                             h == human.end() ? "" : std::to_string(h->second)});
        if (h != human.end()) {
            a.push_back(model_labels[i]);
            b.push_back(h->second);
        }
    }
    run.write("labels.csv", csv);

    Json report = {{"model", cc.model_name}, {"sampled", drawn.ids.size()}, {"paired", a.size()}};
    if (!a.empty()) {
        const auto k = audit::cohen_kappa(a, b);
        report["agreement"] = k.to_json();
        run.log << fmt::format("kappa {} agreement {:.1f}% n={}\n", k.kappa ? fmt::format("{:.4f}", *k.kappa) : "undefined",
                               100.0 * k.percent_agreement, k.n);
    } else {
        run.log << fmt::format("classified {} explanations; no human labels to compare\n", drawn.ids.size());
    }
    run.write_json("audit_report.json", report);
}

void cmd_stimuli(Run& run) {
    const auto sec = run.section("stimuli");
    const auto path = run.input(sec, "statements");
    if (!sec.contains("model")) throw ConfigError("stimuli needs 'model'");
    survey::GenerationConfig gc;
    gc.model_name = sec.at("model").get<std::string>();
    gc.length_tolerance = sec.value("length_tolerance", gc.length_tolerance);
    gc.max_retries = sec.value("max_retries", gc.max_retries);

    std::vector<survey::SurveyStatement> statements;
    for (const auto& l : io::read_jsonl(path)) {
        const auto& v = l.value;
        survey::SurveyStatement s;
        try {
            s.statement_id = v.at("statement_id").get<std::string>();
            s.statement = v.value("statement", "");
            s.verdict = v.value("verdict", "");
            const auto expl = v.at("explanation").get<std::string>();
            auto& orig = s.variants[1];
            orig.item_id = survey::item_id(s.statement_id, survey::kOriginal);
            orig.statement_id = s.statement_id;
            orig.level = survey::kOriginal;
            orig.explanation = expl;
            orig.target_length = orig.word_count = text::word_count(expl);
            if (v.contains("content_question")) {
                const auto& q = v.at("content_question");
                s.question = survey::ContentQuestion{q.at("question").get<std::string>(),
                                                     q.at("options").get<std::vector<std::string>>(),
                                                     q.at("answer").get<int>()};
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), l.line, e.what());
        }
        statements.push_back(std::move(s));
    }

    auto& adapter = run.chat();
    parallel_for(statements.size(), run.workers(), [&](std::size_t i) {
        auto& s = statements[i];
        auto pair = survey::generate_variants(adapter, s.statement_id, s.variants[1].explanation, gc);
        s.variants[0] = std::move(pair.low);
        s.variants[2] = std::move(pair.high);
    });

    std::string jsonl;
    std::size_t flagged = 0;
    for (const auto& s : statements) {
        for (const auto& v : s.variants) {
            jsonl += v.to_json().dump() + "\n";
            flagged += v.length_flagged;
        }
    }
    run.write("stimuli.jsonl", jsonl);

    const auto respondents = sec.value("respondents", std::size_t{0});
    if (respondents > 0) {
        const auto def = survey::assemble_survey(statements, respondents, derive_seed(run.seed, "survey.assign"),
                                                 sec.value("items_per_respondent", std::size_t{4}),
                                                 sec.value("max_uses_per_item", std::size_t{0}));
        run.write_json("survey.json", def.to_json());
        run.log << fmt::format("survey: {} respondents, {} rating slots\n", respondents, def.rating_slots());
    }
    run.log << fmt::format("generated variants for {} statements; {} length-flagged\n", statements.size(), flagged);
}

void cmd_survey_stats(Run& run) {
    const auto sec = run.section("survey_stats");
    const auto ratings = survey::load_ratings(run.input(sec, "ratings"), sec.value("expected_ratings", std::size_t{4}));
    std::map<std::string, int> levels;
    if (sec.contains("survey")) {
        levels = survey::SurveyDefinition::from_json(Json::parse(io::read_text(run.input(sec, "survey")))).item_levels();
    }
    const int min_attention = sec.value("min_attention", 4);
    const auto filtered = survey::filter_respondents(ratings, min_attention);

    std::string ex = io::csv_line({"respondent_id", "reasons"});
    for (const auto& e : filtered.excluded) {
        std::string reasons;
        for (const auto& r : e.reasons) reasons += (reasons.empty() ? "" : ";") + r;
        ex += io::csv_line({e.respondent_id, reasons});
    }
    run.write("exclusions.csv", ex);

    const auto st = survey::perception_stats(filtered.retained, levels);
    run.write("perception_levels.csv", st.levels_csv());
    Json j = {{"respondents", ratings.size()},
              {"retained", filtered.retained.size()},
              {"excluded", filtered.excluded.size()},
              {"min_attention", min_attention},
              {"perception", st.to_json()}};
    run.write_json("perception.json", j);
    run.log << fmt::format("retained {} of {} respondents\n", filtered.retained.size(), ratings.size());
    for (const auto& l : st.levels) {
        run.log << fmt::format("  {:<9} n={:<5} mean={} sd={}\n", survey::level_name(l.level), l.n, io::fmt_opt(l.mean, 3),
                               io::fmt_opt(l.stddev, 3));
    }
    if (!st.diagnostic.empty()) run.log << "  " << st.diagnostic << "\n";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

struct Overrides {
    std::string config;
    std::string replay;
    std::string record;
    bool live = false;
    std::size_t max_inflight = 0;
    std::string scorer;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int execute(const std::string& command, const Overrides& ov, std::ostream& out, const TransportFactory& transport) {
    const fs::path cfg_path = fs::absolute(ov.config);
    if (!fs::exists(cfg_path)) throw MissingInput("config not found: " + cfg_path.string());
    Run run(out);
    run.command = command;
    try {
        run.config = Json::parse(io::read_text(cfg_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!run.config.is_object()) throw ConfigError("config must be a JSON object");
    run.base = cfg_path.parent_path();

    auto& cfg = run.config;
    if (!ov.replay.empty() + !ov.record.empty() + ov.live > 1) {
        throw ConfigError("--replay, --record and --live are mutually exclusive");
    }
    if (!ov.replay.empty()) cfg["adapter"]["mode"] = "replay", cfg["adapter"]["store"] = fs::absolute(ov.replay).string();
    if (!ov.record.empty()) cfg["adapter"]["mode"] = "record", cfg["adapter"]["store"] = fs::absolute(ov.record).string();
    if (ov.live) cfg["adapter"]["mode"] = "live";
    if (ov.max_inflight) cfg["adapter"]["max_inflight"] = ov.max_inflight;
    if (!ov.scorer.empty()) cfg["score"]["scorer"] = ov.scorer;
    if (ov.seed) cfg["seed"] = *ov.seed;
    if (!ov.out.empty()) cfg["out_dir"] = fs::absolute(ov.out).string();
    if (cfg.contains("adapter") && cfg["adapter"].contains("mode") && cfg["adapter"]["mode"] == "replay" &&
        !cfg["adapter"].contains("store")) {
        throw ConfigError("replay mode requires adapter.store");
    }

    run.seed = cfg.value("seed", std::uint64_t{0});
    run.out = run.resolve(cfg.value("out_dir", "out"));
    run.transport = transport;
    fs::create_directories(run.out);

    Json snapshot = cfg;
    snapshot["command"] = command;
    snapshot["out_dir"] = ".";  // the snapshot sits in the output directory
    run.write_json("config." + command + ".json", snapshot);

    if (command == "score") {
        cmd_score(run);
    } else if (command == "calibrate") {
        cmd_calibrate(run);
    } else if (command == "diagnose") {
        cmd_diagnose(run);
    } else if (command == "ablate") {
        cmd_ablate(run);
    } else if (command == "audit") {
        cmd_audit(run);
    } else if (command == "stimuli") {
        cmd_stimuli(run);
    } else if (command == "survey-stats") {
        cmd_survey_stats(run);
    } else {
        throw ConfigError("unknown command " + command);
    }

    const std::string manifest_name = "manifest." + command + ".json";
    Json manifest = {{"command", command},
                     {"tool", kToolVersion},
                     {"timestamp", utc_timestamp()},
                     {"seed", run.seed},
                     {"adapter_mode", run.adapter ? llm::mode_name(run.adapter->config().mode) : "unused"},
                     {"live_requests", run.adapter ? run.adapter->live_requests() : 0},
                     {"replayed", run.adapter ? run.adapter->replayed() : 0},
                     {"outputs", run.outputs}};
    io::write_text(run.out / manifest_name, manifest.dump(2) + "\n");
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const TransportFactory& transport) {
    CLI::App app{"Measure how a model's internal certainty lines up with the assertiveness of its text."};
    app.name("epistemic-gauge");
    app.require_subcommand(1);
    Overrides ov;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"score", "score assertiveness of texts"},
        {"calibrate", "elicit or load certainty, fit Platt scaling, write reliability table"},
        {"diagnose", "stratified correlations, scatter data and certainty/assertiveness gap"},
        {"ablate", "leave-one-source-out scorer comparison"},
        {"audit", "sample explanations by certainty and check whether they assert a verdict"},
        {"stimuli", "generate low/high assertiveness variants and assemble a survey"},
        {"survey-stats", "filter respondents and summarize perceived assertiveness"}};
    std::uint64_t seed = 0;
    for (const auto& [name, desc] : commands) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", ov.config, "JSON run configuration")->required();
        sub->add_option("--replay", ov.replay, "serve model calls from this replay store");
        sub->add_option("--record", ov.record, "call the provider and append exchanges to this store");
        sub->add_flag("--live", ov.live, "call the provider without recording");
        sub->add_option("--max-inflight", ov.max_inflight, "concurrent request bound");
        sub->add_option("--scorer", ov.scorer, "forest | prompt:<model>");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--seed", seed, "master seed");
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    const auto* chosen = app.get_subcommands().front();
    if (chosen->count("--seed")) ov.seed = seed;
    try {
        return execute(chosen->get_name(), ov, out, transport);
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FitError& e) {
        err << "fit error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

int main_entry(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace eg::cli
