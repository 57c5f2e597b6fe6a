// Acceptance suite: one line per primary criterion, non-zero exit on any failure.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "eg/assertion_audit.hpp"
#include "eg/certainty.hpp"
#include "eg/cli.hpp"
#include "eg/corpus.hpp"
#include "eg/diagnostics.hpp"
#include "eg/io.hpp"
#include "eg/rng.hpp"
#include "eg/scorers.hpp"
#include "eg/stats.hpp"
#include "eg/survey.hpp"
#include "oracles/oracles.hpp"
#include "support/synthetic.hpp"

using namespace eg;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path kFixtures = EG_FIXTURES_DIR;

// Pinned tolerances and budgets.
constexpr double kCoefTol = 1e-12;
constexpr std::size_t kMcDraws = 1'000'000;
constexpr double kPlattTol = 0.15;
constexpr double kEceMax = 0.03;
constexpr double kForestMseShare = 0.5;
constexpr double kForestSpearmanMin = 0.8;
constexpr double kReportedRowMean = 1.076;
constexpr double kE2eRho = 0.30;
constexpr double kE2eTol = 0.03;

struct Outcome {
    bool ok = true;
    std::string detail;
};

// Collects failures; the first few are kept for the report line.
struct Checker {
    bool ok = true;
    std::vector<std::string> failures;
    void require(bool cond, const std::string& what) {
        if (cond) return;
        ok = false;
        if (failures.size() < 3) failures.push_back(what);
    }
    Outcome outcome(std::string detail) const {
        if (!ok) {
            for (const auto& f : failures) detail += "; FAILED: " + f;
        }
        return {ok, std::move(detail)};
    }
};

int g_failed = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < budget_s;
    const bool pass = o.ok && in_time;
    if (!pass) ++g_failed;
    std::cout << fmt::format("{}  {}  [{:.2f}s / {:.0f}s]  {}{}\n", pass ? "PASS" : "FAIL", name, secs, budget_s,
                             o.detail, in_time ? "" : "; over time budget")
              << std::flush;
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run_cli(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << "cli " << args.front() << " failed: " << e.str();
    return code;
}

Json read_json(const fs::path& p) { return Json::parse(io::read_text(p)); }

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("eg_acceptance_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

// ---------------------------------------------------------------------------------------

Outcome stats_oracles() {
    Checker c;
    Rng rng(20240607);
    const std::vector<std::size_t> sizes = {6, 10, 15, 25};
    std::map<std::size_t, std::vector<double>> nulls;
    for (std::size_t k = 0; k < sizes.size(); ++k) nulls[sizes[k]] = oracle::gaussian_null_abs_r(sizes[k], kMcDraws, 900 + k);

    std::size_t instances = 0;
    double worst_coef = 0, worst_p_z = 0;
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n = sizes[static_cast<std::size_t>(rep) % sizes.size()];
        std::vector<double> x(n), y(n);
        const double w = 1.5 * rng.uniform() - 0.5;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = w * x[i] + rng.normal();
        }
        if (rep % 5 == 0) {
            // Force ties.
            for (auto& v : x) v = std::round(v * 2) / 2;
        }
        const auto sp = stats::spearman(x, y);
        const auto pe = stats::pearson(x, y);
        const double sp_ref = static_cast<double>(oracle::spearman_with_ties(x, y));
        const double pe_ref = static_cast<double>(oracle::pearson(x, y));
        const double dsp = std::abs(*sp.coefficient - sp_ref), dpe = std::abs(*pe.coefficient - pe_ref);
        worst_coef = std::max({worst_coef, dsp, dpe});
        c.require(dsp < kCoefTol, fmt::format("spearman n={} diff {}", n, dsp));
        c.require(dpe < kCoefTol, fmt::format("pearson n={} diff {}", n, dpe));
        if (rep % 5 != 0) {
            const double rank = static_cast<double>(oracle::spearman_rank_formula(x, y));
            c.require(std::abs(*sp.coefficient - rank) < kCoefTol, "spearman vs rank-difference formula");
        }
        // p-values: Student-t oracle, and the Gaussian-null Monte-Carlo distribution of |r|.
        const double p_t = oracle::t_test_p(*pe.coefficient, n);
        c.require(std::abs(*pe.p_value - p_t) <= 1e-12 + 1e-10 * p_t, "pearson p vs Student-t oracle");
        c.require(std::abs(*sp.p_value - oracle::t_test_p(*sp.coefficient, n)) <= 1e-12 + 1e-10 * *sp.p_value,
                  "spearman p vs Student-t oracle");
        const double p_mc = oracle::tail_share(nulls[n], std::abs(*pe.coefficient));
        const double tol = oracle::mc_tolerance(*pe.p_value, kMcDraws);
        worst_p_z = std::max(worst_p_z, std::abs(*pe.p_value - p_mc) / tol);
        c.require(std::abs(*pe.p_value - p_mc) <= tol, fmt::format("pearson p {} vs MC {} at n={}", *pe.p_value, p_mc, n));
        ++instances;
    }

    // Exact permutation p against a 10^6-shuffle permutation test.
    for (int rep = 0; rep < 3; ++rep) {
        const std::size_t n = 6 + static_cast<std::size_t>(rep);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = 0.7 * x[i] + rng.normal();
        }
        for (auto method : {stats::Method::Pearson, stats::Method::Spearman}) {
            const double exact = stats::exact_permutation_p(x, y, method);
            const auto coef = [method](const std::vector<double>& a, const std::vector<double>& b) {
                return method == stats::Method::Pearson ? oracle::pearson(a, b) : oracle::spearman_with_ties(a, b);
            };
            const double mc = oracle::mc_permutation_p(x, y, coef, kMcDraws, 77 + static_cast<std::uint64_t>(rep));
            c.require(std::abs(exact - mc) <= oracle::mc_tolerance(exact, kMcDraws),
                      fmt::format("exact permutation p {} vs MC {}", exact, mc));
        }
    }

    // Kappa: hand matrices, then randomized instances against the confusion-matrix oracle.
    auto expand = [](const std::vector<std::vector<int>>& m) {
        std::vector<int> a, b;
        for (std::size_t i = 0; i < m.size(); ++i) {
            for (std::size_t j = 0; j < m[i].size(); ++j) {
                for (int k = 0; k < m[i][j]; ++k) {
                    a.push_back(static_cast<int>(i));
                    b.push_back(static_cast<int>(j));
                }
            }
        }
        return std::pair{a, b};
    };
    const auto [ha, hb] = expand({{20, 5}, {10, 15}});
    c.require(std::abs(*audit::cohen_kappa(ha, hb).kappa - 0.4) < kCoefTol, "kappa [[20,5],[10,15]] = 0.4");
    const auto [ia, ib] = expand({{30, 0, 0}, {0, 12, 0}, {0, 0, 8}});
    c.require(std::abs(*audit::cohen_kappa(ia, ib).kappa - 1.0) < kCoefTol, "kappa of perfect agreement = 1");
    for (int rep = 0; rep < 60; ++rep) {
        const std::size_t n = 10 + rng.below(100);
        std::vector<int> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<int>(rng.below(3)) - 1;
            b[i] = rng.bernoulli(0.5) ? a[i] : static_cast<int>(rng.below(3)) - 1;
        }
        const auto k = audit::cohen_kappa(a, b);
        std::vector<std::vector<double>> m(k.alphabet.size(), std::vector<double>(k.alphabet.size()));
        for (std::size_t i = 0; i < m.size(); ++i) {
            for (std::size_t j = 0; j < m.size(); ++j) m[i][j] = static_cast<double>(k.confusion[i][j]);
        }
        const auto ref = oracle::kappa_from_confusion(m);
        if (k.kappa) c.require(std::abs(*k.kappa - ref.kappa) < kCoefTol, "kappa vs confusion oracle");
    }
    return c.outcome(fmt::format("{} correlation instances + 60 kappa, max |dcoef| {:.1e}, max p error {:.2f} of MC tolerance",
                                 instances, worst_coef, worst_p_z));
}

Outcome platt_recovery() {
    Checker c;
    auto draws = [](std::uint64_t seed, std::size_t n) {
        Rng rng(seed);
        std::pair<std::vector<double>, std::vector<bool>> d;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = 2.0 * rng.normal();
            d.first.push_back(f);
            d.second.push_back(rng.bernoulli(1.0 / (1.0 + std::exp(-f))));
        }
        return d;
    };
    const auto [f, y] = draws(1, 2000);
    const auto p = certainty::fit_platt(f, y);
    c.require(std::abs(p.A + 1.0) < kPlattTol, fmt::format("A={}", p.A));
    c.require(std::abs(p.B) < kPlattTol, fmt::format("B={}", p.B));
    const auto [g, z] = draws(2, 10000);
    std::vector<double> probs;
    for (double v : g) probs.push_back(certainty::apply_platt(p, v));
    const auto table = certainty::reliability(probs, z, 10);
    c.require(table.ece < kEceMax, fmt::format("ece={}", table.ece));
    return c.outcome(fmt::format("A={:.3f} B={:.3f} (truth -1, 0), held-out ece={:.4f}", p.A, p.B, table.ece));
}

Outcome forest_learnability() {
    Checker c;
    const auto samples = synth::marker_corpus(31);
    const auto sp = corpus::split(samples, corpus::SplitStrategy::random(0.75), 32);
    const auto train = corpus::select(samples, sp.train);
    const auto test = corpus::select(samples, sp.test);
    forest::ForestParams params;
    params.n_trees = 100;
    params.seed = 33;
    scorers::ForestScorer scorer(scorers::train_on_corpus(train, lexicon::MarkerLexicon::builtin(), params),
                                 lexicon::MarkerLexicon::builtin());
    std::vector<double> pred, labels;
    for (const auto& s : test) {
        pred.push_back(scorer.score(s.text).value * 10.0);
        labels.push_back(s.mean_score);
    }
    const auto ev = scorers::evaluate_predictions(pred, labels);
    const double var = stats::variance(labels, 0);
    const double rho = *stats::spearman(pred, labels).coefficient;
    c.require(ev.mse_raw <= kForestMseShare * var, "held-out MSE above half the label variance");
    c.require(rho > kForestSpearmanMin, "spearman not above 0.8");
    return c.outcome(fmt::format("n_test={} MSE={:.3f} = {:.1f}% of variance {:.3f}, spearman={:.3f}", test.size(),
                                 ev.mse_raw, 100 * ev.mse_raw / var, var, rho));
}

Outcome ablation_shape() {
    Checker c;
    const auto samples = corpus::load_corpus({kFixtures / "corpus5" / "corpus.csv"});
    const std::vector<std::string> sources = {"Anthropic", "Pei", "Llama3Liar", "GM", "CMV"};
    forest::ForestParams params;
    params.n_trees = 60;
    const diagnostics::AblationModel model{"forest", [&](const std::vector<corpus::AnnotatedSample>& train) {
                                               return std::make_unique<scorers::ForestScorer>(
                                                   scorers::train_on_corpus(train, lexicon::MarkerLexicon::builtin(), params),
                                                   lexicon::MarkerLexicon::builtin());
                                           }};
    auto m = diagnostics::ablation(samples, {model}, {}, diagnostics::AblationMetric::Standardized, sources);
    m.rows.push_back(diagnostics::external_row("reported", sources, {0.99, 1.05, 1.42, 0.98, 0.94}));
    c.require(m.sources == sources, "column order");
    for (const auto& row : m.rows) {
        c.require(row.cells.size() == 5, "five cells per row");
        c.require(row.completed == 5 && row.mean.has_value(), "row mean over five cells");
    }
    const double reported = *m.rows[1].mean;
    c.require(std::abs(reported - kReportedRowMean) < kCoefTol, fmt::format("row mean {}", reported));
    return c.outcome(fmt::format("{} rows x {} sources, computed forest mean {:.3f}, reported row mean {:.3f}",
                                 m.rows.size(), m.sources.size(), m.rows[0].mean.value_or(NAN), reported));
}

Outcome sampling_plan() {
    Checker c;
    const auto plan = audit::SamplingPlan::standard();
    // Standard audit scheme: 5 from each outer bin, 15 from 35-45 and 55-65, 30 from 45-55.
    const std::vector<std::tuple<double, double, std::size_t>> expected = {
        {0, 5, 5},    {5, 15, 5},   {15, 25, 5},  {25, 35, 5},  {35, 45, 15}, {45, 55, 30},
        {55, 65, 15}, {65, 75, 5},  {75, 85, 5},  {85, 95, 5},  {95, 100, 5}};
    c.require(plan.bins.size() == expected.size(), "bin count");
    for (std::size_t i = 0; i < std::min(plan.bins.size(), expected.size()); ++i) {
        const auto& [lo, hi, n] = expected[i];
        c.require(plan.bins[i].lower == lo && plan.bins[i].upper == hi && plan.bins[i].count == n,
                  fmt::format("bin {}", i));
    }
    std::vector<std::pair<std::string, double>> pool;
    for (int v = 0; v <= 100; ++v) {
        for (int k = 0; k < 4; ++k) pool.emplace_back(fmt::format("x{}_{}", v, k), v);
    }
    const auto drawn = audit::build_plan(pool, 5);
    c.require(plan.total == 100 && drawn.ids.size() == 100, "plan total 100");

    std::vector<survey::SurveyStatement> statements(120);
    for (std::size_t i = 0; i < statements.size(); ++i) {
        auto& s = statements[i];
        s.statement_id = fmt::format("s{:03}", i);
        for (int level : {survey::kLow, survey::kOriginal, survey::kHigh}) {
            auto& item = s.variants[static_cast<std::size_t>(level + 1)];
            item.statement_id = s.statement_id;
            item.level = level;
            item.item_id = survey::item_id(s.statement_id, level);
            item.explanation = "text";
        }
    }
    const auto def = survey::assemble_survey(statements, 467, 9);
    c.require(def.rating_slots() == 1868, "1868 rating slots");
    return c.outcome(fmt::format("plan total {} over {} bins; 467 respondents x 4 = {} slots", drawn.ids.size(),
                                 plan.bins.size(), def.rating_slots()));
}

Outcome respondent_filtering() {
    Checker c;
    const auto records = survey::load_ratings(kFixtures / "survey" / "ratings.csv");
    const auto f = survey::filter_respondents(records);
    c.require(records.size() == 20, "20 respondents");
    c.require(f.retained.size() == 14, fmt::format("retained {}", f.retained.size()));
    std::map<std::string, std::set<std::string>> reasons;
    for (const auto& e : f.excluded) reasons[e.respondent_id].insert(e.reasons.begin(), e.reasons.end());
    const std::map<std::string, std::set<std::string>> expected = {
        {"r03", {"easy check"}}, {"r08", {"easy check"}}, {"r12", {"easy check", "score < 4"}},
        {"r05", {"score < 4"}},  {"r15", {"score < 4"}},  {"r18", {"score < 4"}}};
    c.require(reasons == expected, "exclusion log does not name the expected rules");
    return c.outcome(fmt::format("retained {}, excluded {} (3 easy-check failures, 4 low attention, r12 both)",
                                 f.retained.size(), f.excluded.size()));
}

Outcome end_to_end() {
    Checker c;
    const auto out = scratch("e2e");
    const auto cfg = (kFixtures / "e2e" / "config.json").string();
    std::string report;
    std::size_t exchanges = io::read_jsonl(kFixtures / "e2e" / "store.jsonl").size();
    for (const char* cmd : {"score", "calibrate", "diagnose"}) {
        const int code = cli({cmd, "--config", cfg, "--out", out.string()}, std::string(cmd) == "diagnose" ? &report : nullptr);
        c.require(code == 0, std::string(cmd) + " exit code");
        if (code != 0) return c.outcome("pipeline aborted");
        const auto manifest = read_json(out / fmt::format("manifest.{}.json", cmd));
        c.require(manifest.at("live_requests") == 0, std::string(cmd) + " made live requests");
    }
    const auto table = read_json(out / "stratified.json");
    c.require(table.at("rows").size() == 3, "three rows");
    for (const auto& row : table.at("rows")) c.require(row.at("cells").size() == 4, "four columns");
    c.require(table.at("all_cells_defined") == true, "every cell populated");
    const auto gap = read_json(out / "gap_summary.json");
    const double rho = gap.at("spearman_calibrated_p_vs_assertiveness").at("coefficient").get<double>();
    c.require(std::abs(rho - kE2eRho) <= kE2eTol, fmt::format("rho={}", rho));
    c.require(report.find("by construction") != std::string::npos, "report carries the fixture tag");
    return c.outcome(fmt::format("{} recorded exchanges, 0 live calls, 3x4 table fully populated, rho={:.4f} (n={})",
                                 exchanges, rho, gap.at("n").get<int>()));
}

// Every file of `a` must match `b` byte for byte; manifests may differ only in "timestamp".
void compare_dirs(const fs::path& a, const fs::path& b, Checker& c, std::size_t& files) {
    static const std::regex stamp(R"("timestamp": "[^"]*")");
    std::set<std::string> na, nb;
    for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
    c.require(na == nb, "different file sets in " + a.filename().string());
    for (const auto& name : na) {
        if (!nb.count(name)) continue;
        auto ta = io::read_text(a / name), tb = io::read_text(b / name);
        if (name.rfind("manifest.", 0) == 0) {
            ta = std::regex_replace(ta, stamp, "\"timestamp\": \"\"");
            tb = std::regex_replace(tb, stamp, "\"timestamp\": \"\"");
        }
        c.require(ta == tb, a.filename().string() + "/" + name + " differs");
        ++files;
    }
}

Outcome determinism() {
    Checker c;
    const auto root = scratch("determinism");
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
        {"e2e", {"score", "calibrate", "diagnose"}},
        {"corpus5", {"score", "ablate"}},
        {"audit", {"audit"}},
        {"stimuli", {"stimuli"}},
        {"survey", {"survey-stats"}}};
    std::size_t files = 0;
    for (const auto& [fixture, cmds] : runs) {
        const auto cfg = (kFixtures / fixture / "config.json").string();
        for (const char* pass : {"a", "b"}) {
            const auto out = root / pass / fixture;
            for (const auto& cmd : cmds) c.require(cli({cmd, "--config", cfg, "--out", out.string()}) == 0, cmd + " failed");
        }
        compare_dirs(root / "a" / fixture, root / "b" / fixture, c, files);
    }
    return c.outcome(fmt::format("7 commands over 5 fixtures rerun; {} output files identical modulo manifest timestamp",
                                 files));
}

}  // namespace

int main() {
    criterion("statistics oracle suite", 60, stats_oracles);
    criterion("Platt recovery", 10, platt_recovery);
    criterion("forest learnability", 30, forest_learnability);
    criterion("ablation harness shape", 30, ablation_shape);
    criterion("sampling plan", 1, sampling_plan);
    criterion("respondent filtering", 1, respondent_filtering);
    criterion("end-to-end offline run", 120, end_to_end);
    criterion("determinism", 600, determinism);
    std::cout << (g_failed == 0 ? "all acceptance criteria passed\n" : fmt::format("{} criteria failed\n", g_failed));
    return g_failed == 0 ? 0 : 1;
}
