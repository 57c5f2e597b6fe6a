#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <fmt/format.h>

#include "eg/cli.hpp"
#include "eg/io.hpp"
#include "eg/rng.hpp"
#include "oracles/oracles.hpp"
#include "support/scripted.hpp"

using namespace eg;
namespace fs = std::filesystem;
using Json = nlohmann::json;
using Scripted = synth::ScriptedTransport;

namespace {

const fs::path kFixtures = EG_FIXTURES_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args, const cli::TransportFactory& factory = {}) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err, factory);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("eg_test_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

fs::path write_config(const fs::path& dir, const Json& j) {
    io::write_text(dir / "config.json", j.dump(2));
    return dir / "config.json";
}

Json read_json(const fs::path& p) { return Json::parse(io::read_text(p)); }

}  // namespace

TEST_CASE("help and usage errors") {
    const auto help = run({"--help"});
    CHECK(help.code == cli::kExitOk);
    for (const char* cmd : {"score", "calibrate", "diagnose", "ablate", "audit", "stimuli", "survey-stats"}) {
        CHECK(help.out.find(cmd) != std::string::npos);
    }
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"score"}).code == cli::kExitUsage);
    CHECK(run({"frobnicate", "--config", "x.json"}).code == cli::kExitUsage);
    CHECK(run({"score", "--config", "x.json", "--replay", "a", "--live"}).code == cli::kExitUsage);
}

TEST_CASE("missing inputs exit with code 2") {
    const auto d = scratch("missing");
    CHECK(run({"score", "--config", (d / "nope.json").string()}).code == cli::kExitUsage);
    const auto cfg = write_config(d, {{"score", {{"scorer", "forest"}, {"corpus", "absent.csv"}}}});
    const auto r = run({"score", "--config", cfg.string(), "--out", (d / "out").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("absent.csv") != std::string::npos);
    CHECK(fs::exists(d / "out" / "config.score.json"));
}

TEST_CASE("score: forest on the five-source corpus writes one row per sample") {
    const auto d = scratch("forest");
    const auto cfg = write_config(d, {{"seed", 5},
                                      {"score",
                                       {{"scorer", "forest"},
                                        {"corpus", (kFixtures / "corpus5" / "corpus.csv").string()},
                                        {"train_corpus", (kFixtures / "corpus5" / "corpus.csv").string()},
                                        {"forest", {{"n_trees", 15}}}}}});
    const auto r = run({"score", "--config", cfg.string(), "--out", (d / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto scores = io::read_csv(d / "out" / "scores.csv");
    CHECK(scores.rows.size() == 800);
    CHECK(scores.column("value"));
    CHECK(fs::exists(d / "out" / "forest_model.json"));
    const auto summary = read_json(d / "out" / "score_summary.json");
    CHECK(summary.contains("evaluation"));
    const auto manifest = read_json(d / "out" / "manifest.score.json");
    CHECK(manifest.at("live_requests") == 0);
    CHECK(manifest.at("seed") == 5);
    const auto snap = read_json(d / "out" / "config.score.json");
    CHECK(snap.at("command") == "score");
    CHECK(snap.at("score").at("scorer") == "forest");
}

TEST_CASE("score: replayed prompt scorer needs no network") {
    const auto d = scratch("replay");
    const auto r = run({"score", "--config", (kFixtures / "e2e" / "config.json").string(), "--out", d.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto manifest = read_json(d / "manifest.score.json");
    CHECK(manifest.at("adapter_mode") == "replay");
    CHECK(manifest.at("live_requests") == 0);
    CHECK(manifest.at("replayed").get<int>() > 100);
    CHECK(io::read_csv(d / "scores.csv").rows.size() == 100);
    CHECK(io::read_jsonl(d / "adapter_audit.score.jsonl").size() == manifest.at("replayed").get<std::size_t>());
}

TEST_CASE("replay store problems") {
    const auto d = scratch("replaymiss");
    io::write_text(d / "in.jsonl", R"({"id":"a","text":"Surely this is right."})" "\n");
    io::write_text(d / "empty.jsonl", "");
    const auto cfg = write_config(d, {{"adapter", {{"mode", "replay"}}},
                                      {"score", {{"scorer", "prompt:nobody"}, {"input", "in.jsonl"}}}});
    CHECK(run({"score", "--config", cfg.string(), "--out", (d / "o1").string()}).code == cli::kExitUsage);
    const auto miss = run({"score", "--config", cfg.string(), "--out", (d / "o2").string(), "--replay",
                           (d / "empty.jsonl").string()});
    CHECK(miss.code == cli::kExitError);
    CHECK(miss.err.find("unrecorded exchange") != std::string::npos);
}

TEST_CASE("record then replay reproduces the scores") {
    const auto d = scratch("record");
    std::string input;
    for (int i = 0; i < 12; ++i) input += Json{{"id", fmt::format("t{}", i)}, {"text", std::string(i + 1, 'a')}}.dump() + "\n";
    io::write_text(d / "in.jsonl", input);
    const auto cfg = write_config(d, {{"score", {{"scorer", "prompt:rater"}, {"input", "in.jsonl"}}}});

    auto state = std::make_shared<Scripted::State>();
    state->fallback = [](const Json& body) {
        const auto text = body.at("messages").at(1).at("content").get<std::string>();
        return std::to_string(text.size() % 11);
    };
    const cli::TransportFactory factory = [state] { return std::make_unique<Scripted>(state); };

    unsetenv("EG_API_KEY");
    unsetenv("EG_API_BASE");
    const auto no_key = run({"score", "--config", cfg.string(), "--out", (d / "nokey").string(), "--live"}, factory);
    CHECK(no_key.code == cli::kExitUsage);
    CHECK(state->posts == 0);

    setenv("EG_API_BASE", "http://scripted.invalid/v1", 1);
    setenv("EG_API_KEY", "k", 1);
    const auto rec = run({"score", "--config", cfg.string(), "--out", (d / "rec").string(), "--record",
                          (d / "store.jsonl").string(), "--max-inflight", "3"},
                         factory);
    REQUIRE_MESSAGE(rec.code == 0, rec.err);
    CHECK(state->posts == 12);
    CHECK(read_json(d / "rec" / "manifest.score.json").at("live_requests") == 12);
    unsetenv("EG_API_KEY");
    unsetenv("EG_API_BASE");

    const auto rep = run({"score", "--config", cfg.string(), "--out", (d / "rep").string(), "--replay",
                          (d / "store.jsonl").string()});
    REQUIRE_MESSAGE(rep.code == 0, rep.err);
    CHECK(state->posts == 12);
    CHECK(io::read_text(d / "rec" / "scores.csv") == io::read_text(d / "rep" / "scores.csv"));
}

TEST_CASE("calibrate: records without gold labels or with one class fail") {
    const auto d = scratch("calibrate");
    std::string no_gold, one_class, good;
    Rng rng(4);
    for (int i = 0; i < 40; ++i) {
        const double raw = rng.uniform() * 100;
        Json base = {{"statement_id", fmt::format("c{}", i)}, {"statement", "S"}, {"verdict", "True"},
                     {"raw_confidence", raw}, {"scale", 100}, {"explanation", "E"}};
        no_gold += base.dump() + "\n";
        base["gold_label"] = true;
        one_class += base.dump() + "\n";
        base["gold_label"] = rng.bernoulli(raw / 100);
        good += base.dump() + "\n";
    }
    io::write_text(d / "no_gold.jsonl", no_gold);
    io::write_text(d / "one_class.jsonl", one_class);
    io::write_text(d / "good.jsonl", good);
    for (const char* name : {"no_gold", "one_class"}) {
        const auto cfg = write_config(d, {{"calibrate", {{"records", std::string(name) + ".jsonl"}}}});
        const auto r = run({"calibrate", "--config", cfg.string(), "--out", (d / name).string()});
        CHECK(r.code == cli::kExitError);
        CHECK_FALSE(r.err.empty());
    }
    const auto cfg = write_config(d, {{"calibrate", {{"records", "good.jsonl"}, {"bins", 5}}}});
    const auto r = run({"calibrate", "--config", cfg.string(), "--out", (d / "good").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(io::read_csv(d / "good" / "reliability.csv").rows.size() == 5);
    const auto platt = read_json(d / "good" / "platt.json");
    CHECK(platt.at("fit_meta").at("converged") == true);
    for (const auto& rec : io::read_jsonl(d / "good" / "calibrated.jsonl")) CHECK(rec.value.contains("calibrated_p"));
}

TEST_CASE("diagnose: tiny joins fail, 245 records give the full table") {
    const auto d = scratch("diagnose");
    Rng rng(6);
    std::string certainty, scores = "id,value\n", human = "id,human\n";
    for (int i = 0; i < 245; ++i) {
        const auto id = fmt::format("d{}", i);
        const double p = rng.uniform();
        certainty += Json{{"statement_id", id}, {"statement", "S"}, {"calibrated_p", p}, {"level", i % 3 - 1}}.dump() + "\n";
        const double a = std::clamp(0.5 * p + 0.5 * rng.uniform(), 0.0, 1.0);
        scores += fmt::format("{},{}\n", id, a);
        human += fmt::format("{},{}\n", id, std::clamp(10 * a + rng.normal(), 0.0, 10.0));
    }
    io::write_text(d / "c.jsonl", certainty);
    io::write_text(d / "s.csv", scores);
    io::write_text(d / "h.csv", human);
    io::write_text(d / "s_small.csv", "id,value\nd0,0.5\nd1,0.4\n");

    auto cfg = write_config(d, {{"diagnose", {{"certainty", "c.jsonl"}, {"assertiveness", "s_small.csv"}}}});
    const auto small = run({"diagnose", "--config", cfg.string(), "--out", (d / "small").string()});
    CHECK(small.code == cli::kExitError);
    CHECK(small.err.find("n=2") != std::string::npos);

    cfg = write_config(d, {{"report_tag", "synthetic"},
                           {"diagnose", {{"certainty", "c.jsonl"}, {"assertiveness", "s.csv"}, {"human", "h.csv"}}}});
    const auto full = run({"diagnose", "--config", cfg.string(), "--out", (d / "full").string()});
    REQUIRE_MESSAGE(full.code == 0, full.err);
    const auto table = read_json(d / "full" / "stratified.json");
    CHECK(table.at("rows").size() == 3);
    for (const auto& row : table.at("rows")) CHECK(row.at("cells").size() == 4);
    CHECK(table.at("all_cells_defined") == true);
    CHECK(table.at("n_joined") == 245);
    CHECK(io::read_csv(d / "full" / "scatter.csv").rows.size() == 245);
    CHECK(full.out.find("Overall") != std::string::npos);
    CHECK(full.out.find("synthetic") != std::string::npos);
    CHECK(read_json(d / "full" / "gap_summary.json").at("n") == 245);
}

TEST_CASE("ablate: five-column matrix with row means") {
    const auto d = scratch("ablate");
    auto cfg = read_json(kFixtures / "corpus5" / "config.json");
    cfg["ablate"]["corpus"] = (kFixtures / "corpus5" / "corpus.csv").string();
    cfg["ablate"]["forest"]["n_trees"] = 15;
    const auto path = write_config(d, cfg);
    const auto r = run({"ablate", "--config", path.string(), "--out", (d / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = read_json(d / "out" / "ablation.json");
    CHECK(m.at("sources").size() == 5);
    REQUIRE(m.at("rows").size() == 2);
    for (const auto& row : m.at("rows")) CHECK(row.at("cells").size() == 5);
    CHECK(std::abs(m.at("rows")[1].at("mean").get<double>() - 1.076) < 1e-12);
}

TEST_CASE("audit: kappa matches the labels file") {
    const auto d = scratch("audit");
    const auto r = run({"audit", "--config", (kFixtures / "audit" / "config.json").string(), "--out", d.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("n=100") != std::string::npos);
    const auto labels = io::read_csv(d / "labels.csv");
    REQUIRE(labels.rows.size() == 100);
    const auto mc = *labels.column("model_label");
    const auto hc = *labels.column("human_label");
    std::map<int, std::size_t> idx = {{-1, 0}, {0, 1}, {1, 2}};
    std::vector<std::vector<double>> conf(3, std::vector<double>(3, 0.0));
    for (const auto& row : labels.rows) conf[idx.at(std::stoi(row.fields[mc]))][idx.at(std::stoi(row.fields[hc]))] += 1;
    const auto ref = oracle::kappa_from_confusion(conf);
    const auto report = read_json(d / "audit_report.json");
    CHECK(std::abs(report.at("agreement").at("kappa").get<double>() - ref.kappa) < 1e-12);
    CHECK(std::abs(report.at("agreement").at("percent_agreement").get<double>() - ref.po) < 1e-12);
    CHECK(read_json(d / "plan.json").dump().find("45") != std::string::npos);
}

TEST_CASE("stimuli and survey-stats on the fixtures") {
    const auto d = scratch("stimuli");
    const auto s = run({"stimuli", "--config", (kFixtures / "stimuli" / "config.json").string(), "--out",
                        (d / "stim").string()});
    REQUIRE_MESSAGE(s.code == 0, s.err);
    CHECK(io::read_jsonl(d / "stim" / "stimuli.jsonl").size() == 150);
    const auto survey = read_json(d / "stim" / "survey.json");
    CHECK(survey.at("assignments").size() == 30);
    CHECK(survey.at("rating_slots") == 120);

    const auto r = run({"survey-stats", "--config", (kFixtures / "survey" / "config.json").string(), "--out",
                        (d / "stats").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(io::read_csv(d / "stats" / "perception_levels.csv").rows.size() == 3);
    const auto excl = io::read_csv(d / "stats" / "exclusions.csv");
    CHECK(excl.rows.size() == 6);
    CHECK(read_json(d / "stats" / "perception.json").at("retained") == 14);
}
