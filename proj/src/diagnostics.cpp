#include "eg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/io.hpp"

namespace eg::diagnostics {

std::string significance_stars(std::optional<double> p, const StarThresholds& t) {
    if (!p) return "";
    if (*p < t.three) return "***";
    if (*p < t.two) return "**";
    if (*p < t.one) return "*";
    return "";
}

namespace {

nlohmann::json correlation_json(const stats::CorrelationResult& r) {
    return {{"method", stats::method_name(r.method)},
            {"coefficient", io::json_num(r.coefficient)},
            {"p_value", io::json_num(r.p_value)},
            {"n", r.n},
            {"note", r.note}};
}

std::string fmt_p(std::optional<double> p) {
    if (!p) return "";
    return fmt::format("{:.6g}", *p);
}

}  // namespace

bool StratifiedTable::all_cells_defined() const {
    for (const auto& row : rows) {
        for (const auto& cell : row.cells) {
            if (cell.insufficient || !cell.result.defined()) return false;
        }
    }
    return !rows.empty();
}

nlohmann::json StratifiedTable::to_json() const {
    nlohmann::json out = {{"method", stats::method_name(method)},
                          {"certainty_channel", certainty_channel},
                          {"columns", kStrata},
                          {"all_cells_defined", all_cells_defined()},
                          {"rows", nlohmann::json::array()}};
    for (const auto& row : rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (std::size_t c = 0; c < row.cells.size(); ++c) {
            auto cj = correlation_json(row.cells[c].result);
            cj["stratum"] = kStrata[c];
            cj["stars"] = row.cells[c].stars;
            cj["insufficient"] = row.cells[c].insufficient;
            cells.push_back(std::move(cj));
        }
        out["rows"].push_back({{"name", row.name}, {"cells", std::move(cells)}});
    }
    return out;
}

std::string StratifiedTable::to_csv() const {
    std::string out = io::csv_line({"row", "stratum", "method", "certainty_channel", "coefficient", "p_value", "n",
                                    "stars", "note"});
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.cells.size(); ++c) {
            const auto& cell = row.cells[c];
            out += io::csv_line({row.name, kStrata[c], std::string(stats::method_name(method)), certainty_channel,
                                 io::fmt_opt(cell.result.coefficient), fmt_p(cell.result.p_value),
                                 std::to_string(cell.result.n), cell.stars, cell.result.note});
        }
    }
    return out;
}

StratifiedTable stratify(const std::vector<DiagnosticRecord>& records, stats::Method method,
                         const StarThresholds& thresholds, std::string certainty_channel) {
    for (const auto& r : records) {
        if (r.level && (*r.level < -1 || *r.level > 1)) {
            throw ValidationError("record " + r.id + " has level outside {-1,0,+1}");
        }
    }
    enum class Series { Predicted, Human, Certainty };
    struct Pair {
        const char* name;
        Series x;
        Series y;
    };
    static constexpr std::array<Pair, 3> pairs = {{
        {"Predicted Assertiveness vs. Human Assertiveness", Series::Predicted, Series::Human},
        {"Internal Certainty vs. Predicted Assertiveness", Series::Certainty, Series::Predicted},
        {"Internal Certainty vs. Human Assertiveness", Series::Certainty, Series::Human},
    }};
    auto value = [](const DiagnosticRecord& r, Series s) -> std::optional<double> {
        switch (s) {
            case Series::Predicted: return r.predicted;
            case Series::Human: return r.human;
            case Series::Certainty: return r.certainty;
        }
        return std::nullopt;
    };

    StratifiedTable table;
    table.method = method;
    table.certainty_channel = std::move(certainty_channel);
    for (const auto& pair : pairs) {
        StratifiedRow row;
        row.name = pair.name;
        for (std::size_t c = 0; c < kStrata.size(); ++c) {
            std::vector<double> xs, ys;
            for (const auto& r : records) {
                if (c > 0 && (!r.level || *r.level != static_cast<int>(c) - 2)) continue;
                const auto x = value(r, pair.x);
                const auto y = value(r, pair.y);
                if (!x || !y) continue;
                xs.push_back(*x);
                ys.push_back(*y);
            }
            auto& cell = row.cells[c];
            if (xs.size() < 3) {
                cell.insufficient = true;
                cell.result.method = method;
                cell.result.n = xs.size();
                cell.result.note = "insufficient: n < 3";
                continue;
            }
            cell.result = stats::correlate(method, xs, ys);
            cell.stars = significance_stars(cell.result.p_value, thresholds);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::json DistributionSummary::to_json() const {
    return {{"n", n},         {"mean", mean}, {"stddev", stddev},       {"skew", skew},
            {"q1", q1},       {"median", median}, {"q3", q3},           {"iqr", iqr},
            {"lower", lower}, {"upper", upper}, {"histogram", histogram}};
}

DistributionSummary distribution_summary(std::span<const double> scores, std::size_t bins, double lower,
                                         double upper) {
    if (scores.empty()) throw ValidationError("distribution summary of an empty series");
    if (bins == 0 || !(upper > lower)) throw ValidationError("invalid histogram range");
    DistributionSummary s;
    s.lower = lower;
    s.upper = upper;
    s.n = scores.size();
    s.histogram.assign(bins, 0);
    for (double v : scores) {
        const double pos = (v - lower) / (upper - lower) * static_cast<double>(bins);
        const auto b = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(bins - 1)));
        ++s.histogram[b];
    }
    s.mean = stats::mean(scores);
    s.stddev = stats::stddev(scores, 1);
    double m2 = 0.0, m3 = 0.0;
    for (double v : scores) {
        const double d = v - s.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(s.n);
    m3 /= static_cast<double>(s.n);
    s.skew = m2 > 1e-300 ? m3 / std::pow(m2, 1.5) : 0.0;
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    s.q1 = stats::quantile_sorted(sorted, 0.25);
    s.median = stats::quantile_sorted(sorted, 0.5);
    s.q3 = stats::quantile_sorted(sorted, 0.75);
    s.iqr = s.q3 - s.q1;
    if (s.stddev < 1e-12 * std::max(1.0, std::abs(s.mean))) {
        s.stddev = 0.0;
        s.skew = 0.0;
    }
    return s;
}

std::optional<double> iqr_ratio(const DistributionSummary& a, const DistributionSummary& b) {
    if (!(b.iqr > 0.0)) return std::nullopt;
    return a.iqr / b.iqr;
}

// --- ablation ------------------------------------------------------------------------

void finalize_row(AblationRow& row) {
    double sum = 0.0;
    row.completed = 0;
    for (const auto& c : row.cells) {
        if (c.value) {
            sum += *c.value;
            ++row.completed;
        }
    }
    row.mean = row.completed ? std::optional(sum / static_cast<double>(row.completed)) : std::nullopt;
    row.annotation.clear();
    if (row.completed < row.cells.size()) {
        row.annotation = fmt::format("mean over {} of {} cells", row.completed, row.cells.size());
    }
}

AblationRow external_row(std::string model, const std::vector<std::string>& sources,
                         const std::vector<std::optional<double>>& values) {
    if (sources.size() != values.size()) throw ValidationError("external row width differs from source count");
    AblationRow row;
    row.model = std::move(model);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        AblationCell cell;
        cell.held_out = sources[i];
        cell.value = values[i];
        if (!values[i]) cell.error = "missing";
        row.cells.push_back(std::move(cell));
    }
    finalize_row(row);
    return row;
}

AblationMatrix ablation(const std::vector<corpus::AnnotatedSample>& samples, const std::vector<AblationModel>& models,
                        EvalOp eval, AblationMetric metric, std::vector<std::string> sources) {
    if (!eval) eval = [](scorers::Scorer& s, const std::vector<corpus::AnnotatedSample>& t) {
        return scorers::evaluate_scorer(s, t);
    };
    if (sources.empty()) {
        std::set<std::string> distinct;
        for (const auto& s : samples) distinct.insert(s.source);
        sources.assign(distinct.begin(), distinct.end());
    }
    if (sources.size() < 2) throw ValidationError("ablation needs at least two sources");

    AblationMatrix matrix;
    matrix.sources = sources;
    matrix.metric = metric;
    for (const auto& model : models) {
        AblationRow row;
        row.model = model.name;
        for (const auto& held_out : sources) {
            AblationCell cell;
            cell.held_out = held_out;
            try {
                const auto sp = corpus::split(samples, corpus::SplitStrategy::leave_one_source_out(held_out), 0);
                const auto train = corpus::select(samples, sp.train);
                const auto test = corpus::select(samples, sp.test);
                auto scorer = model.factory(train);
                if (!scorer) throw Error("scorer factory returned nothing");
                cell.evaluation = eval(*scorer, test);
                cell.value = metric == AblationMetric::Standardized ? cell.evaluation->mse_standardized
                                                                    : std::optional(cell.evaluation->mse_raw);
                if (!cell.value) cell.error = cell.evaluation->note;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            row.cells.push_back(std::move(cell));
        }
        finalize_row(row);
        matrix.rows.push_back(std::move(row));
    }
    return matrix;
}

nlohmann::json AblationMatrix::to_json() const {
    nlohmann::json out = {{"metric", metric == AblationMetric::Standardized ? "mse_standardized" : "mse_raw"},
                          {"sources", sources},
                          {"rows", nlohmann::json::array()}};
    for (const auto& row : rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : row.cells) {
            nlohmann::json cj = {{"held_out", c.held_out}, {"value", io::json_num(c.value)}, {"error", c.error}};
            if (c.evaluation) {
                cj["mse_standardized"] = io::json_num(c.evaluation->mse_standardized);
                cj["mse_raw"] = c.evaluation->mse_raw;
                cj["n"] = c.evaluation->n;
            }
            cells.push_back(std::move(cj));
        }
        out["rows"].push_back({{"model", row.model},
                               {"cells", std::move(cells)},
                               {"mean", io::json_num(row.mean)},
                               {"completed", row.completed},
                               {"annotation", row.annotation}});
    }
    return out;
}

std::string AblationMatrix::to_csv() const {
    std::vector<std::string> header = {"model"};
    header.insert(header.end(), sources.begin(), sources.end());
    header.emplace_back("mean");
    header.emplace_back("annotation");
    std::string out = io::csv_line(header);
    for (const auto& row : rows) {
        std::vector<std::string> fields = {row.model};
        for (const auto& c : row.cells) fields.push_back(io::fmt_opt(c.value, 4));
        fields.push_back(io::fmt_opt(row.mean, 4));
        fields.push_back(row.annotation);
        out += io::csv_line(fields);
    }
    return out;
}

// --- gap -----------------------------------------------------------------------------

GapAnalysis gap_analysis(const std::vector<certainty::CertaintyRecord>& certainty,
                         const std::map<std::string, double>& assertiveness, double threshold) {
    GapAnalysis out;
    out.threshold = threshold;
    std::set<std::string> joined;
    for (const auto& rec : certainty) {
        const auto it = assertiveness.find(rec.statement_id);
        if (it == assertiveness.end() || !rec.calibrated_p) {
            out.missing_assertiveness.push_back(rec.statement_id);
            continue;
        }
        const double a = it->second;
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("assertiveness outside [0,1] for " + rec.statement_id);
        GapRecord g;
        g.statement_id = rec.statement_id;
        g.assertiveness = a;
        g.calibrated_p = *rec.calibrated_p;
        g.verdict_confidence = certainty::verdict_confidence(g.calibrated_p);
        g.gap = a - g.verdict_confidence;
        g.over_assertive = g.gap > threshold;
        joined.insert(rec.statement_id);
        out.records.push_back(std::move(g));
    }
    for (const auto& [id, a] : assertiveness) {
        if (!joined.contains(id)) {
            const bool known = std::any_of(certainty.begin(), certainty.end(),
                                           [&](const auto& r) { return r.statement_id == id; });
            if (!known) out.missing_certainty.push_back(id);
        }
    }
    std::vector<double> a, p, vc;
    std::size_t over = 0;
    for (const auto& g : out.records) {
        a.push_back(g.assertiveness);
        p.push_back(g.calibrated_p);
        vc.push_back(g.verdict_confidence);
        if (g.over_assertive) ++over;
    }
    auto safe = [](std::span<const double> x, std::span<const double> y) {
        if (x.size() < 3) {
            stats::CorrelationResult r;
            r.n = x.size();
            r.note = "insufficient: n < 3";
            return r;
        }
        return stats::spearman(x, y);
    };
    out.spearman_p = safe(p, a);
    out.spearman_verdict_confidence = safe(vc, a);
    out.over_assertive_share = out.records.empty() ? 0.0 : static_cast<double>(over) / static_cast<double>(out.records.size());
    return out;
}

nlohmann::json GapAnalysis::summary_json() const {
    return {{"n", records.size()},
            {"spearman_calibrated_p_vs_assertiveness", correlation_json(spearman_p)},
            {"spearman_verdict_confidence_vs_assertiveness", correlation_json(spearman_verdict_confidence)},
            {"over_assertive_threshold", threshold},
            {"over_assertive_threshold_is_default", threshold == 0.3},
            {"over_assertive_share", over_assertive_share},
            {"missing_assertiveness", missing_assertiveness},
            {"missing_certainty", missing_certainty}};
}

std::string GapAnalysis::records_csv() const {
    std::string out = io::csv_line(
        {"statement_id", "assertiveness", "calibrated_p", "verdict_confidence", "gap", "over_assertive"});
    for (const auto& g : records) {
        out += io::csv_line({g.statement_id, io::fmt_num(g.assertiveness), io::fmt_num(g.calibrated_p),
                             io::fmt_num(g.verdict_confidence), io::fmt_num(g.gap), g.over_assertive ? "1" : "0"});
    }
    return out;
}

}  // namespace eg::diagnostics
