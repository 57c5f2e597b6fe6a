#include "eg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "eg/error.hpp"
#include "eg/io.hpp"
#include "eg/rng.hpp"

namespace eg::forest {

double Tree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

double ForestModel::predict_row(std::span<const double> row) const {
    if (row.size() != n_features) {
        throw ValidationError(fmt::format("feature row has {} columns, model expects {}", row.size(), n_features));
    }
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(row);
    return sum / static_cast<double>(trees.size());
}

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // sum_l^2/n_l + sum_r^2/n_r, larger is better
};

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<double>>& rows, std::span<const double> labels,
                const ForestParams& params, std::size_t mtry, Rng& rng)
        : rows_(rows), labels_(labels), params_(params), mtry_(mtry), rng_(rng) {
        features_.resize(rows.front().size());
        std::iota(features_.begin(), features_.end(), 0);
    }

    Tree build(std::vector<std::size_t> sample) {
        Tree tree;
        grow(tree, sample, 0);
        return tree;
    }

private:
    int grow(Tree& tree, std::vector<std::size_t>& idx, std::size_t depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        double sum = 0.0;
        double lo = labels_[idx.front()], hi = lo;
        for (auto i : idx) {
            sum += labels_[i];
            lo = std::min(lo, labels_[i]);
            hi = std::max(hi, labels_[i]);
        }
        // Clamp guards against the mean drifting outside the node's range by rounding.
        tree.nodes[static_cast<std::size_t>(id)].value = std::clamp(sum / static_cast<double>(idx.size()), lo, hi);

        if (depth >= params_.max_depth || idx.size() < 2 * params_.min_leaf || lo == hi) return id;
        const auto split = best_split(idx, sum);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : idx) {
            (rows_[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();
        const int l = grow(tree, left, depth + 1);
        const int r = grow(tree, right, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    Split best_split(const std::vector<std::size_t>& idx, double total) {
        const auto p = features_.size();
        // Partial Fisher-Yates: the first mtry entries become this node's candidates.
        for (std::size_t k = 0; k < mtry_; ++k) {
            const auto j = k + static_cast<std::size_t>(rng_.below(p - k));
            std::swap(features_[k], features_[j]);
        }
        const auto n = idx.size();
        const double parent = total * total / static_cast<double>(n);
        Split best;
        best.score = parent;
        for (std::size_t k = 0; k < mtry_; ++k) {
            const auto f = features_[k];
            const double first = rows_[idx.front()][f];
            bool constant = true;
            for (auto i : idx) {
                if (rows_[i][f] != first) {
                    constant = false;
                    break;
                }
            }
            if (constant) continue;

            buffer_.clear();
            for (auto i : idx) buffer_.emplace_back(rows_[i][f], labels_[i]);
            std::sort(buffer_.begin(), buffer_.end());
            double left_sum = 0.0;
            for (std::size_t m = 0; m + 1 < n; ++m) {
                left_sum += buffer_[m].second;
                const auto n_left = m + 1;
                if (buffer_[m].first == buffer_[m + 1].first) continue;
                if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) continue;
                const double right_sum = total - left_sum;
                const double score = left_sum * left_sum / static_cast<double>(n_left) +
                                     right_sum * right_sum / static_cast<double>(n - n_left);
                if (score > best.score + 1e-12 * std::abs(best.score)) {
                    best.feature = static_cast<int>(f);
                    best.threshold = (buffer_[m].first + buffer_[m + 1].first) / 2.0;
                    best.score = score;
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<double>>& rows_;
    std::span<const double> labels_;
    const ForestParams& params_;
    std::size_t mtry_;
    Rng& rng_;
    std::vector<std::size_t> features_;
    std::vector<std::pair<double, double>> buffer_;
};

}  // namespace

ForestModel train_forest_rows(const std::vector<std::vector<double>>& rows, std::span<const double> labels,
                              const ForestParams& params, std::string lexicon_version, LabelScale scale) {
    if (rows.size() != labels.size()) throw ValidationError("feature and label counts differ");
    if (rows.empty() || rows.size() < params.min_leaf) throw ValidationError("too few training rows");
    if (params.n_trees == 0 || params.min_leaf == 0) throw ValidationError("n_trees and min_leaf must be positive");
    const auto width = rows.front().size();
    if (width == 0) throw ValidationError("feature rows are empty");
    for (const auto& r : rows) {
        if (r.size() != width) throw ValidationError("feature rows differ in width");
    }
    for (double y : labels) {
        if (!std::isfinite(y)) throw ValidationError("labels must be finite");
    }

    ForestModel model;
    model.params = params;
    model.scale = scale;
    model.n_features = width;
    model.lexicon_version = std::move(lexicon_version);
    const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
    model.label_min = *lo;
    model.label_max = *hi;
    const auto mtry = std::min(width, params.mtry ? params.mtry : std::max<std::size_t>(1, width / 3));
    model.params.mtry = mtry;

    const auto n = rows.size();
    model.trees.reserve(params.n_trees);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> sample(n);
        if (params.bootstrap) {
            for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
        } else {
            std::iota(sample.begin(), sample.end(), 0);
        }
        TreeBuilder builder(rows, labels, params, mtry, rng);
        model.trees.push_back(builder.build(std::move(sample)));
    }
    return model;
}

ForestModel train_forest(const std::vector<lexicon::FeatureVector>& features, std::span<const double> labels,
                         const ForestParams& params, LabelScale scale) {
    if (features.empty()) throw ValidationError("no training features");
    std::vector<std::vector<double>> rows;
    rows.reserve(features.size());
    for (const auto& f : features) {
        if (f.lexicon_version != features.front().lexicon_version) {
            throw ValidationError("training features come from different lexicon versions");
        }
        rows.push_back(f.as_row());
    }
    return train_forest_rows(rows, labels, params, features.front().lexicon_version, scale);
}

// Persistence: compact per-node arrays [feature, threshold, left, right, value].
nlohmann::json ForestModel::to_json() const {
    nlohmann::json trees_json = nlohmann::json::array();
    for (const auto& t : trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        trees_json.push_back(std::move(nodes));
    }
    return {
        {"format", "eg-forest"},
        {"format_version", 1},
        {"lexicon_version", lexicon_version},
        {"params",
         {{"n_trees", params.n_trees},
          {"max_depth", params.max_depth},
          {"min_leaf", params.min_leaf},
          {"seed", params.seed},
          {"mtry", params.mtry},
          {"bootstrap", params.bootstrap}}},
        {"label_scale", {{"low", scale.low}, {"high", scale.high}}},
        {"label_range", {label_min, label_max}},
        {"n_features", n_features},
        {"trees", std::move(trees_json)},
    };
}

ForestModel ForestModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "eg-forest") throw ValidationError("not a forest model file");
        if (j.at("format_version").get<int>() != 1) throw ValidationError("unsupported forest model version");
        ForestModel m;
        m.lexicon_version = j.at("lexicon_version").get<std::string>();
        const auto& p = j.at("params");
        m.params.n_trees = p.at("n_trees").get<std::size_t>();
        m.params.max_depth = p.at("max_depth").get<std::size_t>();
        m.params.min_leaf = p.at("min_leaf").get<std::size_t>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.params.mtry = p.at("mtry").get<std::size_t>();
        m.params.bootstrap = p.at("bootstrap").get<bool>();
        m.scale.low = j.at("label_scale").at("low").get<double>();
        m.scale.high = j.at("label_scale").at("high").get<double>();
        m.label_min = j.at("label_range").at(0).get<double>();
        m.label_max = j.at("label_range").at(1).get<double>();
        m.n_features = j.at("n_features").get<std::size_t>();
        for (const auto& tj : j.at("trees")) {
            Tree t;
            for (const auto& nj : tj) {
                t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(),
                                   nj.at(3).get<int>(), nj.at(4).get<double>()});
            }
            const auto count = static_cast<int>(t.nodes.size());
            for (const auto& n : t.nodes) {
                if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                                       static_cast<std::size_t>(n.feature) >= m.n_features)) {
                    throw ValidationError("forest model has a malformed node");
                }
            }
            if (t.nodes.empty()) throw ValidationError("forest model has an empty tree");
            m.trees.push_back(std::move(t));
        }
        if (m.trees.size() != m.params.n_trees) throw ValidationError("forest tree count disagrees with params");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed forest model: ") + e.what());
    }
}

void ForestModel::save(const std::filesystem::path& path) const { io::write_text(path, to_json().dump() + "\n"); }

ForestModel ForestModel::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(io::read_text(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace eg::forest
