#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eg/lexicon.hpp"

namespace eg::forest {

struct ForestParams {
    std::size_t n_trees = 200;
    std::size_t max_depth = 8;
    std::size_t min_leaf = 3;
    std::uint64_t seed = 1;
    std::size_t mtry = 0;  // features tried per split; 0 means max(1, p/3)
    bool bootstrap = true;
};

struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // mean label of the training rows that reached this node
};

struct Tree {
    std::vector<Node> nodes;  // nodes[0] is the root

    double predict(std::span<const double> row) const;
};

// Label scale the model was trained on; predictions are divided by `high`.
struct LabelScale {
    double low = 0.0;
    double high = 10.0;
};

struct ForestModel {
    std::vector<Tree> trees;
    ForestParams params;
    LabelScale scale;
    double label_min = 0.0;
    double label_max = 0.0;
    std::size_t n_features = 0;
    std::string lexicon_version;

    // Mean of per-tree outputs on the raw label scale.
    double predict_row(std::span<const double> row) const;

    nlohmann::json to_json() const;
    static ForestModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ForestModel load(const std::filesystem::path& path);
};

// Bagged CART regression trees with variance-reduction splits. Each tree draws
// from its own stream derive_seed(params.seed, tree_index), so results do not
// depend on training order.
ForestModel train_forest(const std::vector<lexicon::FeatureVector>& features, std::span<const double> labels,
                         const ForestParams& params, LabelScale scale = {});

// Same, on precomputed rows. All rows must have the same width.
ForestModel train_forest_rows(const std::vector<std::vector<double>>& rows, std::span<const double> labels,
                              const ForestParams& params, std::string lexicon_version = {},
                              LabelScale scale = {});

}  // namespace eg::forest
