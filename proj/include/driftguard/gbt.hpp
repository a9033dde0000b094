#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftguard/features.hpp"

namespace driftguard {

struct GbtHyper {
    int n_trees = 100;
    int max_depth = 6;
    double learning_rate = 0.1;
    int min_leaf = 20;
    std::uint64_t seed = 0;  // reserved; exact greedy fitting uses no randomness

    void validate() const;
    bool operator==(const GbtHyper&) const = default;
};

// One node of a binary regression tree stored in a flat array.
// feature == -1 marks a leaf; otherwise x[feature] < threshold routes left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf = 0.0;

    bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double eval(const double* x) const {
        int id = 0;
        while (nodes[id].feature >= 0) {
            id = x[nodes[id].feature] < nodes[id].threshold ? nodes[id].left : nodes[id].right;
        }
        return nodes[id].leaf;
    }
    bool operator==(const RegressionTree&) const = default;
};

// Additive tree ensemble for squared error:
//   prediction(x) = base_score + learning_rate * sum_k tree_k(x).
// Immutable after training.
struct GbtModel {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;
    FeatureSpec feature_spec;
    std::vector<std::string> feature_names;
    int trained_start = 0;  // global day range the training rows came from
    int trained_end = 0;

    int n_features() const { return static_cast<int>(feature_names.size()); }
    double predict_row(const double* x) const;

    bool operator==(const GbtModel&) const = default;
};

/// Fits squared-error gradient boosting on a row-major feature matrix.
/// Each tree is grown greedily on the current residuals, choosing at every
/// node the variance-reducing split over histogram-binned feature values;
/// ties break toward the lowest feature index, then the lowest threshold.
/// Fully deterministic.  All-identical targets produce a zero-tree model.
/// feature_spec/feature_names/trained window are left for the caller to fill.
GbtModel train_gbt(const std::vector<double>& features, int n_features,
                   const std::vector<double>& targets, const GbtHyper& hyper);

/// Evaluates the model on one feature vector; the vector's layout must match
/// the model's (checked by length).
double predict(const GbtModel& model, const FeatureVector& x);

/// Versioned, self-describing text serialization; round-trip exact.
void save_gbt(const GbtModel& model, const std::string& path);
GbtModel load_gbt(const std::string& path);

}  // namespace driftguard
