#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "driftguard/gbt.hpp"
#include "driftguard/hierarchy.hpp"
#include "driftguard/panel.hpp"

namespace driftguard {

/// Any scalar predictor over a fixed-width feature row. Attribution never
/// looks inside the model; tree ensembles, hand-built oracles, and test
/// lambdas all plug in the same way.
using PredictFn = std::function<double(const double* row)>;

/// Additive attribution of one prediction across features.
///   base_value   expected prediction when every attributed feature comes
///                from the background (features outside the attributed
///                subset stay frozen at the instance's values)
///   prediction   the model's output on the instance itself
///   phi          per-feature contributions; base_value + sum(phi) equals
///                prediction up to floating-point rounding. Features frozen
///                out of the attribution carry exactly 0.
struct ShapResult {
    std::map<std::string, double> phi;
    double base_value = 0.0;
    double prediction = 0.0;
};

/// Exact Shapley attribution by full subset enumeration over
/// `feature_subset` (at most 16 features; cost grows as 2^k).
///
/// The coalition value g(S) is interventional: predictions are averaged over
/// the background rows with features in S overridden by the instance's
/// values. Features outside `feature_subset` are frozen to the instance
/// everywhere and receive phi = 0 by definition.
ShapResult shapley_exact(const PredictFn& f, const std::vector<std::string>& feature_names,
                         const std::vector<double>& instance,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<int>& feature_subset);

/// Permutation-sampling estimate of the same attribution over all features.
/// Each permutation draws one background row and walks the features into the
/// instance in permuted order, crediting each feature its marginal change.
/// The leftover efficiency gap (prediction - base_value - sum(phi_hat)) is
/// redistributed proportionally to |phi_hat_i|, so the efficiency identity
/// holds exactly as for the enumerated attribution. Deterministic per seed.
ShapResult shapley_sampled(const PredictFn& f, const std::vector<std::string>& feature_names,
                           const std::vector<double>& instance,
                           const std::vector<std::vector<double>>& background,
                           int n_permutations, std::uint64_t seed);

// Convenience overloads attributing a trained tree ensemble's prediction.
ShapResult shapley_exact(const GbtModel& model, const std::vector<double>& instance,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<int>& feature_subset);
ShapResult shapley_sampled(const GbtModel& model, const std::vector<double>& instance,
                           const std::vector<std::vector<double>>& background,
                           int n_permutations, std::uint64_t seed);

/// Shift in a feature's attribution weight between two periods. Period means
/// are taken over |phi|: for a regression model, "this feature drives more
/// of the prediction than it used to" is a magnitude statement.
struct DeltaPhi {
    std::string feature;
    double baseline_mean_phi = 0.0;  // mean |phi| over baseline-period instances
    double drift_mean_phi = 0.0;     // mean |phi| over drift-period instances
    double delta = 0.0;              // drift_mean_phi - baseline_mean_phi, exactly
};

struct DeltaPhiOptions {
    int instance_cap = 50;     // per period; larger sets are subsampled
    int n_permutations = 50;   // per-instance sampling effort
    std::uint64_t seed = 0xd1a6;
};

/// Per-feature attribution shift between a baseline and a drift period.
/// Instances beyond `instance_cap` are subsampled uniformly; the subsample
/// and every per-instance estimate are deterministic in `seed`, and the two
/// periods share random streams so identical inputs give deltas of exactly
/// zero. Output order follows `feature_names`.
std::vector<DeltaPhi> delta_phi(const PredictFn& f, const std::vector<std::string>& feature_names,
                                const std::vector<std::vector<double>>& baseline_instances,
                                const std::vector<std::vector<double>>& drift_instances,
                                const std::vector<std::vector<double>>& background,
                                const DeltaPhiOptions& options = {});
std::vector<DeltaPhi> delta_phi(const GbtModel& model,
                                const std::vector<std::vector<double>>& baseline_instances,
                                const std::vector<std::vector<double>>& drift_instances,
                                const std::vector<std::vector<double>>& background,
                                const DeltaPhiOptions& options = {});

/// Ranks features by their attribution weight pooled across both periods
/// (baseline_mean_phi + drift_mean_phi) descending, breaking ties by input
/// order, and returns the first `k` entries.
std::vector<DeltaPhi> top_features_by_weight(const std::vector<DeltaPhi>& deltas, int k);

/// Accuracy-degradation severities across the hierarchy, with the feature
/// shifts that explain them.
///   severity       per hierarchy node id; leaves carry the exact per-series
///                  WMAPE delta, internal nodes the sales-share-weighted
///                  mean of their children. NaN marks nodes whose WMAPE was
///                  undefined (no actual sales in the window).
///   top_features   ranked attribution shifts attached by the diagnosis
///                  pipeline; hierarchical_impact itself leaves it empty.
struct DiagnosticMap {
    std::vector<double> severity;
    std::vector<DeltaPhi> top_features;
};

/// Builds severities from per-series WMAPE measured before and during the
/// drift window [window_start, window_end] (inclusive, panel days used for
/// the sales-share weights). Children with undefined severity are excluded
/// from their parent's weighted mean along with their sales weight.
DiagnosticMap hierarchical_impact(const std::vector<double>& wmape_baseline,
                                  const std::vector<double>& wmape_drift,
                                  const Hierarchy& hierarchy, const Panel& panel,
                                  int window_start, int window_end);

/// Aligned-text rendering: one indented row per node down each branch
/// (geographic, then product), severity as signed percentage points, with
/// the top-feature table underneath.
std::string render_diagnostic_map(const DiagnosticMap& map, const Hierarchy& hierarchy);

/// Nested-record document (one object per node, children inlined) with the
/// top-feature list; readable back verbatim.
void write_diagnostic_map(const DiagnosticMap& map, const Hierarchy& hierarchy,
                          const std::string& path);
DiagnosticMap read_diagnostic_map(const std::string& path, const Hierarchy& hierarchy);

}  // namespace driftguard
