#pragma once

#include <functional>
#include <string>
#include <vector>

#include "driftguard/panel.hpp"

namespace driftguard {

/// Which inputs a demand model sees.  The emitted vector layout is fixed by
/// this spec for the life of a model:
///   per lag d (ascending):        lag_d, lag_d_missing
///   calendar (optional):          dow_0..dow_6 one-hot, month, is_holiday
///   price (optional):             price, price_ratio_28d
///   per rolling window w (asc.):  roll_mean_w, roll_std_w
///   always last:                  series_id (integer-coded)
struct FeatureSpec {
    std::vector<int> lag_days = {1, 7, 28, 364};
    std::vector<int> rolling_windows = {7, 28};
    bool include_calendar = true;
    bool include_price = true;

    void validate() const;  // lags/windows >= 1, sorted unique
    std::vector<std::string> feature_names() const;
    int n_features() const { return static_cast<int>(feature_names().size()); }

    bool operator==(const FeatureSpec&) const = default;
};

/// How a feature's distribution should be compared when monitoring for
/// covariate drift: continuous columns get two-sample ECDF tests, while
/// discrete-valued columns (one-hots, flags, codes) get level-based
/// population-stability comparison.
enum class FeatureKind { Continuous, Categorical };

/// One kind per feature, aligned with FeatureSpec::feature_names().
std::vector<FeatureKind> feature_kinds(const FeatureSpec& spec);

/// What each feature column is, aligned with FeatureSpec::feature_names().
/// Drift monitoring needs this distinction: two-sample tests assume each row
/// is an independent draw, which holds for per-day observations (lags, price,
/// periodic calendar indicators) but not for window-smoothed aggregates
/// (rolling mean/std share most of their window between neighboring rows) or
/// for the month code (a monotone clock whose level set grows with time, so
/// any fixed baseline goes stale by construction).
enum class FeatureRole {
    LagValue,
    LagMissingFlag,
    DayOfWeek,
    Month,
    Holiday,
    Price,
    PriceRatio,
    RollingMean,
    RollingStd,
    SeriesCode,
};

/// One role per feature, aligned with FeatureSpec::feature_names().
std::vector<FeatureRole> feature_roles(const FeatureSpec& spec);

struct FeatureVector {
    std::vector<double> values;
    std::vector<std::string> names;
};

/// Sales accessor used during feature construction.  Training reads the
/// panel directly; forecasting substitutes its own predictions for days
/// past the forecast start.  Calendar and prices always come from the panel.
using SalesFn = std::function<double(int series, int day)>;

/// Writes the feature row for (series, day) into out[0..n_features).
/// Only sales at days strictly before `day` are read (no target leakage);
/// a lag reaching before the panel's first day is replaced by the trailing
/// mean of the available history with its companion missing flag set.
void build_features_into(const Panel& panel, const SalesFn& sales, int series, int day,
                         const FeatureSpec& spec, double* out);

/// Convenience wrapper reading sales from the panel itself.
FeatureVector build_features(const Panel& panel, int series, int day, const FeatureSpec& spec);

}  // namespace driftguard
