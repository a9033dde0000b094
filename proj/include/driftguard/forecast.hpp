#pragma once

#include <map>
#include <string>
#include <vector>

#include "driftguard/gbt.hpp"
#include "driftguard/hierarchy.hpp"
#include "driftguard/panel.hpp"

namespace driftguard {

// One demand model per store, pooling that store's SKUs (a series-id feature
// separates them inside the model).
struct StoreModels {
    std::map<std::string, GbtModel> by_store;

    const GbtModel& for_series(const Panel& panel, int series) const;
};

/// Trains one model per store on rows from days [start_day, end_day] of the
/// panel (targets are that day's sales; features never read the target day).
StoreModels train_store_models(const Panel& panel, int start_day, int end_day,
                               const FeatureSpec& spec, const GbtHyper& hyper);

// Per-series forecasts for a contiguous run of days.
struct ForecastMatrix {
    int start_day = 0;
    int horizon = 0;
    std::vector<double> values;  // row-major [series][step]

    double at(int series, int day) const { return values[series * horizon + (day - start_day)]; }
    double& at(int series, int day) { return values[series * horizon + (day - start_day)]; }
};

/// Iterated one-step-ahead forecasting for days [start_day, start_day +
/// horizon_days - 1]: actual sales feed the features before start_day, the
/// model's own (clipped, stored) predictions feed them from start_day on.
/// Negative raw predictions are stored as 0.
ForecastMatrix forecast_panel(const StoreModels& models, const Panel& panel, int start_day,
                              int horizon_days);

/// Forecasts days [start_day, end_day] in consecutive blocks of anchor_step
/// days, re-anchoring each block on the actual sales observed before it — the
/// cadence of a desk that re-runs its short-horizon forecast every week.
/// Within a block, recursion works exactly as in forecast_panel; across block
/// boundaries no forecast is ever fed back as history.  With anchor_step
/// covering the whole span this reduces to forecast_panel.
ForecastMatrix rolling_forecast(const StoreModels& models, const Panel& panel, int start_day,
                                int end_day, int anchor_step = 7);

/// Sums leaf forecasts up both hierarchy branches.  Returns one value row per
/// hierarchy node, indexed by node id; every internal node is the exact
/// child-order sum of its children, and leaf rows are copies of the input.
std::vector<std::vector<double>> reconcile_bottom_up(const ForecastMatrix& leaf_forecasts,
                                                     const Hierarchy& hierarchy);

/// Text round-trip for a forecast matrix.  Values are written with
/// shortest-round-trip formatting, so load_forecasts(save_forecasts(m)) is
/// bit-identical to m.
void save_forecasts(const ForecastMatrix& forecasts, const std::string& path);
ForecastMatrix load_forecasts(const std::string& path);

}  // namespace driftguard
