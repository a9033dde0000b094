#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "driftguard/features.hpp"
#include "driftguard/forecast.hpp"
#include "driftguard/gbt.hpp"
#include "driftguard/panel.hpp"

namespace driftguard {

/// Economic parameters of the retrain decision.  Inventory error is priced
/// asymmetrically (a lost sale usually hurts more than a held unit), compute
/// is priced per series-day of training data, and lambda trades compute cost
/// against validation loss when choosing how much history to retrain on.
struct CostModel {
    double holding_ratio = 0.3;   ///< cost weight of over-forecast units
    double stockout_ratio = 0.7;  ///< cost weight of under-forecast units

    /// Currency per series-day of training data.  The default is calibrated
    /// so retraining every model of a 200-series desk on 180 days of history
    /// costs 1.0: 1 / (200 * 180).
    double compute_cost_rate = 1.0 / 36000.0;

    double lambda = 100.0;  ///< weight of validation loss in window selection
    double tau = 0.02;      ///< minimum per-series WMAPE degradation to retrain
    int top_k = 40;         ///< max series selected (default: 20% of a 200-series desk)

    /// Throws ValidationError unless the ratios are a convex split
    /// (non-negative, summing to 1) and the remaining knobs are sane.
    void validate() const;
};

/// One probed retraining window: the evidence behind the window choice.
/// objective == compute_cost + lambda * val_loss, kept so the choice can be
/// audited by recomputing the argmin from this log.
struct WindowProbe {
    int window_days = 0;
    double compute_cost = 0.0;  ///< rate * |sample| * window_days
    double val_loss = 0.0;      ///< pooled WMAPE of the probe model on the holdout
    double objective = 0.0;
};

/// Result of the window search.
struct WindowChoice {
    int window_days = 0;
    /// True when history was too short to probe every candidate; the choice
    /// then falls back to the largest candidate that fits.
    bool fallback = false;
    std::vector<WindowProbe> probes;  ///< ascending by window_days, feasible only
};

/// Everything the retrain stage commits to before touching a model, plus the
/// projected economics that justify (or veto) it.
struct RetrainPlan {
    int window_days = 0;              ///< history to retrain on, from the probe search
    std::vector<int> selected_series;  ///< descending degradation, ties by index
    double est_compute_cost = 0.0;     ///< rate * (series in touched stores) * window
    double est_inventory_saving = 0.0;  ///< projected annualized inventory-cost reduction
    double roi = 0.0;                  ///< (saving - compute) / compute; NaN when nothing selected
    bool approved = false;             ///< roi > 0
    bool window_fallback = false;      ///< window came from the short-history fallback
    std::vector<WindowProbe> probes;   ///< audit log behind window_days
};

/// Probes each candidate window by training a throwaway model for a sample of
/// the drifted series (capped at 20, drawn with `seed`) on the trailing
/// `window` days that end `validation_days` before `last_day`, scoring it on
/// those held-out final days, and minimizing compute + lambda * loss.  Ties
/// go to the smaller window.  Candidates that don't fit in history are
/// skipped; if that happens, the largest feasible candidate wins outright and
/// the choice is marked as a fallback.  Throws InsufficientDataError when no
/// candidate fits, ValidationError on malformed inputs.
WindowChoice select_window(const Panel& panel, const std::vector<int>& drift_scope,
                           const std::vector<int>& candidates, const CostModel& cost,
                           int validation_days, int last_day, const FeatureSpec& spec,
                           const GbtHyper& hyper, std::uint64_t seed);

/// Picks the series worth retraining: WMAPE degradation strictly above tau,
/// sorted by degradation descending (ties by series index ascending), capped
/// at top_k.  NaN degradations never qualify.  An empty result is valid.
std::vector<int> select_series(const std::map<int, double>& delta_wmape, double tau, int top_k);

/// Asymmetric inventory cost of a forecast:
///   sum_i price_i * (stockout_ratio * max(actual - forecast, 0)
///                    + holding_ratio * max(forecast - actual, 0)).
/// All three vectors must have equal length and prices must be positive;
/// otherwise ValidationError.
double inventory_cost(const std::vector<double>& actuals, const std::vector<double>& forecasts,
                      const std::vector<double>& prices, const CostModel& cost);

/// Return on investment of a retraining spend:
///   (inventory_saving - compute_cost) / compute_cost.
/// compute_cost == 0 makes the ratio undefined (UndefinedMetricError);
/// negative compute_cost is rejected (ValidationError).
double roi(double inventory_saving, double compute_cost);

/// Assembles the full plan: window search over `drift_scope` (same seed =>
/// same probe sample as select_window), series selection from `delta_wmape`
/// using cost.tau / cost.top_k, then projected economics.  The projection
/// re-trains the winning probe model and compares its inventory cost against
/// the current models' over the validation days for every selected series;
/// the difference is annualized (x 365 / validation_days).  est_compute_cost
/// prices what execution would actually train: every series of every store
/// containing a selected series, for window_days.  With nothing selected the
/// plan carries NaN roi and is not approved.
RetrainPlan build_retrain_plan(const Panel& panel, const StoreModels& current,
                               const std::map<int, double>& delta_wmape,
                               const std::vector<int>& drift_scope, const CostModel& cost,
                               const FeatureSpec& spec, const GbtHyper& hyper, int validation_days,
                               int last_day, std::uint64_t seed,
                               const std::vector<int>& candidates = {30, 60, 90, 180});

/// Per-store outcome of executing a plan.
struct StoreRetrainRecord {
    std::string store_id;
    int n_selected = 0;       ///< selected series living in this store
    double pre_wmape = 0.0;   ///< current model on the validation days, selected series
    double post_wmape = 0.0;  ///< retrained candidate on the same days (NaN if training failed)
    bool deployed = false;    ///< candidate kept (strictly better) vs rolled back
    std::string error;        ///< non-empty when training threw; store keeps its old model
};

/// Result of execute_retraining: the deployed model set plus the before/after
/// evidence for every touched store.
struct RetrainOutcome {
    StoreModels models;                     ///< deployed set; untouched stores byte-identical
    std::vector<StoreRetrainRecord> stores;  ///< touched stores, ascending by id
    double pre_wmape = 0.0;   ///< pooled over all selected series, current models
    double post_wmape = 0.0;  ///< pooled over all selected series, deployed models
};

/// Retrains the store models that own the plan's selected series on the
/// trailing plan.window_days ending validation_days before last_day, then
/// deploys each candidate only if it strictly beats the current model's
/// WMAPE on the held-out validation days (over that store's selected
/// series); otherwise the store rolls back to its current model.  A training
/// failure in one store rolls back that store and is recorded in its record;
/// other stores proceed.  Stores without selected series are never touched.
/// The plan must be approved unless its selection is empty (an empty plan
/// executes as a no-op with identical metrics).
RetrainOutcome execute_retraining(const Panel& panel, const StoreModels& current,
                                  const RetrainPlan& plan, const FeatureSpec& spec,
                                  const GbtHyper& hyper, int validation_days, int last_day);

}  // namespace driftguard
