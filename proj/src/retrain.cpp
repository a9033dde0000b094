#include "driftguard/retrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "driftguard/errors.hpp"
#include "driftguard/metrics.hpp"
#include "driftguard/rng.hpp"

namespace driftguard {

namespace {

constexpr int kProbeSampleCap = 20;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate_scope(const Panel& panel, const std::vector<int>& scope, const char* what) {
    for (int s : scope) {
        if (s < 0 || s >= panel.n_series()) {
            throw ValidationError(std::string(what) + ": series " + std::to_string(s) +
                                  " out of range");
        }
    }
}

void validate_validation_window(const Panel& panel, int validation_days, int last_day,
                                const char* what) {
    if (validation_days < 1) {
        throw ValidationError(std::string(what) + ": validation_days must be >= 1");
    }
    if (!panel.contains_day(last_day) || !panel.contains_day(last_day - validation_days + 1)) {
        throw ValidationError(std::string(what) + ": validation days [" +
                              std::to_string(last_day - validation_days + 1) + ", " +
                              std::to_string(last_day) + "] fall outside the panel calendar");
    }
}

/// Deterministic sample of up to `cap` series from `scope`, then sorted so
/// training-row order never depends on draw order.
std::vector<int> sample_scope(const std::vector<int>& scope, int cap, std::uint64_t seed) {
    if (static_cast<int>(scope.size()) <= cap) {
        std::vector<int> all = scope;
        std::sort(all.begin(), all.end());
        return all;
    }
    std::vector<int> pool = scope;
    std::mt19937_64 rng = make_engine(seed, 0);
    std::vector<int> picked;
    picked.reserve(cap);
    for (int i = 0; i < cap; ++i) {
        const std::size_t j = i + bounded_uniform(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
        picked.push_back(pool[i]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

/// Trains one pooled model over the given series and day window, rows ordered
/// series-major then day-ascending — the same layout per-store training uses.
GbtModel train_pooled(const Panel& panel, const std::vector<int>& series, int start_day,
                      int end_day, const FeatureSpec& spec, const GbtHyper& hyper) {
    const int n_features = spec.n_features();
    const int n_days = end_day - start_day + 1;
    const std::size_t n_rows = series.size() * static_cast<std::size_t>(n_days);
    SalesFn plain = [&panel](int s, int d) { return panel.sales_at(s, d); };
    std::vector<double> X(n_rows * n_features);
    std::vector<double> y;
    y.reserve(n_rows);
    std::size_t row = 0;
    for (int s : series) {
        for (int day = start_day; day <= end_day; ++day, ++row) {
            build_features_into(panel, plain, s, day, spec, &X[row * n_features]);
            y.push_back(panel.sales_at(s, day));
        }
    }
    GbtModel model = train_gbt(X, n_features, y, hyper);
    model.feature_spec = spec;
    model.feature_names = spec.feature_names();
    model.trained_start = start_day;
    model.trained_end = end_day;
    return model;
}

/// Recursive forecast for one series over [start_day, end_day]: history reads
/// actuals, the window reads the model's own earlier predictions, and
/// predictions clamp at zero — the engine's deployment convention.
std::vector<double> recursive_forecast(const GbtModel& model, const Panel& panel, int series,
                                       int start_day, int end_day, const FeatureSpec& spec) {
    std::vector<double> preds(end_day - start_day + 1, 0.0);
    SalesFn overlay = [&](int s, int d) {
        if (s == series && d >= start_day) return preds[d - start_day];
        return panel.sales_at(s, d);
    };
    std::vector<double> x(spec.n_features());
    for (int d = start_day; d <= end_day; ++d) {
        build_features_into(panel, overlay, series, d, spec, x.data());
        preds[d - start_day] = std::max(0.0, model.predict_row(x.data()));
    }
    return preds;
}

/// WMAPE that reports an empty or all-zero-actuals window as NaN instead of
/// throwing, for before/after summaries where "undefined" is an answer.
double wmape_or_nan(const std::vector<double>& actuals, const std::vector<double>& forecasts) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        num += std::abs(actuals[i] - forecasts[i]);
        den += std::abs(actuals[i]);
    }
    return den > 0.0 ? num / den : kNaN;
}

struct ProbeEvaluation {
    WindowProbe probe;
    GbtModel model;
};

ProbeEvaluation run_probe(const Panel& panel, const std::vector<int>& sample, int window_days,
                          const CostModel& cost, int validation_days, int last_day,
                          const FeatureSpec& spec, const GbtHyper& hyper) {
    const int val_start = last_day - validation_days + 1;
    const int train_end = val_start - 1;
    const int train_start = train_end - window_days + 1;
    ProbeEvaluation ev;
    ev.model = train_pooled(panel, sample, train_start, train_end, spec, hyper);
    std::vector<double> actuals;
    std::vector<double> preds;
    for (int s : sample) {
        std::vector<double> p = recursive_forecast(ev.model, panel, s, val_start, last_day, spec);
        for (int d = val_start; d <= last_day; ++d) {
            actuals.push_back(panel.sales_at(s, d));
            preds.push_back(p[d - val_start]);
        }
    }
    ev.probe.window_days = window_days;
    ev.probe.compute_cost =
        cost.compute_cost_rate * static_cast<double>(sample.size()) * window_days;
    ev.probe.val_loss = wmape(actuals, preds);
    ev.probe.objective = ev.probe.compute_cost + cost.lambda * ev.probe.val_loss;
    return ev;
}

std::vector<int> feasible_candidates(const Panel& panel, const std::vector<int>& candidates,
                                     int validation_days, int last_day) {
    std::vector<int> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.empty()) throw ValidationError("select_window: no candidate windows");
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] < 1) throw ValidationError("select_window: candidate windows must be >= 1");
        if (i > 0 && sorted[i] == sorted[i - 1]) {
            throw ValidationError("select_window: duplicate candidate window " +
                                  std::to_string(sorted[i]));
        }
    }
    const int earliest_usable = std::max(panel.first_day(), 1);
    std::vector<int> feasible;
    for (int w : sorted) {
        const int train_start = last_day - validation_days - w + 1;
        if (train_start >= earliest_usable) feasible.push_back(w);
    }
    return feasible;
}

std::map<std::string, std::vector<int>> group_by_store(const Panel& panel,
                                                       const std::vector<int>& series) {
    std::map<std::string, std::vector<int>> by_store;
    for (int s : series) by_store[panel.key(s).store_id].push_back(s);
    for (auto& [store, list] : by_store) std::sort(list.begin(), list.end());
    return by_store;
}

}  // namespace

void CostModel::validate() const {
    if (!(holding_ratio >= 0.0) || !(stockout_ratio >= 0.0)) {
        throw ValidationError("cost model: holding/stockout ratios must be non-negative");
    }
    if (std::abs(holding_ratio + stockout_ratio - 1.0) > 1e-9) {
        throw ValidationError("cost model: holding_ratio + stockout_ratio must equal 1");
    }
    if (!(compute_cost_rate >= 0.0)) {
        throw ValidationError("cost model: compute_cost_rate must be non-negative");
    }
    if (!(lambda >= 0.0)) throw ValidationError("cost model: lambda must be non-negative");
    if (top_k < 0) throw ValidationError("cost model: top_k must be non-negative");
}

WindowChoice select_window(const Panel& panel, const std::vector<int>& drift_scope,
                           const std::vector<int>& candidates, const CostModel& cost,
                           int validation_days, int last_day, const FeatureSpec& spec,
                           const GbtHyper& hyper, std::uint64_t seed) {
    cost.validate();
    spec.validate();
    hyper.validate();
    validate_validation_window(panel, validation_days, last_day, "select_window");
    if (drift_scope.empty()) throw ValidationError("select_window: drift scope is empty");
    validate_scope(panel, drift_scope, "select_window");

    const std::vector<int> feasible = feasible_candidates(panel, candidates, validation_days,
                                                          last_day);
    if (feasible.empty()) {
        throw InsufficientDataError(
            "select_window: no candidate window fits the available history before day " +
            std::to_string(last_day - validation_days));
    }
    const std::vector<int> sample = sample_scope(drift_scope, kProbeSampleCap, seed);

    WindowChoice choice;
    if (feasible.size() < candidates.size()) {
        // History cannot support every candidate: take the largest window that
        // fits rather than comparing an incomplete field, and say so.
        choice.fallback = true;
        choice.window_days = feasible.back();
        choice.probes.push_back(run_probe(panel, sample, choice.window_days, cost,
                                          validation_days, last_day, spec, hyper)
                                    .probe);
        return choice;
    }

    double best_objective = std::numeric_limits<double>::infinity();
    for (int w : feasible) {
        WindowProbe probe =
            run_probe(panel, sample, w, cost, validation_days, last_day, spec, hyper).probe;
        choice.probes.push_back(probe);
        // Strict comparison with ascending candidates: ties keep the smaller
        // window.
        if (probe.objective < best_objective) {
            best_objective = probe.objective;
            choice.window_days = w;
        }
    }
    return choice;
}

std::vector<int> select_series(const std::map<int, double>& delta_wmape, double tau, int top_k) {
    if (top_k < 0) throw ValidationError("select_series: top_k must be non-negative");
    std::vector<std::pair<int, double>> eligible;
    for (const auto& [series, delta] : delta_wmape) {
        if (delta > tau) eligible.emplace_back(series, delta);  // NaN never qualifies
    }
    std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(eligible.size()) > top_k) eligible.resize(top_k);
    std::vector<int> selected;
    selected.reserve(eligible.size());
    for (const auto& [series, delta] : eligible) selected.push_back(series);
    return selected;
}

double inventory_cost(const std::vector<double>& actuals, const std::vector<double>& forecasts,
                      const std::vector<double>& prices, const CostModel& cost) {
    cost.validate();
    if (actuals.size() != forecasts.size() || actuals.size() != prices.size()) {
        throw ValidationError("inventory_cost: actuals (" + std::to_string(actuals.size()) +
                              "), forecasts (" + std::to_string(forecasts.size()) +
                              ") and prices (" + std::to_string(prices.size()) +
                              ") must have equal length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        if (!(prices[i] > 0.0)) {
            throw ValidationError("inventory_cost: prices must be positive (index " +
                                  std::to_string(i) + " is " + std::to_string(prices[i]) + ")");
        }
        const double under = std::max(actuals[i] - forecasts[i], 0.0);
        const double over = std::max(forecasts[i] - actuals[i], 0.0);
        total += prices[i] * (cost.stockout_ratio * under + cost.holding_ratio * over);
    }
    return total;
}

double roi(double inventory_saving, double compute_cost) {
    if (compute_cost < 0.0) throw ValidationError("roi: compute cost must be non-negative");
    if (compute_cost == 0.0) {
        throw UndefinedMetricError("roi undefined: compute cost is zero");
    }
    return (inventory_saving - compute_cost) / compute_cost;
}

RetrainPlan build_retrain_plan(const Panel& panel, const StoreModels& current,
                               const std::map<int, double>& delta_wmape,
                               const std::vector<int>& drift_scope, const CostModel& cost,
                               const FeatureSpec& spec, const GbtHyper& hyper, int validation_days,
                               int last_day, std::uint64_t seed,
                               const std::vector<int>& candidates) {
    cost.validate();
    for (const auto& [series, delta] : delta_wmape) {
        if (series < 0 || series >= panel.n_series()) {
            throw ValidationError("build_retrain_plan: degradation map names series " +
                                  std::to_string(series) + ", outside the panel");
        }
        (void)delta;
    }

    RetrainPlan plan;
    WindowChoice choice = select_window(panel, drift_scope, candidates, cost, validation_days,
                                        last_day, spec, hyper, seed);
    plan.window_days = choice.window_days;
    plan.window_fallback = choice.fallback;
    plan.probes = choice.probes;
    plan.selected_series = select_series(delta_wmape, cost.tau, cost.top_k);

    if (plan.selected_series.empty()) {
        plan.roi = kNaN;
        plan.approved = false;
        return plan;
    }

    // Execution retrains whole store models, so the compute estimate prices
    // every series of every store that owns a selected series.
    const std::map<std::string, std::vector<int>> touched =
        group_by_store(panel, plan.selected_series);
    long n_train_series = 0;
    for (int s = 0; s < panel.n_series(); ++s) {
        if (touched.count(panel.key(s).store_id)) ++n_train_series;
    }
    plan.est_compute_cost =
        cost.compute_cost_rate * static_cast<double>(n_train_series) * plan.window_days;

    // Projected saving: the winning probe model (same sample, same seed as the
    // window search) stands in for the retrained models; its inventory cost on
    // the held-out days is compared against the current models', then
    // annualized.
    const std::vector<int> sample = sample_scope(drift_scope, kProbeSampleCap, seed);
    const GbtModel probe_model = run_probe(panel, sample, plan.window_days, cost, validation_days,
                                           last_day, spec, hyper)
                                     .model;
    const int val_start = last_day - validation_days + 1;
    std::vector<double> actuals;
    std::vector<double> current_preds;
    std::vector<double> probe_preds;
    std::vector<double> prices;
    for (int s : plan.selected_series) {
        const GbtModel& cur = current.for_series(panel, s);
        std::vector<double> pc = recursive_forecast(cur, panel, s, val_start, last_day, spec);
        std::vector<double> pp =
            recursive_forecast(probe_model, panel, s, val_start, last_day, spec);
        for (int d = val_start; d <= last_day; ++d) {
            actuals.push_back(panel.sales_at(s, d));
            current_preds.push_back(pc[d - val_start]);
            probe_preds.push_back(pp[d - val_start]);
            prices.push_back(panel.price_at(s, d));
        }
    }
    const double cost_current = inventory_cost(actuals, current_preds, prices, cost);
    const double cost_probe = inventory_cost(actuals, probe_preds, prices, cost);
    plan.est_inventory_saving =
        (cost_current - cost_probe) * 365.0 / static_cast<double>(validation_days);
    plan.roi = roi(plan.est_inventory_saving, plan.est_compute_cost);
    plan.approved = plan.roi > 0.0;
    return plan;
}

RetrainOutcome execute_retraining(const Panel& panel, const StoreModels& current,
                                  const RetrainPlan& plan, const FeatureSpec& spec,
                                  const GbtHyper& hyper, int validation_days, int last_day) {
    spec.validate();
    hyper.validate();
    validate_validation_window(panel, validation_days, last_day, "execute_retraining");
    validate_scope(panel, plan.selected_series, "execute_retraining");

    RetrainOutcome outcome;
    outcome.models = current;
    outcome.pre_wmape = kNaN;
    outcome.post_wmape = kNaN;
    if (plan.selected_series.empty()) return outcome;

    if (!plan.approved) {
        throw ValidationError("execute_retraining: plan is not approved");
    }
    const int val_start = last_day - validation_days + 1;
    const int train_end = val_start - 1;
    const int train_start = train_end - plan.window_days + 1;
    if (plan.window_days < 1 || train_start < std::max(panel.first_day(), 1)) {
        throw ValidationError("execute_retraining: retrain window of " +
                              std::to_string(plan.window_days) +
                              " days does not fit the history before day " +
                              std::to_string(train_end));
    }

    const std::map<std::string, std::vector<int>> selected_by_store =
        group_by_store(panel, plan.selected_series);
    const std::map<std::string, std::vector<int>> all_by_store = [&] {
        std::vector<int> everything(panel.n_series());
        for (int s = 0; s < panel.n_series(); ++s) everything[s] = s;
        return group_by_store(panel, everything);
    }();

    std::vector<double> pooled_actuals;
    std::vector<double> pooled_pre;
    std::vector<double> pooled_post;

    for (const auto& [store, selected] : selected_by_store) {
        StoreRetrainRecord rec;
        rec.store_id = store;
        rec.n_selected = static_cast<int>(selected.size());

        std::vector<double> actuals;
        std::vector<double> pre_preds;
        for (int s : selected) {
            const GbtModel& cur = current.for_series(panel, s);
            std::vector<double> p = recursive_forecast(cur, panel, s, val_start, last_day, spec);
            for (int d = val_start; d <= last_day; ++d) {
                actuals.push_back(panel.sales_at(s, d));
                pre_preds.push_back(p[d - val_start]);
            }
        }
        rec.pre_wmape = wmape_or_nan(actuals, pre_preds);

        std::vector<double> post_preds;
        rec.post_wmape = kNaN;
        try {
            const GbtModel candidate = train_pooled(panel, all_by_store.at(store), train_start,
                                                    train_end, spec, hyper);
            for (int s : selected) {
                std::vector<double> p =
                    recursive_forecast(candidate, panel, s, val_start, last_day, spec);
                post_preds.insert(post_preds.end(), p.begin(), p.end());
            }
            rec.post_wmape = wmape_or_nan(actuals, post_preds);
            // Deploy only a strict improvement; ties and NaNs roll back.
            if (rec.post_wmape < rec.pre_wmape) {
                rec.deployed = true;
                outcome.models.by_store[store] = candidate;
            }
        } catch (const std::exception& e) {
            rec.error = e.what();
        }

        pooled_actuals.insert(pooled_actuals.end(), actuals.begin(), actuals.end());
        pooled_pre.insert(pooled_pre.end(), pre_preds.begin(), pre_preds.end());
        const std::vector<double>& kept = rec.deployed ? post_preds : pre_preds;
        pooled_post.insert(pooled_post.end(), kept.begin(), kept.end());
        outcome.stores.push_back(std::move(rec));
    }

    outcome.pre_wmape = wmape_or_nan(pooled_actuals, pooled_pre);
    outcome.post_wmape = wmape_or_nan(pooled_actuals, pooled_post);
    return outcome;
}

}  // namespace driftguard
