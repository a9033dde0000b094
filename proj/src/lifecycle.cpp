#include "driftguard/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "driftguard/errors.hpp"
#include "driftguard/features.hpp"
#include "driftguard/hierarchy.hpp"
#include "driftguard/m5.hpp"
#include "driftguard/metrics.hpp"
#include "driftguard/panel_io.hpp"
#include "driftguard/rng.hpp"
#include "driftguard/synth.hpp"
#include "driftguard/text.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace driftguard {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string iso_utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_text_file(const std::string& path, const std::string& text) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

// "n/a" for undefined values in the aligned-text reports.
std::string fmt_metric(double v) {
    if (std::isnan(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    std::string out = s;
    while (out.size() < width) out.push_back(' ');
    return out;
}

// NaN round-trips as JSON null.
ordered_json num_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

double num_or_nan(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return kNaN;
    return j.at(key).get<double>();
}

ordered_json parse_json_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + ": " + path);
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError(std::string("malformed JSON in ") + what + ": " + path);
    return j;
}

std::vector<int> all_series(const Panel& panel) {
    std::vector<int> out(panel.n_series());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

// Pooled WMAPE of a forecast matrix over a series subset and day window;
// NaN when the window's actuals sum to zero.
double wmape_subset(const Panel& panel, const ForecastMatrix& fc, const std::vector<int>& series,
                    int first, int last) {
    std::vector<double> actual, predicted;
    actual.reserve(series.size() * (last - first + 1));
    predicted.reserve(actual.capacity());
    for (int s : series) {
        for (int d = first; d <= last; ++d) {
            actual.push_back(panel.sales_at(s, d));
            predicted.push_back(fc.at(s, d));
        }
    }
    try {
        return wmape(actual, predicted);
    } catch (const UndefinedMetricError&) {
        return kNaN;
    }
}

std::vector<double> per_series_wmape_window(const Panel& panel, const ForecastMatrix& fc,
                                            int first, int last) {
    std::vector<double> out(panel.n_series(), kNaN);
    std::vector<double> actual(last - first + 1), predicted(last - first + 1);
    for (int s = 0; s < panel.n_series(); ++s) {
        for (int d = first; d <= last; ++d) {
            actual[d - first] = panel.sales_at(s, d);
            predicted[d - first] = fc.at(s, d);
        }
        try {
            out[s] = wmape(actual, predicted);
        } catch (const UndefinedMetricError&) {
        }
    }
    return out;
}

double inventory_cost_subset(const Panel& panel, const ForecastMatrix& fc,
                             const std::vector<int>& series, int first, int last,
                             const CostModel& cost) {
    std::vector<double> actual, predicted, prices;
    for (int s : series) {
        for (int d = first; d <= last; ++d) {
            actual.push_back(panel.sales_at(s, d));
            predicted.push_back(fc.at(s, d));
            prices.push_back(panel.price_at(s, d));
        }
    }
    return inventory_cost(actual, predicted, prices, cost);
}

// ---------------------------------------------------------------------------
// Artifact loaders used when a stage runs standalone (earlier stages' results
// are on disk, not in memory).  Failures surface as the *current* stage's
// error so the operator sees which invocation died and what it was missing.

const Panel& ensure_panel(const RunPaths& paths, LifecycleState& state) {
    if (!state.panel) state.panel = load_panel(paths.panel_csv());
    return *state.panel;
}

const Panel& ensure_monitored(const RunPaths& paths, LifecycleState& state) {
    if (!state.monitored) state.monitored = load_panel(paths.monitored_csv());
    return *state.monitored;
}

const StoreModels& ensure_baseline(const RunPaths& paths, LifecycleState& state) {
    if (!state.baseline) state.baseline = load_store_models(paths.baseline_models_dir());
    return *state.baseline;
}

const InjectionRecord& ensure_injection(const RunPaths& paths, LifecycleState& state) {
    if (!state.injection) state.injection = load_injection(paths.injection_json());
    return *state.injection;
}

const ForecastMatrix& ensure_monitor_forecasts(const RunPaths& paths, LifecycleState& state) {
    if (!state.monitor_forecasts) {
        state.monitor_forecasts = load_forecasts(paths.monitor_forecasts_csv());
    }
    return *state.monitor_forecasts;
}

const std::vector<DriftEvent>& ensure_events(const RunConfig& config, const RunPaths& paths,
                                             LifecycleState& state) {
    if (!state.detection) {
        DetectionResult result;
        result.events = read_events_log(paths.events_log());
        result.start_day = config.split.monitor_start;
        result.end_day = config.split.monitor_end;
        state.detection = std::move(result);
    }
    return state.detection->events;
}

// ---------------------------------------------------------------------------
// Plan / outcome artifact round-trips (retrain and evaluate can run
// standalone, so both documents must read back).

void write_plan_files(const RetrainPlan& plan, const RunPaths& paths) {
    ordered_json j;
    j["window_days"] = plan.window_days;
    j["window_fallback"] = plan.window_fallback;
    j["selected_series"] = plan.selected_series;
    j["est_compute_cost"] = num_or_null(plan.est_compute_cost);
    j["est_inventory_saving"] = num_or_null(plan.est_inventory_saving);
    j["roi"] = num_or_null(plan.roi);
    j["approved"] = plan.approved;
    ordered_json probes = ordered_json::array();
    for (const WindowProbe& p : plan.probes) {
        probes.push_back({{"window_days", p.window_days},
                          {"compute_cost", num_or_null(p.compute_cost)},
                          {"val_loss", num_or_null(p.val_loss)},
                          {"objective", num_or_null(p.objective)}});
    }
    j["probes"] = probes;
    write_text_file(paths.plan_json(), j.dump(2) + "\n");

    std::ostringstream txt;
    txt << "retraining plan\n===============\n";
    txt << pad("window_days", 22) << plan.window_days
        << (plan.window_fallback ? "  (short-history fallback)" : "") << '\n';
    txt << pad("approved", 22) << (plan.approved ? "yes" : "no") << '\n';
    txt << pad("est_compute_cost", 22) << fmt_metric(plan.est_compute_cost) << '\n';
    txt << pad("est_inventory_saving", 22) << fmt_metric(plan.est_inventory_saving) << '\n';
    txt << pad("roi", 22) << fmt_metric(plan.roi) << '\n';
    txt << pad("selected_series", 22) << plan.selected_series.size() << " series:";
    for (int s : plan.selected_series) txt << ' ' << s;
    txt << '\n';
    txt << "window probes\n";
    txt << "  " << pad("window", 8) << pad("compute_cost", 16) << pad("val_loss", 16)
        << "objective\n";
    for (const WindowProbe& p : plan.probes) {
        txt << "  " << pad(std::to_string(p.window_days), 8) << pad(fmt_metric(p.compute_cost), 16)
            << pad(fmt_metric(p.val_loss), 16) << fmt_metric(p.objective) << '\n';
    }
    write_text_file(paths.plan_txt(), txt.str());
}

RetrainPlan read_plan(const std::string& path) {
    const ordered_json j = parse_json_file(path, "retraining plan");
    RetrainPlan plan;
    plan.window_days = j.at("window_days").get<int>();
    plan.window_fallback = j.at("window_fallback").get<bool>();
    plan.selected_series = j.at("selected_series").get<std::vector<int>>();
    plan.est_compute_cost = num_or_nan(j, "est_compute_cost");
    plan.est_inventory_saving = num_or_nan(j, "est_inventory_saving");
    plan.roi = num_or_nan(j, "roi");
    plan.approved = j.at("approved").get<bool>();
    for (const auto& p : j.at("probes")) {
        WindowProbe probe;
        probe.window_days = p.at("window_days").get<int>();
        probe.compute_cost = num_or_nan(p, "compute_cost");
        probe.val_loss = num_or_nan(p, "val_loss");
        probe.objective = num_or_nan(p, "objective");
        plan.probes.push_back(probe);
    }
    return plan;
}

void write_outcome_file(const RetrainOutcome& outcome, bool executed, const RunPaths& paths) {
    ordered_json j;
    j["executed"] = executed;
    j["pre_wmape"] = num_or_null(outcome.pre_wmape);
    j["post_wmape"] = num_or_null(outcome.post_wmape);
    ordered_json stores = ordered_json::array();
    for (const StoreRetrainRecord& r : outcome.stores) {
        stores.push_back({{"store_id", r.store_id},
                          {"n_selected", r.n_selected},
                          {"pre_wmape", num_or_null(r.pre_wmape)},
                          {"post_wmape", num_or_null(r.post_wmape)},
                          {"deployed", r.deployed},
                          {"error", r.error}});
    }
    j["stores"] = stores;
    write_text_file(paths.outcome_json(), j.dump(2) + "\n");
}

// Records only; the deployed models live in their own directory.
RetrainOutcome read_outcome(const std::string& path) {
    const ordered_json j = parse_json_file(path, "retraining outcome");
    RetrainOutcome outcome;
    outcome.pre_wmape = num_or_nan(j, "pre_wmape");
    outcome.post_wmape = num_or_nan(j, "post_wmape");
    for (const auto& s : j.at("stores")) {
        StoreRetrainRecord r;
        r.store_id = s.at("store_id").get<std::string>();
        r.n_selected = s.at("n_selected").get<int>();
        r.pre_wmape = num_or_nan(s, "pre_wmape");
        r.post_wmape = num_or_nan(s, "post_wmape");
        r.deployed = s.at("deployed").get<bool>();
        r.error = s.at("error").get<std::string>();
        outcome.stores.push_back(std::move(r));
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Stage bodies.  Each reads inputs via the ensure_* loaders (memory first,
// artifacts second) and writes its outputs to both.

void stage_data(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    fs::create_directories(paths.root);
    write_text_file(paths.config_txt(), canonical_config_text(config));
    Panel panel = config.source == DataSource::Synthetic ? generate_synthetic(config.synth)
                                                        : load_m5_dir(config.m5_dir);
    ensure_parent_dir(paths.panel_csv());
    save_panel(panel, paths.panel_csv());
    state.panel = std::move(panel);
}

void stage_train(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const Panel& panel = ensure_panel(paths, state);
    StoreModels models = train_store_models(panel, config.split.train_start, config.split.train_end,
                                            config.features, config.gbt);
    save_store_models(models, paths.baseline_models_dir());
    state.baseline = std::move(models);
}

void stage_inject(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const Panel& panel = ensure_panel(paths, state);
    Panel monitored = panel;
    InjectionRecord record;  // empty scope marks a control run
    if (config.scenario_enabled) {
        auto injected = inject(panel, config.scenario);
        monitored = std::move(injected.first);
        record = std::move(injected.second);
    }
    ensure_parent_dir(paths.monitored_csv());
    save_panel(monitored, paths.monitored_csv());
    save_injection(record, paths.injection_json());
    state.monitored = std::move(monitored);
    state.injection = std::move(record);
}

void stage_detect(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const Panel& monitored = ensure_monitored(paths, state);
    const StoreModels& baseline = ensure_baseline(paths, state);
    ForecastMatrix forecasts =
        rolling_forecast(baseline, monitored, config.split.train_end + 1, config.split.monitor_end,
                         config.split.anchor_step);
    ensure_parent_dir(paths.monitor_forecasts_csv());
    save_forecasts(forecasts, paths.monitor_forecasts_csv());
    DetectionResult result = detect_panel(monitored, forecasts, baseline, config.detector,
                                          config.split.monitor_start);
    write_events_log(result.events, paths.events_log());
    state.monitor_forecasts = std::move(forecasts);
    state.detection = std::move(result);
}

void stage_diagnose(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const std::vector<DriftEvent>& events = ensure_events(config, paths, state);
    if (events.empty()) {
        write_text_file(paths.diagnosis_map_json(), "{\n  \"no_drift_detected\": true\n}\n");
        write_text_file(paths.diagnosis_map_txt(), "no drift events detected; diagnosis skipped\n");
        return;
    }
    const Panel& monitored = ensure_monitored(paths, state);
    const StoreModels& baseline = ensure_baseline(paths, state);
    const ForecastMatrix& forecasts = ensure_monitor_forecasts(paths, state);

    int split_day = events.front().day;
    for (const DriftEvent& ev : events) split_day = std::min(split_day, ev.day);

    const int pre_first = config.split.train_end + 1;
    const std::vector<double> wmape_pre =
        per_series_wmape_window(monitored, forecasts, pre_first, split_day - 1);
    const std::vector<double> wmape_post =
        per_series_wmape_window(monitored, forecasts, split_day, config.split.monitor_end);

    const Hierarchy hierarchy = build_hierarchy(monitored.keys());
    DiagnosticMap map = hierarchical_impact(wmape_pre, wmape_post, hierarchy, monitored, split_day,
                                            config.split.monitor_end);

    // Attribution shifts on the hardest-hit store's model: feature rows from
    // the four weeks either side of the first event, background drawn from
    // the pre-drift rows.
    int store_node = -1;
    double worst = -std::numeric_limits<double>::infinity();
    for (int id = 0; id < static_cast<int>(hierarchy.nodes().size()); ++id) {
        const HierarchyNode& node = hierarchy.nodes()[id];
        if (node.level != HierarchyLevel::Store) continue;
        const double sev = map.severity[id];
        if (store_node < 0 && !std::isnan(sev)) {
            store_node = id;
            worst = sev;
        } else if (!std::isnan(sev) && sev > worst) {
            store_node = id;
            worst = sev;
        }
    }
    if (store_node >= 0) {
        const HierarchyNode& node = hierarchy.nodes()[store_node];
        const int instance_window = 28;
        const int pre_lo = std::max(pre_first, split_day - instance_window);
        const int post_hi = std::min(config.split.monitor_end, split_day + instance_window - 1);
        const SalesFn sales = [&](int series, int day) { return monitored.sales_at(series, day); };
        auto rows_for = [&](int lo, int hi) {
            std::vector<std::vector<double>> rows;
            std::vector<double> row(config.features.n_features());
            for (int s : node.leaf_series) {
                for (int d = lo; d <= hi; ++d) {
                    build_features_into(monitored, sales, s, d, config.features, row.data());
                    rows.push_back(row);
                }
            }
            return rows;
        };
        const std::vector<std::vector<double>> pre_rows = rows_for(pre_lo, split_day - 1);
        const std::vector<std::vector<double>> post_rows = rows_for(split_day, post_hi);
        std::vector<std::vector<double>> background;
        const std::size_t want = 20;
        if (pre_rows.size() <= want) {
            background = pre_rows;
        } else {
            const std::size_t step = pre_rows.size() / want;
            for (std::size_t i = 0; i < want; ++i) background.push_back(pre_rows[i * step]);
        }
        if (!pre_rows.empty() && !post_rows.empty() && !background.empty()) {
            DeltaPhiOptions options;
            options.seed = config.seed * 1000 + 21;
            const std::vector<DeltaPhi> deltas = delta_phi(
                baseline.by_store.at(node.label), pre_rows, post_rows, background, options);
            map.top_features = top_features_by_weight(deltas, 12);
        }
    }

    ensure_parent_dir(paths.diagnosis_map_json());
    write_diagnostic_map(map, hierarchy, paths.diagnosis_map_json());
    write_text_file(paths.diagnosis_map_txt(), render_diagnostic_map(map, hierarchy));
}

void stage_plan(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const std::vector<DriftEvent>& events = ensure_events(config, paths, state);
    if (events.empty()) {
        RetrainPlan plan;
        plan.roi = kNaN;
        write_plan_files(plan, paths);
        state.plan = std::move(plan);
        return;
    }
    const Panel& monitored = ensure_monitored(paths, state);
    const StoreModels& baseline = ensure_baseline(paths, state);
    const ForecastMatrix& forecasts = ensure_monitor_forecasts(paths, state);

    int split_day = events.front().day;
    std::set<int> scope_set;
    for (const DriftEvent& ev : events) {
        split_day = std::min(split_day, ev.day);
        scope_set.insert(ev.series_scope.begin(), ev.series_scope.end());
    }
    const std::vector<int> scope(scope_set.begin(), scope_set.end());

    const int pre_first = config.split.train_end + 1;
    std::map<int, double> deltas;
    std::vector<double> actual_pre(split_day - pre_first), pred_pre(split_day - pre_first);
    std::vector<double> actual_post(config.split.monitor_end - split_day + 1),
        pred_post(config.split.monitor_end - split_day + 1);
    for (int s : scope) {
        for (int d = pre_first; d < split_day; ++d) {
            actual_pre[d - pre_first] = monitored.sales_at(s, d);
            pred_pre[d - pre_first] = forecasts.at(s, d);
        }
        for (int d = split_day; d <= config.split.monitor_end; ++d) {
            actual_post[d - split_day] = monitored.sales_at(s, d);
            pred_post[d - split_day] = forecasts.at(s, d);
        }
        try {
            deltas[s] = wmape(actual_post, pred_post) - wmape(actual_pre, pred_pre);
        } catch (const UndefinedMetricError&) {
            deltas[s] = kNaN;  // never selected
        }
    }

    RetrainPlan plan = build_retrain_plan(monitored, baseline, deltas, scope, config.cost,
                                          config.features, config.gbt,
                                          config.split.validation_days, config.split.monitor_end,
                                          config.seed * 1000 + 13, config.window_candidates);
    write_plan_files(plan, paths);
    state.plan = std::move(plan);
}

void stage_retrain(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    if (!state.plan) state.plan = read_plan(paths.plan_json());
    const RetrainPlan& plan = *state.plan;
    const StoreModels& baseline = ensure_baseline(paths, state);

    RetrainOutcome outcome;
    bool executed = false;
    if (plan.approved && !plan.selected_series.empty()) {
        const Panel& monitored = ensure_monitored(paths, state);
        outcome = execute_retraining(monitored, baseline, plan, config.features, config.gbt,
                                     config.split.validation_days, config.split.monitor_end);
        executed = true;
    } else {
        outcome.models = baseline;  // nothing to do: current models stay deployed
        outcome.pre_wmape = kNaN;
        outcome.post_wmape = kNaN;
    }
    save_store_models(outcome.models, paths.deployed_models_dir());
    write_outcome_file(outcome, executed, paths);
    state.outcome = std::move(outcome);
}

void stage_evaluate(const RunConfig& config, const RunPaths& paths, LifecycleState& state) {
    const Panel& monitored = ensure_monitored(paths, state);
    const InjectionRecord& injection = ensure_injection(paths, state);
    const StoreModels& baseline = ensure_baseline(paths, state);
    const ForecastMatrix& forecasts = ensure_monitor_forecasts(paths, state);
    const std::vector<DriftEvent>& events = ensure_events(config, paths, state);
    if (!state.outcome) {
        RetrainOutcome outcome = read_outcome(paths.outcome_json());
        outcome.models = load_store_models(paths.deployed_models_dir());
        state.outcome = std::move(outcome);
    }
    const RetrainOutcome& outcome = *state.outcome;

    EvaluationReport report;
    report.provenance.config_hash = config_hash(config);
    report.provenance.seed = config.seed;
    report.provenance.versions = {{"driftguard", "0.1.0"},
                                  {"panel_format", "1"},
                                  {"model_format", "1"}};
    report.provenance.generated_at = iso_utc_now();

    const SplitConfig& split = config.split;
    const bool control = injection.affected_series.empty();
    if (control) {
        report.detection.n_events = static_cast<int>(events.size());
        report.detection.first_event_day = events.empty() ? -1 : events.front().day;
        report.accuracy.baseline_wmape =
            wmape_subset(monitored, forecasts, all_series(monitored), split.train_end + 1,
                         split.monitor_end);
        report.business.compute_cost = 0.0;
    } else {
        report.detection = compute_detection_metrics(events, injection, {});

        const std::vector<int>& affected = injection.affected_series;
        const int onset = injection.onset_day;
        report.accuracy.baseline_wmape =
            wmape_subset(monitored, forecasts, affected, split.train_end + 1, onset - 1);

        const ForecastMatrix stale_fc =
            rolling_forecast(baseline, monitored, split.evaluate_start, split.evaluate_end,
                             split.anchor_step);
        const ForecastMatrix deployed_fc =
            rolling_forecast(outcome.models, monitored, split.evaluate_start, split.evaluate_end,
                             split.anchor_step);
        report.accuracy.post_drift_wmape =
            wmape_subset(monitored, stale_fc, affected, split.evaluate_start, split.evaluate_end);
        report.accuracy.post_retrain_wmape =
            wmape_subset(monitored, deployed_fc, affected, split.evaluate_start,
                         split.evaluate_end);

        const int eval_len = split.evaluate_end - split.evaluate_start + 1;
        report.business.baseline_cost = inventory_cost_subset(
            monitored, forecasts, affected, onset - eval_len, onset - 1, config.cost);
        report.business.drift_cost =
            inventory_cost_subset(monitored, stale_fc, affected, split.evaluate_start,
                                  split.evaluate_end, config.cost);
        report.business.retrained_cost =
            inventory_cost_subset(monitored, deployed_fc, affected, split.evaluate_start,
                                  split.evaluate_end, config.cost);

        // Realized compute: every store the execution touched (deployed or
        // rolled back) paid for a full retrain over the plan's window.
        if (!state.plan) state.plan = read_plan(paths.plan_json());
        long touched_series = 0;
        std::map<std::string, long> store_sizes;
        for (int s = 0; s < monitored.n_series(); ++s) {
            ++store_sizes[monitored.key(s).store_id];
        }
        for (const StoreRetrainRecord& r : outcome.stores) {
            touched_series += store_sizes.count(r.store_id) ? store_sizes.at(r.store_id) : 0;
        }
        report.business.compute_cost = config.cost.compute_cost_rate *
                                       static_cast<double>(touched_series) *
                                       state.plan->window_days;
        const double saving_annualized =
            (report.business.drift_cost - report.business.retrained_cost) * 365.0 / eval_len;
        try {
            report.business.roi = roi(saving_annualized, report.business.compute_cost);
        } catch (const UndefinedMetricError&) {
            report.business.roi = kNaN;  // nothing retrained, nothing spent
        }
    }

    write_report(report, paths.report_json(), paths.report_txt());
    state.report = std::move(report);
}

// ---------------------------------------------------------------------------
// Batch aggregation.

double finite_mean(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

MetricSummary summarize(const std::vector<double>& raw, std::uint64_t seed) {
    std::vector<double> values;
    for (double v : raw) {
        if (!std::isnan(v)) values.push_back(v);
    }
    MetricSummary s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) return s;
    s.mean = finite_mean(values);
    if (values.size() == 1) {
        s.lo = s.hi = values[0];
        return s;
    }
    auto rng = make_engine(seed, 0xb007);
    const std::size_t n = values.size();
    std::vector<double> means(1000);
    std::vector<double> resample(n);
    for (double& m : means) {
        for (std::size_t i = 0; i < n; ++i) resample[i] = values[bounded_uniform(rng, n)];
        m = finite_mean(resample);
    }
    std::sort(means.begin(), means.end());
    s.lo = means[24];
    s.hi = means[974];
    return s;
}

struct BatchArm {
    std::vector<EvaluationReport> reports;
    std::vector<SeedFailure> failures;
};

BatchArm run_batch_arm(const RunConfig& config, int n_seeds, const std::string& out_dir) {
    BatchArm arm;
    for (int i = 0; i < n_seeds; ++i) {
        RunConfig rc = config;
        rc.seed = config.seed + static_cast<std::uint64_t>(i);
        rc.out_dir = out_dir + "/seed_" + std::to_string(rc.seed);
        try {
            arm.reports.push_back(run_lifecycle(rc));
        } catch (const StageError& e) {
            arm.failures.push_back({rc.seed, to_string(e.stage), e.what()});
        } catch (const std::exception& e) {
            arm.failures.push_back({rc.seed, "config", e.what()});
        }
    }
    return arm;
}

std::vector<double> collect(const std::vector<EvaluationReport>& reports,
                            double (*get)(const EvaluationReport&)) {
    std::vector<double> out;
    out.reserve(reports.size());
    for (const EvaluationReport& r : reports) out.push_back(get(r));
    return out;
}

ordered_json summary_json(const MetricSummary& s) {
    return {{"mean", num_or_null(s.mean)},
            {"lo95", num_or_null(s.lo)},
            {"hi95", num_or_null(s.hi)},
            {"n", s.n}};
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Data: return "data";
        case Stage::Train: return "train";
        case Stage::Inject: return "inject";
        case Stage::Detect: return "detect";
        case Stage::Diagnose: return "diagnose";
        case Stage::Plan: return "plan";
        case Stage::Retrain: return "retrain";
        case Stage::Evaluate: return "evaluate";
    }
    return "unknown";
}

DetectionMetrics::DetectionMetrics()
    : recall(kNaN), precision(kNaN), fpr(kNaN), mean_latency_days(kNaN) {}

AccuracyMetrics::AccuracyMetrics()
    : baseline_wmape(kNaN), post_drift_wmape(kNaN), post_retrain_wmape(kNaN) {}

BusinessMetrics::BusinessMetrics()
    : baseline_cost(kNaN), drift_cost(kNaN), retrained_cost(kNaN), compute_cost(kNaN), roi(kNaN) {}

MetricSummary::MetricSummary() : mean(kNaN), lo(kNaN), hi(kNaN) {}

void save_store_models(const StoreModels& models, const std::string& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream index;
    for (const auto& [store_id, model] : models.by_store) {
        save_gbt(model, dir + "/" + store_id + ".gbt");
        index << store_id << '\n';
    }
    write_text_file(dir + "/index.txt", index.str());
}

StoreModels load_store_models(const std::string& dir) {
    std::ifstream in(dir + "/index.txt");
    if (!in) throw IoError("cannot open model index: " + dir + "/index.txt");
    StoreModels models;
    std::string store_id;
    while (std::getline(in, store_id)) {
        if (!store_id.empty() && store_id.back() == '\r') store_id.pop_back();
        if (store_id.empty()) continue;
        models.by_store[store_id] = load_gbt(dir + "/" + store_id + ".gbt");
    }
    if (models.by_store.empty()) throw SchemaError("model index lists no stores: " + dir);
    return models;
}

DetectionMetrics compute_detection_metrics(const std::vector<DriftEvent>& events,
                                           const InjectionRecord& ground_truth,
                                           const std::vector<int>& control_event_counts) {
    if (ground_truth.affected_series.empty()) {
        throw ValidationError(
            "compute_detection_metrics: ground truth has no affected series; control runs have no "
            "recall to score");
    }
    const std::set<int> affected(ground_truth.affected_series.begin(),
                                 ground_truth.affected_series.end());
    DetectionMetrics m;
    m.n_events = static_cast<int>(events.size());
    int n_matched = 0;
    double latency_sum = 0.0;
    int first_day = -1;
    for (const DriftEvent& ev : events) {
        if (first_day < 0 || ev.day < first_day) first_day = ev.day;
        if (ev.day < ground_truth.onset_day) continue;
        const bool overlaps = std::any_of(ev.series_scope.begin(), ev.series_scope.end(),
                                          [&](int s) { return affected.count(s) > 0; });
        if (!overlaps) continue;
        ++n_matched;
        latency_sum += ev.day - ground_truth.onset_day;
    }
    m.first_event_day = first_day;
    m.recall = n_matched > 0 ? 1.0 : 0.0;
    if (!events.empty()) m.precision = static_cast<double>(n_matched) / events.size();
    if (n_matched > 0) m.mean_latency_days = latency_sum / n_matched;
    if (!control_event_counts.empty()) {
        const long noisy = std::count_if(control_event_counts.begin(), control_event_counts.end(),
                                         [](int c) { return c > 0; });
        m.fpr = static_cast<double>(noisy) / control_event_counts.size();
    }
    return m;
}

void write_report(const EvaluationReport& report, const std::string& json_path,
                  const std::string& text_path) {
    ordered_json j;
    j["detection"] = {{"recall", num_or_null(report.detection.recall)},
                      {"precision", num_or_null(report.detection.precision)},
                      {"fpr", num_or_null(report.detection.fpr)},
                      {"mean_latency_days", num_or_null(report.detection.mean_latency_days)},
                      {"n_events", report.detection.n_events},
                      {"first_event_day", report.detection.first_event_day}};
    j["accuracy"] = {{"baseline_wmape", num_or_null(report.accuracy.baseline_wmape)},
                     {"post_drift_wmape", num_or_null(report.accuracy.post_drift_wmape)},
                     {"post_retrain_wmape", num_or_null(report.accuracy.post_retrain_wmape)}};
    j["business"] = {{"baseline_cost", num_or_null(report.business.baseline_cost)},
                     {"drift_cost", num_or_null(report.business.drift_cost)},
                     {"retrained_cost", num_or_null(report.business.retrained_cost)},
                     {"compute_cost", num_or_null(report.business.compute_cost)},
                     {"roi", num_or_null(report.business.roi)}};
    ordered_json versions;
    for (const auto& [k, v] : report.provenance.versions) versions[k] = v;
    j["provenance"] = {{"config_hash", report.provenance.config_hash},
                       {"seed", report.provenance.seed},
                       {"versions", versions},
                       {"generated_at", report.provenance.generated_at}};
    write_text_file(json_path, j.dump(2) + "\n");

    std::ostringstream txt;
    txt << "driftguard run report\n=====================\n";
    txt << pad("seed", 22) << report.provenance.seed << '\n';
    txt << pad("config_hash", 22) << report.provenance.config_hash << '\n';
    txt << pad("generated_at", 22) << report.provenance.generated_at << '\n';
    txt << "\ndetection\n";
    txt << "  " << pad("recall", 20) << fmt_metric(report.detection.recall) << '\n';
    txt << "  " << pad("precision", 20) << fmt_metric(report.detection.precision) << '\n';
    txt << "  " << pad("fpr", 20) << fmt_metric(report.detection.fpr) << '\n';
    txt << "  " << pad("mean_latency_days", 20) << fmt_metric(report.detection.mean_latency_days)
        << '\n';
    txt << "  " << pad("n_events", 20) << report.detection.n_events << '\n';
    txt << "  " << pad("first_event_day", 20) << report.detection.first_event_day << '\n';
    txt << "\naccuracy (wmape)\n";
    txt << "  " << pad("baseline", 20) << fmt_metric(report.accuracy.baseline_wmape) << '\n';
    txt << "  " << pad("post_drift", 20) << fmt_metric(report.accuracy.post_drift_wmape) << '\n';
    txt << "  " << pad("post_retrain", 20) << fmt_metric(report.accuracy.post_retrain_wmape)
        << '\n';
    txt << "\nbusiness\n";
    txt << "  " << pad("baseline_cost", 20) << fmt_metric(report.business.baseline_cost) << '\n';
    txt << "  " << pad("drift_cost", 20) << fmt_metric(report.business.drift_cost) << '\n';
    txt << "  " << pad("retrained_cost", 20) << fmt_metric(report.business.retrained_cost) << '\n';
    txt << "  " << pad("compute_cost", 20) << fmt_metric(report.business.compute_cost) << '\n';
    txt << "  " << pad("roi", 20) << fmt_metric(report.business.roi) << '\n';
    write_text_file(text_path, txt.str());
}

EvaluationReport read_report(const std::string& json_path) {
    const ordered_json j = parse_json_file(json_path, "run report");
    EvaluationReport r;
    const auto& d = j.at("detection");
    r.detection.recall = num_or_nan(d, "recall");
    r.detection.precision = num_or_nan(d, "precision");
    r.detection.fpr = num_or_nan(d, "fpr");
    r.detection.mean_latency_days = num_or_nan(d, "mean_latency_days");
    r.detection.n_events = d.at("n_events").get<int>();
    r.detection.first_event_day = d.at("first_event_day").get<int>();
    const auto& a = j.at("accuracy");
    r.accuracy.baseline_wmape = num_or_nan(a, "baseline_wmape");
    r.accuracy.post_drift_wmape = num_or_nan(a, "post_drift_wmape");
    r.accuracy.post_retrain_wmape = num_or_nan(a, "post_retrain_wmape");
    const auto& b = j.at("business");
    r.business.baseline_cost = num_or_nan(b, "baseline_cost");
    r.business.drift_cost = num_or_nan(b, "drift_cost");
    r.business.retrained_cost = num_or_nan(b, "retrained_cost");
    r.business.compute_cost = num_or_nan(b, "compute_cost");
    r.business.roi = num_or_nan(b, "roi");
    const auto& p = j.at("provenance");
    r.provenance.config_hash = p.at("config_hash").get<std::string>();
    r.provenance.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : p.at("versions").items()) {
        r.provenance.versions[k] = v.get<std::string>();
    }
    r.provenance.generated_at = p.at("generated_at").get<std::string>();
    return r;
}

RunConfig resolve_run_config(const RunConfig& config) {
    RunConfig resolved = config;
    resolved.synth.seed = config.seed;
    resolved.scenario.seed = config.seed * 1000 + 7;
    return resolved;
}

void run_stage(Stage stage, const RunConfig& config, const RunPaths& paths,
               LifecycleState& state) {
    try {
        switch (stage) {
            case Stage::Data: stage_data(config, paths, state); break;
            case Stage::Train: stage_train(config, paths, state); break;
            case Stage::Inject: stage_inject(config, paths, state); break;
            case Stage::Detect: stage_detect(config, paths, state); break;
            case Stage::Diagnose: stage_diagnose(config, paths, state); break;
            case Stage::Plan: stage_plan(config, paths, state); break;
            case Stage::Retrain: stage_retrain(config, paths, state); break;
            case Stage::Evaluate: stage_evaluate(config, paths, state); break;
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

EvaluationReport run_lifecycle(const RunConfig& config) {
    config.validate();
    const RunConfig resolved = resolve_run_config(config);
    const RunPaths paths{resolved.out_dir};
    LifecycleState state;
    for (Stage stage : {Stage::Data, Stage::Train, Stage::Inject, Stage::Detect, Stage::Diagnose,
                        Stage::Plan, Stage::Retrain, Stage::Evaluate}) {
        run_stage(stage, resolved, paths, state);
    }
    return *state.report;
}

void write_batch_report(const BatchReport& report, const std::string& json_path,
                        const std::string& text_path) {
    ordered_json j;
    j["n_requested"] = report.n_requested;
    j["n_completed"] = report.n_completed;
    j["complete"] = report.complete;
    ordered_json failures = ordered_json::array();
    for (const SeedFailure& f : report.failures) {
        failures.push_back({{"seed", f.seed}, {"stage", f.stage}, {"message", f.message}});
    }
    j["failures"] = failures;
    ordered_json metrics;
    for (const auto& [name, summary] : report.metrics) metrics[name] = summary_json(summary);
    j["metrics"] = metrics;
    ordered_json severity = ordered_json::array();
    for (const SeverityRow& row : report.severity) {
        severity.push_back({{"alpha", row.alpha},
                            {"n_runs", row.n_runs},
                            {"n_detected", row.n_detected},
                            {"baseline_wmape", summary_json(row.baseline_wmape)},
                            {"post_drift_wmape", summary_json(row.post_drift_wmape)},
                            {"post_retrain_wmape", summary_json(row.post_retrain_wmape)},
                            {"roi", summary_json(row.roi)}});
    }
    j["severity"] = severity;
    j["generated_at"] = report.generated_at;
    write_text_file(json_path, j.dump(2) + "\n");

    std::ostringstream txt;
    txt << "driftguard batch report\n=======================\n";
    txt << pad("requested", 14) << report.n_requested << '\n';
    txt << pad("completed", 14) << report.n_completed << '\n';
    txt << pad("complete", 14) << (report.complete ? "yes" : "no") << '\n';
    txt << pad("generated_at", 14) << report.generated_at << '\n';
    txt << "\nmetric                  " << pad("mean", 14) << pad("lo95", 14) << pad("hi95", 14)
        << "n\n";
    for (const auto& [name, s] : report.metrics) {
        txt << pad(name, 24) << pad(fmt_metric(s.mean), 14) << pad(fmt_metric(s.lo), 14)
            << pad(fmt_metric(s.hi), 14) << s.n << '\n';
    }
    if (!report.severity.empty()) {
        txt << "\nseverity sweep\n";
        txt << pad("alpha", 8) << pad("runs", 6) << pad("detected", 10) << pad("baseline", 14)
            << pad("post_drift", 14) << pad("post_retrain", 14) << "roi_mean\n";
        for (const SeverityRow& row : report.severity) {
            txt << pad(format_double(row.alpha), 8) << pad(std::to_string(row.n_runs), 6)
                << pad(std::to_string(row.n_detected), 10)
                << pad(fmt_metric(row.baseline_wmape.mean), 14)
                << pad(fmt_metric(row.post_drift_wmape.mean), 14)
                << pad(fmt_metric(row.post_retrain_wmape.mean), 14)
                << fmt_metric(row.roi.mean) << '\n';
        }
    }
    if (!report.failures.empty()) {
        txt << "\nfailures\n";
        for (const SeedFailure& f : report.failures) {
            txt << "  seed " << f.seed << "  stage " << f.stage << "  " << f.message << '\n';
        }
    }
    write_text_file(text_path, txt.str());
}

BatchReport batch_runs(const RunConfig& config, int n_seeds) {
    if (n_seeds < 1) throw ValidationError("batch_runs: n_seeds must be >= 1");
    config.validate();

    BatchReport report;
    report.n_requested = n_seeds;
    const BatchArm main_arm = run_batch_arm(config, n_seeds, config.out_dir);
    report.n_completed = static_cast<int>(main_arm.reports.size());
    report.failures = main_arm.failures;
    report.complete = report.n_completed == report.n_requested;

    const std::uint64_t boot_seed = config.seed;
    const auto& reports = main_arm.reports;
    report.metrics["recall"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.detection.recall; }), boot_seed);
    report.metrics["precision"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.detection.precision; }),
        boot_seed);
    report.metrics["mean_latency_days"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.detection.mean_latency_days; }),
        boot_seed);
    report.metrics["n_events"] = summarize(
        collect(reports,
                [](const EvaluationReport& r) { return static_cast<double>(r.detection.n_events); }),
        boot_seed);
    report.metrics["baseline_wmape"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.accuracy.baseline_wmape; }),
        boot_seed);
    report.metrics["post_drift_wmape"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.accuracy.post_drift_wmape; }),
        boot_seed);
    report.metrics["post_retrain_wmape"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.accuracy.post_retrain_wmape; }),
        boot_seed);
    report.metrics["baseline_cost"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.business.baseline_cost; }),
        boot_seed);
    report.metrics["drift_cost"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.business.drift_cost; }),
        boot_seed);
    report.metrics["retrained_cost"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.business.retrained_cost; }),
        boot_seed);
    report.metrics["compute_cost"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.business.compute_cost; }),
        boot_seed);
    report.metrics["roi"] = summarize(
        collect(reports, [](const EvaluationReport& r) { return r.business.roi; }), boot_seed);

    const bool sweep = config.scenario_enabled && config.severity_sweep &&
                       !config.sweep_alphas.empty() &&
                       config.scenario.kind == DriftKind::LevelShock;
    if (sweep) {
        for (double alpha : config.sweep_alphas) {
            const std::vector<EvaluationReport>* arm_reports = nullptr;
            BatchArm sub;
            if (std::abs(alpha - config.scenario.alpha) < 1e-12) {
                arm_reports = &main_arm.reports;  // the main batch already ran this strength
            } else {
                RunConfig rc = config;
                rc.scenario.alpha = alpha;
                rc.severity_sweep = false;
                const std::string arm_dir =
                    config.out_dir + "/severity_" + format_double(alpha);
                sub = run_batch_arm(rc, n_seeds, arm_dir);
                for (const SeedFailure& f : sub.failures) report.failures.push_back(f);
                arm_reports = &sub.reports;
            }
            SeverityRow row;
            row.alpha = alpha;
            row.n_runs = static_cast<int>(arm_reports->size());
            row.n_detected = static_cast<int>(
                std::count_if(arm_reports->begin(), arm_reports->end(),
                              [](const EvaluationReport& r) { return r.detection.recall == 1.0; }));
            row.baseline_wmape = summarize(
                collect(*arm_reports,
                        [](const EvaluationReport& r) { return r.accuracy.baseline_wmape; }),
                boot_seed);
            row.post_drift_wmape = summarize(
                collect(*arm_reports,
                        [](const EvaluationReport& r) { return r.accuracy.post_drift_wmape; }),
                boot_seed);
            row.post_retrain_wmape = summarize(
                collect(*arm_reports,
                        [](const EvaluationReport& r) { return r.accuracy.post_retrain_wmape; }),
                boot_seed);
            row.roi = summarize(
                collect(*arm_reports, [](const EvaluationReport& r) { return r.business.roi; }),
                boot_seed);
            report.severity.push_back(row);
        }
    }

    report.generated_at = iso_utc_now();
    fs::create_directories(config.out_dir);
    write_batch_report(report, config.out_dir + "/batch_report.json",
                       config.out_dir + "/batch_report.txt");
    return report;
}

}  // namespace driftguard
