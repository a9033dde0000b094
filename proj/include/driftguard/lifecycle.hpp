#pragma once

#include <cstdint>
#include <stdexcept>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "driftguard/config.hpp"
#include "driftguard/detect.hpp"
#include "driftguard/diagnose.hpp"
#include "driftguard/forecast.hpp"
#include "driftguard/inject.hpp"
#include "driftguard/panel.hpp"
#include "driftguard/retrain.hpp"

namespace driftguard {

/// The pipeline stages, in execution order.
enum class Stage {
    Data = 1,
    Train,
    Inject,
    Detect,
    Diagnose,
    Plan,
    Retrain,
    Evaluate,
};

const char* to_string(Stage stage);

/// A failure inside one stage: carries which stage died so callers can exit
/// with a stage-specific code; artifacts written before the failure stay on
/// disk.
struct StageError : std::runtime_error {
    Stage stage;
    StageError(Stage s, const std::string& msg)
        : std::runtime_error(std::string(to_string(s)) + ": " + msg), stage(s) {}
};

/// Artifact layout of one run directory.
struct RunPaths {
    std::string root;

    std::string config_txt() const { return root + "/config.txt"; }
    std::string panel_csv() const { return root + "/panel/panel.csv"; }
    std::string monitored_csv() const { return root + "/panel/monitored.csv"; }
    std::string baseline_models_dir() const { return root + "/models/baseline"; }
    std::string deployed_models_dir() const { return root + "/models/deployed"; }
    std::string injection_json() const { return root + "/injection.json"; }
    std::string monitor_forecasts_csv() const { return root + "/forecasts/monitor.csv"; }
    std::string events_log() const { return root + "/events.log"; }
    std::string diagnosis_map_json() const { return root + "/diagnosis/map.json"; }
    std::string diagnosis_map_txt() const { return root + "/diagnosis/map.txt"; }
    std::string plan_json() const { return root + "/plan/plan.json"; }
    std::string plan_txt() const { return root + "/plan/plan.txt"; }
    std::string outcome_json() const { return root + "/plan/outcome.json"; }
    std::string report_json() const { return root + "/report.json"; }
    std::string report_txt() const { return root + "/report.txt"; }
};

/// Model-set persistence: one file per store plus an index, so a set can be
/// reloaded without directory scanning.
void save_store_models(const StoreModels& models, const std::string& dir);
StoreModels load_store_models(const std::string& dir);

/// Detection scorecard of one run.  NaN means "not defined for this run"
/// (e.g. no latency when nothing was detected, no false-positive rate
/// without control runs); JSON renders those as null.
struct DetectionMetrics {
    double recall;
    double precision;
    double fpr;
    double mean_latency_days;
    int n_events = 0;
    int first_event_day = -1;
    DetectionMetrics();
};

struct AccuracyMetrics {
    double baseline_wmape;
    double post_drift_wmape;
    double post_retrain_wmape;
    AccuracyMetrics();
};

struct BusinessMetrics {
    double baseline_cost;
    double drift_cost;
    double retrained_cost;
    double compute_cost;
    double roi;
    BusinessMetrics();
};

struct Provenance {
    std::string config_hash;  // 16 hex digits
    std::uint64_t seed = 0;
    std::map<std::string, std::string> versions;
    std::string generated_at;  // ISO-8601 UTC; excluded from determinism
};

struct EvaluationReport {
    DetectionMetrics detection;
    AccuracyMetrics accuracy;
    BusinessMetrics business;
    Provenance provenance;
};

void write_report(const EvaluationReport& report, const std::string& json_path,
                  const std::string& text_path);
EvaluationReport read_report(const std::string& json_path);

/// Scores detections against the injected ground truth.  An event matches
/// when its day is at or after the onset and its scope overlaps the affected
/// series.  recall: 1 if any event matches, else 0 (one injected episode per
/// run); precision: matched / emitted; mean_latency_days: first matching
/// event day minus onset (NaN when nothing matched); fpr: fraction of
/// control runs (given by their event counts) that emitted any event, NaN
/// when none provided.  An empty ground-truth scope is a ValidationError.
DetectionMetrics compute_detection_metrics(const std::vector<DriftEvent>& events,
                                           const InjectionRecord& ground_truth,
                                           const std::vector<int>& control_event_counts);

/// In-memory products of the stages that have run so far.  Standalone stage
/// invocations leave earlier fields empty and reload from artifacts instead.
struct LifecycleState {
    std::optional<Panel> panel;
    std::optional<Panel> monitored;
    std::optional<InjectionRecord> injection;
    std::optional<StoreModels> baseline;
    std::optional<ForecastMatrix> monitor_forecasts;
    std::optional<DetectionResult> detection;
    std::optional<RetrainPlan> plan;
    std::optional<RetrainOutcome> outcome;
    std::optional<EvaluationReport> report;
};

/// Runs one stage: inputs come from `state` when present, otherwise from the
/// artifacts under `paths`; outputs are written to both.  The config must
/// already be seed-resolved (see resolve_run_config).  Failures are rethrown
/// as StageError tagged with `stage`.
void run_stage(Stage stage, const RunConfig& config, const RunPaths& paths,
               LifecycleState& state);

/// Applies the global seed to the component seeds: the generator runs on the
/// seed itself, the injection on a stream derived from it.  Called by
/// run_stage callers once per run.
RunConfig resolve_run_config(const RunConfig& config);

/// The full pipeline in order: data, train, inject, detect, diagnose, plan,
/// retrain, evaluate.  Every intermediate artifact lands under
/// config.out_dir; the returned report is also written there.  Deterministic
/// per (config, seed) apart from timestamps.
EvaluationReport run_lifecycle(const RunConfig& config);

/// Mean with a seeded 95% percentile-bootstrap interval.
struct MetricSummary {
    double mean;
    double lo;
    double hi;
    int n = 0;
    MetricSummary();
};

struct SeedFailure {
    std::uint64_t seed = 0;
    std::string stage;
    std::string message;
};

/// One row of the severity table: the batch rerun at a given shock strength.
struct SeverityRow {
    double alpha = 0.0;
    int n_runs = 0;
    int n_detected = 0;
    MetricSummary baseline_wmape;
    MetricSummary post_drift_wmape;
    MetricSummary post_retrain_wmape;
    MetricSummary roi;
};

struct BatchReport {
    int n_requested = 0;
    int n_completed = 0;
    bool complete = false;  // every requested seed produced a report
    std::vector<SeedFailure> failures;
    std::map<std::string, MetricSummary> metrics;
    std::vector<SeverityRow> severity;  // present when the severity sweep ran
    std::string generated_at;
};

void write_batch_report(const BatchReport& report, const std::string& json_path,
                        const std::string& text_path);

/// Runs the lifecycle for n_seeds consecutive seeds starting at config.seed,
/// each in its own subdirectory of config.out_dir, then aggregates metric
/// means with bootstrap intervals.  Individual seed failures are recorded
/// and skipped.  When the config has a level-style scenario and the severity
/// sweep enabled, reruns the batch at each sweep alpha for the severity
/// table.  Batch artifacts land at out_dir/batch_report.{json,txt}.
BatchReport batch_runs(const RunConfig& config, int n_seeds);

}  // namespace driftguard
