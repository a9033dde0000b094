#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftguard/features.hpp"
#include "driftguard/forecast.hpp"
#include "driftguard/panel.hpp"

namespace driftguard {

/// Thresholds and windows for the four-detector voting ensemble.
///
/// Threshold semantics:
///   theta_e   error-ratio detector votes when recent RMSE exceeds baseline
///             RMSE by more than this fraction.
///   theta_s   statistical detector votes when the strongest per-feature
///             drift evidence (a 0..1 scale) exceeds this.
///   theta_a   reconstruction-error threshold; 0 means "use the threshold
///             calibrated while training the reconstruction net" (the 99th
///             percentile of stable-period reconstruction errors).
///   theta_c   CUSUM decision threshold, in units of the series' baseline
///             residual standard deviation.
///   cusum_k   CUSUM slack per step, in the same baseline-sigma units.
struct DetectorConfig {
    double theta_e = 0.25;
    double theta_s = 0.9;
    double theta_a = 0.0;  // 0 = auto-calibrated
    double theta_c = 5.0;
    int recent_window = 14;
    int baseline_window = 56;
    double cusum_k = 0.5;
    int psi_bins = 10;
    double ks_alpha = 0.05;
    int vote_quorum = 3;
    double panel_flag_fraction = 0.05;

    // Reconstruction net: input width (days of residuals), bottleneck units,
    // full-batch training epochs, initial step size, and its private seed.
    int ae_window = 28;
    int ae_bottleneck = 4;
    int ae_epochs = 500;
    double ae_step = 0.1;
    std::uint64_t ae_seed = 0x5eedull;

    void validate() const;
};

/// Two-sided CUSUM accumulator.  `pos` tracks upward residual shifts with
/// the textbook recursion; `neg` mirrors it for downward shifts.  Both stay
/// non-negative; decisions use the larger side.
struct CusumState {
    double pos = 0.0;
    double neg = 0.0;
    double mu0 = 0.0;
};

/// Advances one step with residual r and absolute slack k:
///   pos' = max(0, pos + (r - mu0) - k)
///   neg' = max(0, neg - (r - mu0) - k)
CusumState cusum_update(const CusumState& state, double r, double k);

/// Forecast-degradation score: RMSE over the trailing `recent_window`
/// residuals divided by the stable-period RMSE, minus one (0 = unchanged,
/// 1 = doubled).  Throws ValidationError when the baseline is degenerate
/// (callers abstain and flag the series for review) or when fewer than
/// `recent_window` residuals are supplied.
double error_score(const std::vector<double>& residuals, double baseline_rmse, int recent_window);

struct KsResult {
    double d;        // sup-norm ECDF distance in [0,1]
    double p_value;  // asymptotic two-sample distribution
};

/// Two-sample Kolmogorov-Smirnov statistic with asymptotic p-value.
/// Sample windows smaller than 8 make the asymptotic p unreliable; callers
/// feeding sliding windows abstain below that (statistical_score enforces it).
KsResult ks_statistic(const std::vector<double>& a, const std::vector<double>& b);

/// Population-stability divergence between two proportion vectors.  When a
/// proportion is zero the vectors are smoothed by epsilon = 1e-4 and
/// renormalized so the logarithm stays finite; otherwise the sum is exact.
double psi_from_proportions(const std::vector<double>& p, const std::vector<double>& q);

/// PSI between two continuous samples over baseline-quantile bins.
double psi(const std::vector<double>& baseline, const std::vector<double>& current, int bins);

/// PSI between two discrete-valued samples; bins are the distinct levels
/// observed across both samples.
double psi_categorical(const std::vector<double>& baseline, const std::vector<double>& current);

/// Strongest per-feature drift evidence on a 0..1 scale: continuous columns
/// score 1 - KS p-value, discrete columns score PSI / 0.2 capped at 1.
/// Columns are given as per-feature sample vectors (baseline and current
/// must have the same number of columns, aligned with `kinds`).  Throws
/// InsufficientDataError when a window has fewer than 8 rows.
double statistical_score(const std::vector<std::vector<double>>& baseline_cols,
                         const std::vector<std::vector<double>>& current_cols,
                         const std::vector<FeatureKind>& kinds);

/// Small dense reconstruction net (window -> bottleneck -> window, tanh
/// hidden layer, linear output) stored as a flat parameter vector:
///   [hidden weights (B x W) row-major, hidden bias (B),
///    output weights (W x B) row-major, output bias (W)]
struct AutoencoderModel {
    int window = 0;
    int bottleneck = 0;
    std::vector<double> params;
    std::vector<double> input_mean;  // per-position normalization
    std::vector<double> input_std;   // zero-variance positions stored as 0
    double theta_a = 0.0;            // calibrated stable-error 99th percentile

    bool valid() const { return window > 0; }
};

int ae_param_count(int window, int bottleneck);

/// Mean over rows of the squared reconstruction error in normalized space.
/// `rows` is row-major [n x window] of already-normalized inputs.
double ae_loss(int window, int bottleneck, const std::vector<double>& params,
               const std::vector<double>& rows, int n_rows);

/// Analytic gradient of ae_loss with respect to every parameter.
std::vector<double> ae_gradient(int window, int bottleneck, const std::vector<double>& params,
                                const std::vector<double>& rows, int n_rows);

struct AutoencoderArch {
    int window = 28;
    int bottleneck = 4;
    int epochs = 500;
    double step_size = 0.1;
    std::uint64_t seed = 0x5eedull;
};

/// Trains the reconstruction net on stable-period residual windows (row-major
/// [n x window]) by full-batch gradient descent; a step that would increase
/// the loss is halved until it does not, so the training loss never rises.
/// Calibrates theta_a to the 99th percentile of the training windows'
/// reconstruction errors.  Throws InsufficientDataError when n < 10 *
/// bottleneck (callers disable the detector).
AutoencoderModel train_autoencoder(const std::vector<double>& windows, int n_rows,
                                   const AutoencoderArch& arch);

/// Squared distance between a residual window and its reconstruction, in
/// original residual units (normalization and denormalization are internal,
/// so a zero-variance position reconstructs to its mean exactly).
double reconstruction_error(const AutoencoderModel& model, const std::vector<double>& window);

/// Per-detector scores for one series on one day; a detector that could not
/// run (too little data, degenerate baseline, net disabled) holds nullopt.
/// Order: error ratio, statistical, reconstruction, CUSUM.
struct DetectorScores {
    std::optional<double> error_ratio;
    std::optional<double> statistical;
    std::optional<double> reconstruction;
    std::optional<double> cusum;
};

struct VoteResult {
    std::array<bool, 4> votes = {false, false, false, false};
    int n_votes = 0;
    int n_abstain = 0;       // transient abstentions among enabled detectors
    int effective_quorum = 0;
    bool no_decision = false;  // every enabled detector abstained
    bool decision = false;
};

/// Applies the quorum rule.  `theta_a` is the resolved reconstruction
/// threshold.  `reconstruction_enabled` distinguishes a structurally
/// disabled net (quorum unchanged, detector simply absent) from a
/// transient abstention (quorum drops by one per abstention, floored at 2).
VoteResult ensemble_vote(const DetectorScores& scores, const DetectorConfig& config,
                         double theta_a, bool reconstruction_enabled);

/// Panel-level drift event: the first day the fraction of series whose
/// ensemble decision fired exceeds `panel_flag_fraction`.  Scores and votes
/// are those of the strongest flagged series on that day; the scope starts
/// as that day's flagged set and grows as later days flag more series.
struct DriftEvent {
    int day = 0;
    std::vector<int> series_scope;  // ascending series indices
    std::array<double, 4> scores{};  // NaN where the detector abstained
    std::array<bool, 4> votes = {false, false, false, false};
    bool decision = false;
};

/// First day each flagged series fired, with that day's scores and votes.
struct SeriesFlag {
    int series = 0;
    int day = 0;
    std::array<double, 4> scores{};
    std::array<bool, 4> votes = {false, false, false, false};
};

struct DetectionResult {
    std::vector<DriftEvent> events;   // panel-level (at most one per sweep)
    std::vector<SeriesFlag> first_flags;
    std::vector<int> review_series;   // degenerate baseline RMSE: needs review
    bool reconstruction_enabled = false;
    int start_day = 0;
    int end_day = 0;
};

/// Daily sweep applying the four-detector vote to every series from
/// `start_day` through the end of the forecast/panel overlap.  Baseline
/// statistics (RMSE, residual mean/sigma, feature distributions, stable
/// residual windows for the reconstruction net) come from a
/// `baseline_window`-day span ending 7 days before `start_day`; the forecast
/// matrix must cover that span.
DetectionResult detect_panel(const Panel& panel, const ForecastMatrix& forecasts,
                             const StoreModels& models, const DetectorConfig& config,
                             int start_day);

/// Appends events as line-delimited JSON records.
void write_events_log(const std::vector<DriftEvent>& events, const std::string& path);
std::vector<DriftEvent> read_events_log(const std::string& path);

}  // namespace driftguard
