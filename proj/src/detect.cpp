#include "driftguard/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "driftguard/errors.hpp"
#include "driftguard/rng.hpp"

namespace driftguard {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

void DetectorConfig::validate() const {
    if (recent_window < 7) throw ValidationError("detector config: recent_window must be >= 7");
    if (baseline_window < 7) throw ValidationError("detector config: baseline_window must be >= 7");
    if (vote_quorum < 1 || vote_quorum > 4) {
        throw ValidationError("detector config: vote_quorum must be in 1..4");
    }
    if (theta_e <= 0) throw ValidationError("detector config: theta_e must be > 0");
    if (theta_s <= 0) throw ValidationError("detector config: theta_s must be > 0");
    if (theta_a < 0) throw ValidationError("detector config: theta_a must be >= 0 (0 = auto)");
    if (theta_c <= 0) throw ValidationError("detector config: theta_c must be > 0");
    if (cusum_k < 0) throw ValidationError("detector config: cusum_k must be >= 0");
    if (psi_bins < 2) throw ValidationError("detector config: psi_bins must be >= 2");
    if (ks_alpha <= 0 || ks_alpha >= 1) {
        throw ValidationError("detector config: ks_alpha must be in (0, 1)");
    }
    if (panel_flag_fraction <= 0 || panel_flag_fraction >= 1) {
        throw ValidationError("detector config: panel_flag_fraction must be in (0, 1)");
    }
    if (ae_window < 2) throw ValidationError("detector config: ae_window must be >= 2");
    if (ae_bottleneck < 1 || ae_bottleneck >= ae_window) {
        throw ValidationError("detector config: ae_bottleneck must be in 1..ae_window-1");
    }
    if (ae_epochs < 1) throw ValidationError("detector config: ae_epochs must be >= 1");
    if (ae_step <= 0) throw ValidationError("detector config: ae_step must be > 0");
}

CusumState cusum_update(const CusumState& state, double r, double k) {
    CusumState next;
    next.mu0 = state.mu0;
    const double excess = r - state.mu0;
    next.pos = std::max(0.0, state.pos + excess - k);
    next.neg = std::max(0.0, state.neg - excess - k);
    return next;
}

double error_score(const std::vector<double>& residuals, double baseline_rmse,
                   int recent_window) {
    if (recent_window < 1) throw ValidationError("error_score: recent_window must be >= 1");
    if (static_cast<int>(residuals.size()) < recent_window) {
        throw ValidationError("error_score: fewer residuals than the recent window");
    }
    if (!(baseline_rmse > 0)) {
        throw ValidationError("error_score: degenerate (zero) baseline RMSE");
    }
    double sq = 0.0;
    for (std::size_t i = residuals.size() - recent_window; i < residuals.size(); ++i) {
        sq += residuals[i] * residuals[i];
    }
    return std::sqrt(sq / recent_window) / baseline_rmse - 1.0;
}

namespace {

// D statistic over two ascending-sorted samples.
double ks_d_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t na = a.size(), nb = b.size();
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < na && j < nb) {
        const double x = std::min(a[i], b[j]);
        while (i < na && a[i] == x) ++i;
        while (j < nb && b[j] == x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// Asymptotic two-sample tail probability: the Kolmogorov distribution
// evaluated at an effective-sample-size-corrected statistic.
double ks_p_value(double d, std::size_t na, std::size_t nb) {
    const double ne = static_cast<double>(na) * static_cast<double>(nb) / (na + nb);
    const double sqrt_ne = std::sqrt(ne);
    const double lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    if (lambda < 1e-9) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-14) break;
        sign = -sign;
    }
    return std::min(1.0, std::max(0.0, 2.0 * sum));
}

}  // namespace

KsResult ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ValidationError("ks_statistic: empty sample");
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double d = ks_d_sorted(sa, sb);
    return {d, ks_p_value(d, sa.size(), sb.size())};
}

double psi_from_proportions(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.empty() || p.size() != q.size()) {
        throw ValidationError("psi: proportion vectors must be non-empty and equal-sized");
    }
    double sp = 0.0, sq = 0.0;
    bool has_zero = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0 || q[i] < 0) throw ValidationError("psi: negative proportion");
        sp += p[i];
        sq += q[i];
        if (p[i] == 0.0 || q[i] == 0.0) has_zero = true;
    }
    if (!(sp > 0) || !(sq > 0)) throw ValidationError("psi: proportions sum to zero");

    // An empty bin on either side makes the log blow up; only then are both
    // vectors shifted by a small epsilon and renormalized.  With every bin
    // occupied the sum is evaluated exactly.
    const double eps = has_zero ? 1e-4 : 0.0;
    const double np = sp + eps * p.size();
    const double nq = sq + eps * q.size();
    double out = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = (p[i] + eps) / np;
        const double qi = (q[i] + eps) / nq;
        if (pi == qi) continue;
        out += (pi - qi) * std::log(pi / qi);
    }
    return out;
}

double psi(const std::vector<double>& baseline, const std::vector<double>& current, int bins) {
    if (baseline.empty() || current.empty()) throw ValidationError("psi: empty sample");
    if (bins < 2) throw ValidationError("psi: need at least 2 bins");
    std::vector<double> sorted = baseline;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::vector<double> edges;
    for (int k = 1; k < bins; ++k) {
        const std::size_t idx =
            std::min(n - 1, static_cast<std::size_t>(static_cast<double>(k) * n / bins));
        edges.push_back(sorted[idx]);
    }
    auto bin_of = [&](double x) {
        return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) -
                                        edges.begin());
    };
    std::vector<double> p(static_cast<std::size_t>(bins), 0.0), q(p);
    for (double x : baseline) p[bin_of(x)] += 1.0 / baseline.size();
    for (double x : current) q[bin_of(x)] += 1.0 / current.size();
    return psi_from_proportions(p, q);
}

double psi_categorical(const std::vector<double>& baseline, const std::vector<double>& current) {
    if (baseline.empty() || current.empty()) throw ValidationError("psi: empty sample");
    std::vector<double> levels;
    levels.insert(levels.end(), baseline.begin(), baseline.end());
    levels.insert(levels.end(), current.begin(), current.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    auto proportions = [&](const std::vector<double>& sample) {
        std::vector<double> out(levels.size(), 0.0);
        for (double x : sample) {
            const std::size_t i =
                std::lower_bound(levels.begin(), levels.end(), x) - levels.begin();
            out[i] += 1.0 / sample.size();
        }
        return out;
    };
    return psi_from_proportions(proportions(baseline), proportions(current));
}

namespace {

// Shared core of statistical_score: baseline continuous columns pre-sorted.
double statistical_score_presorted(const std::vector<std::vector<double>>& baseline_sorted,
                                   const std::vector<std::vector<double>>& baseline_raw,
                                   const std::vector<std::vector<double>>& current_cols,
                                   const std::vector<FeatureKind>& kinds) {
    double best = 0.0;
    std::vector<double> cur;
    for (std::size_t f = 0; f < kinds.size(); ++f) {
        double evidence;
        if (kinds[f] == FeatureKind::Continuous) {
            cur = current_cols[f];
            std::sort(cur.begin(), cur.end());
            const std::vector<double>& base = baseline_sorted[f];
            const double d = ks_d_sorted(base, cur);
            evidence = 1.0 - ks_p_value(d, base.size(), cur.size());
        } else {
            evidence = std::min(1.0, psi_categorical(baseline_raw[f], current_cols[f]) / 0.2);
        }
        best = std::max(best, evidence);
    }
    return best;
}

}  // namespace

double statistical_score(const std::vector<std::vector<double>>& baseline_cols,
                         const std::vector<std::vector<double>>& current_cols,
                         const std::vector<FeatureKind>& kinds) {
    if (baseline_cols.size() != kinds.size() || current_cols.size() != kinds.size()) {
        throw ValidationError("statistical_score: column count mismatch");
    }
    if (kinds.empty()) throw ValidationError("statistical_score: no features");
    for (std::size_t f = 0; f < kinds.size(); ++f) {
        if (baseline_cols[f].size() != baseline_cols[0].size() ||
            current_cols[f].size() != current_cols[0].size()) {
            throw ValidationError("statistical_score: ragged feature columns");
        }
    }
    if (baseline_cols[0].size() < 8 || current_cols[0].size() < 8) {
        throw InsufficientDataError("statistical_score: windows must hold at least 8 rows");
    }
    std::vector<std::vector<double>> sorted(baseline_cols.size());
    for (std::size_t f = 0; f < kinds.size(); ++f) {
        if (kinds[f] == FeatureKind::Continuous) {
            sorted[f] = baseline_cols[f];
            std::sort(sorted[f].begin(), sorted[f].end());
        }
    }
    return statistical_score_presorted(sorted, baseline_cols, current_cols, kinds);
}

// ---------------------------------------------------------------------------
// Reconstruction net
// ---------------------------------------------------------------------------

int ae_param_count(int window, int bottleneck) {
    return bottleneck * window + bottleneck + window * bottleneck + window;
}

namespace {

struct AeViews {
    const double* w1;  // [B x W]
    const double* b1;  // [B]
    const double* w2;  // [W x B]
    const double* b2;  // [W]
};

AeViews ae_views(int window, int bottleneck, const std::vector<double>& params) {
    if (static_cast<int>(params.size()) != ae_param_count(window, bottleneck)) {
        throw ValidationError("reconstruction net: parameter vector has the wrong length");
    }
    AeViews v;
    v.w1 = params.data();
    v.b1 = v.w1 + bottleneck * window;
    v.w2 = v.b1 + bottleneck;
    v.b2 = v.w2 + window * bottleneck;
    return v;
}

void ae_forward_row(int window, int bottleneck, const AeViews& v, const double* x, double* h,
                    double* y) {
    for (int j = 0; j < bottleneck; ++j) {
        double a = v.b1[j];
        const double* row = v.w1 + j * window;
        for (int k = 0; k < window; ++k) a += row[k] * x[k];
        h[j] = std::tanh(a);
    }
    for (int i = 0; i < window; ++i) {
        double a = v.b2[i];
        const double* row = v.w2 + i * bottleneck;
        for (int j = 0; j < bottleneck; ++j) a += row[j] * h[j];
        y[i] = a;
    }
}

}  // namespace

double ae_loss(int window, int bottleneck, const std::vector<double>& params,
               const std::vector<double>& rows, int n_rows) {
    const AeViews v = ae_views(window, bottleneck, params);
    std::vector<double> h(bottleneck), y(window);
    double loss = 0.0;
    for (int r = 0; r < n_rows; ++r) {
        const double* x = rows.data() + static_cast<std::size_t>(r) * window;
        ae_forward_row(window, bottleneck, v, x, h.data(), y.data());
        for (int i = 0; i < window; ++i) {
            const double d = y[i] - x[i];
            loss += d * d;
        }
    }
    return loss / n_rows;
}

std::vector<double> ae_gradient(int window, int bottleneck, const std::vector<double>& params,
                                const std::vector<double>& rows, int n_rows) {
    const AeViews v = ae_views(window, bottleneck, params);
    std::vector<double> grad(params.size(), 0.0);
    double* gw1 = grad.data();
    double* gb1 = gw1 + bottleneck * window;
    double* gw2 = gb1 + bottleneck;
    double* gb2 = gw2 + window * bottleneck;

    std::vector<double> h(bottleneck), y(window), dh(bottleneck);
    for (int r = 0; r < n_rows; ++r) {
        const double* x = rows.data() + static_cast<std::size_t>(r) * window;
        ae_forward_row(window, bottleneck, v, x, h.data(), y.data());
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int i = 0; i < window; ++i) {
            const double dy = 2.0 * (y[i] - x[i]) / n_rows;
            gb2[i] += dy;
            double* grow = gw2 + i * bottleneck;
            const double* wrow = v.w2 + i * bottleneck;
            for (int j = 0; j < bottleneck; ++j) {
                grow[j] += dy * h[j];
                dh[j] += dy * wrow[j];
            }
        }
        for (int j = 0; j < bottleneck; ++j) {
            const double da = dh[j] * (1.0 - h[j] * h[j]);
            gb1[j] += da;
            double* grow = gw1 + j * window;
            for (int k = 0; k < window; ++k) grow[k] += da * x[k];
        }
    }
    return grad;
}

AutoencoderModel train_autoencoder(const std::vector<double>& windows, int n_rows,
                                   const AutoencoderArch& arch) {
    const int W = arch.window, B = arch.bottleneck;
    if (W < 2 || B < 1 || B >= W) throw ValidationError("reconstruction net: bad shape");
    if (arch.epochs < 1 || arch.step_size <= 0) {
        throw ValidationError("reconstruction net: bad training settings");
    }
    if (n_rows < 0 || windows.size() != static_cast<std::size_t>(n_rows) * W) {
        throw ValidationError("reconstruction net: window matrix size mismatch");
    }
    if (n_rows < 10 * B) {
        throw InsufficientDataError("reconstruction net: need at least " +
                                    std::to_string(10 * B) + " stable windows, got " +
                                    std::to_string(n_rows));
    }

    AutoencoderModel model;
    model.window = W;
    model.bottleneck = B;
    model.input_mean.assign(W, 0.0);
    model.input_std.assign(W, 0.0);
    for (int i = 0; i < W; ++i) {
        double sum = 0.0;
        for (int r = 0; r < n_rows; ++r) sum += windows[static_cast<std::size_t>(r) * W + i];
        const double mean = sum / n_rows;
        double var = 0.0;
        for (int r = 0; r < n_rows; ++r) {
            const double d = windows[static_cast<std::size_t>(r) * W + i] - mean;
            var += d * d;
        }
        model.input_mean[i] = mean;
        model.input_std[i] = var > 0 ? std::sqrt(var / n_rows) : 0.0;
    }

    std::vector<double> rows(windows.size());
    for (int r = 0; r < n_rows; ++r) {
        for (int i = 0; i < W; ++i) {
            const std::size_t at = static_cast<std::size_t>(r) * W + i;
            rows[at] = model.input_std[i] > 0
                           ? (windows[at] - model.input_mean[i]) / model.input_std[i]
                           : 0.0;
        }
    }

    auto rng = make_engine(arch.seed, 0);
    model.params.assign(ae_param_count(W, B), 0.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(W));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(B));
    for (int i = 0; i < B * W; ++i) model.params[i] = (2.0 * uniform_double(rng) - 1.0) * s1;
    for (int i = 0; i < W * B; ++i) {
        model.params[B * W + B + i] = (2.0 * uniform_double(rng) - 1.0) * s2;
    }

    double step = arch.step_size;
    double loss = ae_loss(W, B, model.params, rows, n_rows);
    std::vector<double> candidate(model.params.size());
    for (int epoch = 0; epoch < arch.epochs; ++epoch) {
        const std::vector<double> grad = ae_gradient(W, B, model.params, rows, n_rows);
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            for (std::size_t i = 0; i < candidate.size(); ++i) {
                candidate[i] = model.params[i] - step * grad[i];
            }
            const double next_loss = ae_loss(W, B, candidate, rows, n_rows);
            if (next_loss <= loss) {
                model.params.swap(candidate);
                loss = next_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no step of any size helps: converged
        step = std::min(step * 1.1, arch.step_size);
    }

    // Decision threshold: 99th percentile (nearest rank) of the training
    // windows' own reconstruction errors.
    std::vector<double> errors(n_rows);
    std::vector<double> one(W);
    for (int r = 0; r < n_rows; ++r) {
        std::copy(windows.begin() + static_cast<std::size_t>(r) * W,
                  windows.begin() + static_cast<std::size_t>(r + 1) * W, one.begin());
        errors[r] = reconstruction_error(model, one);
    }
    std::sort(errors.begin(), errors.end());
    const int rank = std::min<int>(n_rows - 1, std::max(0, static_cast<int>(std::ceil(0.99 * n_rows)) - 1));
    model.theta_a = errors[rank];
    return model;
}

double reconstruction_error(const AutoencoderModel& model, const std::vector<double>& window) {
    if (!model.valid()) throw ValidationError("reconstruction net: model not trained");
    if (static_cast<int>(window.size()) != model.window) {
        throw ValidationError("reconstruction net: window width " + std::to_string(window.size()) +
                              " != model width " + std::to_string(model.window));
    }
    const int W = model.window, B = model.bottleneck;
    const AeViews v = ae_views(W, B, model.params);
    std::vector<double> z(W), h(B), y(W);
    for (int i = 0; i < W; ++i) {
        z[i] = model.input_std[i] > 0 ? (window[i] - model.input_mean[i]) / model.input_std[i]
                                      : 0.0;
    }
    ae_forward_row(W, B, v, z.data(), h.data(), y.data());
    double err = 0.0;
    for (int i = 0; i < W; ++i) {
        // Denormalized reconstruction; a zero-variance position maps back to
        // its mean exactly, so constant training data reconstructs to error 0.
        const double rec = model.input_mean[i] + model.input_std[i] * y[i];
        const double d = window[i] - rec;
        err += d * d;
    }
    return err;
}

// ---------------------------------------------------------------------------
// Voting and the panel sweep
// ---------------------------------------------------------------------------

VoteResult ensemble_vote(const DetectorScores& scores, const DetectorConfig& config,
                         double theta_a, bool reconstruction_enabled) {
    VoteResult out;
    struct Entry {
        const std::optional<double>* score;
        double threshold;
        bool enabled;
    };
    const Entry entries[4] = {
        {&scores.error_ratio, config.theta_e, true},
        {&scores.statistical, config.theta_s, true},
        {&scores.reconstruction, theta_a, reconstruction_enabled},
        {&scores.cusum, config.theta_c, true},
    };
    int n_enabled = 0;
    for (int i = 0; i < 4; ++i) {
        if (!entries[i].enabled) continue;
        ++n_enabled;
        if (entries[i].score->has_value()) {
            out.votes[i] = **entries[i].score > entries[i].threshold;
            out.n_votes += out.votes[i] ? 1 : 0;
        } else {
            ++out.n_abstain;
        }
    }
    // A structurally absent detector leaves the quorum untouched (three
    // detectors, still three votes needed); a transient data gap lowers the
    // quorum by one per gap, never below two.
    out.effective_quorum = std::max(2, config.vote_quorum - out.n_abstain);
    out.no_decision = n_enabled == out.n_abstain;
    out.decision = !out.no_decision && out.n_votes >= out.effective_quorum;
    return out;
}

namespace {

std::array<double, 4> scores_array(const DetectorScores& sc) {
    return {sc.error_ratio.value_or(kNan), sc.statistical.value_or(kNan),
            sc.reconstruction.value_or(kNan), sc.cusum.value_or(kNan)};
}

}  // namespace

DetectionResult detect_panel(const Panel& panel, const ForecastMatrix& forecasts,
                             const StoreModels& models, const DetectorConfig& config,
                             int start_day) {
    config.validate();
    if (models.by_store.empty()) throw ValidationError("detect_panel: no trained models");
    const int n_series = panel.n_series();
    const int f0 = forecasts.start_day;
    const int f_end = f0 + forecasts.horizon - 1;
    if (forecasts.horizon <= 0 ||
        forecasts.values.size() != static_cast<std::size_t>(n_series) * forecasts.horizon) {
        throw ValidationError("detect_panel: forecast matrix does not match the panel");
    }
    const int b_end = start_day - 8;
    const int b_start = b_end - config.baseline_window + 1;
    if (!panel.contains_day(b_start) || f0 > b_start) {
        throw ValidationError(
            "detect_panel: baseline window [" + std::to_string(b_start) + ", " +
            std::to_string(b_end) + "] must be covered by both the panel and the forecasts");
    }
    const int end_day = std::min(panel.last_day(), f_end);
    if (start_day > end_day) {
        throw ValidationError("detect_panel: start day is past the end of the forecasts");
    }

    const FeatureSpec& spec = models.by_store.begin()->second.feature_spec;
    const std::vector<FeatureKind> kinds = feature_kinds(spec);
    const std::vector<FeatureRole> roles = feature_roles(spec);
    const int n_feat = spec.n_features();
    const int n_days = end_day - f0 + 1;       // residual span
    const int feat_days = end_day - b_start + 1;  // feature span

    // Per-series precomputation: residuals, baseline statistics, baseline
    // feature columns, and the feature matrix for the sweep range.
    std::vector<std::vector<double>> residuals(n_series);
    std::vector<double> baseline_rmse(n_series), mu0(n_series), sigma(n_series);
    std::vector<std::vector<double>> features(n_series);  // row-major [feat_days x n_feat]
    // Distribution monitoring is restricted to features whose rows are
    // (approximately) independent draws under stable conditions: observed raw
    // lags, price and its short-window ratio, periodic calendar indicators,
    // and the series code.  Window-smoothed aggregates (rolling mean/std) are
    // autocorrelated by construction, the month code is a monotone clock that
    // outruns any fixed baseline, and an imputed lag is bookkeeping rather
    // than an observation — comparing those against a baseline flags the
    // passage of time, not a change in the marketplace.
    std::vector<std::vector<int>> monitored(n_series);
    std::vector<std::vector<FeatureKind>> mon_kinds(n_series);
    std::vector<std::vector<std::vector<double>>> base_sorted(n_series), base_raw(n_series);
    DetectionResult result;
    result.start_day = start_day;
    result.end_day = end_day;

    SalesFn actuals = [&panel](int s, int d) { return panel.sales_at(s, d); };
    const int W = config.ae_window;
    std::vector<double> stable_windows;
    int n_stable = 0;

    for (int s = 0; s < n_series; ++s) {
        auto& r = residuals[s];
        r.resize(n_days);
        for (int d = f0; d <= end_day; ++d) r[d - f0] = panel.sales_at(s, d) - forecasts.at(s, d);

        double sq = 0.0, sum = 0.0;
        for (int d = b_start; d <= b_end; ++d) {
            const double x = r[d - f0];
            sq += x * x;
            sum += x;
        }
        const int bn = config.baseline_window;
        baseline_rmse[s] = std::sqrt(sq / bn);
        mu0[s] = sum / bn;
        double var = 0.0;
        for (int d = b_start; d <= b_end; ++d) {
            const double x = r[d - f0] - mu0[s];
            var += x * x;
        }
        sigma[s] = std::sqrt(var / bn);
        if (!(baseline_rmse[s] > 0)) result.review_series.push_back(s);

        features[s].resize(static_cast<std::size_t>(feat_days) * n_feat);
        for (int d = b_start; d <= end_day; ++d) {
            build_features_into(panel, actuals, s, d, spec,
                                features[s].data() + static_cast<std::size_t>(d - b_start) * n_feat);
        }
        auto baseline_col = [&](int f) {
            std::vector<double> col(config.baseline_window);
            for (int d = b_start; d <= b_end; ++d) {
                col[d - b_start] = features[s][static_cast<std::size_t>(d - b_start) * n_feat + f];
            }
            return col;
        };
        for (int f = 0; f < n_feat; ++f) {
            switch (roles[f]) {
                case FeatureRole::LagValue: {
                    // Monitor only when the lag is genuinely observed over the
                    // whole baseline (its companion flag is the next column).
                    const std::vector<double> flags = baseline_col(f + 1);
                    if (std::any_of(flags.begin(), flags.end(), [](double x) { return x != 0.0; }))
                        continue;
                    break;
                }
                case FeatureRole::DayOfWeek:
                case FeatureRole::Holiday:
                case FeatureRole::Price:
                case FeatureRole::PriceRatio:
                case FeatureRole::SeriesCode:
                    break;
                default:
                    continue;  // month clock, rolling aggregates, lag flags
            }
            monitored[s].push_back(f);
            mon_kinds[s].push_back(kinds[f]);
            std::vector<double> col = baseline_col(f);
            if (kinds[f] == FeatureKind::Continuous) {
                std::vector<double> sorted = col;
                std::sort(sorted.begin(), sorted.end());
                base_sorted[s].push_back(std::move(sorted));
            } else {
                base_sorted[s].emplace_back();
            }
            base_raw[s].push_back(std::move(col));
        }

        // Stable residual windows for the reconstruction net.
        for (int end_d = b_start + W - 1; end_d <= b_end; ++end_d) {
            for (int d = end_d - W + 1; d <= end_d; ++d) stable_windows.push_back(r[d - f0]);
            ++n_stable;
        }
    }

    AutoencoderModel ae;
    AutoencoderArch arch{config.ae_window, config.ae_bottleneck, config.ae_epochs, config.ae_step,
                         config.ae_seed};
    try {
        ae = train_autoencoder(stable_windows, n_stable, arch);
        result.reconstruction_enabled = true;
    } catch (const InsufficientDataError&) {
        result.reconstruction_enabled = false;
    }
    const double theta_a = config.theta_a > 0 ? config.theta_a
                           : result.reconstruction_enabled ? ae.theta_a
                                                           : 0.0;

    std::vector<CusumState> cusum(n_series);
    for (int s = 0; s < n_series; ++s) cusum[s].mu0 = mu0[s];

    std::vector<bool> ever_flagged(n_series, false);
    std::set<int> open_scope;
    bool event_open = false;
    const bool stats_possible = config.recent_window >= 8;
    std::vector<std::vector<double>> current_cols;
    std::vector<double> window_buf(W);

    for (int t = start_day; t <= end_day; ++t) {
        std::vector<int> flagged_today;
        DetectorScores best_scores;
        VoteResult best_vote;
        for (int s = 0; s < n_series; ++s) {
            const auto& r = residuals[s];
            DetectorScores sc;

            if (baseline_rmse[s] > 0 && t - config.recent_window + 1 >= f0) {
                double sq = 0.0;
                for (int d = t - config.recent_window + 1; d <= t; ++d) {
                    sq += r[d - f0] * r[d - f0];
                }
                sc.error_ratio = std::sqrt(sq / config.recent_window) / baseline_rmse[s] - 1.0;
            }

            if (stats_possible && !monitored[s].empty() &&
                t - config.recent_window + 1 >= b_start) {
                current_cols.resize(monitored[s].size());
                for (std::size_t m = 0; m < monitored[s].size(); ++m) {
                    const int f = monitored[s][m];
                    auto& col = current_cols[m];
                    col.resize(config.recent_window);
                    for (int d = t - config.recent_window + 1; d <= t; ++d) {
                        col[d - (t - config.recent_window + 1)] =
                            features[s][static_cast<std::size_t>(d - b_start) * n_feat + f];
                    }
                }
                sc.statistical = statistical_score_presorted(base_sorted[s], base_raw[s],
                                                             current_cols, mon_kinds[s]);
            }

            if (result.reconstruction_enabled && t - W + 1 >= f0) {
                for (int d = t - W + 1; d <= t; ++d) window_buf[d - (t - W + 1)] = r[d - f0];
                sc.reconstruction = reconstruction_error(ae, window_buf);
            }

            if (sigma[s] > 0) {
                cusum[s] = cusum_update(cusum[s], r[t - f0], config.cusum_k * sigma[s]);
                sc.cusum = std::max(cusum[s].pos, cusum[s].neg) / sigma[s];
            }

            const VoteResult vote =
                ensemble_vote(sc, config, theta_a, result.reconstruction_enabled);
            if (vote.decision) {
                flagged_today.push_back(s);
                if (!ever_flagged[s]) {
                    ever_flagged[s] = true;
                    result.first_flags.push_back({s, t, scores_array(sc), vote.votes});
                }
                if (flagged_today.size() == 1 || vote.n_votes > best_vote.n_votes) {
                    best_scores = sc;
                    best_vote = vote;
                }
            }
        }

        if (event_open) {
            open_scope.insert(flagged_today.begin(), flagged_today.end());
        } else if (static_cast<double>(flagged_today.size()) >
                   config.panel_flag_fraction * n_series) {
            event_open = true;
            open_scope.insert(flagged_today.begin(), flagged_today.end());
            DriftEvent ev;
            ev.day = t;
            ev.scores = scores_array(best_scores);
            ev.votes = best_vote.votes;
            ev.decision = true;
            result.events.push_back(ev);
        }
    }

    if (event_open) {
        result.events.back().series_scope.assign(open_scope.begin(), open_scope.end());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json score_or_null(double x) {
    if (std::isnan(x)) return nullptr;
    return x;
}

}  // namespace

void write_events_log(const std::vector<DriftEvent>& events, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open events log for writing: " + path);
    for (const DriftEvent& ev : events) {
        nlohmann::ordered_json j;
        j["day"] = ev.day;
        j["scope_size"] = ev.series_scope.size();
        j["series_scope"] = ev.series_scope;
        j["scores"] = {{"error_ratio", score_or_null(ev.scores[0])},
                       {"statistical", score_or_null(ev.scores[1])},
                       {"reconstruction", score_or_null(ev.scores[2])},
                       {"cusum", score_or_null(ev.scores[3])}};
        j["votes"] = ev.votes;
        j["decision"] = ev.decision;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("failed writing events log: " + path);
}

std::vector<DriftEvent> read_events_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open events log: " + path);
    std::vector<DriftEvent> events;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            DriftEvent ev;
            ev.day = j.at("day").get<int>();
            ev.series_scope = j.at("series_scope").get<std::vector<int>>();
            const auto& sc = j.at("scores");
            const char* names[4] = {"error_ratio", "statistical", "reconstruction", "cusum"};
            for (int i = 0; i < 4; ++i) {
                ev.scores[i] = sc.at(names[i]).is_null() ? kNan : sc.at(names[i]).get<double>();
            }
            const auto votes = j.at("votes").get<std::vector<bool>>();
            if (votes.size() != 4) throw SchemaError("events log: expected 4 votes");
            for (int i = 0; i < 4; ++i) ev.votes[i] = votes[i];
            ev.decision = j.at("decision").get<bool>();
            events.push_back(std::move(ev));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("events log " + path + " line " + std::to_string(line_no) + ": " +
                              e.what());
        }
    }
    return events;
}

}  // namespace driftguard
