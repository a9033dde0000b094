#include "driftguard/metrics.hpp"

#include <cmath>

#include "driftguard/errors.hpp"

namespace driftguard {

namespace {
void check_shapes(const std::vector<double>& a, const std::vector<double>& f, const char* name) {
    if (a.empty()) throw ValidationError(std::string(name) + ": empty input");
    if (a.size() != f.size()) {
        throw ValidationError(std::string(name) + ": shapes differ (" + std::to_string(a.size()) +
                              " vs " + std::to_string(f.size()) + ")");
    }
}
}  // namespace

double wmape(const std::vector<double>& actuals, const std::vector<double>& forecasts) {
    check_shapes(actuals, forecasts, "wmape");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        num += std::abs(actuals[i] - forecasts[i]);
        den += actuals[i];
    }
    if (!(den > 0.0)) {
        throw UndefinedMetricError("wmape undefined: actuals sum to " + std::to_string(den));
    }
    return num / den;
}

double mae(const std::vector<double>& actuals, const std::vector<double>& forecasts) {
    check_shapes(actuals, forecasts, "mae");
    double num = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) num += std::abs(actuals[i] - forecasts[i]);
    return num / actuals.size();
}

double rmse(const std::vector<double>& actuals, const std::vector<double>& forecasts) {
    check_shapes(actuals, forecasts, "rmse");
    double num = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        const double e = actuals[i] - forecasts[i];
        num += e * e;
    }
    return std::sqrt(num / actuals.size());
}

MetricReport evaluate_forecasts(const Panel& panel, const ForecastMatrix& forecasts) {
    const int n_series = panel.n_series();
    if (static_cast<int>(forecasts.values.size()) != n_series * forecasts.horizon) {
        throw ValidationError("evaluate_forecasts: matrix does not match panel series count");
    }
    const int last = forecasts.start_day + forecasts.horizon - 1;
    if (!panel.contains_day(forecasts.start_day) || !panel.contains_day(last)) {
        throw ValidationError("evaluate_forecasts: forecast days outside panel");
    }

    MetricReport report;
    std::vector<double> all_actual, all_forecast;
    all_actual.reserve(forecasts.values.size());
    all_forecast.reserve(forecasts.values.size());
    for (int s = 0; s < n_series; ++s) {
        std::vector<double> a(forecasts.horizon), f(forecasts.horizon);
        double actual_sum = 0.0;
        for (int h = 0; h < forecasts.horizon; ++h) {
            a[h] = panel.sales_at(s, forecasts.start_day + h);
            f[h] = forecasts.values[static_cast<std::size_t>(s) * forecasts.horizon + h];
            actual_sum += a[h];
        }
        if (actual_sum > 0.0) report.per_series_wmape[s] = wmape(a, f);
        all_actual.insert(all_actual.end(), a.begin(), a.end());
        all_forecast.insert(all_forecast.end(), f.begin(), f.end());
    }
    report.wmape = wmape(all_actual, all_forecast);
    report.mae = mae(all_actual, all_forecast);
    report.rmse = rmse(all_actual, all_forecast);
    return report;
}

}  // namespace driftguard
