#pragma once

#include <map>
#include <vector>

#include "driftguard/forecast.hpp"
#include "driftguard/panel.hpp"

namespace driftguard {

/// Weighted MAPE: sum |y - yhat| / sum y.  Throws UndefinedMetricError when
/// the actuals sum to zero rather than returning a silent 0.
double wmape(const std::vector<double>& actuals, const std::vector<double>& forecasts);

double mae(const std::vector<double>& actuals, const std::vector<double>& forecasts);
double rmse(const std::vector<double>& actuals, const std::vector<double>& forecasts);

struct MetricReport {
    double wmape = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    // Series whose window actuals sum to zero are omitted (their WMAPE is
    // undefined) rather than reported as zero.
    std::map<int, double> per_series_wmape;
};

/// Scores a forecast matrix against the panel's actual sales over the
/// matrix's own day range.
MetricReport evaluate_forecasts(const Panel& panel, const ForecastMatrix& forecasts);

}  // namespace driftguard
