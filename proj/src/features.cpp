#include "driftguard/features.hpp"

#include <algorithm>
#include <cmath>

#include "driftguard/errors.hpp"

namespace driftguard {

void FeatureSpec::validate() const {
    auto check = [](const std::vector<int>& xs, const char* what) {
        if (xs.empty()) throw ValidationError(std::string("feature spec: empty ") + what);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] < 1) throw ValidationError(std::string("feature spec: ") + what + " must be >= 1");
            if (i > 0 && xs[i] <= xs[i - 1]) {
                throw ValidationError(std::string("feature spec: ") + what +
                                      " must be strictly increasing");
            }
        }
    };
    check(lag_days, "lag_days");
    check(rolling_windows, "rolling_windows");
}

std::vector<std::string> FeatureSpec::feature_names() const {
    std::vector<std::string> names;
    for (int d : lag_days) {
        names.push_back("lag_" + std::to_string(d));
        names.push_back("lag_" + std::to_string(d) + "_missing");
    }
    if (include_calendar) {
        for (int dow = 0; dow < 7; ++dow) names.push_back("dow_" + std::to_string(dow));
        names.push_back("month");
        names.push_back("is_holiday");
    }
    if (include_price) {
        names.push_back("price");
        names.push_back("price_ratio_28d");
    }
    for (int w : rolling_windows) {
        names.push_back("roll_mean_" + std::to_string(w));
        names.push_back("roll_std_" + std::to_string(w));
    }
    names.push_back("series_id");
    return names;
}

std::vector<FeatureKind> feature_kinds(const FeatureSpec& spec) {
    std::vector<FeatureKind> kinds;
    for (std::size_t i = 0; i < spec.lag_days.size(); ++i) {
        kinds.push_back(FeatureKind::Continuous);   // lag value
        kinds.push_back(FeatureKind::Categorical);  // missing flag
    }
    if (spec.include_calendar) {
        for (int dow = 0; dow < 7; ++dow) kinds.push_back(FeatureKind::Categorical);
        kinds.push_back(FeatureKind::Categorical);  // month
        kinds.push_back(FeatureKind::Categorical);  // holiday flag
    }
    if (spec.include_price) {
        kinds.push_back(FeatureKind::Continuous);  // price
        kinds.push_back(FeatureKind::Continuous);  // price ratio
    }
    for (std::size_t i = 0; i < spec.rolling_windows.size(); ++i) {
        kinds.push_back(FeatureKind::Continuous);  // rolling mean
        kinds.push_back(FeatureKind::Continuous);  // rolling std
    }
    kinds.push_back(FeatureKind::Categorical);  // series code
    return kinds;
}

std::vector<FeatureRole> feature_roles(const FeatureSpec& spec) {
    std::vector<FeatureRole> roles;
    for (std::size_t i = 0; i < spec.lag_days.size(); ++i) {
        roles.push_back(FeatureRole::LagValue);
        roles.push_back(FeatureRole::LagMissingFlag);
    }
    if (spec.include_calendar) {
        for (int dow = 0; dow < 7; ++dow) roles.push_back(FeatureRole::DayOfWeek);
        roles.push_back(FeatureRole::Month);
        roles.push_back(FeatureRole::Holiday);
    }
    if (spec.include_price) {
        roles.push_back(FeatureRole::Price);
        roles.push_back(FeatureRole::PriceRatio);
    }
    for (std::size_t i = 0; i < spec.rolling_windows.size(); ++i) {
        roles.push_back(FeatureRole::RollingMean);
        roles.push_back(FeatureRole::RollingStd);
    }
    roles.push_back(FeatureRole::SeriesCode);
    return roles;
}

void build_features_into(const Panel& panel, const SalesFn& sales, int series, int day,
                         const FeatureSpec& spec, double* out) {
    if (day <= 0) throw ValidationError("build_features: day must be >= 1");
    if (series < 0 || series >= panel.n_series()) {
        throw ValidationError("build_features: series out of range");
    }
    const int first = panel.first_day();

    // Trailing mean of all available history before `day`, used as the
    // stand-in for lags that reach past the start of the panel.  Computed
    // lazily since most rows have every lag available.
    double trailing_mean = 0.0;
    bool trailing_ready = false;
    auto get_trailing_mean = [&]() {
        if (!trailing_ready) {
            double sum = 0.0;
            int n = 0;
            for (int d = first; d < day; ++d, ++n) sum += sales(series, d);
            trailing_mean = n > 0 ? sum / n : 0.0;
            trailing_ready = true;
        }
        return trailing_mean;
    };

    int k = 0;
    for (int lag : spec.lag_days) {
        const int d = day - lag;
        if (d >= first) {
            out[k++] = sales(series, d);
            out[k++] = 0.0;
        } else {
            out[k++] = get_trailing_mean();
            out[k++] = 1.0;
        }
    }

    if (spec.include_calendar) {
        const CalendarDay& cal = panel.day(day);
        for (int dow = 0; dow < 7; ++dow) out[k++] = cal.day_of_week == dow ? 1.0 : 0.0;
        out[k++] = static_cast<double>(cal.month);
        out[k++] = cal.is_holiday ? 1.0 : 0.0;
    }

    if (spec.include_price) {
        const double price = panel.price_at(series, day);
        double sum = 0.0;
        int n = 0;
        for (int d = std::max(first, day - 27); d <= day; ++d, ++n) sum += panel.price_at(series, d);
        out[k++] = price;
        out[k++] = price / (sum / n);
    }

    for (int w : spec.rolling_windows) {
        const int lo = std::max(first, day - w);
        const int hi = day - 1;
        if (hi < lo) {
            out[k++] = 0.0;
            out[k++] = 0.0;
            continue;
        }
        double sum = 0.0, mn = sales(series, lo), mx = mn;
        for (int d = lo; d <= hi; ++d) {
            const double v = sales(series, d);
            sum += v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        const int n = hi - lo + 1;
        const double mean = sum / n;
        double variance = 0.0;
        if (mx > mn) {
            for (int d = lo; d <= hi; ++d) {
                const double diff = sales(series, d) - mean;
                variance += diff * diff;
            }
            variance /= n;
        }
        out[k++] = mx > mn ? mean : mn;  // constant window: mean is that value exactly
        out[k++] = std::sqrt(variance);
    }

    out[k++] = static_cast<double>(series);
}

FeatureVector build_features(const Panel& panel, int series, int day, const FeatureSpec& spec) {
    spec.validate();
    FeatureVector fv;
    fv.names = spec.feature_names();
    fv.values.resize(fv.names.size());
    SalesFn plain = [&panel](int s, int d) { return panel.sales_at(s, d); };
    build_features_into(panel, plain, series, day, spec, fv.values.data());
    return fv;
}

}  // namespace driftguard
