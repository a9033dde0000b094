#include "driftguard/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "driftguard/dates.hpp"
#include "driftguard/rng.hpp"

namespace driftguard {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
// 2020-01-06 is a Monday, so day_index 1 has day_of_week 0.
const long kStartEpochDay = days_from_civil(2020, 1, 6);
}  // namespace

void SynthConfig::validate() const {
    if (n_stores < 1 || n_states < 1 || n_skus_per_store < 1) {
        throw ValidationError("synthetic config: counts must be positive");
    }
    if (n_states > n_stores) throw ValidationError("synthetic config: n_states > n_stores");
    if (n_days < 60) throw ValidationError("synthetic config: n_days must be >= 60");
    if (weekly_amplitude < 0 || annual_amplitude < 0) {
        throw ValidationError("synthetic config: amplitudes must be >= 0");
    }
    if (weekly_amplitude + annual_amplitude >= 1.0) {
        throw ValidationError("synthetic config: weekly + annual amplitude must stay below 1");
    }
    if (annual_period_days < 2) throw ValidationError("synthetic config: annual_period_days must be >= 2");
    if (!(base_demand_mean > 0)) throw ValidationError("synthetic config: base_demand_mean must be > 0");
    if (!(noise_dispersion > 0)) throw ValidationError("synthetic config: noise_dispersion must be > 0");
}

Panel generate_synthetic(const SynthConfig& config) {
    config.validate();
    const int n_series = config.n_stores * config.n_skus_per_store;
    const int n_days = config.n_days;

    std::vector<CalendarDay> calendar(n_days);
    for (int d = 0; d < n_days; ++d) {
        CalendarDay& day = calendar[d];
        day.day_index = d + 1;
        const long epoch = kStartEpochDay + d;
        day.date = iso_date_from_days(epoch);
        day.day_of_week = weekday_from_days(epoch);
        int y, m, dd;
        civil_from_days(epoch, y, m, dd);
        day.month = m;
        if (config.holiday_every_n_days > 0 && (d + 1) % config.holiday_every_n_days == 0) {
            day.is_holiday = true;
            day.event_name = "SYNTH_HOLIDAY";
        }
    }

    std::vector<SeriesKey> keys;
    keys.reserve(n_series);
    char buf[32];
    for (int t = 0; t < config.n_stores; ++t) {
        const int state = static_cast<int>((static_cast<long>(t) * config.n_states) / config.n_stores);
        for (int i = 0; i < config.n_skus_per_store; ++i) {
            SeriesKey k;
            std::snprintf(buf, sizeof buf, "SKU%03d", i);
            k.sku_id = buf;
            std::snprintf(buf, sizeof buf, "T%02d", t);
            k.store_id = buf;
            std::snprintf(buf, sizeof buf, "S%d", state);
            k.state_id = buf;
            const int dept = i % 6;
            std::snprintf(buf, sizeof buf, "DEPT_%d", dept);
            k.department = buf;
            std::snprintf(buf, sizeof buf, "CAT_%d", dept / 2);
            k.category = buf;
            keys.push_back(std::move(k));
        }
    }

    std::vector<double> sales(static_cast<std::size_t>(n_series) * n_days);
    std::vector<double> prices(static_cast<std::size_t>(n_series) * n_days);

    // One sequential stream; draw order is fixed (per series: price base,
    // then weekly price steps, then daily demand) so output is reproducible.
    std::mt19937_64 rng = make_engine(config.seed, 0);
    std::normal_distribution<double> unit_normal(0.0, 1.0);

    for (int s = 0; s < n_series; ++s) {
        const double base_price = 2.0 * std::exp(0.4 * unit_normal(rng)) + 0.5;
        // Listed price wanders slowly week to week; the realized price adds
        // day-level scatter (promotions, rounding) so that short and long
        // price windows overlap in distribution instead of separating
        // whenever the walk moves.
        double level = base_price;
        for (int d = 0; d < n_days; ++d) {
            if (d > 0 && d % 7 == 0) {
                level *= std::exp(0.002 * unit_normal(rng));
                if (level < 0.05) level = 0.05;
            }
            double price = level * std::exp(0.03 * unit_normal(rng));
            if (price < 0.05) price = 0.05;
            prices[static_cast<std::size_t>(s) * n_days + d] = price;
        }
        for (int d = 0; d < n_days; ++d) {
            const CalendarDay& day = calendar[d];
            const double weekly = 1.0 + config.weekly_amplitude * std::sin(kTwoPi * day.day_of_week / 7.0);
            const double annual = 1.0 + config.annual_amplitude *
                                            std::sin(kTwoPi * d / static_cast<double>(config.annual_period_days));
            const double mu = config.base_demand_mean * weekly * annual;
            std::gamma_distribution<double> gamma(config.noise_dispersion, mu / config.noise_dispersion);
            const double lambda = gamma(rng);
            std::poisson_distribution<long> poisson(lambda);
            sales[static_cast<std::size_t>(s) * n_days + d] = static_cast<double>(poisson(rng));
        }
    }

    return Panel(std::move(keys), std::move(calendar), std::move(sales), std::move(prices));
}

}  // namespace driftguard
