#pragma once

#include <cstdint>

#include "driftguard/panel.hpp"

namespace driftguard {

// Desk-scale synthetic panel generator. Stores are assigned to states in
// contiguous blocks; every store carries the same SKU catalog, with SKU i in
// department DEPT_{i%6} and category CAT_{dept/2}.
struct SynthConfig {
    int n_stores = 8;
    int n_states = 2;
    int n_skus_per_store = 25;
    int n_days = 800;
    double weekly_amplitude = 0.3;
    int annual_period_days = 364;  // lag-364 then aligns with weekly phase
    // Kept modest: monitoring baselines are set once, in absolute units, at
    // one point of the year.  Because noise scales with level, a large annual
    // swing makes residual spread and lag distributions months later drift
    // away from that baseline even with a perfectly healthy model; ±5% keeps
    // a fixed baseline valid across seasons while still exercising lag-364
    // and month features.
    double annual_amplitude = 0.05;
    // Defaults model high-volume SKUs (coefficient of variation ~12%): noisy
    // enough that forecasts are imperfect, stable enough that a 20% demand
    // shift stands out from noise within a monitoring window.
    double base_demand_mean = 100.0;
    double noise_dispersion = 200.0;  // negative-binomial size r; var = mu + mu^2/r
    int holiday_every_n_days = 14;   // <= 0 disables holidays
    std::uint64_t seed = 1;

    void validate() const;
};

// Pure function of the config (seed included): counts from a gamma-Poisson
// negative binomial around a seasonal mean, prices as slow weekly random
// walks. Sales are non-negative integers; prices strictly positive.
Panel generate_synthetic(const SynthConfig& config);

}  // namespace driftguard
