#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "driftguard/panel.hpp"

namespace driftguard {

enum class DriftKind {
    SeasonalityShift,  // y' = y * (1 - seasonal_factor * holiday_indicator)
    TrendChange,       // y' = y - beta * (t - t0)
    LevelShock,        // y' = alpha * y
    VolatilitySpike,   // y' = ybar + gamma * (y - ybar), ybar = post-onset mean
    Hierarchical,      // level shock restricted to one state's stores
};

const char* to_string(DriftKind kind);
DriftKind drift_kind_from_string(const std::string& name);

struct DriftScenario {
    DriftKind kind = DriftKind::LevelShock;
    int onset_day = 0;
    double seasonal_factor = 0.4;
    double beta = 0.0;  // 0 selects per-series calibration: 25% of the series'
                        // post-onset mean lost by the final panel day
    double alpha = 0.8;
    double gamma = 3.0;
    double affected_fraction = 0.2;
    std::string affected_region;  // state label; required by the hierarchical kind
    std::uint64_t seed = 0;

    void validate(const Panel& panel) const;
    bool operator==(const DriftScenario&) const = default;
};

// Ground truth of what was injected; evaluation scores detectors against it.
struct InjectionRecord {
    std::vector<int> affected_series;  // ascending
    int onset_day = 0;
    DriftKind kind = DriftKind::LevelShock;
    DriftScenario params;

    bool operator==(const InjectionRecord&) const = default;
};

/// Uniform sample without replacement of max(1, round(fraction * pool)) series.
/// A non-empty region restricts the pool to series of stores in that state
/// (and the size is a fraction of that pool); an unknown region is an error.
std::vector<int> sample_affected(const Panel& panel, double fraction, std::uint64_t seed,
                                 const std::string& region = "");

/// Applies the scenario's transformation to every affected series from
/// onset_day through the end of the panel, clipping results at 0.  All other
/// cells are bit-identical to the input; the input panel is never modified.
std::pair<Panel, InjectionRecord> inject(const Panel& panel, const DriftScenario& scenario);

/// JSON persistence for the ground-truth record.
void save_injection(const InjectionRecord& record, const std::string& path);
InjectionRecord load_injection(const std::string& path);

}  // namespace driftguard
