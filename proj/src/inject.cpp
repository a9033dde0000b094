#include "driftguard/inject.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "driftguard/errors.hpp"
#include "driftguard/rng.hpp"

namespace driftguard {

const char* to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::SeasonalityShift: return "seasonality_shift";
        case DriftKind::TrendChange: return "trend_change";
        case DriftKind::LevelShock: return "level_shock";
        case DriftKind::VolatilitySpike: return "volatility_spike";
        case DriftKind::Hierarchical: return "hierarchical";
    }
    return "?";
}

DriftKind drift_kind_from_string(const std::string& name) {
    if (name == "seasonality_shift") return DriftKind::SeasonalityShift;
    if (name == "trend_change") return DriftKind::TrendChange;
    if (name == "level_shock") return DriftKind::LevelShock;
    if (name == "volatility_spike") return DriftKind::VolatilitySpike;
    if (name == "hierarchical") return DriftKind::Hierarchical;
    throw ValidationError("unknown drift kind: \"" + name + "\"");
}

void DriftScenario::validate(const Panel& panel) const {
    if (!panel.contains_day(onset_day) || onset_day >= panel.last_day()) {
        throw ValidationError("drift scenario: onset_day " + std::to_string(onset_day) +
                              " must lie inside the panel with at least one later day");
    }
    if (!(alpha > 0.0)) throw ValidationError("drift scenario: alpha must be > 0");
    if (!(gamma > 0.0)) throw ValidationError("drift scenario: gamma must be > 0");
    if (!(affected_fraction > 0.0) || affected_fraction > 1.0) {
        throw ValidationError("drift scenario: affected_fraction must be in (0, 1]");
    }
    if (seasonal_factor < 0.0) {
        throw ValidationError("drift scenario: seasonal_factor must be >= 0");
    }
    if (kind == DriftKind::Hierarchical && affected_region.empty()) {
        throw ValidationError("drift scenario: hierarchical kind needs affected_region");
    }
}

std::vector<int> sample_affected(const Panel& panel, double fraction, std::uint64_t seed,
                                 const std::string& region) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ValidationError("sample_affected: fraction must be in (0, 1]");
    }
    std::vector<int> pool;
    for (int s = 0; s < panel.n_series(); ++s) {
        if (region.empty() || panel.key(s).state_id == region) pool.push_back(s);
    }
    if (pool.empty()) {
        throw ValidationError("sample_affected: no stores in state \"" + region + "\"");
    }
    const std::size_t k = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(fraction * static_cast<double>(pool.size()))));

    std::mt19937_64 rng = make_engine(seed, 1);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + bounded_uniform(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::pair<Panel, InjectionRecord> inject(const Panel& panel, const DriftScenario& scenario) {
    scenario.validate(panel);
    const std::string region =
        scenario.kind == DriftKind::Hierarchical ? scenario.affected_region : std::string();
    std::vector<int> affected =
        sample_affected(panel, scenario.affected_fraction, scenario.seed, region);

    const int t0 = scenario.onset_day;
    const int last = panel.last_day();
    const int n_days = panel.n_days();
    std::vector<double> sales = panel.sales_data();

    auto cell = [&](int series, int day) -> double& {
        return sales[static_cast<std::size_t>(series) * n_days + (day - panel.first_day())];
    };

    for (int s : affected) {
        // Post-onset mean of the original values, used by the volatility
        // formula and by automatic trend calibration.
        double post_sum = 0.0;
        for (int t = t0; t <= last; ++t) post_sum += panel.sales_at(s, t);
        const double post_mean = post_sum / (last - t0 + 1);

        for (int t = t0; t <= last; ++t) {
            const double y = panel.sales_at(s, t);
            double v = y;
            switch (scenario.kind) {
                case DriftKind::SeasonalityShift: {
                    const double s_t = panel.day(t).is_holiday ? 1.0 : 0.0;
                    v = y * (1.0 - scenario.seasonal_factor * s_t);
                    break;
                }
                case DriftKind::TrendChange: {
                    const double beta = scenario.beta != 0.0
                                            ? scenario.beta
                                            : 0.25 * post_mean / (last - t0);
                    v = y - beta * (t - t0);
                    break;
                }
                case DriftKind::LevelShock:
                case DriftKind::Hierarchical:
                    v = scenario.alpha * y;
                    break;
                case DriftKind::VolatilitySpike:
                    v = post_mean + scenario.gamma * (y - post_mean);
                    break;
            }
            cell(s, t) = std::max(0.0, v);
        }
    }

    InjectionRecord record;
    record.affected_series = std::move(affected);
    record.onset_day = t0;
    record.kind = scenario.kind;
    record.params = scenario;
    return {panel.with_sales(std::move(sales)), std::move(record)};
}

void save_injection(const InjectionRecord& record, const std::string& path) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(record.kind);
    j["onset_day"] = record.onset_day;
    j["affected_series"] = record.affected_series;
    nlohmann::ordered_json params;
    params["seasonal_factor"] = record.params.seasonal_factor;
    params["beta"] = record.params.beta;
    params["alpha"] = record.params.alpha;
    params["gamma"] = record.params.gamma;
    params["affected_fraction"] = record.params.affected_fraction;
    params["affected_region"] = record.params.affected_region;
    params["seed"] = record.params.seed;
    j["params"] = std::move(params);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

InjectionRecord load_injection(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("injection record: bad JSON in " + path + ": " + e.what());
    }
    try {
        InjectionRecord record;
        record.kind = drift_kind_from_string(j.at("kind").get<std::string>());
        record.onset_day = j.at("onset_day").get<int>();
        record.affected_series = j.at("affected_series").get<std::vector<int>>();
        const auto& params = j.at("params");
        record.params.kind = record.kind;
        record.params.onset_day = record.onset_day;
        record.params.seasonal_factor = params.at("seasonal_factor").get<double>();
        record.params.beta = params.at("beta").get<double>();
        record.params.alpha = params.at("alpha").get<double>();
        record.params.gamma = params.at("gamma").get<double>();
        record.params.affected_fraction = params.at("affected_fraction").get<double>();
        record.params.affected_region = params.at("affected_region").get<std::string>();
        record.params.seed = params.at("seed").get<std::uint64_t>();
        if (record.affected_series.empty()) {
            throw SchemaError("injection record: empty affected_series");
        }
        return record;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("injection record: missing or mistyped field in " + path + ": " +
                          e.what());
    }
}

}  // namespace driftguard
