#include "driftguard/forecast.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "driftguard/csv.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

const GbtModel& StoreModels::for_series(const Panel& panel, int series) const {
    const std::string& store = panel.key(series).store_id;
    auto it = by_store.find(store);
    if (it == by_store.end()) {
        throw ValidationError("no model for store " + store);
    }
    return it->second;
}

StoreModels train_store_models(const Panel& panel, int start_day, int end_day,
                               const FeatureSpec& spec, const GbtHyper& hyper) {
    spec.validate();
    hyper.validate();
    if (!panel.contains_day(start_day) || !panel.contains_day(end_day) || start_day > end_day) {
        throw ValidationError("train_store_models: window [" + std::to_string(start_day) + ", " +
                              std::to_string(end_day) + "] outside panel days");
    }

    std::map<std::string, std::vector<int>> series_by_store;
    for (int s = 0; s < panel.n_series(); ++s) {
        series_by_store[panel.key(s).store_id].push_back(s);
    }

    const int n_features = spec.n_features();
    const std::vector<std::string> names = spec.feature_names();
    SalesFn plain = [&panel](int s, int d) { return panel.sales_at(s, d); };

    StoreModels models;
    for (const auto& [store, series_list] : series_by_store) {
        const int n_days = end_day - start_day + 1;
        const std::size_t n_rows = static_cast<std::size_t>(series_list.size()) * n_days;
        std::vector<double> X(n_rows * n_features);
        std::vector<double> y;
        y.reserve(n_rows);
        std::size_t row = 0;
        for (int s : series_list) {
            for (int day = start_day; day <= end_day; ++day, ++row) {
                build_features_into(panel, plain, s, day, spec, &X[row * n_features]);
                y.push_back(panel.sales_at(s, day));
            }
        }
        GbtModel model = train_gbt(X, n_features, y, hyper);
        model.feature_spec = spec;
        model.feature_names = names;
        model.trained_start = start_day;
        model.trained_end = end_day;
        models.by_store.emplace(store, std::move(model));
    }
    return models;
}

ForecastMatrix forecast_panel(const StoreModels& models, const Panel& panel, int start_day,
                              int horizon_days) {
    if (horizon_days < 1) throw ValidationError("forecast_panel: horizon must be >= 1");
    if (!panel.contains_day(start_day) || !panel.contains_day(start_day + horizon_days - 1)) {
        throw ValidationError("forecast_panel: days [" + std::to_string(start_day) + ", " +
                              std::to_string(start_day + horizon_days - 1) +
                              "] exceed the panel calendar");
    }
    if (models.by_store.empty()) throw ValidationError("forecast_panel: no models");
    const FeatureSpec& spec = models.by_store.begin()->second.feature_spec;
    for (const auto& [store, model] : models.by_store) {
        if (!(model.feature_spec == spec)) {
            throw ValidationError("forecast_panel: store models disagree on feature layout");
        }
    }

    ForecastMatrix fm;
    fm.start_day = start_day;
    fm.horizon = horizon_days;
    fm.values.assign(static_cast<std::size_t>(panel.n_series()) * horizon_days, 0.0);

    // Before the forecast start, features read actual history; at and after
    // it, they read the forecasts made on earlier steps.
    SalesFn overlay = [&](int s, int d) {
        return d < start_day ? panel.sales_at(s, d) : fm.at(s, d);
    };

    std::vector<double> x(spec.n_features());
    for (int h = 0; h < horizon_days; ++h) {
        const int day = start_day + h;
        for (int s = 0; s < panel.n_series(); ++s) {
            const GbtModel& model = models.for_series(panel, s);
            build_features_into(panel, overlay, s, day, spec, x.data());
            fm.at(s, day) = std::max(0.0, model.predict_row(x.data()));
        }
    }
    return fm;
}

ForecastMatrix rolling_forecast(const StoreModels& models, const Panel& panel, int start_day,
                                int end_day, int anchor_step) {
    if (anchor_step < 1) {
        throw ValidationError("rolling_forecast: anchor_step must be >= 1");
    }
    if (end_day < start_day) {
        throw ValidationError("rolling_forecast: end_day precedes start_day");
    }
    ForecastMatrix fm;
    fm.start_day = start_day;
    fm.horizon = end_day - start_day + 1;
    fm.values.assign(static_cast<std::size_t>(panel.n_series()) * fm.horizon, 0.0);
    // Each block anchored at `a` sees only actual sales before `a`, which is
    // precisely forecast_panel's contract; stitching blocks therefore never
    // feeds one block's forecasts into the next.
    for (int a = start_day; a <= end_day; a += anchor_step) {
        const int len = std::min(anchor_step, end_day - a + 1);
        ForecastMatrix block = forecast_panel(models, panel, a, len);
        for (int s = 0; s < panel.n_series(); ++s) {
            for (int d = a; d < a + len; ++d) fm.at(s, d) = block.at(s, d);
        }
    }
    return fm;
}

std::vector<std::vector<double>> reconcile_bottom_up(const ForecastMatrix& leaf_forecasts,
                                                     const Hierarchy& hierarchy) {
    const int n_series = hierarchy.n_series();
    if (static_cast<int>(leaf_forecasts.values.size()) !=
        n_series * leaf_forecasts.horizon) {
        throw ValidationError("reconcile_bottom_up: leaf forecasts do not cover every series");
    }
    const int n_nodes = static_cast<int>(hierarchy.nodes().size());
    std::vector<std::vector<double>> out(n_nodes);
    std::vector<char> done(n_nodes, 0);
    // Children first, parents as exact child-order sums.
    auto fill = [&](auto&& self, int id) -> void {
        if (done[id]) return;
        const HierarchyNode& node = hierarchy.node(id);
        std::vector<double>& row = out[id];
        if (node.children.empty()) {
            const int series = node.leaf_series.at(0);
            row.resize(leaf_forecasts.horizon);
            for (int h = 0; h < leaf_forecasts.horizon; ++h) {
                row[h] = leaf_forecasts.values[static_cast<std::size_t>(series) *
                                                   leaf_forecasts.horizon + h];
            }
        } else {
            row.assign(leaf_forecasts.horizon, 0.0);
            for (int c : node.children) {
                self(self, c);
                for (int h = 0; h < leaf_forecasts.horizon; ++h) row[h] += out[c][h];
            }
        }
        done[id] = 1;
    };
    for (int id = 0; id < n_nodes; ++id) fill(fill, id);
    return out;
}

void save_forecasts(const ForecastMatrix& forecasts, const std::string& path) {
    if (forecasts.horizon < 0 ||
        (forecasts.horizon > 0 && forecasts.values.size() % forecasts.horizon != 0)) {
        throw ValidationError("save_forecasts: values size not a multiple of horizon");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int n_series =
        forecasts.horizon > 0 ? static_cast<int>(forecasts.values.size()) / forecasts.horizon : 0;
    out << "driftguard-forecasts v1\n";
    out << "start_day=" << forecasts.start_day << " horizon=" << forecasts.horizon
        << " series=" << n_series << '\n';
    for (int s = 0; s < n_series; ++s) {
        out << s;
        for (int h = 0; h < forecasts.horizon; ++h) {
            out << ','
                << format_double(forecasts.values[static_cast<std::size_t>(s) * forecasts.horizon + h]);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

ForecastMatrix load_forecasts(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "driftguard-forecasts v1") {
        throw SchemaError("load_forecasts: bad banner in " + path);
    }
    if (!std::getline(in, line)) throw SchemaError("load_forecasts: missing header in " + path);
    int start_day = 0;
    int horizon = -1;
    int n_series = -1;
    {
        std::istringstream hs(line);
        std::string tok;
        while (hs >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) throw SchemaError("load_forecasts: bad header token " + tok);
            const std::string key = tok.substr(0, eq);
            const long value = parse_long(tok.substr(eq + 1));
            if (key == "start_day") start_day = static_cast<int>(value);
            else if (key == "horizon") horizon = static_cast<int>(value);
            else if (key == "series") n_series = static_cast<int>(value);
            else throw SchemaError("load_forecasts: unknown header key " + key);
        }
    }
    if (horizon < 0 || n_series < 0) {
        throw SchemaError("load_forecasts: header missing horizon or series count");
    }
    ForecastMatrix m;
    m.start_day = start_day;
    m.horizon = horizon;
    m.values.assign(static_cast<std::size_t>(n_series) * horizon, 0.0);
    for (int s = 0; s < n_series; ++s) {
        if (!std::getline(in, line)) {
            throw SchemaError("load_forecasts: truncated at row " + std::to_string(s));
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::vector<std::string> cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != horizon + 1) {
            throw SchemaError("load_forecasts: row " + std::to_string(s) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(horizon + 1));
        }
        if (parse_long(cells[0]) != s) {
            throw SchemaError("load_forecasts: row index mismatch at row " + std::to_string(s));
        }
        for (int h = 0; h < horizon; ++h) {
            m.values[static_cast<std::size_t>(s) * horizon + h] = parse_double(cells[h + 1]);
        }
    }
    return m;
}

}  // namespace driftguard
