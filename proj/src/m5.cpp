#include "driftguard/m5.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "driftguard/csv.hpp"
#include "driftguard/dates.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

namespace {

std::string pick_sales_file(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path validation = fs::path(dir) / "sales_train_validation.csv";
    if (fs::exists(validation)) return validation.string();
    const fs::path evaluation = fs::path(dir) / "sales_train_evaluation.csv";
    if (fs::exists(evaluation)) return evaluation.string();
    throw IoError("no sales_train_validation.csv or sales_train_evaluation.csv in " + dir);
}

}  // namespace

Panel load_m5_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    return load_m5(pick_sales_file(dir), (fs::path(dir) / "calendar.csv").string(),
                   (fs::path(dir) / "sell_prices.csv").string());
}

Panel load_m5(const std::string& sales_path, const std::string& calendar_path,
              const std::string& prices_path) {
    CsvTable sales_csv = read_csv_file(sales_path);
    CsvTable calendar_csv = read_csv_file(calendar_path);
    CsvTable prices_csv = read_csv_file(prices_path);

    const int c_item = sales_csv.require_column("item_id", "sales");
    const int c_dept = sales_csv.require_column("dept_id", "sales");
    const int c_cat = sales_csv.require_column("cat_id", "sales");
    const int c_store = sales_csv.require_column("store_id", "sales");
    const int c_state = sales_csv.require_column("state_id", "sales");

    // Day columns are the d_1..d_N block, discovered from the header and
    // ordered by the day number in the name (column position is irrelevant).
    std::vector<std::pair<long, int>> day_cols_by_number;
    for (std::size_t c = 0; c < sales_csv.header.size(); ++c) {
        const std::string& name = sales_csv.header[c];
        if (name.size() > 2 && name[0] == 'd' && name[1] == '_') {
            long n = 0;
            auto res = std::from_chars(name.data() + 2, name.data() + name.size(), n);
            if (res.ec == std::errc{} && res.ptr == name.data() + name.size()) {
                day_cols_by_number.emplace_back(n, static_cast<int>(c));
            }
        }
    }
    std::sort(day_cols_by_number.begin(), day_cols_by_number.end());
    std::vector<int> day_cols;
    day_cols.reserve(day_cols_by_number.size());
    for (const auto& [n, c] : day_cols_by_number) day_cols.push_back(c);
    if (day_cols.empty()) throw SchemaError("sales: no d_N day columns found");
    const int n_days = static_cast<int>(day_cols.size());

    const int cal_date = calendar_csv.require_column("date", "calendar");
    const int cal_wk = calendar_csv.require_column("wm_yr_wk", "calendar");
    const int cal_d = calendar_csv.require_column("d", "calendar");
    const int cal_ev1 = calendar_csv.require_column("event_name_1", "calendar");
    calendar_csv.require_column("snap_CA", "calendar");
    calendar_csv.require_column("snap_TX", "calendar");
    calendar_csv.require_column("snap_WI", "calendar");

    std::map<std::string, std::size_t> calendar_by_d;
    for (std::size_t r = 0; r < calendar_csv.rows.size(); ++r) {
        calendar_by_d[calendar_csv.rows[r][cal_d]] = r;
    }

    std::vector<CalendarDay> calendar(n_days);
    std::vector<long> week_of_day(n_days);
    for (int d = 0; d < n_days; ++d) {
        const std::string& label = sales_csv.header[day_cols[d]];
        auto it = calendar_by_d.find(label);
        if (it == calendar_by_d.end()) {
            throw SchemaError("calendar: no row for day column \"" + label + "\"");
        }
        const std::vector<std::string>& row = calendar_csv.rows[it->second];
        CalendarDay& day = calendar[d];
        day.day_index = d + 1;
        day.date = row[cal_date];
        const long epoch = days_from_iso_date(day.date);
        day.day_of_week = weekday_from_days(epoch);
        int y, m, dd;
        civil_from_days(epoch, y, m, dd);
        day.month = m;
        day.event_name = row[cal_ev1];
        day.is_holiday = !day.event_name.empty();
        week_of_day[d] = parse_long(row[cal_wk]);
    }

    const int p_store = prices_csv.require_column("store_id", "sell_prices");
    const int p_item = prices_csv.require_column("item_id", "sell_prices");
    const int p_wk = prices_csv.require_column("wm_yr_wk", "sell_prices");
    const int p_price = prices_csv.require_column("sell_price", "sell_prices");

    std::map<std::pair<std::string, std::string>, std::map<long, double>> price_table;
    for (const std::vector<std::string>& row : prices_csv.rows) {
        price_table[{row[p_store], row[p_item]}][parse_long(row[p_wk])] =
            parse_double(row[p_price]);
    }

    const int n_series = static_cast<int>(sales_csv.rows.size());
    if (n_series == 0) throw SchemaError("sales: no series rows");
    std::vector<SeriesKey> keys;
    keys.reserve(n_series);
    std::vector<double> sales(static_cast<std::size_t>(n_series) * n_days);
    std::vector<double> prices(static_cast<std::size_t>(n_series) * n_days);

    for (int s = 0; s < n_series; ++s) {
        const std::vector<std::string>& row = sales_csv.rows[s];
        SeriesKey key;
        key.sku_id = row[c_item];
        key.store_id = row[c_store];
        key.state_id = row[c_state];
        key.category = row[c_cat];
        key.department = row[c_dept];

        auto table_it = price_table.find({key.store_id, key.sku_id});
        if (table_it == price_table.end() || table_it->second.empty()) {
            throw ValidationError("sell_prices: no prices for item " + key.sku_id + " at store " +
                                  key.store_id);
        }
        const std::map<long, double>& weekly = table_it->second;

        double last_price = 0.0;
        bool have_price = false;
        for (int d = 0; d < n_days; ++d) {
            sales[static_cast<std::size_t>(s) * n_days + d] = parse_double(row[day_cols[d]]);
            auto wk_it = weekly.find(week_of_day[d]);
            if (wk_it != weekly.end()) {
                last_price = wk_it->second;
                have_price = true;
            } else if (!have_price) {
                // Leading gap: back-fill from the first listed week.
                last_price = weekly.begin()->second;
            }
            prices[static_cast<std::size_t>(s) * n_days + d] = last_price;
        }
        keys.push_back(std::move(key));
    }

    return Panel(std::move(keys), std::move(calendar), std::move(sales), std::move(prices));
}

}  // namespace driftguard
