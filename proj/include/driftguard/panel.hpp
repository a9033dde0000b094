#pragma once

#include <string>
#include <vector>

#include "driftguard/errors.hpp"

namespace driftguard {

// Identity of one demand series: a (SKU, store) pair plus the hierarchy
// labels it rolls up through. department determines category and store_id
// determines state_id; both are validated at Panel construction.
struct SeriesKey {
    std::string sku_id;
    std::string store_id;
    std::string state_id;
    std::string category;
    std::string department;

    bool operator==(const SeriesKey&) const = default;
};

struct CalendarDay {
    int day_index = 0;        // 1-based, contiguous across the panel
    std::string date;         // ISO yyyy-mm-dd
    int day_of_week = 0;      // 0 = Monday .. 6 = Sunday
    int month = 1;            // 1..12
    bool is_holiday = false;
    std::string event_name;   // empty when none

    bool operator==(const CalendarDay&) const = default;
};

// Hierarchical demand panel: per-series daily sales and prices over a shared
// calendar. Immutable after construction; every accessor is const and all
// operations on panels are pure functions. Day addressing is by the global
// 1-based day_index so that slices keep their original day identities.
class Panel {
public:
    Panel() = default;
    Panel(std::vector<SeriesKey> keys, std::vector<CalendarDay> calendar,
          std::vector<double> sales, std::vector<double> prices);

    int n_series() const { return static_cast<int>(keys_.size()); }
    int n_days() const { return static_cast<int>(calendar_.size()); }
    int first_day() const { return calendar_.empty() ? 0 : calendar_.front().day_index; }
    int last_day() const { return calendar_.empty() ? 0 : calendar_.back().day_index; }

    const std::vector<SeriesKey>& keys() const { return keys_; }
    const std::vector<CalendarDay>& calendar() const { return calendar_; }
    const SeriesKey& key(int series) const { return keys_[series]; }

    // day is a global day_index; throws on out-of-range access.
    const CalendarDay& day(int day_index) const { return calendar_[col(day_index)]; }
    double sales_at(int series, int day_index) const { return sales_[series * n_days() + col(day_index)]; }
    double price_at(int series, int day_index) const { return prices_[series * n_days() + col(day_index)]; }

    bool contains_day(int day_index) const {
        return !calendar_.empty() && day_index >= first_day() && day_index <= last_day();
    }

    const std::vector<double>& sales_data() const { return sales_; }
    const std::vector<double>& prices_data() const { return prices_; }

    // Copy with a replacement sales matrix; used by drift injection.
    Panel with_sales(std::vector<double> new_sales) const;

    bool operator==(const Panel&) const = default;

private:
    int col(int day_index) const;

    std::vector<SeriesKey> keys_;
    std::vector<CalendarDay> calendar_;
    std::vector<double> sales_;   // row-major [series][day], >= 0
    std::vector<double> prices_;  // row-major [series][day], > 0
};

// Panel restricted to [start_day, end_day] (global day indices, inclusive).
// day_index values are preserved, not re-based.
Panel slice_window(const Panel& panel, int start_day, int end_day);

}  // namespace driftguard
