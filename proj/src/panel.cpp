#include "driftguard/panel.hpp"

#include <map>
#include <set>
#include <utility>

namespace driftguard {

Panel::Panel(std::vector<SeriesKey> keys, std::vector<CalendarDay> calendar,
             std::vector<double> sales, std::vector<double> prices)
    : keys_(std::move(keys)), calendar_(std::move(calendar)),
      sales_(std::move(sales)), prices_(std::move(prices)) {
    if (keys_.empty()) throw ValidationError("panel has no series");
    if (calendar_.empty()) throw ValidationError("panel has no days");

    const std::size_t cells = keys_.size() * calendar_.size();
    if (sales_.size() != cells || prices_.size() != cells) {
        throw ValidationError("sales/prices dimensions do not match keys x calendar");
    }

    std::set<std::pair<std::string, std::string>> seen;
    std::map<std::string, std::string> dept_to_cat;
    std::map<std::string, std::string> store_to_state;
    for (const auto& k : keys_) {
        if (!seen.emplace(k.sku_id, k.store_id).second) {
            throw ValidationError("duplicate (sku_id, store_id): (" + k.sku_id + ", " + k.store_id + ")");
        }
        auto [dit, dnew] = dept_to_cat.emplace(k.department, k.category);
        if (!dnew && dit->second != k.category) {
            throw ValidationError("department '" + k.department + "' maps to multiple categories");
        }
        auto [sit, snew] = store_to_state.emplace(k.store_id, k.state_id);
        if (!snew && sit->second != k.state_id) {
            throw ValidationError("store '" + k.store_id + "' maps to multiple states");
        }
    }

    for (std::size_t i = 0; i < calendar_.size(); ++i) {
        const auto& d = calendar_[i];
        if (d.day_index != calendar_.front().day_index + static_cast<int>(i)) {
            throw ValidationError("calendar day_index is not contiguous");
        }
        if (d.day_of_week < 0 || d.day_of_week > 6) throw ValidationError("day_of_week out of range");
        if (d.month < 1 || d.month > 12) throw ValidationError("month out of range");
    }
    if (calendar_.front().day_index < 1) throw ValidationError("day_index must be >= 1");

    for (double v : sales_) {
        if (!(v >= 0.0)) throw ValidationError("negative or non-finite sales value");
    }
    for (double v : prices_) {
        if (!(v > 0.0)) throw ValidationError("non-positive or non-finite price value");
    }
}

int Panel::col(int day_index) const {
    if (!contains_day(day_index)) {
        throw ValidationError("day_index " + std::to_string(day_index) + " outside panel range [" +
                              std::to_string(first_day()) + ", " + std::to_string(last_day()) + "]");
    }
    return day_index - first_day();
}

Panel Panel::with_sales(std::vector<double> new_sales) const {
    return Panel(keys_, calendar_, std::move(new_sales), prices_);
}

Panel slice_window(const Panel& panel, int start_day, int end_day) {
    if (start_day > end_day || !panel.contains_day(start_day) || !panel.contains_day(end_day)) {
        throw ValidationError("slice_window bounds [" + std::to_string(start_day) + ", " +
                              std::to_string(end_day) + "] invalid for panel [" +
                              std::to_string(panel.first_day()) + ", " +
                              std::to_string(panel.last_day()) + "]");
    }
    const int n = panel.n_series();
    const int days = end_day - start_day + 1;

    std::vector<CalendarDay> cal(panel.calendar().begin() + (start_day - panel.first_day()),
                                 panel.calendar().begin() + (end_day - panel.first_day()) + 1);
    std::vector<double> sales(static_cast<std::size_t>(n) * days);
    std::vector<double> prices(static_cast<std::size_t>(n) * days);
    for (int s = 0; s < n; ++s) {
        for (int d = 0; d < days; ++d) {
            sales[s * days + d] = panel.sales_at(s, start_day + d);
            prices[s * days + d] = panel.price_at(s, start_day + d);
        }
    }
    return Panel(panel.keys(), std::move(cal), std::move(sales), std::move(prices));
}

}  // namespace driftguard
