#pragma once

#include <string>

#include "driftguard/panel.hpp"

namespace driftguard {

/// Loads an M5-format dataset into a Panel from three CSV files:
///   - sales: one row per (item, store) with wide d_1..d_N unit columns,
///   - calendar: one row per day keyed by the d_N label,
///   - prices: weekly prices keyed by (store_id, item_id, wm_yr_wk).
///
/// Parsing is header-name driven; column order does not matter.  Weekly
/// prices are expanded to daily values; weeks with no listed price are
/// forward-filled from the most recent listed week, and a leading gap is
/// back-filled from the first listed week.  A series with no price rows at
/// all is a hard error, as is any missing file or column.
Panel load_m5(const std::string& sales_path, const std::string& calendar_path,
              const std::string& prices_path);

/// Convenience wrapper: expects sales_train_validation.csv (or
/// sales_train_evaluation.csv), calendar.csv and sell_prices.csv inside dir.
Panel load_m5_dir(const std::string& dir);

}  // namespace driftguard
