#include "driftguard/panel_io.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "driftguard/csv.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

namespace {

constexpr const char* kBanner = "driftguard-panel v1";

void write_matrix_section(std::ostream& out, const char* name, const Panel& panel, bool sales) {
    out << '[' << name << "]\n";
    out << "series";
    for (int d = 0; d < panel.n_days(); ++d) {
        out << ',' << panel.calendar()[d].day_index;
    }
    out << '\n';
    for (int s = 0; s < panel.n_series(); ++s) {
        out << s;
        for (int d = 0; d < panel.n_days(); ++d) {
            const int day_index = panel.calendar()[d].day_index;
            const double v = sales ? panel.sales_at(s, day_index) : panel.price_at(s, day_index);
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

std::vector<std::string> collect_section(std::istream& in, std::string& pending_line, bool& eof) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line.front() == '[') {
            pending_line = line;
            return lines;
        }
        if (!line.empty()) lines.push_back(line);
    }
    eof = true;
    return lines;
}

}  // namespace

void save_panel(const Panel& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << kBanner << '\n';
    out << "[keys]\n";
    out << "series,sku_id,store_id,state_id,category,department\n";
    for (int s = 0; s < panel.n_series(); ++s) {
        const SeriesKey& k = panel.keys()[s];
        out << s << ',' << csv_escape(k.sku_id) << ',' << csv_escape(k.store_id) << ','
            << csv_escape(k.state_id) << ',' << csv_escape(k.category) << ','
            << csv_escape(k.department) << '\n';
    }
    out << "[calendar]\n";
    out << "day_index,date,day_of_week,month,is_holiday,event_name\n";
    for (const CalendarDay& day : panel.calendar()) {
        out << day.day_index << ',' << csv_escape(day.date) << ',' << day.day_of_week << ','
            << day.month << ',' << (day.is_holiday ? 1 : 0) << ',' << csv_escape(day.event_name)
            << '\n';
    }
    write_matrix_section(out, "sales", panel, true);
    write_matrix_section(out, "prices", panel, false);
    if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::vector<std::string>> parse_block(const std::vector<std::string>& lines,
                                                  std::size_t expect_cols, const char* label) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(lines.size());
    for (const std::string& line : lines) {
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != expect_cols) {
            throw SchemaError(std::string(label) + ": expected " + std::to_string(expect_cols) +
                              " fields, got " + std::to_string(fields.size()));
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

std::vector<double> parse_matrix(const std::vector<std::string>& lines, int n_series, int n_days,
                                 const char* label) {
    if (lines.size() != static_cast<std::size_t>(n_series) + 1) {
        throw SchemaError(std::string(label) + ": expected " + std::to_string(n_series + 1) +
                          " rows, got " + std::to_string(lines.size()));
    }
    std::vector<double> values(static_cast<std::size_t>(n_series) * n_days);
    for (int s = 0; s < n_series; ++s) {
        std::vector<std::string> fields = split_csv_line(lines[s + 1]);
        if (fields.size() != static_cast<std::size_t>(n_days) + 1) {
            throw SchemaError(std::string(label) + ": row " + std::to_string(s) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(n_days + 1));
        }
        if (parse_long(fields[0]) != s) {
            throw SchemaError(std::string(label) + ": series rows out of order");
        }
        for (int d = 0; d < n_days; ++d) {
            values[static_cast<std::size_t>(s) * n_days + d] = parse_double(fields[d + 1]);
        }
    }
    return values;
}

}  // namespace

Panel load_panel(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty panel file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kBanner) {
        throw IoError("unsupported panel file version: \"" + line + "\" (expected \"" + kBanner +
                      "\")");
    }

    std::string pending;
    bool eof = false;
    // First section header.
    if (!std::getline(in, pending)) throw SchemaError("panel file has no sections");
    if (!pending.empty() && pending.back() == '\r') pending.pop_back();

    std::vector<std::string> keys_lines, calendar_lines, sales_lines, prices_lines;
    while (!eof) {
        const std::string section = pending;
        pending.clear();
        std::vector<std::string> lines = collect_section(in, pending, eof);
        if (section == "[keys]") {
            keys_lines = std::move(lines);
        } else if (section == "[calendar]") {
            calendar_lines = std::move(lines);
        } else if (section == "[sales]") {
            sales_lines = std::move(lines);
        } else if (section == "[prices]") {
            prices_lines = std::move(lines);
        } else {
            throw SchemaError("unknown panel section: " + section);
        }
        if (eof) break;
    }
    if (keys_lines.empty() || calendar_lines.empty() || sales_lines.empty() || prices_lines.empty()) {
        throw SchemaError("panel file is missing one of [keys]/[calendar]/[sales]/[prices]");
    }

    auto key_rows = parse_block(keys_lines, 6, "panel [keys]");
    if (key_rows[0][1] != "sku_id") throw SchemaError("panel [keys]: bad header");
    std::vector<SeriesKey> keys;
    keys.reserve(key_rows.size() - 1);
    for (std::size_t i = 1; i < key_rows.size(); ++i) {
        SeriesKey k;
        k.sku_id = key_rows[i][1];
        k.store_id = key_rows[i][2];
        k.state_id = key_rows[i][3];
        k.category = key_rows[i][4];
        k.department = key_rows[i][5];
        keys.push_back(std::move(k));
    }

    auto cal_rows = parse_block(calendar_lines, 6, "panel [calendar]");
    if (cal_rows[0][0] != "day_index") throw SchemaError("panel [calendar]: bad header");
    std::vector<CalendarDay> calendar;
    calendar.reserve(cal_rows.size() - 1);
    for (std::size_t i = 1; i < cal_rows.size(); ++i) {
        CalendarDay day;
        day.day_index = static_cast<int>(parse_long(cal_rows[i][0]));
        day.date = cal_rows[i][1];
        day.day_of_week = static_cast<int>(parse_long(cal_rows[i][2]));
        day.month = static_cast<int>(parse_long(cal_rows[i][3]));
        day.is_holiday = parse_long(cal_rows[i][4]) != 0;
        day.event_name = cal_rows[i][5];
        calendar.push_back(std::move(day));
    }

    const int n_series = static_cast<int>(keys.size());
    const int n_days = static_cast<int>(calendar.size());
    std::vector<double> sales = parse_matrix(sales_lines, n_series, n_days, "panel [sales]");
    std::vector<double> prices = parse_matrix(prices_lines, n_series, n_days, "panel [prices]");
    return Panel(std::move(keys), std::move(calendar), std::move(sales), std::move(prices));
}

}  // namespace driftguard
