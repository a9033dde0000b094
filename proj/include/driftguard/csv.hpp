#pragma once

#include <functional>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace driftguard {

// Minimal RFC-4180-ish CSV: quoted fields, doubled quotes, LF or CRLF rows.
std::vector<std::string> split_csv_line(const std::string& line);

// Quotes a field only when it needs quoting, so output is canonical.
std::string csv_escape(const std::string& field);

struct CsvTable {
    std::vector<std::string> header;
    std::map<std::string, int> column;  // name -> index
    std::vector<std::vector<std::string>> rows;

    bool has_column(const std::string& name) const { return column.count(name) > 0; }
    // Throws SchemaError naming the column when absent.
    int require_column(const std::string& name, const std::string& file_label) const;
    const std::string& cell(std::size_t row, int col) const { return rows[row][col]; }
};

CsvTable read_csv(std::istream& in, const std::string& file_label);
CsvTable read_csv_file(const std::string& path);

}  // namespace driftguard
