#include "driftguard/csv.hpp"

#include <fstream>

#include "driftguard/errors.hpp"

namespace driftguard {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

int CsvTable::require_column(const std::string& name, const std::string& file_label) const {
    auto it = column.find(name);
    if (it == column.end()) {
        throw SchemaError(file_label + ": missing column '" + name + "'");
    }
    return it->second;
}

CsvTable read_csv(std::istream& in, const std::string& file_label) {
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(file_label + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.header = split_csv_line(line);
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        table.column[table.header[i]] = static_cast<int>(i);
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != table.header.size()) {
            throw SchemaError(file_label + ": row " + std::to_string(table.rows.size() + 2) +
                              " has " + std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_csv(in, path);
}

}  // namespace driftguard
