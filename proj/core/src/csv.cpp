#include "sincon/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sincon/types.hpp"

namespace sincon::csv {

std::string format(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write(const Table& table, const std::string& filename) {
    std::ofstream out(filename);
    if (!out) throw ConfigError("csv::write: cannot open " + filename);
    for (size_t c = 0; c < table.header.size(); ++c) {
        if (c) out << ',';
        out << table.header[c];
    }
    out << "\n";
    for (const auto& row : table.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << format(row[c]);
        }
        out << "\n";
    }
}

Table read(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw ConfigError("csv::read: cannot open " + filename);
    Table table;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv::read: empty file " + filename);
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace sincon::csv
