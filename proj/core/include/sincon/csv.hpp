#pragma once

#include <string>
#include <vector>

namespace sincon::csv {

// 17 significant digits: decimal text round-trips the double bit-exactly.
std::string format(double value);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

void write(const Table& table, const std::string& filename);
Table read(const std::string& filename);

}  // namespace sincon::csv
