#include "sincon/report.hpp"

#include <fstream>

#include "sincon/csv.hpp"
#include "sincon/types.hpp"

namespace sincon {

void Report::add(const std::string& key, double value) {
    entries_.emplace_back(key, csv::format(value));
}

void Report::add(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
}

void Report::add(const std::string& key, bool value) {
    entries_.emplace_back(key, value ? "true" : "false");
}

void Report::merge(const Report& other, const std::string& prefix) {
    for (const auto& [key, value] : other.entries_)
        entries_.emplace_back(prefix.empty() ? key : prefix + "." + key, value);
}

std::string Report::text() const {
    std::string out;
    for (const auto& [key, value] : entries_) {
        out += key;
        out += ": ";
        out += value;
        out += "\n";
    }
    return out;
}

void Report::save(const std::string& filename) const {
    std::ofstream out(filename);
    if (!out) throw ConfigError("Report::save: cannot open " + filename);
    out << text();
}

}  // namespace sincon
