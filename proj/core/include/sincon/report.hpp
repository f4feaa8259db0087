#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sincon {

// Ordered key: value lines, the text form consumed by the CLI's report files.
class Report {
public:
    void add(const std::string& key, double value);
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, bool value);
    void merge(const Report& other, const std::string& prefix = "");

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string text() const;
    void save(const std::string& filename) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace sincon
