#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace lumeneit {

/// Fixed formatting for every numeric CSV cell so reruns are byte-identical.
std::string format_number(double x);

/// Free text made safe for an unquoted CSV cell (commas, quotes, newlines replaced).
std::string csv_text(std::string s);

/// Minimal CSV writer: optional `# key value` comments, one header, rows.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    void comment(const std::string& text);
    void header(const std::vector<std::string>& columns);
    CsvWriter& cell(double x);
    CsvWriter& cell(long long x);
    CsvWriter& cell(std::size_t x) { return cell(static_cast<long long>(x)); }
    CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
    CsvWriter& cell(const std::string& s);
    void end_row();
    void close();

private:
    CsvWriter& raw(const std::string& s);
    std::filesystem::path path_;
    std::ofstream os_;
    bool row_open_ = false;
};

/// Reads a comma-separated table, skipping `#` comment lines. The first
/// non-comment line is the header.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

} // namespace lumeneit
