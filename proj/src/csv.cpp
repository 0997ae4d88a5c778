#include "lumeneit/csv.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "lumeneit/error.hpp"

namespace lumeneit {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string csv_text(std::string s) {
    for (char& c : s) {
        if (c == ',') c = ';';
        else if (c == '"') c = '\'';
        else if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    os_.open(path, std::ios::binary);
    if (!os_) throw InputError("cannot open '" + path.string() + "' for writing");
}

void CsvWriter::comment(const std::string& text) { os_ << "# " << text << '\n'; }

void CsvWriter::header(const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << '\n';
}

CsvWriter& CsvWriter::cell(double x) { return raw(format_number(x)); }

CsvWriter& CsvWriter::cell(long long x) { return raw(std::to_string(x)); }

CsvWriter& CsvWriter::cell(const std::string& s) { return raw(csv_text(s)); }

CsvWriter& CsvWriter::raw(const std::string& s) {
    if (row_open_) os_ << ',';
    os_ << s;
    row_open_ = true;
    return *this;
}

void CsvWriter::end_row() {
    os_ << '\n';
    row_open_ = false;
}

void CsvWriter::close() {
    os_.close();
    if (!os_) throw InputError("failed writing '" + path_.string() + "'");
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw InputError("CSV has no column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    CsvTable t;
    std::string line;
    bool header = false;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(item);
        if (!l.empty() && l.back() == ',') out.emplace_back();
        return out;
    };
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            t.columns = split(line);
            header = true;
        } else {
            auto row = split(line);
            if (row.size() != t.columns.size())
                throw InputError("CSV row width mismatch in '" + path.string() + "'");
            t.rows.push_back(std::move(row));
        }
    }
    if (!header) throw InputError("CSV '" + path.string() + "' has no header");
    return t;
}

} // namespace lumeneit
