#include "hrmsm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hrmsm/common.hpp"

namespace hrmsm {

int DelimitedTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

static std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

DelimitedTable read_delimited(std::istream& in, char delim) {
    DelimitedTable table;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line, delim);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw DataError("row " + std::to_string(lineno) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(table.header.size()));
        table.rows.push_back(std::move(cells));
    }
    if (!have_header) throw DataError("empty input: header row required");
    return table;
}

DelimitedTable read_delimited_file(const std::string& path, char delim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return read_delimited(in, delim);
}

std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("cannot parse number '" + s + "' in " + context);
    return v;
}

void write_row(std::ostream& out, const std::vector<std::string>& cells, char delim) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << delim;
        out << cells[i];
    }
    out << '\n';
}

}  // namespace hrmsm
