#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace hrmsm {

struct DelimitedTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

DelimitedTable read_delimited(std::istream& in, char delim = ',');
DelimitedTable read_delimited_file(const std::string& path, char delim = ',');

// Shortest representation that round-trips the double exactly.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& context);

void write_row(std::ostream& out, const std::vector<std::string>& cells, char delim = ',');

}  // namespace hrmsm
