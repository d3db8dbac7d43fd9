#include "autoroute/harness/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "autoroute/matrix.hpp"

namespace autoroute::harness {

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return {buf, p};
}

double parse_double(const std::string& s) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("'" + s + "' is not a number");
    return out;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return c;
    throw ConfigError("CSV has no column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& name) const {
    return parse_double(rows.at(row).at(column(name)));
}

std::string to_csv(const CsvTable& table) {
    std::string out;
    auto line = [&out](const std::vector<std::string>& fields) {
        for (std::size_t k = 0; k < fields.size(); ++k) {
            if (fields[k].find_first_of(",\n") != std::string::npos)
                throw ConfigError("CSV field contains a separator: '" + fields[k] + "'");
            if (k) out += ',';
            out += fields[k];
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) {
        if (r.size() != table.header.size()) throw ConfigError("CSV row width does not match header");
        line(r);
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != t.header.size()) throw ConfigError("CSV row width does not match header");
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_csv(table);
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace autoroute::harness
