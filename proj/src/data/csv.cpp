#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pfl/data/data.hpp"
#include "pfl/errors.hpp"

namespace pfl::data {

namespace {

constexpr std::int64_t kHour = 3600;

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
    int y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int consumed = 0;
    const int got = std::sscanf(text.c_str(), "%4d-%2u-%2u%c%2u:%2u%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (got < 6 || (sep != 'T' && sep != ' ')) {
        throw DataError("bad timestamp '" + text + "'");
    }
    std::string rest = text.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest[0] == ':') {
        int more = 0;
        if (std::sscanf(rest.c_str(), ":%2u%n", &s, &more) != 1) {
            throw DataError("bad timestamp '" + text + "'");
        }
        rest = rest.substr(static_cast<std::size_t>(more));
    }
    if (!(rest.empty() || rest == "Z")) {
        throw DataError("bad timestamp '" + text + "'");
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 59) {
        throw DataError("timestamp out of range '" + text + "'");
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(std::int64_t seconds) {
    std::int64_t days = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem % 3600 / 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

DeviceSeries load_csv_file(const std::filesystem::path& file, std::size_t n_vars, GapPolicy gaps) {
    std::ifstream in(file);
    if (!in) {
        throw IoError("cannot open " + file.string());
    }
    const std::string name = file.string();
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(name, 1, "empty file");
    }
    auto header = split_fields(trim(line));
    if (header.empty() || trim(header[0]) != "timestamp") {
        throw ParseError(name, 1, "header must start with 'timestamp'");
    }
    if (header.size() - 1 != n_vars) {
        throw DataError(name + ": schema has " + std::to_string(header.size() - 1) + " value columns, expected " +
                        std::to_string(n_vars));
    }

    DeviceSeries series;
    series.id = file.stem().string();
    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != n_vars + 1) {
            throw ParseError(name, line_no,
                             "expected " + std::to_string(n_vars + 1) + " fields, got " + std::to_string(fields.size()));
        }
        std::int64_t ts;
        try {
            ts = parse_timestamp(trim(fields[0]));
        } catch (const DataError& e) {
            throw ParseError(name, line_no, e.what());
        }
        std::vector<double> row(n_vars);
        for (std::size_t c = 0; c < n_vars; ++c) {
            const std::string f = trim(fields[c + 1]);
            const char* end = f.data() + f.size();
            auto [ptr, ec] = std::from_chars(f.data(), end, row[c]);
            if (f.empty() || ec != std::errc() || ptr != end || !std::isfinite(row[c])) {
                throw ParseError(name, line_no, "bad number '" + f + "' in column " + header[c + 1]);
            }
        }
        if (!series.timestamps.empty()) {
            const std::int64_t prev = series.timestamps.back();
            if (ts <= prev) {
                throw ParseError(name, line_no, "timestamps must increase");
            }
            if ((ts - prev) % kHour != 0) {
                throw ParseError(name, line_no, "timestamp not on the hourly grid");
            }
            if (ts - prev > kHour) {
                if (gaps == GapPolicy::strict) {
                    throw ParseError(name, line_no, "gap of " + std::to_string((ts - prev) / kHour - 1) +
                                                        " missing hour(s) before this row");
                }
                std::vector<double> last(values.end() - static_cast<std::ptrdiff_t>(n_vars), values.end());
                for (std::int64_t t = prev + kHour; t < ts; t += kHour) {
                    series.timestamps.push_back(t);
                    values.insert(values.end(), last.begin(), last.end());
                }
            }
        }
        series.timestamps.push_back(ts);
        values.insert(values.end(), row.begin(), row.end());
    }
    if (series.timestamps.empty()) {
        throw ParseError(name, line_no, "no data rows");
    }
    series.values = Tensor({series.timestamps.size(), n_vars}, std::move(values));
    return series;
}

std::vector<DeviceSeries> load_csv(const std::filesystem::path& dir, std::size_t n_vars, GapPolicy gaps) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    if (files.empty()) {
        throw DataError("no .csv files in " + dir.string());
    }
    std::sort(files.begin(), files.end());
    std::vector<DeviceSeries> out;
    for (const auto& f : files) {
        out.push_back(load_csv_file(f, n_vars, gaps));
    }
    return out;
}

void save_csv(const std::vector<DeviceSeries>& series, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const DeviceSeries& s : series) {
        const auto path = dir / (s.id + ".csv");
        std::ofstream out(path);
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
        const std::size_t n = s.values.cols();
        out << "timestamp";
        for (std::size_t c = 0; c < n; ++c) {
            out << ",v" << (c + 1);
        }
        out << '\n';
        char buf[32];
        for (std::size_t r = 0; r < s.values.rows(); ++r) {
            out << format_timestamp(s.timestamps[r]);
            for (std::size_t c = 0; c < n; ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", s.values(r, c));
                out << ',' << buf;
            }
            out << '\n';
        }
        if (!out) {
            throw IoError("write failed for " + path.string());
        }
    }
}

}  // namespace pfl::data
