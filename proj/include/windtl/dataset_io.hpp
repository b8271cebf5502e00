// CSV persistence for TimeSeriesDataset: one file per (farm, NWP model).
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "windtl/types.hpp"

namespace windtl::io {

/// I/O failure with the offending path in the message.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kCsvHeader =
    "timestamp,ws100,ws10,wdir_sin,wdir_cos,pressure,temperature,humidity,lead_time,power";

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

/// Writes the dataset; `confidence`, when non-empty, adds a trailing column.
inline void write_csv(std::ostream& out, const TimeSeriesDataset& ds, const std::vector<double>& confidence = {}) {
    validate(ds);
    if (!confidence.empty() && confidence.size() != ds.size())
        throw ValidationError("write_csv: confidence length differs from record count");
    out << kCsvHeader << (confidence.empty() ? "" : ",confidence") << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& f = ds.features[i];
        out << format_iso(ds.timestamps[i]) << ',' << format_double(f.ws100) << ',' << format_double(f.ws10) << ','
            << format_double(f.wdir_sin) << ',' << format_double(f.wdir_cos) << ',' << format_double(f.pressure)
            << ',' << format_double(f.temperature) << ',' << format_double(f.humidity) << ','
            << format_double(ds.lead_time[i]) << ',';
        if (ds.has_power() && ds.power[i]) out << format_double(*ds.power[i]);
        if (!confidence.empty()) out << ',' << format_double(confidence[i]);
        out << '\n';
    }
}

inline void write_csv_file(const std::string& path, const TimeSeriesDataset& ds,
                           const std::vector<double>& confidence = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(out, ds, confidence);
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        throw ValidationError("csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

/// Reads a dataset written by write_csv. A power column with no values yields
/// an unlabeled dataset.
inline TimeSeriesDataset read_csv(std::istream& in, std::string farm_id, std::string nwp_model_id) {
    TimeSeriesDataset ds;
    ds.farm_id = std::move(farm_id);
    ds.nwp_model_id = std::move(nwp_model_id);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kCsvHeader, 0) != 0)
        throw ValidationError("csv: missing or unexpected header");
    bool any_power = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() < 10) throw ValidationError("csv line " + std::to_string(line_no) + ": too few columns");
        ds.timestamps.push_back(parse_iso(cells[0]));
        NwpFeatureVector f;
        f.ws100 = parse_double(cells[1], line_no);
        f.ws10 = parse_double(cells[2], line_no);
        f.wdir_sin = parse_double(cells[3], line_no);
        f.wdir_cos = parse_double(cells[4], line_no);
        f.pressure = parse_double(cells[5], line_no);
        f.temperature = parse_double(cells[6], line_no);
        f.humidity = parse_double(cells[7], line_no);
        ds.features.push_back(f);
        ds.lead_time.push_back(parse_double(cells[8], line_no));
        if (cells[9].empty()) {
            ds.power.emplace_back();
        } else {
            ds.power.emplace_back(parse_double(cells[9], line_no));
            any_power = true;
        }
    }
    if (!any_power) ds.power.clear();
    validate(ds);
    return ds;
}

inline TimeSeriesDataset read_csv_file(const std::string& path, std::string farm_id, std::string nwp_model_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_csv(in, std::move(farm_id), std::move(nwp_model_id));
}

} // namespace windtl::io
