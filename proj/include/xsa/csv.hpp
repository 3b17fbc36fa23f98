// CSV emission with fixed 9-significant-digit float formatting so re-runs
// from the same config+seed are byte-identical.
#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "xsa/error.hpp"

namespace xsa {

inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw IoError("cannot write " + path);
        write_row(header);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

// type-7 (linear interpolation) quantile of a pre-sorted vector
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw InvalidInput("quantile of empty set");
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace xsa
