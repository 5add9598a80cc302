#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "playtitle/metrics.hpp"

namespace playtitle {

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

// Equal-width bins over [min, max]; the last bin is closed. A constant input
// yields a single bin.
std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins);

// Plot-ready CSV files keyed by file name: F_t/F_a histograms after
// percentile trimming, distinct-n bars and per-bucket metric tables.
std::map<std::string, std::string> render_report(const EvalReport& report, std::size_t bins = 20,
                                                 double trim_pct = 99.0);

}  // namespace playtitle
