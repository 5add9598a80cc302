#include "playtitle/report.hpp"

#include <algorithm>
#include <cstdio>

#include "playtitle/error.hpp"

namespace playtitle {

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string histogram_csv(std::span<const double> values, std::size_t bins, double trim_pct) {
    std::string out = "bin_lo,bin_hi,count\n";
    if (values.empty()) return out;
    const auto kept = trim_percentile(values, trim_pct);
    for (const auto& b : histogram(kept, bins)) out += num(b.lo) + "," + num(b.hi) + "," + std::to_string(b.count) + "\n";
    return out;
}

void bucket_rows(std::string& out, const char* axis, const std::array<MetricValues, 4>& buckets) {
    for (int q = 0; q < 4; ++q) {
        const auto& v = buckets[static_cast<std::size_t>(q)];
        const std::string prefix = std::string(axis) + "," + quartile_name(static_cast<Quartile>(q)) + ",";
        auto row = [&](const char* metric, std::optional<double> value) {
            out += prefix + metric + "," + (value ? num(*value) : std::string()) + "\n";
        };
        row("pairs", static_cast<double>(v.pairs));
        row("bleu1", v.bleu1);
        row("bleu2", v.bleu2);
        row("rouge1", v.rouge1);
        row("rouge2", v.rouge2);
        row("meteor", v.meteor);
        row("bert_score", v.bert_score);
        row("sentence_bert", v.sentence_bert);
        row("nll", v.nll);
    }
}

}  // namespace

std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins) {
    if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
    if (values.empty()) return {};
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn;
    const double hi = *mx;
    if (lo == hi) return {HistogramBin{lo, hi, values.size()}};
    std::vector<HistogramBin> out(bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        out[i].lo = lo + width * static_cast<double>(i);
        out[i].hi = i + 1 == bins ? hi : lo + width * static_cast<double>(i + 1);
    }
    for (double v : values) {
        auto i = static_cast<std::size_t>((v - lo) / width);
        i = std::min(i, bins - 1);
        // Keep assignment consistent with the printed edges.
        while (i > 0 && v < out[i].lo) --i;
        while (i + 1 < bins && v >= out[i + 1].lo) ++i;
        ++out[i].count;
    }
    return out;
}

std::map<std::string, std::string> render_report(const EvalReport& report, std::size_t bins, double trim_pct) {
    std::map<std::string, std::string> files;
    std::vector<double> ft, fa;
    for (const auto& m : report.per_pair) {
        if (!m.stats) continue;
        ft.push_back(m.stats->f_t);
        fa.push_back(m.stats->f_a);
    }
    files["hist_ft.csv"] = histogram_csv(ft, bins, trim_pct);
    files["hist_fa.csv"] = histogram_csv(fa, bins, trim_pct);

    std::string distinct = "n,value\n";
    const std::optional<double> d[] = {report.corpus.distinct1, report.corpus.distinct2, report.corpus.distinct3};
    for (std::size_t n = 0; n < 3; ++n) distinct += std::to_string(n + 1) + "," + (d[n] ? num(*d[n]) : std::string()) + "\n";
    files["distinct.csv"] = distinct;

    std::string buckets = "axis,bucket,metric,value\n";
    if (report.by_bucket_ft) bucket_rows(buckets, "f_t", *report.by_bucket_ft);
    if (report.by_bucket_fa) bucket_rows(buckets, "f_a", *report.by_bucket_fa);
    files["buckets.csv"] = buckets;
    return files;
}

}  // namespace playtitle
