#include "playtitle/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/rng.hpp"

namespace playtitle {

using nlohmann::json;

SplitResult chronological_split(std::span<const Playlist> playlists, const SplitConfig& cfg) {
    if (!(cfg.val_fraction_of_holdout > 0.0 && cfg.val_fraction_of_holdout < 1.0)) {
        throw InvalidArgument("val_fraction_of_holdout must lie in (0, 1)");
    }
    SplitResult result;
    std::vector<const Playlist*> holdout;
    for (const auto& p : playlists) {
        if (p.modified_at < cfg.cutoff_date) {
            result.train.push_back(p);
        } else {
            holdout.push_back(&p);
        }
    }
    if (result.train.empty() || holdout.empty()) {
        throw DegenerateSplit("cutoff " + cfg.cutoff_date.to_string() + " leaves " +
                              std::to_string(result.train.size()) + " train and " +
                              std::to_string(holdout.size()) + " holdout playlists");
    }
    std::sort(holdout.begin(), holdout.end(), [](const Playlist* a, const Playlist* b) { return a->pid < b->pid; });
    Rng rng(cfg.seed);
    rng.shuffle(std::span<const Playlist*>(holdout));
    const auto n_val = static_cast<std::size_t>(
        std::llround(cfg.val_fraction_of_holdout * static_cast<double>(holdout.size())));
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        (i < n_val ? result.val : result.test).push_back(*holdout[i]);
    }
    const double total = static_cast<double>(playlists.size());
    result.train_percent = 100.0 * static_cast<double>(result.train.size()) / total;
    result.holdout_percent = 100.0 * static_cast<double>(holdout.size()) / total;
    return result;
}

SplitManifest make_split_manifest(const SplitResult& split, const SplitConfig& cfg) {
    SplitManifest m;
    m.config = cfg;
    for (const auto& p : split.train) m.train.push_back(p.pid);
    for (const auto& p : split.val) m.val.push_back(p.pid);
    for (const auto& p : split.test) m.test.push_back(p.pid);
    return m;
}

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& m) {
    json j = {{"cutoff", m.config.cutoff_date.to_string()},
              {"val_fraction", m.config.val_fraction_of_holdout},
              {"seed", m.config.seed},
              {"train", m.train},
              {"val", m.val},
              {"test", m.test}};
    write_file_atomic(path, j.dump(2) + "\n");
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
        SplitManifest m;
        m.config.cutoff_date = Date::parse(j.at("cutoff").get<std::string>());
        m.config.val_fraction_of_holdout = j.at("val_fraction").get<double>();
        m.config.seed = j.at("seed").get<std::uint64_t>();
        m.train = j.at("train").get<std::vector<std::string>>();
        m.val = j.at("val").get<std::vector<std::string>>();
        m.test = j.at("test").get<std::vector<std::string>>();
        return m;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::uint64_t FrequencyTable::track_count(const std::string& id) const {
    auto it = track_counts.find(id);
    return it == track_counts.end() ? 0 : it->second;
}

std::uint64_t FrequencyTable::artist_count(const std::string& id) const {
    auto it = artist_counts.find(id);
    return it == artist_counts.end() ? 0 : it->second;
}

void FrequencyTable::merge(const FrequencyTable& other) {
    for (const auto& [k, v] : other.track_counts) track_counts[k] += v;
    for (const auto& [k, v] : other.artist_counts) artist_counts[k] += v;
}

FrequencyTable build_frequency_table(std::span<const Playlist> train) {
    FrequencyTable table;
    for (const auto& p : train) {
        for (const auto& t : p.tracks) {
            ++table.track_counts[t.track_id];
            for (const auto& a : t.artist_ids) ++table.artist_counts[a];
        }
    }
    return table;
}

void write_counts_tsv(const std::filesystem::path& path, const std::map<std::string, std::uint64_t>& counts) {
    std::string out;
    for (const auto& [id, count] : counts) {
        out += id;
        out += '\t';
        out += std::to_string(count);
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::map<std::string, std::uint64_t> read_counts_tsv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::map<std::string, std::uint64_t> counts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected id<TAB>count");
        }
        try {
            std::size_t used = 0;
            const std::string num = line.substr(tab + 1);
            const auto value = std::stoull(num, &used);
            if (used != num.size() || value == 0) throw std::invalid_argument("count");
            counts[line.substr(0, tab)] = value;
        } catch (const std::logic_error&) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": invalid count");
        }
    }
    return counts;
}

FrequencyStats playlist_frequency_stats(const Playlist& p, const FrequencyTable& table) {
    if (p.tracks.empty()) throw InvalidArgument("playlist " + p.pid + " has no tracks");
    double track_sum = 0.0;
    double artist_sum = 0.0;
    std::size_t artist_slots = 0;
    for (const auto& t : p.tracks) {
        track_sum += static_cast<double>(table.track_count(t.track_id));
        for (const auto& a : t.artist_ids) {
            artist_sum += static_cast<double>(table.artist_count(a));
            ++artist_slots;
        }
    }
    FrequencyStats s;
    s.f_t = track_sum / static_cast<double>(p.tracks.size());
    s.f_a = artist_slots == 0 ? 0.0 : artist_sum / static_cast<double>(artist_slots);
    return s;
}

const char* quartile_name(Quartile q) {
    static constexpr const char* names[] = {"Q1", "Q2", "Q3", "Q4"};
    return names[static_cast<int>(q)];
}

std::map<std::string, Quartile> quartile_buckets(std::span<const std::pair<std::string, double>> stats) {
    if (stats.size() < 4) throw InvalidArgument("quartile bucketing needs at least 4 entries");
    std::vector<std::pair<std::string, double>> sorted(stats.begin(), stats.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    const std::size_t n = sorted.size();
    const std::size_t base = n / 4;
    const std::size_t extra = n % 4;
    std::map<std::string, Quartile> out;
    std::size_t idx = 0;
    for (int q = 0; q < 4; ++q) {
        const std::size_t size = base + (static_cast<std::size_t>(q) < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i, ++idx) out[sorted[idx].first] = static_cast<Quartile>(q);
    }
    return out;
}

std::vector<double> trim_percentile(std::span<const double> values, double pct) {
    if (values.empty()) throw InvalidArgument("trim_percentile on empty input");
    if (!(pct > 0.0 && pct < 100.0)) throw InvalidArgument("percentile must lie in (0, 100)");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    const double threshold = sorted[rank - 1];
    std::vector<double> out;
    for (double v : values) {
        if (v <= threshold) out.push_back(v);
    }
    return out;
}

}  // namespace playtitle
