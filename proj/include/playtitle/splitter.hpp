#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "playtitle/corpus.hpp"

namespace playtitle {

struct SplitConfig {
    Date cutoff_date;
    double val_fraction_of_holdout = 0.5;
    std::uint64_t seed = 0;
};

struct SplitResult {
    std::vector<Playlist> train;
    std::vector<Playlist> val;
    std::vector<Playlist> test;
    double train_percent = 0.0;
    double holdout_percent = 0.0;
};

// Train keeps input order. The holdout is ordered by pid, shuffled with the
// seed, and the first round(fraction * |holdout|) playlists become validation.
SplitResult chronological_split(std::span<const Playlist> playlists, const SplitConfig& cfg);

struct SplitManifest {
    SplitConfig config;
    std::vector<std::string> train, val, test;
};

SplitManifest make_split_manifest(const SplitResult& split, const SplitConfig& cfg);
void write_split_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
SplitManifest read_split_manifest(const std::filesystem::path& path);

// Counts are occurrences in train playlists; artists are counted once per
// (playlist-track, artist) pair. Absent keys mean zero.
struct FrequencyTable {
    std::map<std::string, std::uint64_t> track_counts;
    std::map<std::string, std::uint64_t> artist_counts;

    std::uint64_t track_count(const std::string& id) const;
    std::uint64_t artist_count(const std::string& id) const;
    void merge(const FrequencyTable& other);
};

FrequencyTable build_frequency_table(std::span<const Playlist> train);

void write_counts_tsv(const std::filesystem::path& path,
                      const std::map<std::string, std::uint64_t>& counts);
std::map<std::string, std::uint64_t> read_counts_tsv(const std::filesystem::path& path);

struct FrequencyStats {
    double f_t = 0.0;
    double f_a = 0.0;
};

FrequencyStats playlist_frequency_stats(const Playlist& p, const FrequencyTable& table);

enum class Quartile : int { Q1 = 0, Q2 = 1, Q3 = 2, Q4 = 3 };

const char* quartile_name(Quartile q);

std::map<std::string, Quartile> quartile_buckets(std::span<const std::pair<std::string, double>> stats);

// Drops values above the nearest-rank pct-th percentile; keeps input order.
std::vector<double> trim_percentile(std::span<const double> values, double pct);

}  // namespace playtitle
