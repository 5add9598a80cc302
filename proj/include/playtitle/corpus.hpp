#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "playtitle/date.hpp"

namespace playtitle {

struct TrackRef {
    std::string track_id;
    std::vector<std::string> artist_ids;

    bool operator==(const TrackRef&) const = default;
};

struct Playlist {
    std::string pid;
    std::string title;
    Date modified_at;
    std::vector<TrackRef> tracks;

    bool operator==(const Playlist&) const = default;
};

enum class InputFormat { normalized_jsonl, melon, mpd_slice };

InputFormat parse_input_format(std::string_view name);

// Field names used by the Melon and MPD adapters. Defaults follow the public
// dataset releases; a JSON mapping file may override any of them.
struct AdapterMapping {
    // MPD slice
    std::string mpd_pid = "pid";
    std::string mpd_title = "name";
    std::string mpd_modified_at = "modified_at";
    std::string mpd_tracks = "tracks";
    std::string mpd_track_id = "track_uri";
    std::string mpd_artist_id = "artist_uri";
    // Melon playlists + song_meta sidecar
    std::string melon_pid = "id";
    std::string melon_title = "plylst_title";
    std::string melon_modified_at = "updt_date";
    std::string melon_songs = "songs";
    std::string melon_song_id = "id";
    std::string melon_song_artists = "artist_id_basket";

    static AdapterMapping load(const std::filesystem::path& path);
};

struct IngestOptions {
    AdapterMapping mapping;
    std::optional<std::filesystem::path> song_meta;  // required for Melon
};

std::vector<Playlist> ingest(const std::filesystem::path& path, InputFormat format,
                             const IngestOptions& options = {});

// Normalized JSONL is the canonical interchange format.
std::vector<Playlist> parse_normalized_jsonl(std::string_view text);
std::string playlist_to_json_line(const Playlist& p);
void write_normalized_jsonl(const std::filesystem::path& path, std::span<const Playlist> playlists);

struct TagList {
    std::set<std::string> tags;
    std::string language;

    static TagList from_tags(std::span<const std::string> raw, std::string language = {});
    // One tag per line, '#' comment lines, tags normalized on load.
    static TagList load(const std::filesystem::path& path, std::string language = {});
    bool contains(const std::string& normalized) const { return tags.contains(normalized); }
};

enum class TagMatchMode { token, substring };

TagMatchMode parse_tag_match_mode(std::string_view name);

struct FilterConfig {
    std::size_t min_title_tokens = 3;
    double min_avg_char_len = 2.0;
    std::size_t min_tracks = 2;
    TagMatchMode tag_match_mode = TagMatchMode::token;

    void validate() const;
};

// Numbered in the order they are checked; the first failure is reported.
enum class FilterCriterion : int { title_tokens = 1, avg_char_len = 2, track_count = 3, tag_match = 4 };

struct FilterDecision {
    bool pass = false;
    std::optional<FilterCriterion> failed;
};

FilterDecision passes_filter(const Playlist& p, const FilterConfig& cfg, const TagList& tags);

struct FilterStats {
    std::array<std::size_t, 4> rejected{};  // indexed by criterion - 1
    std::size_t kept = 0;

    std::size_t total_rejected() const;
};

struct FilterResult {
    std::vector<Playlist> kept;
    FilterStats stats;
};

FilterResult filter_corpus(std::span<const Playlist> playlists, const FilterConfig& cfg,
                           const TagList& tags);

}  // namespace playtitle
