#include "playtitle/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/unicode.hpp"

namespace playtitle {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& field, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw MissingField(field, where);
    return *it;
}

std::string require_string(const json& obj, const std::string& field, const std::string& where) {
    const json& v = require(obj, field, where);
    if (!v.is_string()) throw ParseError(where + ": field \"" + field + "\" must be a string");
    return v.get<std::string>();
}

// IDs in the public dumps are sometimes numeric.
std::string id_string(const json& v, const std::string& field, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw ParseError(where + ": field \"" + field + "\" must be a string or integer id");
}

void check_playlist(const Playlist& p, const std::string& where) {
    if (p.pid.empty()) throw ParseError(where + ": field \"pid\" is empty");
    for (const auto& t : p.tracks) {
        if (t.track_id.empty()) throw ParseError(where + ": empty track_id");
        if (t.artist_ids.empty()) throw ParseError(where + ": track " + t.track_id + " has no artist_ids");
        for (const auto& a : t.artist_ids) {
            if (a.empty()) throw ParseError(where + ": track " + t.track_id + " has an empty artist id");
        }
    }
}

Playlist playlist_from_json(const json& j, const std::string& where) {
    Playlist p;
    p.pid = require_string(j, "pid", where);
    p.title = require_string(j, "title", where);
    const std::string date = require_string(j, "modified_at", where);
    try {
        p.modified_at = Date::parse(date);
    } catch (const ParseError&) {
        throw ParseError(where + ": field \"modified_at\": unparseable date \"" + date + "\"");
    }
    const json& tracks = require(j, "tracks", where);
    if (!tracks.is_array()) throw ParseError(where + ": field \"tracks\" must be an array");
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        const std::string twhere = where + " tracks[" + std::to_string(i) + "]";
        TrackRef t;
        t.track_id = require_string(tracks[i], "track_id", twhere);
        const json& artists = require(tracks[i], "artist_ids", twhere);
        if (!artists.is_array()) throw ParseError(twhere + ": field \"artist_ids\" must be an array");
        for (const auto& a : artists) {
            if (!a.is_string()) throw ParseError(twhere + ": artist_ids entries must be strings");
            t.artist_ids.push_back(a.get<std::string>());
        }
        p.tracks.push_back(std::move(t));
    }
    check_playlist(p, where);
    return p;
}

void check_unique_pids(const std::vector<Playlist>& ps) {
    std::vector<std::string_view> pids;
    pids.reserve(ps.size());
    for (const auto& p : ps) pids.push_back(p.pid);
    std::sort(pids.begin(), pids.end());
    auto dup = std::adjacent_find(pids.begin(), pids.end());
    if (dup != pids.end()) throw ParseError("duplicate pid \"" + std::string(*dup) + "\"");
}

json parse_json_document(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::vector<Playlist> ingest_mpd(const std::filesystem::path& path, const AdapterMapping& m) {
    const json doc = parse_json_document(path);
    const json& list = doc.is_object() ? require(doc, "playlists", path.string()) : doc;
    if (!list.is_array()) throw ParseError(path.string() + ": expected an array of playlists");
    std::vector<Playlist> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = path.string() + " playlists[" + std::to_string(i) + "]";
        const json& j = list[i];
        Playlist p;
        p.pid = id_string(require(j, m.mpd_pid, where), m.mpd_pid, where);
        p.title = require_string(j, m.mpd_title, where);
        const json& ts = require(j, m.mpd_modified_at, where);
        if (!ts.is_number()) throw ParseError(where + ": field \"" + m.mpd_modified_at + "\": unparseable date " + ts.dump());
        p.modified_at = Date::from_epoch_seconds(ts.get<std::int64_t>());
        const json& tracks = require(j, m.mpd_tracks, where);
        if (!tracks.is_array()) throw ParseError(where + ": field \"" + m.mpd_tracks + "\" must be an array");
        for (std::size_t k = 0; k < tracks.size(); ++k) {
            const std::string twhere = where + " " + m.mpd_tracks + "[" + std::to_string(k) + "]";
            TrackRef t;
            t.track_id = require_string(tracks[k], m.mpd_track_id, twhere);
            t.artist_ids.push_back(require_string(tracks[k], m.mpd_artist_id, twhere));
            p.tracks.push_back(std::move(t));
        }
        check_playlist(p, where);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Playlist> ingest_melon(const std::filesystem::path& path, const IngestOptions& opts) {
    const AdapterMapping& m = opts.mapping;
    if (!opts.song_meta) throw InvalidArgument("melon ingest requires a song_meta sidecar path");
    const json meta = parse_json_document(*opts.song_meta);
    if (!meta.is_array()) throw ParseError(opts.song_meta->string() + ": expected an array of songs");
    std::unordered_map<std::string, std::vector<std::string>> artists_by_song;
    for (std::size_t i = 0; i < meta.size(); ++i) {
        const std::string where = opts.song_meta->string() + "[" + std::to_string(i) + "]";
        const std::string sid = id_string(require(meta[i], m.melon_song_id, where), m.melon_song_id, where);
        const json& basket = require(meta[i], m.melon_song_artists, where);
        if (!basket.is_array()) throw ParseError(where + ": field \"" + m.melon_song_artists + "\" must be an array");
        std::vector<std::string> artists;
        for (const auto& a : basket) artists.push_back(id_string(a, m.melon_song_artists, where));
        artists_by_song[sid] = std::move(artists);
    }

    const json list = parse_json_document(path);
    if (!list.is_array()) throw ParseError(path.string() + ": expected an array of playlists");
    std::vector<Playlist> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = path.string() + "[" + std::to_string(i) + "]";
        const json& j = list[i];
        Playlist p;
        p.pid = id_string(require(j, m.melon_pid, where), m.melon_pid, where);
        p.title = require_string(j, m.melon_title, where);
        const std::string date = require_string(j, m.melon_modified_at, where);
        try {
            p.modified_at = Date::parse(date);
        } catch (const ParseError&) {
            throw ParseError(where + ": field \"" + m.melon_modified_at + "\": unparseable date \"" + date + "\"");
        }
        const json& songs = require(j, m.melon_songs, where);
        if (!songs.is_array()) throw ParseError(where + ": field \"" + m.melon_songs + "\" must be an array");
        for (const auto& s : songs) {
            TrackRef t;
            t.track_id = id_string(s, m.melon_songs, where);
            auto it = artists_by_song.find(t.track_id);
            if (it == artists_by_song.end() || it->second.empty()) {
                throw ParseError(where + ": song " + t.track_id + " has no artists in song_meta");
            }
            t.artist_ids = it->second;
            p.tracks.push_back(std::move(t));
        }
        check_playlist(p, where);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

InputFormat parse_input_format(std::string_view name) {
    if (name == "normalized-jsonl" || name == "jsonl") return InputFormat::normalized_jsonl;
    if (name == "melon") return InputFormat::melon;
    if (name == "mpd-slice" || name == "mpd") return InputFormat::mpd_slice;
    throw InvalidArgument("unknown input format \"" + std::string(name) + "\"");
}

AdapterMapping AdapterMapping::load(const std::filesystem::path& path) {
    const json j = parse_json_document(path);
    if (!j.is_object()) throw ParseError(path.string() + ": mapping file must be a JSON object");
    AdapterMapping m;
    const std::pair<const char*, std::string*> fields[] = {
        {"mpd_pid", &m.mpd_pid},
        {"mpd_title", &m.mpd_title},
        {"mpd_modified_at", &m.mpd_modified_at},
        {"mpd_tracks", &m.mpd_tracks},
        {"mpd_track_id", &m.mpd_track_id},
        {"mpd_artist_id", &m.mpd_artist_id},
        {"melon_pid", &m.melon_pid},
        {"melon_title", &m.melon_title},
        {"melon_modified_at", &m.melon_modified_at},
        {"melon_songs", &m.melon_songs},
        {"melon_song_id", &m.melon_song_id},
        {"melon_song_artists", &m.melon_song_artists},
    };
    for (const auto& [key, value] : j.items()) {
        auto it = std::find_if(std::begin(fields), std::end(fields),
                               [&](const auto& f) { return key == f.first; });
        if (it == std::end(fields)) throw ParseError(path.string() + ": unknown mapping key \"" + key + "\"");
        if (!value.is_string()) throw ParseError(path.string() + ": mapping \"" + key + "\" must be a string");
        *it->second = value.get<std::string>();
    }
    return m;
}

std::vector<Playlist> parse_normalized_jsonl(std::string_view text) {
    std::vector<Playlist> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string where = "line " + std::to_string(line_no) + " (offset " + std::to_string(pos) + ")";
        pos = end + 1;
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ": malformed JSON: " + e.what());
        }
        out.push_back(playlist_from_json(j, where));
    }
    check_unique_pids(out);
    return out;
}

std::string playlist_to_json_line(const Playlist& p) {
    json tracks = json::array();
    for (const auto& t : p.tracks) tracks.push_back({{"track_id", t.track_id}, {"artist_ids", t.artist_ids}});
    json j = {{"pid", p.pid}, {"title", p.title}, {"modified_at", p.modified_at.to_string()}, {"tracks", tracks}};
    return j.dump();
}

void write_normalized_jsonl(const std::filesystem::path& path, std::span<const Playlist> playlists) {
    std::string out;
    for (const auto& p : playlists) {
        out += playlist_to_json_line(p);
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<Playlist> ingest(const std::filesystem::path& path, InputFormat format, const IngestOptions& options) {
    std::vector<Playlist> out;
    switch (format) {
        case InputFormat::normalized_jsonl: {
            try {
                return parse_normalized_jsonl(read_file(path));
            } catch (const MissingField& e) {
                throw MissingField(e.field(), path.string() + " " + e.what());
            }
        }
        case InputFormat::mpd_slice: out = ingest_mpd(path, options.mapping); break;
        case InputFormat::melon: out = ingest_melon(path, options); break;
    }
    check_unique_pids(out);
    return out;
}

TagList TagList::from_tags(std::span<const std::string> raw, std::string language) {
    TagList list;
    list.language = std::move(language);
    for (const auto& t : raw) {
        std::string n = normalize_token(t);
        if (!n.empty()) list.tags.insert(std::move(n));
    }
    if (list.tags.empty()) throw InvalidArgument("tag list is empty");
    return list;
}

TagList TagList::load(const std::filesystem::path& path, std::string language) {
    std::istringstream in(read_file(path));
    std::vector<std::string> raw;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line.front() == '#') continue;
        raw.push_back(line);
    }
    return from_tags(raw, std::move(language));
}

TagMatchMode parse_tag_match_mode(std::string_view name) {
    if (name == "token") return TagMatchMode::token;
    if (name == "substring") return TagMatchMode::substring;
    throw InvalidArgument("unknown tag match mode \"" + std::string(name) + "\"");
}

void FilterConfig::validate() const {
    if (min_title_tokens < 1 || min_tracks < 1 || !(min_avg_char_len >= 1.0)) {
        throw InvalidArgument("filter thresholds must be >= 1");
    }
}

FilterDecision passes_filter(const Playlist& p, const FilterConfig& cfg, const TagList& tags) {
    if (tags.tags.empty()) throw InvalidArgument("tag list is empty");
    const auto fail = [](FilterCriterion c) { return FilterDecision{false, c}; };

    const std::vector<std::string> tokens = tokenize_title(p.title);
    if (tokens.size() < cfg.min_title_tokens) return fail(FilterCriterion::title_tokens);

    std::size_t chars = 0;
    for (const auto& t : tokens) chars += scalar_count(t);
    if (static_cast<double>(chars) < cfg.min_avg_char_len * static_cast<double>(tokens.size())) {
        return fail(FilterCriterion::avg_char_len);
    }

    if (p.tracks.size() < cfg.min_tracks) return fail(FilterCriterion::track_count);

    bool matched = false;
    if (cfg.tag_match_mode == TagMatchMode::token) {
        matched = std::any_of(tokens.begin(), tokens.end(), [&](const auto& t) { return tags.contains(t); });
    } else {
        matched = std::any_of(tokens.begin(), tokens.end(), [&](const auto& t) {
            return std::any_of(tags.tags.begin(), tags.tags.end(),
                               [&](const auto& tag) { return t.find(tag) != std::string::npos; });
        });
    }
    if (!matched) return fail(FilterCriterion::tag_match);
    return {true, std::nullopt};
}

std::size_t FilterStats::total_rejected() const {
    std::size_t total = 0;
    for (auto r : rejected) total += r;
    return total;
}

FilterResult filter_corpus(std::span<const Playlist> playlists, const FilterConfig& cfg, const TagList& tags) {
    cfg.validate();
    FilterResult result;
    for (const auto& p : playlists) {
        const FilterDecision d = passes_filter(p, cfg, tags);
        if (d.pass) {
            result.kept.push_back(p);
        } else {
            ++result.stats.rejected[static_cast<std::size_t>(*d.failed) - 1];
        }
    }
    result.stats.kept = result.kept.size();
    return result;
}

}  // namespace playtitle
