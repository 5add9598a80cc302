#include "playtitle/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

#include "playtitle/error.hpp"
#include "playtitle/rng.hpp"

namespace playtitle {

namespace {

constexpr const char* kGenreTags[] = {"jazz",  "rock", "pop",    "hiphop", "indie", "metal", "soul",  "edm",
                                      "folk",  "reggae", "blues", "kpop",  "trap",  "house", "techno", "disco"};
constexpr const char* kMoods[] = {"chill",  "happy",  "sad",    "late",    "morning", "summer", "rainy", "dreamy",
                                  "sunny",  "lazy",   "night",  "road",    "workout", "study",  "party", "cozy",
                                  "calm",   "dark",   "bright", "golden",  "wild",    "quiet",  "sweet", "lonely",
                                  "fresh",  "slow",   "warm",   "cold",    "young",   "electric", "lost", "gentle"};
constexpr const char* kSuffixes[] = {"mix", "vibes", "playlist", "songs", "hits", "tunes", "jams", "set"};
constexpr std::size_t kMoodsPerGenre = 4;
constexpr double kDominantShare = 0.5;
constexpr int kCatalogLeadDays = 365;

std::string genre_tag(std::size_t g) {
    if (g < std::size(kGenreTags)) return kGenreTags[g];
    return "genre" + std::to_string(g + 1);
}

std::string id_string(char prefix, std::size_t n, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, n);
    return buf;
}

// Tracks ordered by release day with cumulative popularity weights, so a
// release-date window maps to a contiguous range.
struct Pool {
    std::vector<std::size_t> ids;
    std::vector<std::int64_t> days;
    std::vector<double> cum;  // cum[i] = weight of ids[0..i)

    void build(std::vector<std::size_t> members, const std::vector<std::int64_t>& release,
               const std::vector<double>& weight) {
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t a, std::size_t b) { return release[a] < release[b]; });
        ids = std::move(members);
        days.clear();
        cum.assign(1, 0.0);
        for (auto t : ids) {
            days.push_back(release[t]);
            cum.push_back(cum.back() + weight[t]);
        }
    }

    // Draws a track released in [lo, hi].
    std::optional<std::size_t> sample(Rng& rng, std::int64_t lo, std::int64_t hi) const {
        const auto first = static_cast<std::size_t>(std::lower_bound(days.begin(), days.end(), lo) - days.begin());
        const auto last = static_cast<std::size_t>(std::upper_bound(days.begin(), days.end(), hi) - days.begin());
        if (first >= last) return std::nullopt;
        const double total = cum[last] - cum[first];
        if (!(total > 0.0)) return std::nullopt;
        const double x = cum[first] + rng.uniform() * total;
        auto it = std::upper_bound(cum.begin() + static_cast<std::ptrdiff_t>(first) + 1,
                                   cum.begin() + static_cast<std::ptrdiff_t>(last) + 1, x);
        auto idx = static_cast<std::size_t>(it - cum.begin()) - 1;
        return ids[std::min(idx, last - 1)];
    }
};

}  // namespace

void SynthConfig::validate() const {
    if (n_playlists == 0 || n_tracks == 0 || n_artists == 0 || n_genres == 0 || artists_per_track == 0) {
        throw InvalidArgument("synth sizes must be positive");
    }
    if (n_artists > n_tracks) throw InvalidArgument("synth needs at least one track per artist");
    if (n_genres > n_artists) throw InvalidArgument("synth needs at least one artist per genre");
    if (artists_per_track > n_artists / n_genres) {
        throw InvalidArgument("artists_per_track exceeds the artists available per genre");
    }
    if (min_tracks == 0 || min_tracks > max_tracks) throw InvalidArgument("synth track range is empty");
    if (end < start) throw InvalidArgument("synth date range is empty");
    if (!(zipf_exponent > 0.0)) throw InvalidArgument("zipf exponent must be positive");
    for (double f : {recent_fraction, noise_fraction}) {
        if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("synth fractions must lie in [0, 1]");
    }
}

SynthCorpus synthesize(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    const std::size_t T = cfg.n_tracks;
    const std::size_t A = cfg.n_artists;
    const std::size_t G = cfg.n_genres;
    const std::int64_t day0 = cfg.start.days_since_epoch();
    const std::int64_t day1 = cfg.end.days_since_epoch();

    std::vector<std::size_t> owner(T);
    for (std::size_t t = 0; t < T; ++t) owner[t] = t * A / T;

    // Popularity rank is a random permutation, independent of ownership.
    std::vector<std::size_t> rank(T);
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(rank));
    std::vector<double> weight(T);
    for (std::size_t t = 0; t < T; ++t) weight[t] = std::pow(static_cast<double>(rank[t] + 1), -cfg.zipf_exponent);

    std::vector<std::int64_t> release(T);
    const auto span_days = static_cast<std::uint64_t>(day1 - day0 + kCatalogLeadDays + 1);
    for (std::size_t t = 0; t < T; ++t) release[t] = day0 - kCatalogLeadDays + static_cast<std::int64_t>(rng.below(span_days));

    std::vector<std::vector<std::size_t>> genre_members(G), artist_members(A);
    for (std::size_t t = 0; t < T; ++t) {
        genre_members[owner[t] % G].push_back(t);
        artist_members[owner[t]].push_back(t);
    }
    std::vector<Pool> genre_pool(G), artist_pool(A);
    for (std::size_t g = 0; g < G; ++g) genre_pool[g].build(genre_members[g], release, weight);
    for (std::size_t a = 0; a < A; ++a) artist_pool[a].build(artist_members[a], release, weight);
    Pool all_pool;
    {
        std::vector<std::size_t> all(T);
        std::iota(all.begin(), all.end(), std::size_t{0});
        all_pool.build(all, release, weight);
    }

    auto track_ref = [&](std::size_t t) {
        TrackRef ref;
        ref.track_id = id_string('t', t, 6);
        const std::size_t a = owner[t];
        ref.artist_ids.push_back(id_string('a', a, 5));
        // Featured artists stay within the owner's genre.
        const std::size_t g = a % G;
        const std::size_t in_genre = (A - g + G - 1) / G;
        for (std::size_t k = 1; k < cfg.artists_per_track; ++k) {
            ref.artist_ids.push_back(id_string('a', g + ((a / G + k) % in_genre) * G, 5));
        }
        return ref;
    };

    auto mood_of = [&](std::size_t g, std::size_t artist) {
        const std::size_t k = (artist / G) % kMoodsPerGenre;
        return std::string(kMoods[(g * kMoodsPerGenre + k) % std::size(kMoods)]);
    };
    auto suffix = [&]() { return std::string(kSuffixes[rng.below(std::size(kSuffixes))]); };

    SynthCorpus out;
    for (std::size_t g = 0; g < G; ++g) out.tags.push_back(genre_tag(g));

    std::size_t noise_kind = 0;
    const auto n_len = static_cast<std::uint64_t>(cfg.max_tracks - cfg.min_tracks + 1);
    for (std::size_t i = 0; i < cfg.n_playlists; ++i) {
        Playlist p;
        p.pid = id_string('p', i, 6);
        const std::int64_t day = day0 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(day1 - day0 + 1)));
        p.modified_at = Date(std::chrono::sys_days(std::chrono::days(day)));
        const std::size_t g = rng.below(G);

        auto seed_track = genre_pool[g].sample(rng, INT64_MIN, day);
        if (!seed_track) seed_track = all_pool.sample(rng, INT64_MIN, day);
        if (!seed_track) seed_track = all_pool.sample(rng, INT64_MIN, INT64_MAX);
        const std::size_t dominant = owner[*seed_track];

        const std::size_t n = cfg.min_tracks + rng.below(n_len);
        std::vector<std::size_t> chosen{*seed_track};
        while (chosen.size() < n) {
            std::optional<std::size_t> pick;
            for (int attempt = 0; attempt < 8; ++attempt) {
                const bool recent = rng.uniform() < cfg.recent_fraction;
                const std::int64_t lo = recent ? day - static_cast<std::int64_t>(cfg.recent_window_days) : INT64_MIN;
                const Pool& pool = rng.uniform() < kDominantShare ? artist_pool[dominant] : genre_pool[g];
                pick = pool.sample(rng, lo, day);
                if (!pick) pick = genre_pool[g].sample(rng, INT64_MIN, day);
                if (!pick) pick = all_pool.sample(rng, INT64_MIN, day);
                if (!pick) pick = seed_track;
                if (std::find(chosen.begin(), chosen.end(), *pick) == chosen.end()) break;
            }
            chosen.push_back(*pick);
        }

        std::string title = mood_of(g, dominant) + " " + genre_tag(g) + " " + suffix();
        if (rng.uniform() < cfg.noise_fraction) {
            switch (noise_kind++ % 4) {
                case 0:  // too few title tokens
                    title = mood_of(g, dominant) + " " + genre_tag(g);
                    break;
                case 1:  // tokens too short on average
                    title = "x y z";
                    break;
                case 2:  // too few tracks
                    chosen.resize(1);
                    break;
                default: {  // no tag word
                    std::string s2 = suffix();
                    title = mood_of(g, dominant) + " " + suffix() + " " + s2;
                    break;
                }
            }
        }
        p.title = title;
        for (auto t : chosen) p.tracks.push_back(track_ref(t));
        out.playlists.push_back(std::move(p));
    }
    return out;
}

}  // namespace playtitle
