#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "playtitle/corpus.hpp"

namespace playtitle {

// Synthetic playlist corpus with a Zipf-distributed long tail of tracks.
// Artists belong to genres and own contiguous blocks of tracks; tracks carry
// release dates, so late playlists contain releases unseen earlier. Titles
// come from a per-genre template grammar, making them predictable from
// artist identity but not from unseen track IDs.
struct SynthConfig {
    double zipf_exponent = 1.1;
    std::size_t n_playlists = 2000;
    std::size_t n_tracks = 6000;
    std::size_t n_artists = 400;
    std::size_t artists_per_track = 1;
    std::size_t n_genres = 8;
    Date start{2017, 1, 1};
    Date end{2020, 12, 31};
    std::size_t min_tracks = 8;
    std::size_t max_tracks = 24;
    // Probability that a slot is filled from releases of the last
    // `recent_window_days` days.
    double recent_fraction = 0.5;
    std::size_t recent_window_days = 90;
    // Share of playlists deliberately violating one filter criterion.
    double noise_fraction = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthCorpus {
    std::vector<Playlist> playlists;
    std::vector<std::string> tags;
};

SynthCorpus synthesize(const SynthConfig& cfg);

}  // namespace playtitle
