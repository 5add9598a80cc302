#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "playtitle/corpus.hpp"

namespace playtitle {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNumSpecials = 4;

class Vocab {
public:
    Vocab();

    // Non-special tokens are added in the given order after the specials.
    static Vocab from_tokens(std::span<const std::string> tokens);
    static Vocab load(const std::filesystem::path& path);

    void save(const std::filesystem::path& path) const;
    std::string serialize() const;

    TokenId lookup(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const { return index_.contains(token); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    std::span<const std::string> tokens() const { return tokens_; }

    static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

enum class InputMode { track, artist };

InputMode parse_input_mode(std::string_view name);
const char* input_mode_name(InputMode mode);

// Input sequence of raw IDs before vocabulary lookup: track IDs, or every
// track's artist IDs concatenated in track order.
std::vector<std::string> input_tokens(const Playlist& p, InputMode mode);

Vocab build_input_vocab(std::span<const Playlist> train, InputMode mode, std::size_t min_count = 1);
Vocab build_output_vocab(std::span<const Playlist> train, std::size_t min_count = 1);

struct EncodedExample {
    std::vector<TokenId> input_ids;
    std::vector<TokenId> target_ids;  // BOS ... EOS
};

struct EncodeLimits {
    std::size_t max_input_len = 128;
    std::size_t max_title_len = 16;  // includes BOS and EOS
};

EncodedExample encode(const Playlist& p, const Vocab& in_vocab, const Vocab& out_vocab,
                      InputMode mode, const EncodeLimits& limits = {});

// Strips BOS/EOS/PAD framing and maps ids back to tokens.
std::vector<std::string> decode_tokens(std::span<const TokenId> ids, const Vocab& vocab);

// UNK occurrences over all input occurrences.
double unk_proportion(std::span<const EncodedExample> examples);

}  // namespace playtitle
