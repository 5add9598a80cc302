#include "playtitle/vocab.hpp"

#include <algorithm>
#include <map>

#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"
#include "playtitle/unicode.hpp"

namespace playtitle {

namespace {

const std::string kSpecialTokens[] = {"<pad>", "<unk>", "<s>", "</s>"};

Vocab vocab_from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                        const char* what) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, c] : counts) {
        if (c >= min_count) kept.emplace_back(tok, c);
    }
    if (kept.empty()) {
        throw EmptyVocabulary(std::string(what) + " vocabulary is empty at min_count " + std::to_string(min_count));
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, c] : kept) tokens.push_back(std::move(tok));
    return Vocab::from_tokens(tokens);
}

}  // namespace

Vocab::Vocab() {
    for (const auto& s : kSpecialTokens) {
        index_.emplace(s, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(s);
    }
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens) {
    Vocab v;
    for (const auto& t : tokens) {
        if (t.empty() || t.find('\n') != std::string::npos) {
            throw InvalidArgument("vocabulary token must be non-empty and newline-free");
        }
        if (!v.index_.emplace(t, static_cast<TokenId>(v.tokens_.size())).second) {
            throw InvalidArgument("duplicate vocabulary token \"" + t + "\"");
        }
        v.tokens_.push_back(t);
    }
    return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    if (text.empty() || text.back() != '\n') throw ParseError(path.string() + ": vocab file must end with a newline");
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        lines.emplace_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    if (lines.size() < static_cast<std::size_t>(kNumSpecials) ||
        !std::equal(std::begin(kSpecialTokens), std::end(kSpecialTokens), lines.begin())) {
        throw ParseError(path.string() + ": vocab file must start with the four special tokens");
    }
    try {
        return from_tokens(std::span<const std::string>(lines).subspan(kNumSpecials));
    } catch (const InvalidArgument& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string Vocab::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

void Vocab::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

TokenId Vocab::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

InputMode parse_input_mode(std::string_view name) {
    if (name == "track") return InputMode::track;
    if (name == "artist") return InputMode::artist;
    throw InvalidArgument("unknown input mode \"" + std::string(name) + "\"");
}

const char* input_mode_name(InputMode mode) { return mode == InputMode::track ? "track" : "artist"; }

std::vector<std::string> input_tokens(const Playlist& p, InputMode mode) {
    std::vector<std::string> out;
    for (const auto& t : p.tracks) {
        if (mode == InputMode::track) {
            out.push_back(t.track_id);
        } else {
            out.insert(out.end(), t.artist_ids.begin(), t.artist_ids.end());
        }
    }
    return out;
}

Vocab build_input_vocab(std::span<const Playlist> train, InputMode mode, std::size_t min_count) {
    if (train.empty()) throw InvalidArgument("cannot build a vocabulary from an empty train split");
    std::map<std::string, std::size_t> counts;
    for (const auto& p : train) {
        for (auto& tok : input_tokens(p, mode)) ++counts[std::move(tok)];
    }
    return vocab_from_counts(counts, min_count, "input");
}

Vocab build_output_vocab(std::span<const Playlist> train, std::size_t min_count) {
    if (train.empty()) throw InvalidArgument("cannot build a vocabulary from an empty train split");
    std::map<std::string, std::size_t> counts;
    for (const auto& p : train) {
        for (auto& w : tokenize_title(p.title)) ++counts[std::move(w)];
    }
    return vocab_from_counts(counts, min_count, "output");
}

EncodedExample encode(const Playlist& p, const Vocab& in_vocab, const Vocab& out_vocab, InputMode mode,
                      const EncodeLimits& limits) {
    if (limits.max_title_len < 2 || limits.max_input_len < 1) {
        throw InvalidArgument("max_title_len must be >= 2 and max_input_len >= 1");
    }
    EncodedExample ex;
    for (const auto& tok : input_tokens(p, mode)) {
        if (ex.input_ids.size() == limits.max_input_len) break;
        ex.input_ids.push_back(in_vocab.lookup(tok));
    }
    ex.target_ids.push_back(kBos);
    for (const auto& w : tokenize_title(p.title)) {
        if (ex.target_ids.size() + 1 == limits.max_title_len) break;
        ex.target_ids.push_back(out_vocab.lookup(w));
    }
    ex.target_ids.push_back(kEos);
    return ex;
}

std::vector<std::string> decode_tokens(std::span<const TokenId> ids, const Vocab& vocab) {
    std::vector<std::string> out;
    for (TokenId id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

double unk_proportion(std::span<const EncodedExample> examples) {
    if (examples.empty()) throw InvalidArgument("unk_proportion of an empty example list");
    std::size_t unk = 0;
    std::size_t total = 0;
    for (const auto& ex : examples) {
        total += ex.input_ids.size();
        unk += static_cast<std::size_t>(std::count(ex.input_ids.begin(), ex.input_ids.end(), kUnk));
    }
    return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

}  // namespace playtitle
