#include "playtitle/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "playtitle/autodiff.hpp"
#include "playtitle/error.hpp"

namespace playtitle {

DecodeStrategy parse_decode_strategy(std::string_view name) {
    if (name == "greedy") return DecodeStrategy::greedy;
    if (name == "beam") return DecodeStrategy::beam;
    throw InvalidArgument("unknown decoding strategy \"" + std::string(name) + "\"");
}

void DecodeConfig::validate() const {
    if (beam_width < 1) throw InvalidArgument("beam_width must be >= 1");
    if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
    if (!(length_penalty >= 0.0)) throw InvalidArgument("length_penalty must be >= 0");
}

ModelScorer::ModelScorer(const ParamStore& params, const ModelConfig& cfg, std::span<const TokenId> input_ids)
    : params_(params), cfg_(cfg), memory_(encode_input(params, cfg, input_ids)) {}

std::vector<double> ModelScorer::log_probs(std::span<const TokenId> prefix) const {
    return ad::log_softmax(decode_step(params_, cfg_, memory_.z, prefix));
}

namespace {

bool emittable(TokenId id) { return id != kPad && id != kUnk && id != kBos; }

struct Hypothesis {
    std::vector<TokenId> steps;  // emitted ids, EOS included when finished by it
    double log_prob = 0.0;
};

// Higher score first; equal scores fall back to the smaller id sequence.
bool better(double score_a, const std::vector<TokenId>& a, double score_b, const std::vector<TokenId>& b) {
    if (score_a != score_b) return score_a > score_b;
    return a < b;
}

double normalized(const Hypothesis& h, double penalty) {
    if (penalty == 0.0) return h.log_prob;
    const double len = static_cast<double>(std::max<std::size_t>(1, h.steps.size()));
    return h.log_prob / std::pow(len, penalty);
}

GeneratedTitle to_title(const Hypothesis& h, double score) {
    GeneratedTitle out;
    for (TokenId id : h.steps) {
        if (id != kEos) out.tokens.push_back(id);
    }
    out.score = score;
    return out;
}

std::vector<TokenId> with_bos(const std::vector<TokenId>& words) {
    std::vector<TokenId> prefix;
    prefix.reserve(words.size() + 1);
    prefix.push_back(kBos);
    prefix.insert(prefix.end(), words.begin(), words.end());
    return prefix;
}

GeneratedTitle greedy(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
    Hypothesis h;
    std::vector<TokenId> words;
    while (words.size() < cfg.max_len) {
        const std::vector<double> lp = scorer.log_probs(with_bos(words));
        TokenId best = -1;
        for (std::size_t i = 0; i < lp.size(); ++i) {
            const auto id = static_cast<TokenId>(i);
            if (!emittable(id)) continue;
            if (best < 0 || lp[i] > lp[static_cast<std::size_t>(best)]) best = id;
        }
        if (best < 0) throw InvalidArgument("scorer returned no emittable tokens");
        h.log_prob += lp[static_cast<std::size_t>(best)];
        h.steps.push_back(best);
        if (best == kEos) break;
        words.push_back(best);
    }
    return to_title(h, normalized(h, cfg.length_penalty));
}

GeneratedTitle beam(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
    std::vector<Hypothesis> alive{Hypothesis{}};
    std::vector<Hypothesis> finished;
    while (!alive.empty()) {
        std::vector<Hypothesis> candidates;
        for (const auto& h : alive) {
            if (h.steps.size() == cfg.max_len) {
                finished.push_back(h);
                continue;
            }
            const std::vector<double> lp = scorer.log_probs(with_bos(h.steps));
            for (std::size_t i = 0; i < lp.size(); ++i) {
                const auto id = static_cast<TokenId>(i);
                if (!emittable(id) || lp[i] == -std::numeric_limits<double>::infinity()) continue;
                Hypothesis next = h;
                next.steps.push_back(id);
                next.log_prob += lp[i];
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Hypothesis& a, const Hypothesis& b) {
            return better(a.log_prob, a.steps, b.log_prob, b.steps);
        });
        if (candidates.size() > cfg.beam_width) candidates.resize(cfg.beam_width);
        alive.clear();
        for (auto& c : candidates) {
            if (c.steps.back() == kEos) {
                finished.push_back(std::move(c));
            } else {
                alive.push_back(std::move(c));
            }
        }
    }
    if (finished.empty()) throw InvalidArgument("scorer returned no emittable tokens");
    const Hypothesis* best = nullptr;
    double best_score = 0.0;
    for (const auto& h : finished) {
        const double s = normalized(h, cfg.length_penalty);
        if (!best || better(s, h.steps, best_score, best->steps)) {
            best = &h;
            best_score = s;
        }
    }
    return to_title(*best, best_score);
}

}  // namespace

GeneratedTitle generate(const NextTokenScorer& scorer, const DecodeConfig& cfg) {
    cfg.validate();
    return cfg.strategy == DecodeStrategy::greedy ? greedy(scorer, cfg) : beam(scorer, cfg);
}

GeneratedTitle generate(const ParamStore& params, const ModelConfig& model_cfg, const DecodeConfig& cfg,
                        std::span<const TokenId> input_ids) {
    const ModelScorer scorer(params, model_cfg, input_ids);
    return generate(scorer, cfg);
}

}  // namespace playtitle
