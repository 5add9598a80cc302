#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "playtitle/model.hpp"
#include "playtitle/vocab.hpp"

namespace playtitle {

enum class DecodeStrategy { greedy, beam };

DecodeStrategy parse_decode_strategy(std::string_view name);

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    std::size_t beam_width = 4;
    std::size_t max_len = 16;  // words, excluding BOS/EOS
    double length_penalty = 0.0;

    void validate() const;
};

struct GeneratedTitle {
    std::vector<TokenId> tokens;
    double score = 0.0;
};

// Next-token log-probabilities given a prefix that starts with BOS.
class NextTokenScorer {
public:
    virtual ~NextTokenScorer() = default;
    virtual std::vector<double> log_probs(std::span<const TokenId> prefix) const = 0;
};

class ModelScorer final : public NextTokenScorer {
public:
    ModelScorer(const ParamStore& params, const ModelConfig& cfg, std::span<const TokenId> input_ids);
    std::vector<double> log_probs(std::span<const TokenId> prefix) const override;

private:
    const ParamStore& params_;
    const ModelConfig& cfg_;
    EncoderMemory memory_;
};

// PAD, UNK and BOS are never emitted. A hypothesis that reaches max_len
// words without EOS is finished as is.
GeneratedTitle generate(const NextTokenScorer& scorer, const DecodeConfig& cfg);
GeneratedTitle generate(const ParamStore& params, const ModelConfig& model_cfg,
                        const DecodeConfig& cfg, std::span<const TokenId> input_ids);

}  // namespace playtitle
