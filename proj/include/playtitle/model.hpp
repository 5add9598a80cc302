#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "playtitle/tensor.hpp"
#include "playtitle/vocab.hpp"

namespace playtitle {

struct ModelConfig {
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t d_ff = 512;
    double dropout = 0.1;
    std::size_t in_vocab_size = 0;
    std::size_t out_vocab_size = 0;
    std::size_t max_title_len = 16;
    // Off: the encoder sees its input as an unordered multiset.
    bool use_input_positions = false;
    bool pre_norm = false;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct Parameter {
    std::string name;
    Matrix value;
    bool decay = true;  // false for biases and layer-norm gains
};

class ParamStore {
public:
    std::vector<Parameter> params;
    std::uint64_t seed = 0;

    std::size_t index_of(std::string_view name) const;
    const Matrix& get(std::string_view name) const { return params[index_of(name)].value; }
    Matrix& get(std::string_view name) { return params[index_of(name)].value; }
    std::size_t scalar_count() const;
    bool all_finite() const;
};

using GradStore = std::vector<Matrix>;

GradStore zero_grads(const ParamStore& params);

// Xavier-uniform weights and embeddings, zero biases, unit layer-norm gains.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Sinusoidal encoding for positions [0, n).
Matrix sinusoidal_positions(std::size_t n, std::size_t d_model);

// PAD-padded batch. Masks are 1 for real tokens.
struct Batch {
    std::size_t size = 0;
    std::size_t input_len = 0;
    std::size_t target_len = 0;
    std::vector<TokenId> input_ids;
    std::vector<std::uint8_t> input_mask;
    std::vector<TokenId> target_in;   // BOS-shifted
    std::vector<TokenId> target_out;  // EOS-terminated
    std::vector<std::uint8_t> target_mask;
};

Batch make_batch(std::span<const EncodedExample> examples);

struct ForwardOptions {
    bool train = false;
    std::uint64_t dropout_seed = 0;
    unsigned threads = 1;
};

struct LossResult {
    double loss = 0.0;     // mean NLL over unmasked target positions
    double nll_sum = 0.0;
    std::size_t tokens = 0;
};

// Teacher-forced NLL. When grads is non-null it receives d(loss)/d(param),
// accumulated on top of its current contents.
LossResult loss(const ParamStore& params, const ModelConfig& cfg, const Batch& batch,
                GradStore* grads, const ForwardOptions& opts = {});

// Per-example NLL sums (no gradient, no dropout).
std::vector<double> example_nll(const ParamStore& params, const ModelConfig& cfg,
                                std::span<const EncodedExample> examples);

// Encoder output for one unpadded input. Without input positions the tokens
// are processed in a canonical (sorted) order so that every permutation of
// the input produces bitwise-identical memory; `order[i]` is the original
// position of canonical row i.
struct EncoderMemory {
    Matrix z;
    std::vector<std::size_t> order;
};

EncoderMemory encode_input(const ParamStore& params, const ModelConfig& cfg,
                           std::span<const TokenId> input_ids);

// Batched encoder: one n x d_model matrix per batch row, rows in the
// caller's original order, PAD rows zero.
std::vector<Matrix> encode(const ParamStore& params, const ModelConfig& cfg,
                           std::span<const TokenId> input_ids, std::span<const std::uint8_t> input_mask,
                           std::size_t batch_size);

// Logits for every prefix position (|prefix| x out_vocab).
Matrix decode_all(const ParamStore& params, const ModelConfig& cfg, const Matrix& z,
                  std::span<const TokenId> prefix);

// Next-token logits after the final prefix position.
std::vector<double> decode_step(const ParamStore& params, const ModelConfig& cfg, const Matrix& z,
                                std::span<const TokenId> prefix);

}  // namespace playtitle
