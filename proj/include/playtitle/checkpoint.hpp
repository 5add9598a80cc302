#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "playtitle/model.hpp"
#include "playtitle/vocab.hpp"

namespace playtitle {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
    ModelConfig config;
    ParamStore params;
    InputMode input_mode = InputMode::track;
    std::string input_vocab_sha256;
    std::string output_vocab_sha256;
};

// Layout: "PLTCKPT1", u64 header length, JSON header, then every tensor as
// little-endian float64 in header order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws InvalidArgument when the vocabularies differ from the ones the
// checkpoint was trained against.
void verify_vocabs(const Checkpoint& ckpt, const Vocab& in_vocab, const Vocab& out_vocab);

}  // namespace playtitle
