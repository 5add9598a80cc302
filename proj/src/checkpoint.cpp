#include "playtitle/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "playtitle/error.hpp"
#include "playtitle/hashing.hpp"

namespace playtitle {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "PLTCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void append_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},
            {"n_heads", c.n_heads},
            {"n_enc_layers", c.n_enc_layers},
            {"n_dec_layers", c.n_dec_layers},
            {"d_ff", c.d_ff},
            {"dropout", c.dropout},
            {"in_vocab_size", c.in_vocab_size},
            {"out_vocab_size", c.out_vocab_size},
            {"max_title_len", c.max_title_len},
            {"use_input_positions", c.use_input_positions},
            {"pre_norm", c.pre_norm}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_enc_layers = j.at("n_enc_layers").get<std::size_t>();
    c.n_dec_layers = j.at("n_dec_layers").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.in_vocab_size = j.at("in_vocab_size").get<std::size_t>();
    c.out_vocab_size = j.at("out_vocab_size").get<std::size_t>();
    c.max_title_len = j.at("max_title_len").get<std::size_t>();
    c.use_input_positions = j.at("use_input_positions").get<bool>();
    c.pre_norm = j.at("pre_norm").get<bool>();
    return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    json tensors = json::array();
    for (const auto& p : ckpt.params.params) {
        tensors.push_back({{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols}, {"decay", p.decay}});
    }
    const json header = {{"config", model_config_to_json(ckpt.config)},
                         {"seed", ckpt.params.seed},
                         {"input_mode", input_mode_name(ckpt.input_mode)},
                         {"input_vocab_sha256", ckpt.input_vocab_sha256},
                         {"output_vocab_sha256", ckpt.output_vocab_sha256},
                         {"tensors", tensors}};
    const std::string h = header.dump();
    std::string out(kMagic);
    append_u64(out, h.size());
    out += h;
    for (const auto& p : ckpt.params.params) {
        out.append(reinterpret_cast<const char*>(p.value.data.data()), p.value.size() * sizeof(double));
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
        throw ParseError("not a playtitle checkpoint");
    }
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + kMagic.size(), 8);
    std::size_t pos = kMagic.size() + 8;
    if (header_len > bytes.size() - pos) throw ParseError("truncated checkpoint header");
    Checkpoint ckpt;
    try {
        const json header = json::parse(bytes.substr(pos, header_len));
        pos += header_len;
        ckpt.config = model_config_from_json(header.at("config"));
        ckpt.params.seed = header.at("seed").get<std::uint64_t>();
        ckpt.input_mode = parse_input_mode(header.at("input_mode").get<std::string>());
        ckpt.input_vocab_sha256 = header.at("input_vocab_sha256").get<std::string>();
        ckpt.output_vocab_sha256 = header.at("output_vocab_sha256").get<std::string>();
        for (const auto& t : header.at("tensors")) {
            Parameter p;
            p.name = t.at("name").get<std::string>();
            p.decay = t.at("decay").get<bool>();
            p.value = Matrix(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
            const std::size_t n = p.value.size() * sizeof(double);
            if (n > bytes.size() - pos) throw ParseError("truncated tensor " + p.name);
            std::memcpy(p.value.data.data(), bytes.data() + pos, n);
            pos += n;
            ckpt.params.params.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad checkpoint header: ") + e.what());
    }
    if (pos != bytes.size()) throw ParseError("trailing bytes after checkpoint tensors");
    ckpt.config.validate();
    // Shapes are re-checked against the config on first use.
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return deserialize_checkpoint(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void verify_vocabs(const Checkpoint& ckpt, const Vocab& in_vocab, const Vocab& out_vocab) {
    if (sha256_hex(in_vocab.serialize()) != ckpt.input_vocab_sha256) {
        throw InvalidArgument("input vocabulary does not match the checkpoint");
    }
    if (sha256_hex(out_vocab.serialize()) != ckpt.output_vocab_sha256) {
        throw InvalidArgument("output vocabulary does not match the checkpoint");
    }
}

}  // namespace playtitle
