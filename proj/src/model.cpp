#include "playtitle/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "playtitle/autodiff.hpp"
#include "playtitle/error.hpp"
#include "playtitle/rng.hpp"

namespace playtitle {

using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || n_enc_layers == 0 || n_dec_layers == 0 || d_ff == 0 ||
        max_title_len == 0) {
        throw InvalidArgument("model dimensions and layer counts must be >= 1");
    }
    if (d_model % n_heads != 0) throw InvalidArgument("d_model must be divisible by n_heads");
    if (in_vocab_size <= static_cast<std::size_t>(kNumSpecials) ||
        out_vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
        throw InvalidArgument("vocabulary sizes must exceed the special-token count");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
}

std::size_t ParamStore::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == name) return i;
    }
    throw InvalidArgument("no parameter named \"" + std::string(name) + "\"");
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

bool ParamStore::all_finite() const {
    for (const auto& p : params) {
        for (double v : p.value.data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

GradStore zero_grads(const ParamStore& params) {
    GradStore g;
    g.reserve(params.params.size());
    for (const auto& p : params.params) g.emplace_back(p.value.rows, p.value.cols);
    return g;
}

namespace {

struct AttnIdx {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIdx {
    std::size_t gamma, beta;
};
struct FfIdx {
    std::size_t w1, b1, w2, b2;
};
struct EncLayerIdx {
    AttnIdx attn;
    NormIdx ln1;
    FfIdx ff;
    NormIdx ln2;
};
struct DecLayerIdx {
    AttnIdx self_attn;
    NormIdx ln1;
    AttnIdx cross;
    NormIdx ln2;
    FfIdx ff;
    NormIdx ln3;
};
struct Layout {
    std::size_t enc_embed, dec_embed, out_w, out_b;
    std::vector<EncLayerIdx> enc;
    std::vector<DecLayerIdx> dec;
    std::optional<NormIdx> enc_final, dec_final;
};

// Appends parameters to the store in call order.
class Builder {
public:
    Builder(ParamStore& store, Rng* rng) : store_(store), rng_(rng) {}

    std::size_t weight(const std::string& name, std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (double& v : m.data) v = (2.0 * rng_->uniform() - 1.0) * bound;
        return add(name, std::move(m), true);
    }
    std::size_t constant(const std::string& name, std::size_t rows, std::size_t cols, double fill) {
        return add(name, Matrix(rows, cols, fill), false);
    }

private:
    std::size_t add(const std::string& name, Matrix m, bool decay) {
        store_.params.push_back({name, std::move(m), decay});
        return store_.params.size() - 1;
    }
    ParamStore& store_;
    Rng* rng_;
};

template <typename Make>
Layout build_layout(const ModelConfig& cfg, Make&& make_weight, auto&& make_const) {
    const std::size_t d = cfg.d_model;
    auto attn = [&](const std::string& p) {
        AttnIdx a{};
        a.wq = make_weight(p + ".wq", d, d);
        a.bq = make_const(p + ".bq", 1, d, 0.0);
        a.wk = make_weight(p + ".wk", d, d);
        a.bk = make_const(p + ".bk", 1, d, 0.0);
        a.wv = make_weight(p + ".wv", d, d);
        a.bv = make_const(p + ".bv", 1, d, 0.0);
        a.wo = make_weight(p + ".wo", d, d);
        a.bo = make_const(p + ".bo", 1, d, 0.0);
        return a;
    };
    auto norm = [&](const std::string& p) {
        return NormIdx{make_const(p + ".gamma", 1, d, 1.0), make_const(p + ".beta", 1, d, 0.0)};
    };
    auto ff = [&](const std::string& p) {
        FfIdx f{};
        f.w1 = make_weight(p + ".w1", d, cfg.d_ff);
        f.b1 = make_const(p + ".b1", 1, cfg.d_ff, 0.0);
        f.w2 = make_weight(p + ".w2", cfg.d_ff, d);
        f.b2 = make_const(p + ".b2", 1, d, 0.0);
        return f;
    };
    Layout l{};
    l.enc_embed = make_weight("enc.embed", cfg.in_vocab_size, d);
    for (std::size_t i = 0; i < cfg.n_enc_layers; ++i) {
        const std::string p = "enc." + std::to_string(i);
        EncLayerIdx e{};
        e.attn = attn(p + ".attn");
        e.ln1 = norm(p + ".ln1");
        e.ff = ff(p + ".ff");
        e.ln2 = norm(p + ".ln2");
        l.enc.push_back(e);
    }
    if (cfg.pre_norm) l.enc_final = norm("enc.ln_final");
    l.dec_embed = make_weight("dec.embed", cfg.out_vocab_size, d);
    for (std::size_t i = 0; i < cfg.n_dec_layers; ++i) {
        const std::string p = "dec." + std::to_string(i);
        DecLayerIdx e{};
        e.self_attn = attn(p + ".self");
        e.ln1 = norm(p + ".ln1");
        e.cross = attn(p + ".cross");
        e.ln2 = norm(p + ".ln2");
        e.ff = ff(p + ".ff");
        e.ln3 = norm(p + ".ln3");
        l.dec.push_back(e);
    }
    if (cfg.pre_norm) l.dec_final = norm("dec.ln_final");
    l.out_w = make_weight("out.w", d, cfg.out_vocab_size);
    l.out_b = make_const("out.b", 1, cfg.out_vocab_size, 0.0);
    return l;
}

Layout resolve_layout(const ParamStore& store, const ModelConfig& cfg) {
    auto check = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        const std::size_t i = store.index_of(name);
        const Matrix& m = store.params[i].value;
        if (m.rows != rows || m.cols != cols) {
            throw InvalidArgument("parameter " + name + " has shape " + std::to_string(m.rows) + "x" +
                                  std::to_string(m.cols) + ", expected " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        }
        return i;
    };
    return build_layout(
        cfg, check, [&](const std::string& name, std::size_t r, std::size_t c, double) { return check(name, r, c); });
}

class Graph {
public:
    Graph(Tape& tape, const ParamStore& params, GradStore* grads, const ModelConfig& cfg, const Layout& layout,
          bool train, Rng* rng)
        : t_(tape), cfg_(cfg), layout_(layout), train_(train), rng_(rng) {
        vars_.reserve(params.params.size());
        for (std::size_t i = 0; i < params.params.size(); ++i) {
            vars_.push_back(t_.parameter(params.params[i].value, grads ? &(*grads)[i] : nullptr));
        }
    }

    Var encoder(std::span<const TokenId> ids) {
        const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
        Var x = ad::scale(t_, ad::embedding(t_, p(layout_.enc_embed), ids), emb_scale);
        if (cfg_.use_input_positions) {
            x = ad::add(t_, x, t_.constant(sinusoidal_positions(ids.size(), cfg_.d_model)));
        }
        for (const auto& l : layout_.enc) {
            x = sublayer(x, l.ln1, [&](Var h) { return mha(h, h, l.attn, false); });
            x = sublayer(x, l.ln2, [&](Var h) { return feed_forward(h, l.ff); });
        }
        if (layout_.enc_final) x = norm(x, *layout_.enc_final);
        return x;
    }

    Var decoder(Var z, std::span<const TokenId> prefix) {
        const double emb_scale = std::sqrt(static_cast<double>(cfg_.d_model));
        Var y = ad::scale(t_, ad::embedding(t_, p(layout_.dec_embed), prefix), emb_scale);
        y = ad::add(t_, y, t_.constant(sinusoidal_positions(prefix.size(), cfg_.d_model)));
        for (const auto& l : layout_.dec) {
            y = sublayer(y, l.ln1, [&](Var h) { return mha(h, h, l.self_attn, true); });
            y = sublayer(y, l.ln2, [&](Var h) { return mha(h, z, l.cross, false); });
            y = sublayer(y, l.ln3, [&](Var h) { return feed_forward(h, l.ff); });
        }
        if (layout_.dec_final) y = norm(y, *layout_.dec_final);
        return ad::linear(t_, y, p(layout_.out_w), p(layout_.out_b));
    }

private:
    Var p(std::size_t i) const { return vars_[i]; }

    Var norm(Var x, const NormIdx& n) { return ad::layer_norm(t_, x, p(n.gamma), p(n.beta)); }

    Var drop(Var x) {
        if (!train_ || cfg_.dropout <= 0.0) return x;
        return ad::dropout(t_, x, cfg_.dropout, *rng_);
    }

    template <typename F>
    Var sublayer(Var x, const NormIdx& n, F&& f) {
        if (cfg_.pre_norm) return ad::add(t_, x, drop(f(norm(x, n))));
        return norm(ad::add(t_, x, drop(f(x))), n);
    }

    Var mha(Var xq, Var xkv, const AttnIdx& a, bool causal) {
        Var q = ad::linear(t_, xq, p(a.wq), p(a.bq));
        Var k = ad::linear(t_, xkv, p(a.wk), p(a.bk));
        Var v = ad::linear(t_, xkv, p(a.wv), p(a.bv));
        Var o = ad::attention(t_, q, k, v, cfg_.n_heads, causal);
        return ad::linear(t_, o, p(a.wo), p(a.bo));
    }

    Var feed_forward(Var x, const FfIdx& f) {
        Var h = ad::relu(t_, ad::linear(t_, x, p(f.w1), p(f.b1)));
        return ad::linear(t_, h, p(f.w2), p(f.b2));
    }

    Tape& t_;
    const ModelConfig& cfg_;
    const Layout& layout_;
    bool train_;
    Rng* rng_;
    std::vector<Var> vars_;
};

// Stable sort by token id; positions of equal tokens keep their order.
std::vector<std::size_t> canonical_order(std::span<const TokenId> ids) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return order;
}

std::vector<TokenId> encoder_tokens(const ModelConfig& cfg, std::span<const TokenId> ids,
                                    std::vector<std::size_t>* order_out) {
    std::vector<std::size_t> order;
    if (cfg.use_input_positions) {
        order.resize(ids.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
    } else {
        order = canonical_order(ids);
    }
    std::vector<TokenId> out;
    out.reserve(ids.size());
    for (std::size_t i : order) out.push_back(ids[i]);
    if (order_out) *order_out = std::move(order);
    return out;
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab, const char* what) {
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw InvalidArgument(std::string(what) + " id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(vocab));
        }
    }
}

struct RowData {
    std::vector<TokenId> input;
    std::vector<TokenId> target_in;
    std::vector<TokenId> target_out;
};

RowData extract_row(const Batch& b, std::size_t r) {
    RowData row;
    for (std::size_t i = 0; i < b.input_len; ++i) {
        if (b.input_mask[r * b.input_len + i]) row.input.push_back(b.input_ids[r * b.input_len + i]);
    }
    for (std::size_t i = 0; i < b.target_len; ++i) {
        if (b.target_mask[r * b.target_len + i]) {
            row.target_in.push_back(b.target_in[r * b.target_len + i]);
            row.target_out.push_back(b.target_out[r * b.target_len + i]);
        }
    }
    return row;
}

double row_nll(const ParamStore& params, const ModelConfig& cfg, const Layout& layout, const RowData& row,
               GradStore* grads, double grad_scale, bool train, std::uint64_t dropout_seed) {
    if (row.input.empty()) throw InvalidArgument("batch row has no real input tokens");
    if (row.target_in.empty()) return 0.0;
    check_ids(row.input, cfg.in_vocab_size, "input");
    check_ids(row.target_in, cfg.out_vocab_size, "target");
    check_ids(row.target_out, cfg.out_vocab_size, "target");
    Tape tape(grads != nullptr);
    Rng rng(dropout_seed);
    Graph g(tape, params, grads, cfg, layout, train, &rng);
    const Var z = g.encoder(encoder_tokens(cfg, row.input, nullptr));
    const Var logits = g.decoder(z, row.target_in);
    const Var nll = ad::cross_entropy_sum(tape, logits, row.target_out);
    const double value = tape.value(nll).data[0];
    if (!std::isfinite(value)) throw NumericError("non-finite loss");
    if (grads) tape.backward(nll, grad_scale);
    return value;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore store;
    store.seed = seed;
    Rng rng(seed);
    Builder b(store, &rng);
    build_layout(
        cfg, [&](const std::string& n, std::size_t r, std::size_t c) { return b.weight(n, r, c); },
        [&](const std::string& n, std::size_t r, std::size_t c, double fill) { return b.constant(n, r, c, fill); });
    return store;
}

Matrix sinusoidal_positions(std::size_t n, std::size_t d_model) {
    Matrix pe(n, d_model);
    for (std::size_t pos = 0; pos < n; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Batch make_batch(std::span<const EncodedExample> examples) {
    Batch b;
    b.size = examples.size();
    for (const auto& ex : examples) {
        if (ex.target_ids.size() < 2) throw InvalidArgument("target must contain BOS and EOS");
        b.input_len = std::max(b.input_len, ex.input_ids.size());
        b.target_len = std::max(b.target_len, ex.target_ids.size() - 1);
    }
    b.input_ids.assign(b.size * b.input_len, kPad);
    b.input_mask.assign(b.size * b.input_len, 0);
    b.target_in.assign(b.size * b.target_len, kPad);
    b.target_out.assign(b.size * b.target_len, kPad);
    b.target_mask.assign(b.size * b.target_len, 0);
    for (std::size_t r = 0; r < b.size; ++r) {
        const auto& ex = examples[r];
        for (std::size_t i = 0; i < ex.input_ids.size(); ++i) {
            b.input_ids[r * b.input_len + i] = ex.input_ids[i];
            b.input_mask[r * b.input_len + i] = 1;
        }
        for (std::size_t i = 0; i + 1 < ex.target_ids.size(); ++i) {
            b.target_in[r * b.target_len + i] = ex.target_ids[i];
            b.target_out[r * b.target_len + i] = ex.target_ids[i + 1];
            b.target_mask[r * b.target_len + i] = 1;
        }
    }
    return b;
}

LossResult loss(const ParamStore& params, const ModelConfig& cfg, const Batch& batch, GradStore* grads,
                const ForwardOptions& opts) {
    const Layout layout = resolve_layout(params, cfg);
    std::vector<RowData> rows;
    rows.reserve(batch.size);
    std::size_t tokens = 0;
    for (std::size_t r = 0; r < batch.size; ++r) {
        rows.push_back(extract_row(batch, r));
        tokens += rows.back().target_out.size();
    }
    if (tokens == 0) throw InvalidArgument("batch has no target tokens");
    const double grad_scale = 1.0 / static_cast<double>(tokens);
    std::vector<double> nll(batch.size, 0.0);

    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(batch.size)));
    auto run_range = [&](std::size_t begin, std::size_t end, GradStore* g) {
        for (std::size_t r = begin; r < end; ++r) {
            nll[r] = row_nll(params, cfg, layout, rows[r], g, grad_scale, opts.train, mix_seed(opts.dropout_seed, r));
        }
    };
    if (threads == 1) {
        run_range(0, batch.size, grads);
    } else {
        // Contiguous row ranges; partial gradients are reduced in thread order.
        std::vector<GradStore> partial(threads);
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::jthread> workers;
        const std::size_t chunk = (batch.size + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t begin = std::min(batch.size, w * chunk);
            const std::size_t end = std::min(batch.size, begin + chunk);
            if (grads) partial[w] = zero_grads(params);
            workers.emplace_back([&, w, begin, end] {
                try {
                    run_range(begin, end, grads ? &partial[w] : nullptr);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        workers.clear();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
        if (grads) {
            for (const auto& pg : partial) {
                for (std::size_t i = 0; i < pg.size(); ++i) {
                    for (std::size_t j = 0; j < pg[i].size(); ++j) (*grads)[i].data[j] += pg[i].data[j];
                }
            }
        }
    }
    LossResult result;
    result.tokens = tokens;
    for (double v : nll) result.nll_sum += v;
    result.loss = result.nll_sum / static_cast<double>(tokens);
    if (!std::isfinite(result.loss)) throw NumericError("non-finite loss");
    return result;
}

std::vector<double> example_nll(const ParamStore& params, const ModelConfig& cfg,
                                std::span<const EncodedExample> examples) {
    const Layout layout = resolve_layout(params, cfg);
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        RowData row;
        row.input = ex.input_ids;
        row.target_in.assign(ex.target_ids.begin(), ex.target_ids.end() - 1);
        row.target_out.assign(ex.target_ids.begin() + 1, ex.target_ids.end());
        out.push_back(row_nll(params, cfg, layout, row, nullptr, 0.0, false, 0));
    }
    return out;
}

EncoderMemory encode_input(const ParamStore& params, const ModelConfig& cfg, std::span<const TokenId> input_ids) {
    if (input_ids.empty()) throw InvalidArgument("encoder input is empty");
    check_ids(input_ids, cfg.in_vocab_size, "input");
    const Layout layout = resolve_layout(params, cfg);
    EncoderMemory mem;
    const std::vector<TokenId> ids = encoder_tokens(cfg, input_ids, &mem.order);
    Tape tape(false);
    Graph g(tape, params, nullptr, cfg, layout, false, nullptr);
    mem.z = tape.value(g.encoder(ids));
    return mem;
}

std::vector<Matrix> encode(const ParamStore& params, const ModelConfig& cfg, std::span<const TokenId> input_ids,
                           std::span<const std::uint8_t> input_mask, std::size_t batch_size) {
    if (batch_size == 0 || input_ids.size() % batch_size != 0 || input_mask.size() != input_ids.size()) {
        throw InvalidArgument("encode: ids/mask do not form a batch");
    }
    const std::size_t n = input_ids.size() / batch_size;
    std::vector<Matrix> out;
    for (std::size_t r = 0; r < batch_size; ++r) {
        std::vector<TokenId> real;
        std::vector<std::size_t> positions;
        for (std::size_t i = 0; i < n; ++i) {
            if (input_mask[r * n + i]) {
                real.push_back(input_ids[r * n + i]);
                positions.push_back(i);
            }
        }
        Matrix rows(n, cfg.d_model);
        const EncoderMemory mem = encode_input(params, cfg, real);
        for (std::size_t c = 0; c < mem.order.size(); ++c) {
            const double* src = mem.z.row(c);
            std::copy(src, src + cfg.d_model, rows.row(positions[mem.order[c]]));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

Matrix decode_all(const ParamStore& params, const ModelConfig& cfg, const Matrix& z, std::span<const TokenId> prefix) {
    if (prefix.empty()) throw InvalidArgument("decoder prefix must start with BOS");
    check_ids(prefix, cfg.out_vocab_size, "prefix");
    const Layout layout = resolve_layout(params, cfg);
    Tape tape(false);
    Graph g(tape, params, nullptr, cfg, layout, false, nullptr);
    const Var zv = tape.constant(z);
    return tape.value(g.decoder(zv, prefix));
}

std::vector<double> decode_step(const ParamStore& params, const ModelConfig& cfg, const Matrix& z,
                                std::span<const TokenId> prefix) {
    const Matrix logits = decode_all(params, cfg, z, prefix);
    const auto last = logits.row_span(logits.rows - 1);
    return {last.begin(), last.end()};
}

}  // namespace playtitle
