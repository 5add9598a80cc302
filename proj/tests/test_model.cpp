#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "playtitle/autodiff.hpp"
#include "playtitle/checkpoint.hpp"
#include "playtitle/error.hpp"
#include "playtitle/model.hpp"
#include "playtitle/rng.hpp"

using namespace playtitle;

namespace {

ModelConfig tiny(std::size_t d = 4, std::size_t heads = 2, std::size_t v_in = 10, std::size_t v_out = 10) {
    ModelConfig cfg;
    cfg.d_model = d;
    cfg.n_heads = heads;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.d_ff = 4 * d;
    cfg.dropout = 0.0;
    cfg.in_vocab_size = v_in;
    cfg.out_vocab_size = v_out;
    return cfg;
}

std::vector<EncodedExample> random_examples(Rng& rng, std::size_t count, const ModelConfig& cfg,
                                            std::size_t max_in = 6, std::size_t max_words = 4) {
    std::vector<EncodedExample> out;
    for (std::size_t i = 0; i < count; ++i) {
        EncodedExample ex;
        const std::size_t n = 1 + rng.below(max_in);
        for (std::size_t k = 0; k < n; ++k) {
            ex.input_ids.push_back(static_cast<TokenId>(1 + rng.below(cfg.in_vocab_size - 1)));
        }
        ex.target_ids.push_back(kBos);
        const std::size_t m = rng.below(max_words + 1);
        for (std::size_t k = 0; k < m; ++k) {
            ex.target_ids.push_back(static_cast<TokenId>(kNumSpecials + rng.below(cfg.out_vocab_size - kNumSpecials)));
        }
        ex.target_ids.push_back(kEos);
        out.push_back(std::move(ex));
    }
    return out;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::equal(a.data.begin(), a.data.end(), b.data.begin(),
                      [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
    ModelConfig cfg = tiny(8, 2, 10, 10);
    cfg.d_ff = 32;
    // enc: embed 10*8 = 80; layer = attn 4*(64+8) + 2 norms 2*16 + ff (8*32+32) + (32*8+8) = 288+32+552 = 872
    // dec: embed 80; layer = 2 attn 576 + 3 norms 48 + ff 552 = 1176
    // out: 8*10 + 10 = 90
    CHECK(init_params(cfg, 0).scalar_count() == 80 + 872 + 80 + 1176 + 90);
    CHECK(init_params(cfg, 0).scalar_count() == 2298);

    cfg.pre_norm = true;
    CHECK(init_params(cfg, 0).scalar_count() == 2298 + 16 + 16);
}

TEST_CASE("initialisation") {
    ModelConfig cfg = tiny(8, 2, 10, 12);
    const auto p = init_params(cfg, 9);
    for (const auto& param : p.params) {
        const auto& n = param.name;
        const bool is_bias = n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") || n.ends_with(".bv") ||
                             n.ends_with(".bo") || n.ends_with(".b1") || n.ends_with(".b2") || n.ends_with(".beta");
        if (is_bias) {
            CHECK(std::all_of(param.value.data.begin(), param.value.data.end(), [](double v) { return v == 0.0; }));
            CHECK_FALSE(param.decay);
        } else if (n.ends_with(".gamma")) {
            CHECK(std::all_of(param.value.data.begin(), param.value.data.end(), [](double v) { return v == 1.0; }));
            CHECK_FALSE(param.decay);
        } else {
            const double bound = std::sqrt(6.0 / static_cast<double>(param.value.rows + param.value.cols));
            CHECK(std::all_of(param.value.data.begin(), param.value.data.end(),
                              [&](double v) { return std::abs(v) <= bound; }));
            CHECK(param.decay);
        }
    }
    CHECK(p.get("out.w").rows == 8);
    CHECK(p.get("out.w").cols == 12);
    CHECK_THROWS_AS(p.index_of("missing"), InvalidArgument);

    // Same seed, same parameters.
    const auto q = init_params(cfg, 9);
    for (std::size_t i = 0; i < p.params.size(); ++i) CHECK(bitwise_equal(p.params[i].value, q.params[i].value));
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny();
    cfg.n_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny();
    cfg.out_vocab_size = 4;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("analytic gradients match finite differences") {
    const ModelConfig cfg = tiny();
    Rng rng(123);
    for (int b = 0; b < 3; ++b) {
        const auto params = init_params(cfg, 100 + b);
        const auto batch = make_batch(random_examples(rng, 3, cfg));
        const auto gc = testing::check_gradients(params, cfg, batch, {});
        INFO("worst " << gc.worst);
        CHECK(gc.max_rel_error < 1e-3);
        CHECK(gc.checked == params.scalar_count());
    }
}

TEST_CASE("gradients with dropout, pre-norm and input positions") {
    ModelConfig cfg = tiny();
    cfg.dropout = 0.2;
    cfg.pre_norm = true;
    cfg.use_input_positions = true;
    Rng rng(5);
    const auto params = init_params(cfg, 1);
    const auto batch = make_batch(random_examples(rng, 2, cfg));
    ForwardOptions opts;
    opts.train = true;
    opts.dropout_seed = 77;
    const auto gc = testing::check_gradients(params, cfg, batch, opts);
    INFO("worst " << gc.worst);
    CHECK(gc.max_rel_error < 1e-3);
}

TEST_CASE("layer norm normalises rows") {
    ad::Tape t(false);
    Matrix x(3, 6);
    Rng rng(2);
    for (auto& v : x.data) v = rng.uniform() * 10.0 - 3.0;
    Matrix gamma(1, 6), beta(1, 6);
    std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
    const auto y = t.value(ad::layer_norm(t, t.constant(x), t.constant(gamma), t.constant(beta)));
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < 6; ++c) mean += y(r, c);
        mean /= 6.0;
        for (std::size_t c = 0; c < 6; ++c) var += (y(r, c) - mean) * (y(r, c) - mean);
        var /= 6.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("attention probabilities") {
    ad::Tape t(false);
    Rng rng(4);
    Matrix q(5, 4), k(5, 4), v(5, 4);
    for (auto* m : {&q, &k, &v}) {
        for (auto& x : m->data) x = rng.uniform() - 0.5;
    }
    ad::AttentionProbe full, causal;
    ad::attention(t, t.constant(q), t.constant(k), t.constant(v), 2, false, &full);
    ad::attention(t, t.constant(q), t.constant(k), t.constant(v), 2, true, &causal);
    REQUIRE(full.probs.size() == 2);
    REQUIRE(causal.probs.size() == 2);
    for (const auto* probe : {&full, &causal}) {
        for (const auto& p : probe->probs) {
            for (std::size_t r = 0; r < p.rows; ++r) {
                double sum = 0.0;
                for (std::size_t c = 0; c < p.cols; ++c) sum += p(r, c);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
    for (const auto& p : causal.probs) {
        for (std::size_t r = 0; r < p.rows; ++r) {
            for (std::size_t c = r + 1; c < p.cols; ++c) CHECK(p(r, c) == 0.0);
        }
    }
}

TEST_CASE("decoder is causal") {
    const ModelConfig cfg = tiny(8, 2, 12, 12);
    const auto params = init_params(cfg, 3);
    const std::vector<TokenId> input{4, 5, 6};
    const auto mem = encode_input(params, cfg, input);
    const std::vector<TokenId> a{kBos, 7, 8, 9};
    const std::vector<TokenId> b{kBos, 7, 11, 4};
    const auto la = decode_all(params, cfg, mem.z, a);
    const auto lb = decode_all(params, cfg, mem.z, b);
    for (std::size_t c = 0; c < la.cols; ++c) {
        CHECK(la(0, c) == lb(0, c));
        CHECK(la(1, c) == lb(1, c));
    }
    bool differs = false;
    for (std::size_t c = 0; c < la.cols; ++c) differs |= la(2, c) != lb(2, c);
    CHECK(differs);

    // decode_step equals the last row of decode_all.
    const auto step = decode_step(params, cfg, mem.z, a);
    for (std::size_t c = 0; c < la.cols; ++c) CHECK(step[c] == doctest::Approx(la(3, c)).epsilon(1e-12));
}

TEST_CASE("encoder output is permutation invariant") {
    const ModelConfig cfg = tiny(8, 2, 20, 10);
    const auto params = init_params(cfg, 8);
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<TokenId> ids;
        const std::size_t n = 2 + rng.below(8);
        for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<TokenId>(1 + rng.below(19)));
        const auto base = encode_input(params, cfg, ids);
        const auto base_logits = decode_step(params, cfg, base.z, std::vector<TokenId>{kBos, 5});
        for (int perm = 0; perm < 5; ++perm) {
            auto shuffled = ids;
            rng.shuffle(std::span<TokenId>(shuffled));
            const auto mem = encode_input(params, cfg, shuffled);
            CHECK(bitwise_equal(mem.z, base.z));
            const auto logits = decode_step(params, cfg, mem.z, std::vector<TokenId>{kBos, 5});
            CHECK(std::memcmp(logits.data(), base_logits.data(), logits.size() * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("input positions break permutation invariance") {
    ModelConfig cfg = tiny(8, 2, 20, 10);
    cfg.use_input_positions = true;
    const auto params = init_params(cfg, 8);
    const auto a = encode_input(params, cfg, std::vector<TokenId>{4, 5, 6, 7});
    const auto b = encode_input(params, cfg, std::vector<TokenId>{7, 6, 5, 4});
    CHECK_FALSE(bitwise_equal(a.z, b.z));
}

TEST_CASE("batched encoder matches single-example encoder") {
    const ModelConfig cfg = tiny(8, 2, 20, 10);
    const auto params = init_params(cfg, 2);
    Rng rng(9);
    const auto ex = random_examples(rng, 4, cfg, 7);
    const auto batch = make_batch(ex);
    const auto zs = encode(params, cfg, batch.input_ids, batch.input_mask, batch.size);
    REQUIRE(zs.size() == 4);
    for (std::size_t b = 0; b < 4; ++b) {
        const auto mem = encode_input(params, cfg, ex[b].input_ids);
        // mem.z is in canonical order; map back to the original positions.
        for (std::size_t r = 0; r < mem.order.size(); ++r) {
            for (std::size_t c = 0; c < cfg.d_model; ++c) {
                CHECK(zs[b](mem.order[r], c) == doctest::Approx(mem.z(r, c)).epsilon(1e-12));
            }
        }
        for (std::size_t r = ex[b].input_ids.size(); r < batch.input_len; ++r) {
            for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(zs[b](r, c) == 0.0);
        }
    }
}

TEST_CASE("padding does not leak into the loss") {
    const ModelConfig cfg = tiny(8, 2, 20, 10);
    const auto params = init_params(cfg, 2);
    Rng rng(10);
    const auto ex = random_examples(rng, 5, cfg, 9, 6);
    const auto together = loss(params, cfg, make_batch(ex), nullptr);
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& e : ex) {
        const auto single = loss(params, cfg, make_batch(std::span(&e, 1)), nullptr);
        nll += single.nll_sum;
        tokens += single.tokens;
    }
    CHECK(together.tokens == tokens);
    CHECK(together.nll_sum == doctest::Approx(nll).epsilon(1e-12));
    CHECK(together.loss == doctest::Approx(nll / static_cast<double>(tokens)).epsilon(1e-12));

    const auto per = example_nll(params, cfg, ex);
    CHECK(std::accumulate(per.begin(), per.end(), 0.0) == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("threaded loss matches single-threaded loss") {
    ModelConfig cfg = tiny(8, 2, 20, 10);
    cfg.dropout = 0.1;
    const auto params = init_params(cfg, 2);
    Rng rng(11);
    const auto batch = make_batch(random_examples(rng, 7, cfg));
    ForwardOptions one;
    one.train = true;
    one.dropout_seed = 4;
    ForwardOptions three = one;
    three.threads = 3;
    auto g1 = zero_grads(params);
    auto g3 = zero_grads(params);
    const double l1 = loss(params, cfg, batch, &g1, one).loss;
    const double l3 = loss(params, cfg, batch, &g3, three).loss;
    CHECK(l1 == doctest::Approx(l3).epsilon(1e-13));
    for (std::size_t i = 0; i < g1.size(); ++i) {
        for (std::size_t j = 0; j < g1[i].data.size(); ++j) CHECK(std::abs(g1[i].data[j] - g3[i].data[j]) < 1e-13);
    }
    // Repeatable with the same thread count.
    auto g3b = zero_grads(params);
    CHECK(loss(params, cfg, batch, &g3b, three).loss == l3);
    for (std::size_t i = 0; i < g3.size(); ++i) CHECK(bitwise_equal(g3[i], g3b[i]));
}

TEST_CASE("uniform logits give ln V") {
    for (std::size_t v : {2u, 10u, 1000u}) {
        ad::Tape t;
        Matrix logits(3, v);
        const std::vector<std::int32_t> targets{0, 1, 1};
        const double nll = t.value(ad::cross_entropy_sum(t, t.constant(logits), targets))(0, 0) / 3.0;
        CHECK(std::abs(nll - std::log(static_cast<double>(v))) < 1e-9);
    }
    for (std::size_t v : {10u, 1000u}) {
        ModelConfig cfg = tiny(8, 2, 10, v);
        auto params = init_params(cfg, 1);
        params.get("out.w").zero();
        params.get("out.b").zero();
        Rng rng(3);
        const auto r = loss(params, cfg, make_batch(random_examples(rng, 4, cfg)), nullptr);
        CHECK(std::abs(r.loss - std::log(static_cast<double>(v))) < 1e-9);
    }
}

TEST_CASE("sinusoidal positions") {
    const auto pe = sinusoidal_positions(3, 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(pe(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
    CHECK(pe(2, 0) == doctest::Approx(std::sin(2.0)));
    CHECK(pe(2, 3) == doctest::Approx(std::cos(2.0 / std::pow(10000.0, 2.0 / 6.0))));
}

TEST_CASE("checkpoint round trip is exact") {
    ModelConfig cfg = tiny(8, 2, 11, 13);
    cfg.pre_norm = true;
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.params = init_params(cfg, 42);
    ckpt.input_mode = InputMode::artist;
    ckpt.input_vocab_sha256 = "in";
    ckpt.output_vocab_sha256 = "out";
    const std::string bytes = serialize_checkpoint(ckpt);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.config == cfg);
    CHECK(back.input_mode == InputMode::artist);
    CHECK(back.params.seed == 42);
    REQUIRE(back.params.params.size() == ckpt.params.params.size());
    for (std::size_t i = 0; i < back.params.params.size(); ++i) {
        CHECK(back.params.params[i].name == ckpt.params.params[i].name);
        CHECK(back.params.params[i].decay == ckpt.params.params[i].decay);
        CHECK(bitwise_equal(back.params.params[i].value, ckpt.params.params[i].value));
    }
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
    CHECK_THROWS_AS(deserialize_checkpoint("garbage"), ParseError);
}
