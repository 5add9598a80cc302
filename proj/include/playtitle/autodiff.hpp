#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "playtitle/rng.hpp"
#include "playtitle/tensor.hpp"

// Minimal reverse-mode automatic differentiation over 2-D matrices. A Tape
// records one forward computation; backward() walks it in reverse. Parameter
// nodes reference caller-owned storage and accumulate into caller-owned
// gradient buffers, so binding a model to a tape copies nothing.
namespace playtitle::ad {

struct Var {
    std::uint32_t index = 0;
};

class Tape {
public:
    // With record=false no backward closures are kept (inference).
    explicit Tape(bool record = true) : record_(record) {}

    Var constant(Matrix value);
    // grad may be null for frozen parameters.
    Var parameter(const Matrix& value, Matrix* grad);

    const Matrix& value(Var v) const;
    Matrix& grad(Var v);
    bool needs_grad(Var v) const { return nodes_[v.index].needs_grad; }
    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(out)/d(out) with `seed` (out must be 1x1) and propagates.
    void backward(Var out, double seed = 1.0);

    // Used by op implementations.
    Var push(Matrix value, bool needs_grad, std::function<void(Tape&, Var)> backward_fn);

private:
    struct Node {
        Matrix owned;
        const Matrix* external = nullptr;
        Matrix owned_grad;
        Matrix* external_grad = nullptr;
        bool needs_grad = false;
        std::function<void(Tape&, Var)> backward_fn;
    };
    std::vector<Node> nodes_;
    bool record_;
};

Var matmul(Tape& t, Var a, Var b);
// x * W + b, with b broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
Var embedding(Tape& t, Var table, std::span<const std::int32_t> ids);
// Inverted dropout; identity when p == 0.
Var dropout(Tape& t, Var a, double p, Rng& rng);

// Records per-head attention probabilities when passed to attention().
struct AttentionProbe {
    std::vector<Matrix> probs;  // one n x m matrix per head
};

// Multi-head scaled dot-product attention over already-projected q [n x d],
// k [m x d], v [m x d]. Heads split the columns. With causal, query i sees
// keys j <= i only.
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, bool causal,
              AttentionProbe* probe = nullptr);

// Sum over rows of -log softmax(logits[r])[targets[r]]; result is 1 x 1.
Var cross_entropy_sum(Tape& t, Var logits, std::span<const std::int32_t> targets);

// Row-wise stable softmax; masked_from[r] (if non-empty) limits row r to
// columns [0, masked_from[r]).
void softmax_rows(Matrix& m, std::span<const std::size_t> limit = {});
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace playtitle::ad
