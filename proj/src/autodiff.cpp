#include "playtitle/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "playtitle/error.hpp"
#include "playtitle/kernels.hpp"

namespace playtitle::ad {

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::parameter(const Matrix& value, Matrix* grad) {
    Node n;
    n.external = &value;
    n.external_grad = grad;
    n.needs_grad = record_ && grad != nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, Var)> backward_fn) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
    const Node& n = nodes_[v.index];
    return n.external ? *n.external : n.owned;
}

Matrix& Tape::grad(Var v) {
    Node& n = nodes_[v.index];
    if (n.external_grad) return *n.external_grad;
    if (n.owned_grad.empty()) {
        const Matrix& val = n.external ? *n.external : n.owned;
        n.owned_grad = Matrix(val.rows, val.cols);
    }
    return n.owned_grad;
}

void Tape::backward(Var out, double seed) {
    const Matrix& v = value(out);
    if (v.rows != 1 || v.cols != 1) throw InvalidArgument("backward() needs a scalar output");
    if (!needs_grad(out)) return;
    grad(out).data[0] += seed;
    for (std::size_t i = out.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward_fn || n.owned_grad.empty()) continue;
        n.backward_fn(*this, Var{static_cast<std::uint32_t>(i)});
    }
}

namespace {

bool any_grad(const Tape& t, std::initializer_list<Var> vars) {
    for (Var v : vars) {
        if (t.needs_grad(v)) return true;
    }
    return false;
}

void copy_columns(const Matrix& src, std::size_t col0, std::size_t width, Matrix& dst) {
    dst = Matrix(src.rows, width);
    for (std::size_t r = 0; r < src.rows; ++r) {
        const double* s = src.row(r) + col0;
        std::copy(s, s + width, dst.row(r));
    }
}

void add_columns(const Matrix& src, std::size_t col0, Matrix& dst) {
    for (std::size_t r = 0; r < src.rows; ++r) {
        double* d = dst.row(r) + col0;
        const double* s = src.row(r);
        for (std::size_t c = 0; c < src.cols; ++c) d[c] += s[c];
    }
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    if (A.cols != B.rows) throw InvalidArgument("matmul shape mismatch");
    Matrix C(A.rows, B.cols);
    kernels::gemm_nn(A.rows, A.cols, B.cols, A.data.data(), B.data.data(), C.data.data());
    return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape& t, Var self) {
        const Matrix& A = t.value(a);
        const Matrix& B = t.value(b);
        const Matrix& dC = t.grad(self);
        if (t.needs_grad(a)) {
            kernels::gemm_nt(A.rows, B.cols, A.cols, dC.data.data(), B.data.data(), t.grad(a).data.data());
        }
        if (t.needs_grad(b)) {
            kernels::gemm_tn(A.rows, A.cols, B.cols, A.data.data(), dC.data.data(), t.grad(b).data.data());
        }
    });
}

Var linear(Tape& t, Var x, Var w, Var b) {
    const Matrix& X = t.value(x);
    const Matrix& W = t.value(w);
    const Matrix& Bv = t.value(b);
    if (X.cols != W.rows || Bv.rows != 1 || Bv.cols != W.cols) throw InvalidArgument("linear shape mismatch");
    Matrix Y(X.rows, W.cols);
    for (std::size_t r = 0; r < Y.rows; ++r) std::copy(Bv.data.begin(), Bv.data.end(), Y.row(r));
    kernels::gemm_nn(X.rows, X.cols, W.cols, X.data.data(), W.data.data(), Y.data.data());
    return t.push(std::move(Y), any_grad(t, {x, w, b}), [x, w, b](Tape& t, Var self) {
        const Matrix& X = t.value(x);
        const Matrix& W = t.value(w);
        const Matrix& dY = t.grad(self);
        if (t.needs_grad(x)) {
            kernels::gemm_nt(X.rows, W.cols, X.cols, dY.data.data(), W.data.data(), t.grad(x).data.data());
        }
        if (t.needs_grad(w)) {
            kernels::gemm_tn(X.rows, X.cols, W.cols, X.data.data(), dY.data.data(), t.grad(w).data.data());
        }
        if (t.needs_grad(b)) {
            Matrix& db = t.grad(b);
            for (std::size_t r = 0; r < dY.rows; ++r) kernels::axpy(1.0, dY.row(r), db.data.data(), dY.cols);
        }
    });
}

Var add(Tape& t, Var a, Var b) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    if (!A.same_shape(B)) throw InvalidArgument("add shape mismatch");
    Matrix C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    return t.push(std::move(C), any_grad(t, {a, b}), [a, b](Tape& t, Var self) {
        const Matrix& dC = t.grad(self);
        if (t.needs_grad(a)) kernels::axpy(1.0, dC.data.data(), t.grad(a).data.data(), dC.size());
        if (t.needs_grad(b)) kernels::axpy(1.0, dC.data.data(), t.grad(b).data.data(), dC.size());
    });
}

Var scale(Tape& t, Var a, double s) {
    Matrix C = t.value(a);
    for (double& v : C.data) v *= s;
    return t.push(std::move(C), t.needs_grad(a), [a, s](Tape& t, Var self) {
        const Matrix& dC = t.grad(self);
        kernels::axpy(s, dC.data.data(), t.grad(a).data.data(), dC.size());
    });
}

Var relu(Tape& t, Var a) {
    Matrix C = t.value(a);
    for (double& v : C.data) v = v > 0.0 ? v : 0.0;
    return t.push(std::move(C), t.needs_grad(a), [a](Tape& t, Var self) {
        const Matrix& A = t.value(a);
        const Matrix& dC = t.grad(self);
        Matrix& dA = t.grad(a);
        for (std::size_t i = 0; i < A.size(); ++i) {
            if (A.data[i] > 0.0) dA.data[i] += dC.data[i];
        }
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Matrix& X = t.value(x);
    const Matrix& G = t.value(gamma);
    const Matrix& B = t.value(beta);
    const std::size_t d = X.cols;
    if (G.rows != 1 || G.cols != d || !G.same_shape(B)) throw InvalidArgument("layer_norm shape mismatch");
    auto xhat = std::make_shared<Matrix>(X.rows, d);
    auto rstd = std::make_shared<std::vector<double>>(X.rows);
    Matrix Y(X.rows, d);
    for (std::size_t r = 0; r < X.rows; ++r) {
        const double* xr = X.row(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        double* hr = xhat->row(r);
        double* yr = Y.row(r);
        for (std::size_t c = 0; c < d; ++c) {
            hr[c] = (xr[c] - mean) * rs;
            yr[c] = hr[c] * G.data[c] + B.data[c];
        }
    }
    return t.push(std::move(Y), any_grad(t, {x, gamma, beta}), [x, gamma, beta, xhat, rstd](Tape& t, Var self) {
        const Matrix& dY = t.grad(self);
        const Matrix& G = t.value(gamma);
        const std::size_t d = dY.cols;
        const bool gx = t.needs_grad(x);
        const bool gg = t.needs_grad(gamma);
        const bool gb = t.needs_grad(beta);
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < dY.rows; ++r) {
            const double* dy = dY.row(r);
            const double* h = xhat->row(r);
            if (gg) {
                double* dg = t.grad(gamma).data.data();
                for (std::size_t c = 0; c < d; ++c) dg[c] += dy[c] * h[c];
            }
            if (gb) kernels::axpy(1.0, dy, t.grad(beta).data.data(), d);
            if (gx) {
                double mean_d = 0.0;
                double mean_dh = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    dxhat[c] = dy[c] * G.data[c];
                    mean_d += dxhat[c];
                    mean_dh += dxhat[c] * h[c];
                }
                mean_d /= static_cast<double>(d);
                mean_dh /= static_cast<double>(d);
                double* dx = t.grad(x).row(r);
                const double rs = (*rstd)[r];
                for (std::size_t c = 0; c < d; ++c) dx[c] += rs * (dxhat[c] - mean_d - h[c] * mean_dh);
            }
        }
    });
}

Var embedding(Tape& t, Var table, std::span<const std::int32_t> ids) {
    const Matrix& T = t.value(table);
    Matrix out(ids.size(), T.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= T.rows) {
            throw InvalidArgument("token id " + std::to_string(ids[i]) + " outside embedding table of " +
                                  std::to_string(T.rows));
        }
        const double* src = T.row(static_cast<std::size_t>(ids[i]));
        std::copy(src, src + T.cols, out.row(i));
    }
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    return t.push(std::move(out), t.needs_grad(table), [table, saved = std::move(saved)](Tape& t, Var self) {
        const Matrix& dOut = t.grad(self);
        Matrix& dT = t.grad(table);
        for (std::size_t i = 0; i < saved.size(); ++i) {
            kernels::axpy(1.0, dOut.row(i), dT.row(static_cast<std::size_t>(saved[i])), dOut.cols);
        }
    });
}

Var dropout(Tape& t, Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw InvalidArgument("dropout rate must be < 1");
    const Matrix& A = t.value(a);
    auto mask = std::make_shared<std::vector<double>>(A.size());
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix C(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
        C.data[i] = A.data[i] * (*mask)[i];
    }
    return t.push(std::move(C), t.needs_grad(a), [a, mask](Tape& t, Var self) {
        const Matrix& dC = t.grad(self);
        Matrix& dA = t.grad(a);
        for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] * (*mask)[i];
    });
}

void softmax_rows(Matrix& m, std::span<const std::size_t> limit) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const std::size_t n = limit.empty() ? m.cols : limit[r];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < n; ++c) row[c] *= inv;
        for (std::size_t c = n; c < m.cols; ++c) row[c] = 0.0;
    }
}

std::vector<double> log_softmax(std::span<const double> logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, bool causal, AttentionProbe* probe) {
    const Matrix& Q = t.value(q);
    const Matrix& K = t.value(k);
    const Matrix& V = t.value(v);
    const std::size_t n = Q.rows;
    const std::size_t m = K.rows;
    const std::size_t d = Q.cols;
    if (heads == 0 || d % heads != 0 || K.cols != d || !K.same_shape(V)) {
        throw InvalidArgument("attention shape mismatch");
    }
    if (causal && n > m) throw InvalidArgument("causal attention needs at least as many keys as queries");
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<std::size_t> limit;
    if (causal) {
        limit.resize(n);
        for (std::size_t i = 0; i < n; ++i) limit[i] = i + 1;
    }

    auto probs = std::make_shared<std::vector<Matrix>>(heads);
    Matrix out(n, d);
    Matrix qh, kh, vh;
    for (std::size_t h = 0; h < heads; ++h) {
        copy_columns(Q, h * dh, dh, qh);
        copy_columns(K, h * dh, dh, kh);
        copy_columns(V, h * dh, dh, vh);
        Matrix& P = (*probs)[h];
        P = Matrix(n, m);
        kernels::gemm_nt(n, dh, m, qh.data.data(), kh.data.data(), P.data.data());
        for (double& s : P.data) s *= inv_sqrt;
        softmax_rows(P, limit);
        Matrix oh(n, dh);
        kernels::gemm_nn(n, m, dh, P.data.data(), vh.data.data(), oh.data.data());
        add_columns(oh, h * dh, out);
    }
    if (probe) probe->probs = *probs;

    return t.push(std::move(out), any_grad(t, {q, k, v}), [q, k, v, heads, probs, inv_sqrt](Tape& t, Var self) {
        const Matrix& Q = t.value(q);
        const Matrix& K = t.value(k);
        const Matrix& V = t.value(v);
        const Matrix& dOut = t.grad(self);
        const std::size_t n = Q.rows;
        const std::size_t m = K.rows;
        const std::size_t dh = Q.cols / heads;
        Matrix qh, kh, vh, doh;
        for (std::size_t h = 0; h < heads; ++h) {
            const Matrix& P = (*probs)[h];
            copy_columns(Q, h * dh, dh, qh);
            copy_columns(K, h * dh, dh, kh);
            copy_columns(V, h * dh, dh, vh);
            copy_columns(dOut, h * dh, dh, doh);
            if (t.needs_grad(v)) {
                Matrix dvh(m, dh);
                kernels::gemm_tn(n, m, dh, P.data.data(), doh.data.data(), dvh.data.data());
                add_columns(dvh, h * dh, t.grad(v));
            }
            if (!t.needs_grad(q) && !t.needs_grad(k)) continue;
            Matrix dS(n, m);
            kernels::gemm_nt(n, dh, m, doh.data.data(), vh.data.data(), dS.data.data());
            for (std::size_t r = 0; r < n; ++r) {
                const double* pr = P.row(r);
                double* sr = dS.row(r);
                const double inner = kernels::dot(pr, sr, m);
                for (std::size_t c = 0; c < m; ++c) sr[c] = pr[c] * (sr[c] - inner) * inv_sqrt;
            }
            if (t.needs_grad(q)) {
                Matrix dqh(n, dh);
                kernels::gemm_nn(n, m, dh, dS.data.data(), kh.data.data(), dqh.data.data());
                add_columns(dqh, h * dh, t.grad(q));
            }
            if (t.needs_grad(k)) {
                Matrix dkh(m, dh);
                kernels::gemm_tn(n, m, dh, dS.data.data(), qh.data.data(), dkh.data.data());
                add_columns(dkh, h * dh, t.grad(k));
            }
        }
    });
}

Var cross_entropy_sum(Tape& t, Var logits, std::span<const std::int32_t> targets) {
    const Matrix& L = t.value(logits);
    if (targets.size() != L.rows) throw InvalidArgument("cross_entropy target count mismatch");
    auto probs = std::make_shared<Matrix>(L);
    softmax_rows(*probs);
    double total = 0.0;
    for (std::size_t r = 0; r < L.rows; ++r) {
        const auto y = static_cast<std::size_t>(targets[r]);
        if (y >= L.cols) throw InvalidArgument("cross_entropy target outside vocabulary");
        const auto lp = log_softmax(L.row_span(r));
        total -= lp[y];
    }
    std::vector<std::int32_t> saved(targets.begin(), targets.end());
    return t.push(Matrix(1, 1, total), t.needs_grad(logits),
                  [logits, probs, saved = std::move(saved)](Tape& t, Var self) {
                      const double g = t.grad(self).data[0];
                      Matrix& dL = t.grad(logits);
                      for (std::size_t r = 0; r < probs->rows; ++r) {
                          kernels::axpy(g, probs->row(r), dL.row(r), probs->cols);
                          dL(r, static_cast<std::size_t>(saved[r])) -= g;
                      }
                  });
}

}  // namespace playtitle::ad
