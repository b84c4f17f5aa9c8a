#pragma once

// Reverse-mode automatic differentiation over dense tensors. The op set is
// exactly what the encoder, hash field, decoder and losses need; there is no
// general broadcasting. One Tape records one forward pass; backward() walks
// the records in reverse and accumulates into Param gradients. All loops use
// fixed iteration orders (and static OpenMP schedules over independent
// outputs), so results are bit-stable across worker counts.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spider/errors.hpp"

namespace spider {

using Shape = std::vector<int>;

inline size_t shape_count(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= size_t(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Named trainable tensor living outside any tape.
template <typename T>
struct Param {
    std::string name;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool trainable = true;

    size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tape;

// Lightweight handle to a tape node.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int idx = -1;

    bool valid() const { return tape != nullptr && idx >= 0; }
    const Shape& shape() const;
    const std::vector<T>& value() const;
    const std::vector<T>& grad() const;
};

template <typename T>
class Tape {
  public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
        std::function<void(Tape&, int)> backward;  // (tape, own node index)
        Param<T>* param = nullptr;
    };

    Node& node(int i) { return nodes_[size_t(i)]; }
    const Node& node(int i) const { return nodes_[size_t(i)]; }
    size_t num_nodes() const { return nodes_.size(); }

    Var<T> constant(Shape shape, const T* data) {
        Node n;
        n.shape = std::move(shape);
        n.value.assign(data, data + shape_count(n.shape));
        return push(std::move(n), "constant");
    }
    Var<T> constant(const Shape& shape, const std::vector<T>& data) {
        if (data.size() != shape_count(shape))
            throw ShapeError("constant: data size does not match shape " + shape_str(shape));
        return constant(shape, data.data());
    }

    // Leaf bound to a parameter; backward adds into param.grad.
    Var<T> leaf(Param<T>& p) {
        Node n;
        n.shape = p.shape;
        n.value = p.value;
        n.requires_grad = p.trainable && grad_enabled_;
        n.param = n.requires_grad ? &p : nullptr;
        if (n.param) {
            n.backward = [](Tape& t, int self) {
                Node& s = t.node(self);
                for (size_t i = 0; i < s.grad.size(); ++i) s.param->grad[i] += s.grad[i];
            };
        }
        return push(std::move(n), "leaf");
    }

    // Disables gradient recording for leaves created afterwards (inference).
    void set_grad_enabled(bool on) { grad_enabled_ = on; }

    // Reverse sweep from a scalar loss. Node gradients are rebuilt on every
    // call, so repeated backward calls accumulate into Param.grad exactly
    // once per call.
    void backward(Var<T> loss) {
        if (loss.tape != this || loss.idx < 0 || size_t(loss.idx) >= nodes_.size())
            throw ConfigError("backward: loss is not on this tape");
        Node& ln = nodes_[size_t(loss.idx)];
        if (shape_count(ln.shape) != 1)
            throw ConfigError("backward: loss must be a scalar, got " + shape_str(ln.shape));
        for (Node& n : nodes_) {
            if (n.requires_grad) n.grad.assign(n.value.size(), T(0));
        }
        if (!ln.requires_grad) return;  // loss independent of parameters
        ln.grad[0] = T(1);
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (n.requires_grad && n.backward) n.backward(*this, i);
        }
    }

    Var<T> make_op(Shape shape, std::vector<T> value, bool requires_grad,
                   std::function<void(Tape&, int)> backward, const char* op_name) {
        check_finite(op_name, value);
        Node n;
        n.shape = std::move(shape);
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(backward);
        return push(std::move(n), op_name);
    }

    static void check_finite(const char* op, const std::vector<T>& v) {
        bool bad = false;
        const size_t n = v.size();
        if (n > size_t(1) << 14) {
#pragma omp parallel for schedule(static) reduction(| : bad)
            for (long long i = 0; i < (long long)n; ++i) bad |= !std::isfinite(double(v[i]));
        } else {
            for (size_t i = 0; i < n; ++i) bad |= !std::isfinite(double(v[i]));
        }
        if (bad) throw DiagnosticsError(std::string("non-finite output in op ") + op);
    }

  private:
    Var<T> push(Node n, const char*) {
        nodes_.push_back(std::move(n));
        return Var<T>{this, int(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

template <typename T>
const Shape& Var<T>::shape() const {
    return tape->node(idx).shape;
}
template <typename T>
const std::vector<T>& Var<T>::value() const {
    return tape->node(idx).value;
}
template <typename T>
const std::vector<T>& Var<T>::grad() const {
    return tape->node(idx).grad;
}

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    if (a.tape != b.tape) throw ConfigError(std::string(op) + ": operands on different tapes");
}

}  // namespace detail

// ---- elementwise ----

template <typename T, typename FwdF, typename BwdF>
Var<T> unary_elementwise(const char* name, Var<T> x, FwdF fwd, BwdF bwd) {
    const auto& xv = x.value();
    std::vector<T> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    int xi = x.idx;
    return x.tape->make_op(
        x.shape(), std::move(out), x.tape->node(xi).requires_grad,
        [xi, bwd](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            for (size_t i = 0; i < s.grad.size(); ++i)
                xn.grad[i] += s.grad[i] * bwd(xn.value[i], s.value[i]);
        },
        name);
}

template <typename T>
Var<T> relu(Var<T> x) {
    return unary_elementwise<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T in, T) { return in > T(0) ? T(1) : T(0); });  // subgradient at 0 is 0
}

template <typename T>
Var<T> vabs(Var<T> x) {
    return unary_elementwise<T>(
        "abs", x, [](T v) { return v < T(0) ? -v : v; },
        [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> vlog(Var<T> x) {
    return unary_elementwise<T>(
        "log", x, [](T v) { return std::log(v); }, [](T in, T) { return T(1) / in; });
}

template <typename T>
Var<T> vexp(Var<T> x) {
    return unary_elementwise<T>(
        "exp", x, [](T v) { return std::exp(v); }, [](T, T out) { return out; });
}

// a*x + b with scalar constants.
template <typename T>
Var<T> affine(Var<T> x, double a, double b) {
    T ta = T(a), tb = T(b);
    return unary_elementwise<T>(
        "affine", x, [ta, tb](T v) { return ta * v + tb; }, [ta](T, T) { return ta; });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    detail::require_same_shape("add", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    return a.tape->make_op(
        a.shape(), std::move(out), rg,
        [ai, bi](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            if (an.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) an.grad[i] += s.grad[i];
            if (bn.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) bn.grad[i] += s.grad[i];
        },
        "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    detail::require_same_shape("sub", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    return a.tape->make_op(
        a.shape(), std::move(out), rg,
        [ai, bi](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            if (an.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) an.grad[i] += s.grad[i];
            if (bn.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) bn.grad[i] -= s.grad[i];
        },
        "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    detail::require_same_shape("mul", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    return a.tape->make_op(
        a.shape(), std::move(out), rg,
        [ai, bi](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            if (an.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) an.grad[i] += s.grad[i] * bn.value[i];
            if (bn.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) bn.grad[i] += s.grad[i] * an.value[i];
        },
        "mul");
}

template <typename T>
Var<T> vdiv(Var<T> a, Var<T> b) {
    detail::require_same_shape("div", a, b);
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    return a.tape->make_op(
        a.shape(), std::move(out), rg,
        [ai, bi](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            if (an.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i) an.grad[i] += s.grad[i] / bn.value[i];
            if (bn.requires_grad)
                for (size_t i = 0; i < s.grad.size(); ++i)
                    bn.grad[i] -= s.grad[i] * s.value[i] / bn.value[i];
        },
        "div");
}

// ---- reductions ----

template <typename T>
Var<T> sum(Var<T> x) {
    const auto& xv = x.value();
    T acc = T(0);
    for (T v : xv) acc += v;
    int xi = x.idx;
    return x.tape->make_op(
        Shape{1}, std::vector<T>{acc}, x.tape->node(xi).requires_grad,
        [xi](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            for (size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += s.grad[0];
        },
        "sum");
}

template <typename T>
Var<T> mean(Var<T> x) {
    const auto& xv = x.value();
    if (xv.empty()) throw ShapeError("mean: empty tensor");
    T acc = T(0);
    for (T v : xv) acc += v;
    T inv = T(1) / T(double(xv.size()));
    int xi = x.idx;
    return x.tape->make_op(
        Shape{1}, std::vector<T>{acc * inv}, x.tape->node(xi).requires_grad,
        [xi, inv](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            for (size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += s.grad[0] * inv;
        },
        "mean");
}

// ---- matrix / batch ops ----

// x:[B,I] w:[I,O] b:[O] -> [B,O]
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    const Shape& bs = b.shape();
    if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[0] || ws[1] != bs[0])
        throw ShapeError("linear: incompatible shapes " + shape_str(xs) + " " + shape_str(ws) +
                         " " + shape_str(bs));
    const int B = xs[0], I = xs[1], O = ws[1];
    std::vector<T> out(size_t(B) * O);
    {
        const T* xp = x.value().data();
        const T* wp = w.value().data();
        const T* bp = b.value().data();
        T* op = out.data();
#pragma omp parallel for schedule(static)
        for (int bb = 0; bb < B; ++bb) {
            T* orow = op + size_t(bb) * O;
            for (int o = 0; o < O; ++o) orow[o] = bp[o];
            const T* xrow = xp + size_t(bb) * I;
            for (int i = 0; i < I; ++i) {
                const T xv = xrow[i];
                const T* wrow = wp + size_t(i) * O;
                for (int o = 0; o < O; ++o) orow[o] += xv * wrow[o];
            }
        }
    }
    int xi = x.idx, wi = w.idx, bi = b.idx;
    bool rg = x.tape->node(xi).requires_grad || x.tape->node(wi).requires_grad ||
              x.tape->node(bi).requires_grad;
    return x.tape->make_op(
        Shape{B, O}, std::move(out), rg,
        [xi, wi, bi, B, I, O](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            auto& wn = t.node(wi);
            auto& bn = t.node(bi);
            const T* g = s.grad.data();
            if (xn.requires_grad) {
                T* dx = xn.grad.data();
                const T* wp = wn.value.data();
#pragma omp parallel for schedule(static)
                for (int bb = 0; bb < B; ++bb) {
                    const T* grow = g + size_t(bb) * O;
                    T* dxrow = dx + size_t(bb) * I;
                    for (int i = 0; i < I; ++i) {
                        const T* wrow = wp + size_t(i) * O;
                        T acc = T(0);
                        for (int o = 0; o < O; ++o) acc += grow[o] * wrow[o];
                        dxrow[i] += acc;
                    }
                }
            }
            if (wn.requires_grad) {
                T* dw = wn.grad.data();
                const T* xp = xn.value.data();
#pragma omp parallel for schedule(static)
                for (int i = 0; i < I; ++i) {
                    T* dwrow = dw + size_t(i) * O;
                    for (int bb = 0; bb < B; ++bb) {
                        const T xv = xp[size_t(bb) * I + i];
                        const T* grow = g + size_t(bb) * O;
                        for (int o = 0; o < O; ++o) dwrow[o] += xv * grow[o];
                    }
                }
            }
            if (bn.requires_grad) {
                T* db = bn.grad.data();
                for (int bb = 0; bb < B; ++bb) {
                    const T* grow = g + size_t(bb) * O;
                    for (int o = 0; o < O; ++o) db[o] += grow[o];
                }
            }
        },
        "linear");
}

// Row-wise softmax over the last axis of [B,C].
template <typename T>
Var<T> softmax_rows(Var<T> x) {
    const Shape& xs = x.shape();
    if (xs.size() != 2) throw ShapeError("softmax: expected [B,C], got " + shape_str(xs));
    const int B = xs[0], C = xs[1];
    std::vector<T> out(x.value().size());
    const T* xp = x.value().data();
    for (int b = 0; b < B; ++b) {
        const T* row = xp + size_t(b) * C;
        T* orow = out.data() + size_t(b) * C;
        T m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        T s = T(0);
        for (int c = 0; c < C; ++c) {
            orow[c] = std::exp(row[c] - m);
            s += orow[c];
        }
        for (int c = 0; c < C; ++c) orow[c] /= s;
    }
    int xi = x.idx;
    return x.tape->make_op(
        Shape{B, C}, std::move(out), x.tape->node(xi).requires_grad,
        [xi, B, C](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            for (int b = 0; b < B; ++b) {
                const T* p = s.value.data() + size_t(b) * C;
                const T* g = s.grad.data() + size_t(b) * C;
                T* dx = xn.grad.data() + size_t(b) * C;
                T dotpg = T(0);
                for (int c = 0; c < C; ++c) dotpg += p[c] * g[c];
                for (int c = 0; c < C; ++c) dx[c] += p[c] * (g[c] - dotpg);
            }
        },
        "softmax");
}

// ---- image ops (layout [C,H,W]) ----

// 3x3 or 1x1 convolution, stride 1, zero padding (k-1)/2.
// x:[IC,H,W] w:[OC,IC,K,K] b:[OC] -> [OC,H,W]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != ws[3] ||
        (ws[2] != 3 && ws[2] != 1) || b.shape() != Shape{ws[0]})
        throw ShapeError("conv2d: incompatible shapes " + shape_str(xs) + " " + shape_str(ws));
    const int IC = xs[0], H = xs[1], W = xs[2], OC = ws[0], K = ws[2], pad = (K - 1) / 2;
    std::vector<T> out(size_t(OC) * H * W);
    {
        const T* xp = x.value().data();
        const T* wp = w.value().data();
        const T* bp = b.value().data();
        T* op = out.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int oc = 0; oc < OC; ++oc) {
            for (int y = 0; y < H; ++y) {
                T* orow = op + (size_t(oc) * H + y) * W;
                for (int xcol = 0; xcol < W; ++xcol) orow[xcol] = bp[oc];
                for (int ic = 0; ic < IC; ++ic) {
                    for (int ky = 0; ky < K; ++ky) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= H) continue;
                        const T* irow = xp + (size_t(ic) * H + yy) * W;
                        const T* wrow = wp + ((size_t(oc) * IC + ic) * K + ky) * K;
                        for (int kx = 0; kx < K; ++kx) {
                            const T wv = wrow[kx];
                            const int off = kx - pad;
                            const int x0 = std::max(0, -off), x1 = std::min(W, W - off);
                            for (int xcol = x0; xcol < x1; ++xcol)
                                orow[xcol] += wv * irow[xcol + off];
                        }
                    }
                }
            }
        }
    }
    int xi = x.idx, wi = w.idx, bi = b.idx;
    bool rg = x.tape->node(xi).requires_grad || x.tape->node(wi).requires_grad ||
              x.tape->node(bi).requires_grad;
    return x.tape->make_op(
        Shape{OC, H, W}, std::move(out), rg,
        [xi, wi, bi, IC, OC, H, W, K, pad](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            auto& wn = t.node(wi);
            auto& bn = t.node(bi);
            const T* g = s.grad.data();
            if (xn.requires_grad) {
                T* dx = xn.grad.data();
                const T* wp = wn.value.data();
#pragma omp parallel for collapse(2) schedule(static)
                for (int ic = 0; ic < IC; ++ic) {
                    for (int yy = 0; yy < H; ++yy) {
                        T* dxrow = dx + (size_t(ic) * H + yy) * W;
                        for (int oc = 0; oc < OC; ++oc) {
                            for (int ky = 0; ky < K; ++ky) {
                                const int y = yy - ky + pad;
                                if (y < 0 || y >= H) continue;
                                const T* grow = g + (size_t(oc) * H + y) * W;
                                const T* wrow = wp + ((size_t(oc) * IC + ic) * K + ky) * K;
                                for (int kx = 0; kx < K; ++kx) {
                                    const T wv = wrow[kx];
                                    const int off = kx - pad;
                                    // dx[xx] += g[xx - off] * w
                                    const int x0 = std::max(0, off), x1 = std::min(W, W + off);
                                    for (int xx = x0; xx < x1; ++xx)
                                        dxrow[xx] += wv * grow[xx - off];
                                }
                            }
                        }
                    }
                }
            }
            if (wn.requires_grad) {
                T* dw = wn.grad.data();
                const T* xp = xn.value.data();
#pragma omp parallel for collapse(2) schedule(static)
                for (int oc = 0; oc < OC; ++oc) {
                    for (int ic = 0; ic < IC; ++ic) {
                        for (int ky = 0; ky < K; ++ky) {
                            for (int kx = 0; kx < K; ++kx) {
                                T acc = T(0);
                                const int off = kx - pad;
                                for (int y = 0; y < H; ++y) {
                                    const int yy = y + ky - pad;
                                    if (yy < 0 || yy >= H) continue;
                                    const T* grow = g + (size_t(oc) * H + y) * W;
                                    const T* irow = xp + (size_t(ic) * H + yy) * W;
                                    const int x0 = std::max(0, -off), x1 = std::min(W, W - off);
                                    for (int xcol = x0; xcol < x1; ++xcol)
                                        acc += grow[xcol] * irow[xcol + off];
                                }
                                dw[((size_t(oc) * IC + ic) * K + ky) * K + kx] += acc;
                            }
                        }
                    }
                }
            }
            if (bn.requires_grad) {
                T* db = bn.grad.data();
#pragma omp parallel for schedule(static)
                for (int oc = 0; oc < OC; ++oc) {
                    T acc = T(0);
                    const T* gplane = g + size_t(oc) * H * W;
                    for (size_t i = 0; i < size_t(H) * W; ++i) acc += gplane[i];
                    db[oc] += acc;
                }
            }
        },
        "conv2d");
}

// 2x2 average pooling; H and W must be even.
template <typename T>
Var<T> avg_pool2(Var<T> x) {
    const Shape& xs = x.shape();
    if (xs.size() != 3 || xs[1] % 2 || xs[2] % 2)
        throw ShapeError("avg_pool2: expected [C,H,W] with even H,W, got " + shape_str(xs));
    const int C = xs[0], H = xs[1], W = xs[2], HO = H / 2, WO = W / 2;
    std::vector<T> out(size_t(C) * HO * WO);
    const T* xp = x.value().data();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < HO; ++y) {
            const T* r0 = xp + (size_t(c) * H + 2 * y) * W;
            const T* r1 = r0 + W;
            T* orow = out.data() + (size_t(c) * HO + y) * WO;
            for (int xcol = 0; xcol < WO; ++xcol)
                orow[xcol] =
                    (r0[2 * xcol] + r0[2 * xcol + 1] + r1[2 * xcol] + r1[2 * xcol + 1]) * T(0.25);
        }
    int xi = x.idx;
    return x.tape->make_op(
        Shape{C, HO, WO}, std::move(out), x.tape->node(xi).requires_grad,
        [xi, C, H, W, HO, WO](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            const T* g = s.grad.data();
            T* dx = xn.grad.data();
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < HO; ++y) {
                    const T* grow = g + (size_t(c) * HO + y) * WO;
                    T* d0 = dx + (size_t(c) * H + 2 * y) * W;
                    T* d1 = d0 + W;
                    for (int xcol = 0; xcol < WO; ++xcol) {
                        const T v = grow[xcol] * T(0.25);
                        d0[2 * xcol] += v;
                        d0[2 * xcol + 1] += v;
                        d1[2 * xcol] += v;
                        d1[2 * xcol + 1] += v;
                    }
                }
        },
        "avg_pool2");
}

// Nearest-neighbor 2x upsampling.
template <typename T>
Var<T> upsample_nearest2(Var<T> x) {
    const Shape& xs = x.shape();
    if (xs.size() != 3) throw ShapeError("upsample_nearest2: expected [C,H,W]");
    const int C = xs[0], H = xs[1], W = xs[2], HO = 2 * H, WO = 2 * W;
    std::vector<T> out(size_t(C) * HO * WO);
    const T* xp = x.value().data();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < HO; ++y) {
            const T* irow = xp + (size_t(c) * H + y / 2) * W;
            T* orow = out.data() + (size_t(c) * HO + y) * WO;
            for (int xcol = 0; xcol < WO; ++xcol) orow[xcol] = irow[xcol / 2];
        }
    int xi = x.idx;
    return x.tape->make_op(
        Shape{C, HO, WO}, std::move(out), x.tape->node(xi).requires_grad,
        [xi, C, H, W, HO, WO](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            const T* g = s.grad.data();
            T* dx = xn.grad.data();
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < HO; ++y) {
                    const T* grow = g + (size_t(c) * HO + y) * WO;
                    T* drow = dx + (size_t(c) * H + y / 2) * W;
                    for (int xcol = 0; xcol < WO; ++xcol) drow[xcol / 2] += grow[xcol];
                }
        },
        "upsample_nearest2");
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || as[1] != bs[1] || as[2] != bs[2])
        throw ShapeError("concat_channels: incompatible " + shape_str(as) + " vs " +
                         shape_str(bs));
    const int CA = as[0], CB = bs[0], H = as[1], W = as[2];
    std::vector<T> out;
    out.reserve((size_t(CA) + CB) * H * W);
    out.insert(out.end(), a.value().begin(), a.value().end());
    out.insert(out.end(), b.value().begin(), b.value().end());
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    const size_t na = a.value().size();
    return a.tape->make_op(
        Shape{CA + CB, H, W}, std::move(out), rg,
        [ai, bi, na](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            if (an.requires_grad)
                for (size_t i = 0; i < na; ++i) an.grad[i] += s.grad[i];
            if (bn.requires_grad)
                for (size_t i = na; i < s.grad.size(); ++i) bn.grad[i - na] += s.grad[i];
        },
        "concat_channels");
}

// Column-wise concat of [B,C1] and [B,C2].
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[0] != bs[0])
        throw ShapeError("concat_cols: incompatible " + shape_str(as) + " vs " + shape_str(bs));
    const int B = as[0], CA = as[1], CB = bs[1];
    std::vector<T> out(size_t(B) * (CA + CB));
    const T* ap = a.value().data();
    const T* bp = b.value().data();
    for (int r = 0; r < B; ++r) {
        T* orow = out.data() + size_t(r) * (CA + CB);
        std::copy(ap + size_t(r) * CA, ap + size_t(r + 1) * CA, orow);
        std::copy(bp + size_t(r) * CB, bp + size_t(r + 1) * CB, orow + CA);
    }
    int ai = a.idx, bi = b.idx;
    bool rg = a.tape->node(ai).requires_grad || a.tape->node(bi).requires_grad;
    return a.tape->make_op(
        Shape{B, CA + CB}, std::move(out), rg,
        [ai, bi, B, CA, CB](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& an = t.node(ai);
            auto& bn = t.node(bi);
            const T* g = s.grad.data();
            for (int r = 0; r < B; ++r) {
                const T* grow = g + size_t(r) * (CA + CB);
                if (an.requires_grad) {
                    T* da = an.grad.data() + size_t(r) * CA;
                    for (int c = 0; c < CA; ++c) da[c] += grow[c];
                }
                if (bn.requires_grad) {
                    T* db = bn.grad.data() + size_t(r) * CB;
                    for (int c = 0; c < CB; ++c) db[c] += grow[CA + c];
                }
            }
        },
        "concat_cols");
}

// Columns [c0, c1) of [B,C].
template <typename T>
Var<T> slice_cols(Var<T> x, int c0, int c1) {
    const Shape& xs = x.shape();
    if (xs.size() != 2 || c0 < 0 || c1 > xs[1] || c0 >= c1)
        throw ShapeError("slice_cols: bad range on " + shape_str(xs));
    const int B = xs[0], C = xs[1], CO = c1 - c0;
    std::vector<T> out(size_t(B) * CO);
    const T* xp = x.value().data();
    for (int r = 0; r < B; ++r)
        std::copy(xp + size_t(r) * C + c0, xp + size_t(r) * C + c1, out.data() + size_t(r) * CO);
    int xi = x.idx;
    return x.tape->make_op(
        Shape{B, CO}, std::move(out), x.tape->node(xi).requires_grad,
        [xi, B, C, c0, CO](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& xn = t.node(xi);
            if (!xn.requires_grad) return;
            const T* g = s.grad.data();
            for (int r = 0; r < B; ++r) {
                T* dx = xn.grad.data() + size_t(r) * C + c0;
                const T* grow = g + size_t(r) * CO;
                for (int c = 0; c < CO; ++c) dx[c] += grow[c];
            }
        },
        "slice_cols");
}

// ---- lookup / sampling ----

// table:[R,F], indices (constant) -> [B,F]; differentiable w.r.t. the table.
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<uint32_t> indices) {
    const Shape& ts = table.shape();
    if (ts.size() != 2) throw ShapeError("gather_rows: table must be [R,F]");
    const uint32_t R = uint32_t(ts[0]);
    const int F = ts[1];
    const int B = int(indices.size());
    for (uint32_t i : indices)
        if (i >= R) throw ShapeError("gather_rows: index out of range");
    std::vector<T> out(size_t(B) * F);
    const T* tp = table.value().data();
    for (int b = 0; b < B; ++b)
        std::copy(tp + size_t(indices[size_t(b)]) * F, tp + size_t(indices[size_t(b)] + 1) * F,
                  out.data() + size_t(b) * F);
    int ti = table.idx;
    auto idx_shared = std::make_shared<std::vector<uint32_t>>(std::move(indices));
    return table.tape->make_op(
        Shape{B, F}, std::move(out), table.tape->node(ti).requires_grad,
        [ti, F, B, idx_shared](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& tn = t.node(ti);
            if (!tn.requires_grad) return;
            const T* g = s.grad.data();
            // Serial scatter: deterministic accumulation order.
            for (int b = 0; b < B; ++b) {
                T* drow = tn.grad.data() + size_t((*idx_shared)[size_t(b)]) * F;
                const T* grow = g + size_t(b) * F;
                for (int f = 0; f < F; ++f) drow[f] += grow[f];
            }
        },
        "gather_rows");
}

// map:[C,H,W], fractional pixel coords (constant) -> [B,C].
// Coordinates outside the bilinear hull [0,W-1]x[0,H-1] produce zeros and
// receive no gradient (out-of-detector points contribute no view evidence).
struct SampleCoord {
    double u = 0, v = 0;
};

template <typename T>
Var<T> bilinear_sample_2d(Var<T> map, const std::vector<SampleCoord>& coords) {
    const Shape& ms = map.shape();
    if (ms.size() != 3) throw ShapeError("bilinear_sample_2d: map must be [C,H,W]");
    const int C = ms[0], H = ms[1], W = ms[2];
    const int B = int(coords.size());
    struct Corner {
        int32_t base = -1;  // y0*W + x0, or -1 when outside
        T fx = T(0), fy = T(0);
    };
    auto corners = std::make_shared<std::vector<Corner>>(size_t(B));
    for (int b = 0; b < B; ++b) {
        const double u = coords[size_t(b)].u, v = coords[size_t(b)].v;
        if (u < 0.0 || u > double(W - 1) || v < 0.0 || v > double(H - 1)) continue;
        int x0 = std::min(int(std::floor(u)), W - 2);
        int y0 = std::min(int(std::floor(v)), H - 2);
        (*corners)[size_t(b)] = {int32_t(y0 * W + x0), T(u - x0), T(v - y0)};
    }
    std::vector<T> out(size_t(B) * C, T(0));
    const T* mp = map.value().data();
    for (int b = 0; b < B; ++b) {
        const Corner& cr = (*corners)[size_t(b)];
        if (cr.base < 0) continue;
        const T w00 = (T(1) - cr.fx) * (T(1) - cr.fy), w10 = cr.fx * (T(1) - cr.fy);
        const T w01 = (T(1) - cr.fx) * cr.fy, w11 = cr.fx * cr.fy;
        T* orow = out.data() + size_t(b) * C;
        for (int c = 0; c < C; ++c) {
            const T* plane = mp + size_t(c) * H * W;
            orow[c] = w00 * plane[cr.base] + w10 * plane[cr.base + 1] +
                      w01 * plane[cr.base + W] + w11 * plane[cr.base + W + 1];
        }
    }
    int mi = map.idx;
    return map.tape->make_op(
        Shape{B, C}, std::move(out), map.tape->node(mi).requires_grad,
        [mi, C, H, W, B, corners](Tape<T>& t, int self) {
            auto& s = t.node(self);
            auto& mn = t.node(mi);
            if (!mn.requires_grad) return;
            const T* g = s.grad.data();
            for (int b = 0; b < B; ++b) {
                const Corner& cr = (*corners)[size_t(b)];
                if (cr.base < 0) continue;
                const T w00 = (T(1) - cr.fx) * (T(1) - cr.fy), w10 = cr.fx * (T(1) - cr.fy);
                const T w01 = (T(1) - cr.fx) * cr.fy, w11 = cr.fx * cr.fy;
                const T* grow = g + size_t(b) * C;
                for (int c = 0; c < C; ++c) {
                    T* plane = mn.grad.data() + size_t(c) * H * W;
                    plane[cr.base] += w00 * grow[c];
                    plane[cr.base + 1] += w10 * grow[c];
                    plane[cr.base + W] += w01 * grow[c];
                    plane[cr.base + W + 1] += w11 * grow[c];
                }
            }
        },
        "bilinear_sample_2d");
}

// Blend of 8 corner feature batches [B,F] with fixed per-point weights [B,8].
template <typename T>
Var<T> trilinear_blend(const std::array<Var<T>, 8>& corners, std::vector<T> weights) {
    const Shape& cs = corners[0].shape();
    if (cs.size() != 2) throw ShapeError("trilinear_blend: corners must be [B,F]");
    const int B = cs[0], F = cs[1];
    if (weights.size() != size_t(B) * 8)
        throw ShapeError("trilinear_blend: weights must be [B,8]");
    for (const auto& c : corners)
        if (c.shape() != cs) throw ShapeError("trilinear_blend: corner shape mismatch");
    std::vector<T> out(size_t(B) * F, T(0));
    for (int j = 0; j < 8; ++j) {
        const T* cp = corners[size_t(j)].value().data();
        for (int b = 0; b < B; ++b) {
            const T w = weights[size_t(b) * 8 + j];
            const T* crow = cp + size_t(b) * F;
            T* orow = out.data() + size_t(b) * F;
            for (int f = 0; f < F; ++f) orow[f] += w * crow[f];
        }
    }
    std::array<int, 8> cidx;
    bool rg = false;
    for (int j = 0; j < 8; ++j) {
        cidx[size_t(j)] = corners[size_t(j)].idx;
        rg = rg || corners[size_t(j)].tape->node(cidx[size_t(j)]).requires_grad;
    }
    auto wshared = std::make_shared<std::vector<T>>(std::move(weights));
    Tape<T>* tape = corners[0].tape;
    return tape->make_op(
        Shape{B, F}, std::move(out), rg,
        [cidx, B, F, wshared](Tape<T>& t, int self) {
            auto& s = t.node(self);
            const T* g = s.grad.data();
            for (int j = 0; j < 8; ++j) {
                auto& cn = t.node(cidx[size_t(j)]);
                if (!cn.requires_grad) continue;
                for (int b = 0; b < B; ++b) {
                    const T w = (*wshared)[size_t(b) * 8 + j];
                    const T* grow = g + size_t(b) * F;
                    T* drow = cn.grad.data() + size_t(b) * F;
                    for (int f = 0; f < F; ++f) drow[f] += w * grow[f];
                }
            }
        },
        "trilinear_blend");
}

// Argmax over the last axis of [B,C] values (not a tape op).
template <typename T>
std::vector<int> argmax_rows(const std::vector<T>& values, int cols) {
    const int B = int(values.size()) / cols;
    std::vector<int> out(static_cast<size_t>(B), 0);
    for (int b = 0; b < B; ++b) {
        const T* row = values.data() + size_t(b) * cols;
        int best = 0;
        for (int c = 1; c < cols; ++c)
            if (row[c] > row[best]) best = c;
        out[size_t(b)] = best;
    }
    return out;
}

}  // namespace spider
