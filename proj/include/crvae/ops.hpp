#pragma once

// Differentiable operation library on Tape/Val. Each op computes its output
// eagerly and records a closure implementing the exact vector-Jacobian
// product; gradients always accumulate (+=) into the input buffers.

#include <cmath>
#include <memory>
#include <vector>

#include "crvae/kernels.hpp"
#include "crvae/tape.hpp"

namespace crvae {

// ============================================================================
// elementwise ops
// ============================================================================

namespace detail {

// Generic unary elementwise op. dfun(x_i, y_i) is the local derivative.
template <typename T, class F, class DF>
Val<T> unary(const char* name, Val<T> x, F fun, DF dfun) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    Tensor<T> out(xv.shape);
    for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = fun(xv[i]);
    const int xid = x.id;
    return tp->record(name, std::move(out), {x}, [tp, xid, dfun](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        const Tensor<T>& xval = tp->value_at(xid);
        const Tensor<T>& yval = tp->value_at(yid);
        Tensor<T>& gx = tp->grad_buf(xid);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * dfun(xval[i], yval[i]);
    });
}

// Generic binary elementwise op over same-shape inputs.
template <typename T, class F, class DA, class DB>
Val<T> binary(const char* name, Val<T> a, Val<T> b, F fun, DA da, DB db) {
    Tape<T>* tp = a.tape;
    const Tensor<T>& av = tp->value(a);
    const Tensor<T>& bv = tp->value(b);
    require_same_shape(av, bv, name);
    Tensor<T> out(av.shape);
    for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = fun(av[i], bv[i]);
    const int aid = a.id, bid = b.id;
    return tp->record(name, std::move(out), {a, b}, [tp, aid, bid, da, db](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        const Tensor<T>& aval = tp->value_at(aid);
        const Tensor<T>& bval = tp->value_at(bid);
        if (tp->needs_grad_at(aid)) {
            Tensor<T>& ga = tp->grad_buf(aid);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * da(aval[i], bval[i]);
        }
        if (tp->needs_grad_at(bid)) {
            Tensor<T>& gb = tp->grad_buf(bid);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * db(aval[i], bval[i]);
        }
    });
}

}  // namespace detail

template <typename T>
Val<T> add(Val<T> a, Val<T> b) {
    return detail::binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
Val<T> sub(Val<T> a, Val<T> b) {
    return detail::binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
Val<T> mul(Val<T> a, Val<T> b) {
    return detail::binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

template <typename T>
Val<T> neg(Val<T> x) {
    return detail::unary<T>(
        "neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Val<T> scale(Val<T> x, double c) {
    const T cc = static_cast<T>(c);
    return detail::unary<T>(
        "scale", x, [cc](T v) { return cc * v; }, [cc](T, T) { return cc; });
}

template <typename T>
Val<T> add_scalar(Val<T> x, double c) {
    const T cc = static_cast<T>(c);
    return detail::unary<T>(
        "add_scalar", x, [cc](T v) { return v + cc; }, [](T, T) { return T(1); });
}

template <typename T>
Val<T> exp(Val<T> x) {
    return detail::unary<T>(
        "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Val<T> log(Val<T> x) {
    const Tensor<T>& xv = x.tape->value(x);
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        if (!(xv[i] > T(0))) {
            throw DomainError("log: non-positive argument " + std::to_string(static_cast<double>(xv[i])) +
                              " at flat index " + std::to_string(i));
        }
    }
    return detail::unary<T>(
        "log", x, [](T v) { return std::log(v); }, [](T xi, T) { return T(1) / xi; });
}

template <typename T>
Val<T> tanh(Val<T> x) {
    return detail::unary<T>(
        "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

// Numerically stable sigmoid.
template <typename T>
Val<T> logistic(Val<T> x) {
    auto sig = [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
    };
    return detail::unary<T>(
        "logistic", x, sig, [](T, T y) { return y * (T(1) - y); });
}

// softplus(x) = log(1 + e^x), computed as max(x,0) + log1p(e^-|x|) so large
// magnitudes neither overflow nor lose the tail.
template <typename T>
Val<T> softplus(Val<T> x) {
    auto sp = [](T v) {
        const T m = v > T(0) ? v : T(0);
        return m + std::log1p(std::exp(-std::abs(v)));
    };
    auto sig = [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
    };
    return detail::unary<T>("softplus", x, sp, sig);
}

template <typename T>
Val<T> relu(Val<T> x) {
    return detail::unary<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T xi, T) { return xi > T(0) ? T(1) : T(0); });
}

template <typename T>
Val<T> leaky_relu(Val<T> x, double slope) {
    const T s = static_cast<T>(slope);
    return detail::unary<T>(
        "leaky_relu", x, [s](T v) { return v > T(0) ? v : s * v; },
        [s](T xi, T) { return xi > T(0) ? T(1) : s; });
}

template <typename T>
Val<T> square(Val<T> x) {
    return detail::unary<T>(
        "square", x, [](T v) { return v * v; }, [](T xi, T) { return T(2) * xi; });
}

// Clamp to [lo, hi]; the subgradient passes through strictly inside the range
// and is zero where the value was clipped.
template <typename T>
Val<T> clamp(Val<T> x, double lo, double hi) {
    if (!(lo <= hi)) throw ConfigError("clamp: lo > hi");
    const T l = static_cast<T>(lo), h = static_cast<T>(hi);
    return detail::unary<T>(
        "clamp", x, [l, h](T v) { return v < l ? l : (v > h ? h : v); },
        [l, h](T xi, T) { return (xi > l && xi < h) ? T(1) : T(0); });
}

// ============================================================================
// reductions
// ============================================================================

template <typename T>
Val<T> sum(Val<T> x) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    T s = T(0);
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
    const int xid = x.id;
    return tp->record("sum", Tensor<T>::scalar(s), {x}, [tp, xid](int yid) {
        const T g = tp->grad_buf(yid)[0];
        Tensor<T>& gx = tp->grad_buf(xid);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

template <typename T>
Val<T> mean(Val<T> x) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    if (xv.numel() == 0) throw ShapeError("mean of empty tensor");
    T s = T(0);
    for (std::int64_t i = 0; i < xv.numel(); ++i) s += xv[i];
    const T inv = T(1) / static_cast<T>(xv.numel());
    const int xid = x.id;
    return tp->record("mean", Tensor<T>::scalar(s * inv), {x}, [tp, xid, inv](int yid) {
        const T g = tp->grad_buf(yid)[0] * inv;
        Tensor<T>& gx = tp->grad_buf(xid);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

// ============================================================================
// shape ops
// ============================================================================

template <typename T>
Val<T> reshape(Val<T> x, Shape new_shape) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    if (shape_numel(new_shape) != xv.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(xv.shape) + " as " + shape_str(new_shape));
    }
    Tensor<T> out(new_shape);
    out.data = xv.data;
    const int xid = x.id;
    return tp->record("reshape", std::move(out), {x}, [tp, xid](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        Tensor<T>& gx = tp->grad_buf(xid);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

namespace detail {

struct AxisSplit {
    std::int64_t outer, dim, inner;
};

inline AxisSplit axis_split(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    AxisSplit a{1, s[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) a.inner *= s[static_cast<std::size_t>(i)];
    return a;
}

}  // namespace detail

// Contiguous sub-range [start, start+len) along one axis.
template <typename T>
Val<T> slice(Val<T> x, int axis, int start, int len) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const detail::AxisSplit ax = detail::axis_split(xv.shape, axis);
    if (len < 1 || start < 0 || start + len > ax.dim) {
        throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(xv.shape));
    }
    Shape os = xv.shape;
    os[static_cast<std::size_t>(axis)] = len;
    Tensor<T> out(os);
    for (std::int64_t o = 0; o < ax.outer; ++o) {
        const T* src = xv.data.data() + (o * ax.dim + start) * ax.inner;
        T* dst = out.data.data() + o * len * ax.inner;
        std::copy(src, src + static_cast<std::int64_t>(len) * ax.inner, dst);
    }
    const int xid = x.id;
    return tp->record("slice", std::move(out), {x}, [tp, xid, ax, start, len](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        Tensor<T>& gx = tp->grad_buf(xid);
        for (std::int64_t o = 0; o < ax.outer; ++o) {
            const T* src = g.data.data() + o * len * ax.inner;
            T* dst = gx.data.data() + (o * ax.dim + start) * ax.inner;
            for (std::int64_t i = 0; i < len * ax.inner; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Val<T> concat(const std::vector<Val<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    Tape<T>* tp = parts[0].tape;
    const Shape& ref = tp->value(parts[0]).shape;
    const detail::AxisSplit ax0 = detail::axis_split(ref, axis);
    std::int64_t total = 0;
    std::vector<int> lens;
    for (const Val<T>& p : parts) {
        const Shape& s = tp->value(p).shape;
        if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (static_cast<int>(d) != axis && s[d] != ref[d]) {
                throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(ref) +
                                 " outside axis " + std::to_string(axis));
            }
        }
        lens.push_back(s[static_cast<std::size_t>(axis)]);
        total += lens.back();
    }
    Shape os = ref;
    os[static_cast<std::size_t>(axis)] = static_cast<int>(total);
    Tensor<T> out(os);
    std::int64_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor<T>& pv = tp->value(parts[p]);
        for (std::int64_t o = 0; o < ax0.outer; ++o) {
            const T* src = pv.data.data() + o * lens[p] * ax0.inner;
            T* dst = out.data.data() + (o * total + off) * ax0.inner;
            std::copy(src, src + static_cast<std::int64_t>(lens[p]) * ax0.inner, dst);
        }
        off += lens[p];
    }
    std::vector<int> ids;
    for (const Val<T>& p : parts) ids.push_back(p.id);
    return tp->record("concat", std::move(out), parts, [tp, ids, ax0, lens, total](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        std::int64_t off2 = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (tp->needs_grad_at(ids[p])) {
                Tensor<T>& gp = tp->grad_buf(ids[p]);
                for (std::int64_t o = 0; o < ax0.outer; ++o) {
                    const T* src = g.data.data() + (o * total + off2) * ax0.inner;
                    T* dst = gp.data.data() + o * lens[p] * ax0.inner;
                    for (std::int64_t i = 0; i < lens[p] * ax0.inner; ++i) dst[i] += src[i];
                }
            }
            off2 += lens[p];
        }
    });
}

template <typename T>
Val<T> concat(std::initializer_list<Val<T>> parts, int axis) {
    return concat(std::vector<Val<T>>(parts), axis);
}

// Copies the current value into a fresh constant leaf: downstream gradients
// stop here. Used for targets that must not train their producer.
template <typename T>
Val<T> detach(Val<T> x) {
    return x.tape->constant(x.tape->value(x));
}

// ============================================================================
// dense / affine ops
// ============================================================================

// y[B,O] = x[B,I] . w[O,I]^T + b[O]
template <typename T>
Val<T> linear(Val<T> x, Val<T> w, Val<T> b) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const Tensor<T>& wv = tp->value(w);
    const Tensor<T>& bv = tp->value(b);
    if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1) {
        throw ShapeError("linear: expected x[B,I], w[O,I], b[O]; got " + shape_str(xv.shape) + ", " +
                         shape_str(wv.shape) + ", " + shape_str(bv.shape));
    }
    const int B = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    if (wv.dim(1) != I) {
        throw ShapeError("linear: input width " + std::to_string(I) + " vs weight width " +
                         std::to_string(wv.dim(1)));
    }
    if (bv.dim(0) != O) throw ShapeError("linear: bias length mismatch");
    Tensor<T> out({B, O});
    gemm_nt(B, O, I, xv.data.data(), wv.data.data(), out.data.data(), false);
    for (int r = 0; r < B; ++r) {
        T* row = out.data.data() + static_cast<std::int64_t>(r) * O;
        for (int o = 0; o < O; ++o) row[o] += bv[o];
    }
    const int xid = x.id, wid = w.id, bid = b.id;
    return tp->record("linear", std::move(out), {x, w, b}, [tp, xid, wid, bid, B, I, O](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        if (tp->needs_grad_at(xid)) {
            gemm_nn(B, I, O, g.data.data(), tp->value_at(wid).data.data(),
                    tp->grad_buf(xid).data.data(), true);
        }
        if (tp->needs_grad_at(wid)) {
            gemm_tn(O, I, B, g.data.data(), tp->value_at(xid).data.data(),
                    tp->grad_buf(wid).data.data(), true);
        }
        if (tp->needs_grad_at(bid)) {
            Tensor<T>& gb = tp->grad_buf(bid);
            for (int r = 0; r < B; ++r) {
                const T* row = g.data.data() + static_cast<std::int64_t>(r) * O;
                for (int o = 0; o < O; ++o) gb[o] += row[o];
            }
        }
    });
}

template <typename T>
Val<T> linear_nobias(Val<T> x, Val<T> w) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const Tensor<T>& wv = tp->value(w);
    if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1)) {
        throw ShapeError("linear_nobias: incompatible " + shape_str(xv.shape) + " and " +
                         shape_str(wv.shape));
    }
    const int B = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    Tensor<T> out({B, O});
    gemm_nt(B, O, I, xv.data.data(), wv.data.data(), out.data.data(), false);
    const int xid = x.id, wid = w.id;
    return tp->record("linear_nobias", std::move(out), {x, w}, [tp, xid, wid, B, I, O](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        if (tp->needs_grad_at(xid)) {
            gemm_nn(B, I, O, g.data.data(), tp->value_at(wid).data.data(),
                    tp->grad_buf(xid).data.data(), true);
        }
        if (tp->needs_grad_at(wid)) {
            gemm_tn(O, I, B, g.data.data(), tp->value_at(xid).data.data(),
                    tp->grad_buf(wid).data.data(), true);
        }
    });
}

// Per-channel bias over NCHW maps.
template <typename T>
Val<T> bias_nchw(Val<T> x, Val<T> b) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const Tensor<T>& bv = tp->value(b);
    if (xv.ndim() != 4 || bv.ndim() != 1 || bv.dim(0) != xv.dim(1)) {
        throw ShapeError("bias_nchw: x " + shape_str(xv.shape) + " vs bias " + shape_str(bv.shape));
    }
    const int N = xv.dim(0), C = xv.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor<T> out = xv;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            T* p = out.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            const T bc = bv[c];
            for (std::int64_t i = 0; i < plane; ++i) p[i] += bc;
        }
    }
    const int xid = x.id, bid = b.id;
    return tp->record("bias_nchw", std::move(out), {x, b}, [tp, xid, bid, N, C, plane](int yid) {
        const Tensor<T>& g = tp->grad_buf(yid);
        if (tp->needs_grad_at(xid)) {
            Tensor<T>& gx = tp->grad_buf(xid);
            for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (tp->needs_grad_at(bid)) {
            Tensor<T>& gb = tp->grad_buf(bid);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const T* p = g.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                    T s = T(0);
                    for (std::int64_t i = 0; i < plane; ++i) s += p[i];
                    gb[c] += s;
                }
            }
        }
    });
}

// ============================================================================
// convolution ops
// ============================================================================

namespace detail {

template <typename T>
ConvGeom conv_geom_checked(const char* op, const Tensor<T>& x, const Tensor<T>& k, int stride,
                           int pad, bool transposed) {
    if (x.ndim() != 4) throw ShapeError(std::string(op) + ": input must be [N,C,H,W], got " + shape_str(x.shape));
    if (k.ndim() != 4) throw ShapeError(std::string(op) + ": kernel must be 4-d, got " + shape_str(k.shape));
    if (x.dim(1) != k.dim(transposed ? 0 : 1)) {
        throw ShapeError(std::string(op) + ": channel axis mismatch, input C=" + std::to_string(x.dim(1)) +
                         " vs kernel " + shape_str(k.shape));
    }
    if (transposed) {
        // Image geometry is that of the *output*; derive it from the input.
        const int Ho = (x.dim(2) - 1) * stride - 2 * pad + k.dim(2);
        const int Wo = (x.dim(3) - 1) * stride - 2 * pad + k.dim(3);
        if (Ho < 1 || Wo < 1) throw ShapeError(std::string(op) + ": output extent would be empty");
        ConvGeom g(k.dim(1), Ho, Wo, k.dim(2), k.dim(3), stride, pad);
        if (g.OH != x.dim(2) || g.OW != x.dim(3)) {
            throw ShapeError(std::string(op) + ": stride/pad geometry does not invert to input grid " +
                             std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
        }
        return g;
    }
    return ConvGeom(x.dim(1), x.dim(2), x.dim(3), k.dim(2), k.dim(3), stride, pad);
}

}  // namespace detail

// Strided 2-d correlation. x [N,C,H,W], kernel [F,C,kh,kw] -> [N,F,OH,OW].
template <typename T>
Val<T> conv2d(Val<T> x, Val<T> k, int stride, int pad) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const Tensor<T>& kv = tp->value(k);
    const ConvGeom g = detail::conv_geom_checked("conv2d", xv, kv, stride, pad, false);
    const int N = xv.dim(0), F = kv.dim(0);
    Tensor<T> out({N, F, g.OH, g.OW});
    // Patch matrices are only retained when the kernel gradient will need them.
    const bool keep_cols = tp->needs_grad_at(k.id);
    auto cols = keep_cols ? std::make_shared<std::vector<T>>() : nullptr;
    conv_forward_batch(g, N, F, xv.data.data(), kv.data.data(), out.data.data(), cols.get());
    const int xid = x.id, kid = k.id;
    return tp->record("conv2d", std::move(out), {x, k}, [tp, xid, kid, g, N, F, cols](int yid) {
        const Tensor<T>& dy = tp->grad_buf(yid);
        if (tp->needs_grad_at(xid)) {
            conv_backward_input_batch(g, N, F, dy.data.data(), tp->value_at(kid).data.data(),
                                      tp->grad_buf(xid).data.data());
        }
        if (tp->needs_grad_at(kid)) {
            conv_backward_kernel_batch(g, N, F, dy.data.data(), cols->data(),
                                       tp->grad_buf(kid).data.data());
        }
    });
}

// Transposed (fractionally strided) 2-d correlation: the exact adjoint of
// conv2d with the same kernel tensor [F,C,kh,kw]. x [N,F,Hi,Wi] -> [N,C,Ho,Wo]
// with Ho = (Hi-1)*stride - 2*pad + kh.
template <typename T>
Val<T> deconv2d(Val<T> x, Val<T> k, int stride, int pad) {
    Tape<T>* tp = x.tape;
    const Tensor<T>& xv = tp->value(x);
    const Tensor<T>& kv = tp->value(k);
    const ConvGeom g = detail::conv_geom_checked("deconv2d", xv, kv, stride, pad, true);
    const int N = xv.dim(0), F = kv.dim(0);
    Tensor<T> out({N, g.C, g.H, g.W});
    conv_backward_input_batch(g, N, F, xv.data.data(), kv.data.data(), out.data.data());
    const int xid = x.id, kid = k.id;
    return tp->record("deconv2d", std::move(out), {x, k}, [tp, xid, kid, g, N, F](int yid) {
        const Tensor<T>& dy = tp->grad_buf(yid);
        const std::int64_t rc = g.rows() * g.cols();
        std::vector<T> col(static_cast<std::size_t>(rc));
        const bool want_x = tp->needs_grad_at(xid);
        const bool want_k = tp->needs_grad_at(kid);
        for (int n = 0; n < N; ++n) {
            im2col(g, dy.data.data() + static_cast<std::int64_t>(n) * g.image_numel(), col.data());
            if (want_x) {
                gemm_nn(F, static_cast<int>(g.cols()), static_cast<int>(g.rows()),
                        tp->value_at(kid).data.data(), col.data(),
                        tp->grad_buf(xid).data.data() + static_cast<std::int64_t>(n) * F * g.cols(), true);
            }
            if (want_k) {
                gemm_nt(F, static_cast<int>(g.rows()), static_cast<int>(g.cols()),
                        tp->value_at(xid).data.data() + static_cast<std::int64_t>(n) * F * g.cols(),
                        col.data(), tp->grad_buf(kid).data.data(), true);
            }
        }
    });
}

// ============================================================================
// composite ops
// ============================================================================

// One LSTM step built from primitive ops. Weights pack the four gates along
// the output axis in the order (input, forget, cell, output): wx [4H,I],
// wh [4H,H], b [4H]. Returns the new hidden and cell state, both [B,H].
template <typename T>
struct LstmState {
    Val<T> h;
    Val<T> c;
};

template <typename T>
LstmState<T> lstm_cell(Val<T> x, LstmState<T> state, Val<T> wx, Val<T> wh, Val<T> b) {
    Tape<T>* tp = x.tape;
    const int H = tp->value(state.c).ndim() == 2 ? tp->value(state.c).dim(1) : -1;
    if (H <= 0) throw ShapeError("lstm_cell: cell state must be [B,H]");
    if (tp->value(wx).ndim() != 2 || tp->value(wx).dim(0) != 4 * H || tp->value(wh).dim(0) != 4 * H ||
        tp->value(b).dim(0) != 4 * H) {
        throw ShapeError("lstm_cell: packed gate weights must have leading extent 4H=" +
                         std::to_string(4 * H));
    }
    Val<T> pre = add(linear(x, wx, b), linear_nobias(state.h, wh));
    Val<T> gi = logistic(slice(pre, 1, 0, H));
    Val<T> gf = logistic(slice(pre, 1, H, H));
    Val<T> gc = tanh(slice(pre, 1, 2 * H, H));
    Val<T> go = logistic(slice(pre, 1, 3 * H, H));
    Val<T> c_new = add(mul(gf, state.c), mul(gi, gc));
    Val<T> h_new = mul(go, tanh(c_new));
    return {h_new, c_new};
}

// Mean squared error over all elements.
template <typename T>
Val<T> mse(Val<T> a, Val<T> b) {
    return mean(square(sub(a, b)));
}

}  // namespace crvae
