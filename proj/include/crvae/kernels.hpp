#pragma once

// Dense linear-algebra kernels behind the conv / deconv / dense ops.
//
// Everything here is single-threaded and uses a fixed summation order, so a
// given build produces bit-identical results run to run. The GEMM variants
// are written as axpy-style loops over the contiguous output dimension
// (or fixed-lane partial sums for the dot-product variant) so the compiler
// can vectorise them without any floating-point reassociation licence.

#include <cstdint>
#include <string>

#include "crvae/tensor.hpp"

namespace crvae {

// Output extent of a strided, padded correlation window.
inline int conv_out_dim(int in, int k, int stride, int pad) {
    int span = in + 2 * pad - k;
    if (span < 0) {
        throw ShapeError("kernel size " + std::to_string(k) + " exceeds padded input extent " +
                         std::to_string(in + 2 * pad));
    }
    return span / stride + 1;
}

// C[M,N] = A[M,K] * B[K,N], accumulating into C when accumulate is set.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::int64_t>(i) * N;
        if (!accumulate) {
            for (int j = 0; j < N; ++j) c[j] = T(0);
        }
        const T* a = A + static_cast<std::int64_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + static_cast<std::int64_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] = A[K,M]^T * B[K,N]; k is the outer loop so every C element sees
// contributions in the same (ascending k) order.
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    if (!accumulate) {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(M) * N; ++i) C[i] = T(0);
    }
    for (int k = 0; k < K; ++k) {
        const T* a = A + static_cast<std::int64_t>(k) * M;
        const T* b = B + static_cast<std::int64_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const T av = a[i];
            T* c = C + static_cast<std::int64_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// Dot product with eight fixed-order partial sums (lane l accumulates the
// elements with index = l mod 8; lanes combine in ascending order).
template <typename T>
T dot_lanes(const T* a, const T* b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int n8 = n - n % 8;
    for (int k = 0; k < n8; k += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
    }
    for (int k = n8; k < n; ++k) acc[k - n8] += a[k] * b[k];
    T s = T(0);
    for (int l = 0; l < 8; ++l) s += acc[l];
    return s;
}

// C[M,N] = A[M,K] * B[N,K]^T (rows of A dotted with rows of B).
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<std::int64_t>(i) * K;
        T* c = C + static_cast<std::int64_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const T d = dot_lanes(a, B + static_cast<std::int64_t>(j) * K, K);
            c[j] = accumulate ? c[j] + d : d;
        }
    }
}

// Geometry of one correlation between a [C,H,W] image and a [*,C,kh,kw]
// kernel bank.
struct ConvGeom {
    int C, H, W;
    int kh, kw;
    int stride, pad;
    int OH, OW;

    ConvGeom(int C_, int H_, int W_, int kh_, int kw_, int stride_, int pad_)
        : C(C_), H(H_), W(W_), kh(kh_), kw(kw_), stride(stride_), pad(pad_),
          OH(conv_out_dim(H_, kh_, stride_, pad_)), OW(conv_out_dim(W_, kw_, stride_, pad_)) {
        if (stride < 1) throw ShapeError("stride must be >= 1");
        if (pad < 0) throw ShapeError("padding must be >= 0");
    }

    std::int64_t rows() const { return static_cast<std::int64_t>(C) * kh * kw; }   // patch length
    std::int64_t cols() const { return static_cast<std::int64_t>(OH) * OW; }       // window count
    std::int64_t image_numel() const { return static_cast<std::int64_t>(C) * H * W; }
};

// Unfold one image into a [rows, cols] patch matrix; out-of-range taps are 0.
template <typename T>
void im2col(const ConvGeom& g, const T* img, T* col) {
    std::int64_t r = 0;
    for (int c = 0; c < g.C; ++c) {
        const T* plane = img + static_cast<std::int64_t>(c) * g.H * g.W;
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx, ++r) {
                T* row = col + r * g.cols();
                std::int64_t idx = 0;
                for (int oy = 0; oy < g.OH; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.H) {
                        for (int ox = 0; ox < g.OW; ++ox, ++idx) row[idx] = T(0);
                        continue;
                    }
                    const T* line = plane + static_cast<std::int64_t>(iy) * g.W;
                    for (int ox = 0; ox < g.OW; ++ox, ++idx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        row[idx] = (ix < 0 || ix >= g.W) ? T(0) : line[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add the patch matrix back onto the image grid.
// Fixed traversal order (patch row major, then window index) keeps overlap
// accumulation deterministic.
template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* img) {
    std::int64_t r = 0;
    for (int c = 0; c < g.C; ++c) {
        T* plane = img + static_cast<std::int64_t>(c) * g.H * g.W;
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx, ++r) {
                const T* row = col + r * g.cols();
                std::int64_t idx = 0;
                for (int oy = 0; oy < g.OH; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.H) {
                        idx += g.OW;
                        continue;
                    }
                    T* line = plane + static_cast<std::int64_t>(iy) * g.W;
                    for (int ox = 0; ox < g.OW; ++ox, ++idx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.W) line[ix] += row[idx];
                    }
                }
            }
        }
    }
}

// ---- whole-batch correlation helpers ---------------------------------------
//
// conv_forward_batch and its two adjoints are shared verbatim by the conv op
// (forward / backward) and the deconv op (backward / forward): transposed
// convolution *is* the input-adjoint of convolution with the same kernel
// tensor, and reusing one code path makes that identity exact at the bit
// level rather than merely numerical.

// y[n] = K[F, rows] * col(x[n]); col buffers for all n are retained in `cols`
// (rows*cols per image) for use by the adjoints.
template <typename T>
void conv_forward_batch(const ConvGeom& g, int N, int F, const T* x, const T* kernel, T* y,
                        std::vector<T>* cols) {
    const std::int64_t rc = g.rows() * g.cols();
    std::vector<T> local;
    std::vector<T>& buf = cols ? *cols : local;
    buf.resize(static_cast<std::size_t>(rc) * (cols ? N : 1));
    for (int n = 0; n < N; ++n) {
        T* col = buf.data() + (cols ? static_cast<std::int64_t>(n) * rc : 0);
        im2col(g, x + static_cast<std::int64_t>(n) * g.image_numel(), col);
        gemm_nn(F, static_cast<int>(g.cols()), static_cast<int>(g.rows()), kernel, col,
                y + static_cast<std::int64_t>(n) * F * g.cols(), false);
    }
}

// dx[n] += col2im(K^T * dy[n])
template <typename T>
void conv_backward_input_batch(const ConvGeom& g, int N, int F, const T* dy, const T* kernel,
                               T* dx_accum) {
    std::vector<T> dcol(static_cast<std::size_t>(g.rows() * g.cols()));
    for (int n = 0; n < N; ++n) {
        gemm_tn(static_cast<int>(g.rows()), static_cast<int>(g.cols()), F, kernel,
                dy + static_cast<std::int64_t>(n) * F * g.cols(), dcol.data(), false);
        col2im_add(g, dcol.data(), dx_accum + static_cast<std::int64_t>(n) * g.image_numel());
    }
}

// dK += sum_n dy[n] * col(x[n])^T, using the retained col buffers.
template <typename T>
void conv_backward_kernel_batch(const ConvGeom& g, int N, int F, const T* dy, const T* cols,
                                T* dk_accum) {
    const std::int64_t rc = g.rows() * g.cols();
    for (int n = 0; n < N; ++n) {
        gemm_nt(F, static_cast<int>(g.rows()), static_cast<int>(g.cols()),
                dy + static_cast<std::int64_t>(n) * F * g.cols(), cols + static_cast<std::int64_t>(n) * rc,
                dk_accum, true);
    }
}

}  // namespace crvae
