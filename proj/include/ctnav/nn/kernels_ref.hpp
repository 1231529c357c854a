#pragma once

// Naive serial reference kernels. These stay deliberately simple: the tests
// check the OpenMP kernels against them and the bench tool reports the
// speedup. Accumulation order within a dot product may differ from the
// parallel kernels, so comparisons are tolerance-based.

namespace ctnav::nn::ref {

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T s{};
            for (int kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
            c[i * n + j] += s;
        }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T s{};
            for (int kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
            c[i * n + j] += s;
        }
}

template <typename T>
void gemm_tn(const T* a, const T* d, T* c, int m, int k, int n) {
    for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < n; ++j) {
            T s{};
            for (int mm = 0; mm < m; ++mm) s += a[mm * k + kk] * d[mm * n + j];
            c[kk * n + j] += s;
        }
}

template <typename T>
void bmm_nn(const T* a, const T* b, T* c, int batch, int m, int k, int n) {
    for (int bi = 0; bi < batch; ++bi)
        gemm_nn(a + static_cast<std::size_t>(bi) * m * k, b + static_cast<std::size_t>(bi) * k * n,
                c + static_cast<std::size_t>(bi) * m * n, m, k, n);
}

template <typename T>
void bmm_nt(const T* a, const T* b, T* c, int batch, int m, int k, int n) {
    for (int bi = 0; bi < batch; ++bi)
        gemm_nt(a + static_cast<std::size_t>(bi) * m * k, b + static_cast<std::size_t>(bi) * n * k,
                c + static_cast<std::size_t>(bi) * m * n, m, k, n);
}

template <typename T>
void bmm_tn(const T* a, const T* d, T* c, int batch, int m, int k, int n) {
    for (int bi = 0; bi < batch; ++bi)
        gemm_tn(a + static_cast<std::size_t>(bi) * m * k, d + static_cast<std::size_t>(bi) * m * n,
                c + static_cast<std::size_t>(bi) * k * n, m, k, n);
}

// direct convolution, channel-last x [B,H,W,C], weights [kh*kw*C, Cout]
template <typename T>
void conv2d(const T* x, const T* wgt, const T* bias, T* y, int bsz, int h, int w, int c,
            int cout, int kh, int kw, int stride) {
    const int oh = (h - kh) / stride + 1;
    const int ow = (w - kw) / stride + 1;
    for (int b = 0; b < bsz; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int co = 0; co < cout; ++co) {
                    T s = bias ? bias[co] : T{};
                    for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx)
                            for (int ci = 0; ci < c; ++ci) {
                                const std::size_t xi =
                                    ((static_cast<std::size_t>(b) * h + (oy * stride + dy)) * w +
                                     (ox * stride + dx)) *
                                        c +
                                    ci;
                                const std::size_t wi =
                                    ((static_cast<std::size_t>(dy) * kw + dx) * c + ci) *
                                        cout +
                                    co;
                                s += x[xi] * wgt[wi];
                            }
                    y[((static_cast<std::size_t>(b) * oh + oy) * ow + ox) * cout + co] = s;
                }
}

}  // namespace ctnav::nn::ref
