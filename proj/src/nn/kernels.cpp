#include "ctnav/nn/kernels.hpp"

#include <algorithm>
#include <cstdint>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ctnav::nn {
namespace {

// below this many multiply-adds the parallel fork costs more than it saves
constexpr std::int64_t kParallelWork = 1 << 15;

#if defined(__GLIBC__)
// Tape tensors churn hundreds of MB per training update. With the default
// thresholds glibc serves each large block from a fresh mmap and returns it
// on free, paying a page fault per 4 KiB on every reuse. Keeping large blocks
// in the arena removes that cost.
struct AllocatorTuning {
    AllocatorTuning() {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    }
};
const AllocatorTuning allocator_tuning;
#endif

}  // namespace

namespace {

// 4x32 register tile accumulated across the whole k loop; C is touched once
template <typename T>
inline void gemm_nn_tile(const T* a, const T* b, T* c, int k, int n, int jb) {
    T acc[4][32];
    for (int r = 0; r < 4; ++r)
#pragma omp simd
        for (int j = 0; j < 32; ++j) acc[r][j] = c[static_cast<std::size_t>(r) * n + jb + j];
    for (int kk = 0; kk < k; ++kk) {
        const T v0 = a[kk];
        const T v1 = a[static_cast<std::size_t>(k) + kk];
        const T v2 = a[2 * static_cast<std::size_t>(k) + kk];
        const T v3 = a[3 * static_cast<std::size_t>(k) + kk];
        const T* bk = b + static_cast<std::size_t>(kk) * n + jb;
#pragma omp simd
        for (int j = 0; j < 32; ++j) {
            acc[0][j] += v0 * bk[j];
            acc[1][j] += v1 * bk[j];
            acc[2][j] += v2 * bk[j];
            acc[3][j] += v3 * bk[j];
        }
    }
    for (int r = 0; r < 4; ++r)
#pragma omp simd
        for (int j = 0; j < 32; ++j) c[static_cast<std::size_t>(r) * n + jb + j] = acc[r][j];
}

// fallback for row/column remainders: row-sweep accumulation
template <typename T>
inline void gemm_nn_rows(const T* a, const T* b, T* c, int rows, int k, int n, int j0) {
    for (int r = 0; r < rows; ++r) {
        const T* ar = a + static_cast<std::size_t>(r) * k;
        T* cr = c + static_cast<std::size_t>(r) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T v = ar[kk];
            const T* bk = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
            for (int j = j0; j < n; ++j) cr[j] += v * bk[j];
        }
    }
}

}  // namespace

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    const bool par = static_cast<std::int64_t>(m) * k * n >= kParallelWork && m > 4;
    const int ncap = (n / 32) * 32;
#pragma omp parallel for schedule(static) if (par)
    for (int ib = 0; ib < m; ib += 4) {
        const int rows = std::min(4, m - ib);
        const T* ab = a + static_cast<std::size_t>(ib) * k;
        T* cb = c + static_cast<std::size_t>(ib) * n;
        if (rows == 4) {
            for (int jb = 0; jb < ncap; jb += 32) gemm_nn_tile(ab, b, cb, k, n, jb);
            if (ncap < n) gemm_nn_rows(ab, b, cb, 4, k, n, ncap);
        } else {
            gemm_nn_rows(ab, b, cb, rows, k, n, 0);
        }
    }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    if (work >= kParallelWork * 8) {
        // transpose once so the accumulating tile kernel can stream B rows
        std::vector<T> bt(static_cast<std::size_t>(k) * n);
#pragma omp parallel for schedule(static) if (n > 64)
        for (int j = 0; j < n; ++j)
            for (int kk = 0; kk < k; ++kk)
                bt[static_cast<std::size_t>(kk) * n + j] = b[static_cast<std::size_t>(j) * k + kk];
        gemm_nn(a, bt.data(), c, m, k, n);
        return;
    }
    const bool par = work >= kParallelWork && m > 1;
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + static_cast<std::size_t>(j) * k;
            T s{};
#pragma omp simd reduction(+ : s)
            for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
            ci[j] += s;
        }
    }
}

template <typename T>
void gemm_tn(const T* a, const T* d, T* c, int m, int k, int n) {
    // blocks of eight output rows let every A row be read contiguously once
    const bool par = static_cast<std::int64_t>(m) * k * n >= kParallelWork && k > 8;
#pragma omp parallel for schedule(static) if (par)
    for (int kb = 0; kb < k; kb += 8) {
        const int kcount = std::min(8, k - kb);
        for (int mm = 0; mm < m; ++mm) {
            const T* arow = a + static_cast<std::size_t>(mm) * k + kb;
            const T* dm = d + static_cast<std::size_t>(mm) * n;
            for (int r = 0; r < kcount; ++r) {
                const T v = arow[r];
                T* cr = c + static_cast<std::size_t>(kb + r) * n;
#pragma omp simd
                for (int j = 0; j < n; ++j) cr[j] += v * dm[j];
            }
        }
    }
}

template <typename T>
void bmm_nn(const T* a, const T* b, T* c, int batch, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    const bool par = batch > 1 && work * batch >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int bi = 0; bi < batch; ++bi) {
        const T* ab = a + static_cast<std::size_t>(bi) * m * k;
        const T* bb = b + static_cast<std::size_t>(bi) * k * n;
        T* cb = c + static_cast<std::size_t>(bi) * m * n;
        for (int i = 0; i < m; ++i) {
            for (int kk = 0; kk < k; ++kk) {
                const T v = ab[static_cast<std::size_t>(i) * k + kk];
                const T* bk = bb + static_cast<std::size_t>(kk) * n;
                T* ci = cb + static_cast<std::size_t>(i) * n;
#pragma omp simd
                for (int j = 0; j < n; ++j) ci[j] += v * bk[j];
            }
        }
    }
}

template <typename T>
void bmm_nt(const T* a, const T* b, T* c, int batch, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    const bool par = batch > 1 && work * batch >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int bi = 0; bi < batch; ++bi) {
        const T* ab = a + static_cast<std::size_t>(bi) * m * k;
        const T* bb = b + static_cast<std::size_t>(bi) * n * k;
        T* cb = c + static_cast<std::size_t>(bi) * m * n;
        for (int i = 0; i < m; ++i) {
            const T* ai = ab + static_cast<std::size_t>(i) * k;
            T* ci = cb + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const T* bj = bb + static_cast<std::size_t>(j) * k;
                T s{};
#pragma omp simd reduction(+ : s)
                for (int kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
                ci[j] += s;
            }
        }
    }
}

template <typename T>
void bmm_tn(const T* a, const T* d, T* c, int batch, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    const bool par = batch > 1 && work * batch >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (int bi = 0; bi < batch; ++bi) {
        const T* ab = a + static_cast<std::size_t>(bi) * m * k;
        const T* db = d + static_cast<std::size_t>(bi) * m * n;
        T* cb = c + static_cast<std::size_t>(bi) * k * n;
        for (int kk = 0; kk < k; ++kk) {
            T* ck = cb + static_cast<std::size_t>(kk) * n;
            for (int mm = 0; mm < m; ++mm) {
                const T v = ab[static_cast<std::size_t>(mm) * k + kk];
                const T* dm = db + static_cast<std::size_t>(mm) * n;
#pragma omp simd
                for (int j = 0; j < n; ++j) ck[j] += v * dm[j];
            }
        }
    }
}

template <typename T>
void im2col(const T* x, T* col, int bsz, int h, int w, int c, int kh, int kw, int stride) {
    const int oh = conv_out_dim(h, kh, stride);
    const int ow = conv_out_dim(w, kw, stride);
    const int patch = kh * kw * c;
    const std::int64_t rows = static_cast<std::int64_t>(bsz) * oh * ow;
    const bool par = rows * patch >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t row = 0; row < rows; ++row) {
        const int b = static_cast<int>(row / (oh * ow));
        const int rem = static_cast<int>(row % (oh * ow));
        const int oy = rem / ow;
        const int ox = rem % ow;
        const T* xb = x + static_cast<std::size_t>(b) * h * w * c;
        T* out = col + static_cast<std::size_t>(row) * patch;
        for (int dy = 0; dy < kh; ++dy) {
            const T* xr = xb + (static_cast<std::size_t>(oy * stride + dy) * w +
                                static_cast<std::size_t>(ox * stride)) *
                                   c;
            for (int i = 0; i < kw * c; ++i) out[(dy * kw) * c + i] = xr[i];
        }
    }
}

template <typename T>
void col2im_add(const T* col, T* x, int bsz, int h, int w, int c, int kh, int kw, int stride) {
    const int oh = conv_out_dim(h, kh, stride);
    const int ow = conv_out_dim(w, kw, stride);
    const int patch = kh * kw * c;
    // patches of one batch item may overlap; scatter serially per item
#pragma omp parallel for schedule(static) if (bsz > 1)
    for (int b = 0; b < bsz; ++b) {
        T* xb = x + static_cast<std::size_t>(b) * h * w * c;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const std::size_t row =
                    (static_cast<std::size_t>(b) * oh + oy) * ow + static_cast<std::size_t>(ox);
                const T* src = col + row * patch;
                for (int dy = 0; dy < kh; ++dy) {
                    T* xr = xb + (static_cast<std::size_t>(oy * stride + dy) * w +
                                  static_cast<std::size_t>(ox * stride)) *
                                     c;
                    for (int i = 0; i < kw * c; ++i) xr[i] += src[(dy * kw) * c + i];
                }
            }
        }
    }
}

#define CTNAV_INSTANTIATE(T)                                                       \
    template void gemm_nn<T>(const T*, const T*, T*, int, int, int);               \
    template void gemm_nt<T>(const T*, const T*, T*, int, int, int);               \
    template void gemm_tn<T>(const T*, const T*, T*, int, int, int);               \
    template void bmm_nn<T>(const T*, const T*, T*, int, int, int, int);           \
    template void bmm_nt<T>(const T*, const T*, T*, int, int, int, int);           \
    template void bmm_tn<T>(const T*, const T*, T*, int, int, int, int);           \
    template void im2col<T>(const T*, T*, int, int, int, int, int, int, int);      \
    template void col2im_add<T>(const T*, T*, int, int, int, int, int, int, int);

CTNAV_INSTANTIATE(float)
CTNAV_INSTANTIATE(double)

#undef CTNAV_INSTANTIATE

}  // namespace ctnav::nn
