#pragma once

// Dense kernels behind the tape ops. OpenMP-parallel over output rows; every
// output element is accumulated serially in a fixed order, so results are
// bitwise identical for any thread count. Serial reference versions live in
// kernels_ref.hpp and the bench_kernels tool compares the two.

namespace ctnav::nn {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n);

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n);

// C[k,n] += A[m,k]^T * D[m,n]
template <typename T>
void gemm_tn(const T* a, const T* d, T* c, int m, int k, int n);

// batched variants over leading dimension
template <typename T>
void bmm_nn(const T* a, const T* b, T* c, int batch, int m, int k, int n);

template <typename T>
void bmm_nt(const T* a, const T* b, T* c, int batch, int m, int k, int n);

template <typename T>
void bmm_tn(const T* a, const T* d, T* c, int batch, int m, int k, int n);

// patches of x [B,H,W,C] (stride, valid padding, kernel kh x kw) flattened to
// rows [B*OH*OW, kh*kw*C] in (dy, dx, c) order
template <typename T>
void im2col(const T* x, T* col, int bsz, int h, int w, int c, int kh, int kw, int stride);

// scatter-add transpose of im2col
template <typename T>
void col2im_add(const T* col, T* x, int bsz, int h, int w, int c, int kh, int kw, int stride);

inline int conv_out_dim(int in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
}

}  // namespace ctnav::nn
