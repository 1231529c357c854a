#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctnav/nn/kernels.hpp"
#include "ctnav/nn/tensor.hpp"
#include "ctnav/rng.hpp"

namespace ctnav::nn {

// elementwise loops below this size run serially
inline constexpr std::size_t kParElem = std::size_t(1) << 15;

// Reverse-mode tape over dense tensors. Ops append nodes; backward() walks the
// node list in reverse creation order. Instantiated with float for training
// and double for finite-difference checks. With grad recording disabled the
// tape doubles as a plain forward evaluator.
template <typename T>
class TapeT {
public:
    using Id = int;

    explicit TapeT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Id input(TensorT<T> v) { return push(std::move(v), false, nullptr); }

    Id param(const TensorT<T>& v) { return push(v, grad_enabled_, nullptr); }

    const TensorT<T>& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    const TensorT<T>& grad(Id id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) throw RuntimeFailure("tape: gradient was not populated");
        return n.grad;
    }

    bool has_grad(Id id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise ----

    Id add(Id a, Id b) {
        check_same("add", a, b);
        TensorT<T> out = val(a);
        const TensorT<T>& vb = val(b);
        const std::int64_t n = static_cast<std::int64_t>(out.data.size());
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) out.data[i] += vb.data[i];
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b] {
            const TensorT<T>& g = node(y).grad;
            if (needs(a)) accumulate(a, g.data.data(), T(1));
            if (needs(b)) accumulate(b, g.data.data(), T(1));
        });
        return y;
    }

    Id sub(Id a, Id b) {
        check_same("sub", a, b);
        TensorT<T> out = val(a);
        const TensorT<T>& vb = val(b);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b] {
            const TensorT<T>& g = node(y).grad;
            if (needs(a)) accumulate(a, g.data.data(), T(1));
            if (needs(b)) accumulate(b, g.data.data(), T(-1));
        });
        return y;
    }

    Id mul(Id a, Id b) {
        check_same("mul", a, b);
        TensorT<T> out = val(a);
        const TensorT<T>& vb = val(b);
        const std::int64_t n = static_cast<std::int64_t>(out.data.size());
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) out.data[i] *= vb.data[i];
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b] {
            const TensorT<T>& g = node(y).grad;
            const std::int64_t n = static_cast<std::int64_t>(g.data.size());
            const bool par = g.data.size() >= kParElem;
            if (needs(a)) {
                TensorT<T>& ga = ensure_grad(a);
                const TensorT<T>& vb2 = val(b);
#pragma omp parallel for simd schedule(static) if (par)
                for (std::int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i] * vb2.data[i];
            }
            if (needs(b)) {
                TensorT<T>& gb = ensure_grad(b);
                const TensorT<T>& va = val(a);
#pragma omp parallel for simd schedule(static) if (par)
                for (std::int64_t i = 0; i < n; ++i) gb.data[i] += g.data[i] * va.data[i];
            }
        });
        return y;
    }

    Id scale(Id a, T s) {
        TensorT<T> out = val(a);
        const std::int64_t n = static_cast<std::int64_t>(out.data.size());
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) out.data[i] *= s;
        Id y = push(std::move(out), needs(a), nullptr);
        set_back(y, [this, y, a, s] {
            if (needs(a)) accumulate(a, node(y).grad.data.data(), s);
        });
        return y;
    }

    Id relu(Id a) {
        TensorT<T> out = val(a);
        const std::int64_t n = static_cast<std::int64_t>(out.data.size());
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i)
            out.data[i] = out.data[i] > T(0) ? out.data[i] : T(0);
        Id y = push(std::move(out), needs(a), nullptr);
        set_back(y, [this, y, a, n, par] {
            if (!needs(a)) return;
            TensorT<T>& ga = ensure_grad(a);
            const TensorT<T>& g = node(y).grad;
            const TensorT<T>& vx = val(a);
#pragma omp parallel for simd schedule(static) if (par)
            for (std::int64_t i = 0; i < n; ++i)
                if (vx.data[i] > T(0)) ga.data[i] += g.data[i];
        });
        return y;
    }

    Id gelu(Id a) {
        constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
        constexpr double kA = 0.044715;
        TensorT<T> out = val(a);
        for (T& v : out.data) {
            const double x = static_cast<double>(v);
            const double u = kC * (x + kA * x * x * x);
            v = static_cast<T>(0.5 * x * (1.0 + std::tanh(u)));
        }
        Id y = push(std::move(out), needs(a), nullptr);
        set_back(y, [this, y, a] {
            if (!needs(a)) return;
            TensorT<T>& ga = ensure_grad(a);
            const TensorT<T>& g = node(y).grad;
            const TensorT<T>& vx = val(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                const double x = static_cast<double>(vx.data[i]);
                const double u = kC * (x + kA * x * x * x);
                const double th = std::tanh(u);
                const double sech2 = 1.0 - th * th;
                const double d = 0.5 * (1.0 + th) + 0.5 * x * sech2 * kC * (1.0 + 3.0 * kA * x * x);
                ga.data[i] += g.data[i] * static_cast<T>(d);
            }
        });
        return y;
    }

    // ---- linear algebra ----

    Id matmul(Id a, Id b) {
        const TensorT<T>& va = val(a);
        const TensorT<T>& vb = val(b);
        if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0))
            shape_error("matmul", va, vb);
        const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
        TensorT<T> out({m, n});
        gemm_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b, m, k, n] {
            const TensorT<T>& g = node(y).grad;
            if (needs(a)) {
                TensorT<T>& ga = ensure_grad(a);
                gemm_nt(g.data.data(), val(b).data.data(), ga.data.data(), m, n, k);
            }
            if (needs(b)) {
                TensorT<T>& gb = ensure_grad(b);
                gemm_tn(val(a).data.data(), g.data.data(), gb.data.data(), m, k, n);
            }
        });
        return y;
    }

    Id bmm_nn(Id a, Id b) {
        const TensorT<T>& va = val(a);
        const TensorT<T>& vb = val(b);
        if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0) ||
            va.dim(2) != vb.dim(1))
            shape_error("bmm_nn", va, vb);
        const int bs = va.dim(0), m = va.dim(1), k = va.dim(2), n = vb.dim(2);
        TensorT<T> out({bs, m, n});
        nn::bmm_nn(va.data.data(), vb.data.data(), out.data.data(), bs, m, k, n);
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b, bs, m, k, n] {
            const TensorT<T>& g = node(y).grad;
            if (needs(a)) {
                TensorT<T>& ga = ensure_grad(a);
                nn::bmm_nt(g.data.data(), val(b).data.data(), ga.data.data(), bs, m, n, k);
            }
            if (needs(b)) {
                TensorT<T>& gb = ensure_grad(b);
                nn::bmm_tn(val(a).data.data(), g.data.data(), gb.data.data(), bs, m, k, n);
            }
        });
        return y;
    }

    Id bmm_nt(Id a, Id b) {
        const TensorT<T>& va = val(a);
        const TensorT<T>& vb = val(b);
        if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0) ||
            va.dim(2) != vb.dim(2))
            shape_error("bmm_nt", va, vb);
        const int bs = va.dim(0), m = va.dim(1), k = va.dim(2), n = vb.dim(1);
        TensorT<T> out({bs, m, n});
        nn::bmm_nt(va.data.data(), vb.data.data(), out.data.data(), bs, m, k, n);
        Id y = push(std::move(out), needs(a) || needs(b), nullptr);
        set_back(y, [this, y, a, b, bs, m, k, n] {
            const TensorT<T>& g = node(y).grad;
            if (needs(a)) {
                TensorT<T>& ga = ensure_grad(a);
                nn::bmm_nn(g.data.data(), val(b).data.data(), ga.data.data(), bs, m, n, k);
            }
            if (needs(b)) {
                TensorT<T>& gb = ensure_grad(b);
                nn::bmm_tn(g.data.data(), val(a).data.data(), gb.data.data(), bs, m, n, k);
            }
        });
        return y;
    }

    Id add_bias(Id x, Id bias) {
        const TensorT<T>& vx = val(x);
        const TensorT<T>& vb = val(bias);
        if (vx.ndim() != 2 || vb.ndim() != 1 || vx.dim(1) != vb.dim(0))
            shape_error("add_bias", vx, vb);
        const int m = vx.dim(0), n = vx.dim(1);
        TensorT<T> out = vx;
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int i = 0; i < m; ++i) {
            T* row = out.data.data() + static_cast<std::size_t>(i) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) row[j] += vb.data[static_cast<std::size_t>(j)];
        }
        Id y = push(std::move(out), needs(x) || needs(bias), nullptr);
        set_back(y, [this, y, x, bias, m, n] {
            const TensorT<T>& g = node(y).grad;
            if (needs(x)) accumulate(x, g.data.data(), T(1));
            if (needs(bias)) {
                TensorT<T>& gb = ensure_grad(bias);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gb.data[static_cast<std::size_t>(j)] +=
                            g.data[static_cast<std::size_t>(i) * n + j];
            }
        });
        return y;
    }

    Id layernorm(Id x, Id gamma, Id beta, T eps = T(1e-5)) {
        const TensorT<T>& vx = val(x);
        const TensorT<T>& vg = val(gamma);
        const TensorT<T>& vb = val(beta);
        if (vx.ndim() != 2 || vg.ndim() != 1 || vx.dim(1) != vg.dim(0))
            shape_error("layernorm", vx, vg);
        if (vb.shape != vg.shape) shape_error("layernorm", vg, vb);
        const int m = vx.dim(0), n = vx.dim(1);
        auto xhat = std::make_shared<std::vector<T>>(vx.data.size());
        auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(m));
        TensorT<T> out({m, n});
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int i = 0; i < m; ++i) {
            const T* row = vx.data.data() + static_cast<std::size_t>(i) * n;
            T mean{};
            for (int j = 0; j < n; ++j) mean += row[j];
            mean /= T(n);
            T var{};
            for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= T(n);
            const T istd = T(1) / std::sqrt(var + eps);
            (*inv_std)[static_cast<std::size_t>(i)] = istd;
            for (int j = 0; j < n; ++j) {
                const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                const T xh = (row[j] - mean) * istd;
                (*xhat)[idx] = xh;
                out.data[idx] = xh * vg.data[static_cast<std::size_t>(j)] +
                                vb.data[static_cast<std::size_t>(j)];
            }
        }
        Id y = push(std::move(out), needs(x) || needs(gamma) || needs(beta), nullptr);
        set_back(y, [this, y, x, gamma, beta, m, n, xhat, inv_std] {
            const TensorT<T>& g = node(y).grad;
            const TensorT<T>& vg2 = val(gamma);
            if (needs(gamma)) {
                TensorT<T>& gg = ensure_grad(gamma);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                        gg.data[static_cast<std::size_t>(j)] += g.data[idx] * (*xhat)[idx];
                    }
            }
            if (needs(beta)) {
                TensorT<T>& gb = ensure_grad(beta);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gb.data[static_cast<std::size_t>(j)] +=
                            g.data[static_cast<std::size_t>(i) * n + j];
            }
            if (needs(x)) {
                TensorT<T>& gx = ensure_grad(x);
                const bool parx = gx.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (parx)
                for (int i = 0; i < m; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * n;
                    T mean_dxhat{};
                    T mean_dxhat_xhat{};
                    for (int j = 0; j < n; ++j) {
                        const T dxh = g.data[base + j] * vg2.data[static_cast<std::size_t>(j)];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * (*xhat)[base + j];
                    }
                    mean_dxhat /= T(n);
                    mean_dxhat_xhat /= T(n);
                    const T istd = (*inv_std)[static_cast<std::size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                        const T dxh = g.data[base + j] * vg2.data[static_cast<std::size_t>(j)];
                        gx.data[base + j] +=
                            istd * (dxh - mean_dxhat - (*xhat)[base + j] * mean_dxhat_xhat);
                    }
                }
            }
        });
        return y;
    }

    // scores [B,S,S]; entries with column > row are masked to -inf before the
    // rowwise softmax
    Id softmax_causal(Id scores) {
        const TensorT<T>& vs = val(scores);
        if (vs.ndim() != 3 || vs.dim(1) != vs.dim(2)) shape_error("softmax_causal", vs, vs);
        const int bs = vs.dim(0), s = vs.dim(1);
        TensorT<T> out({bs, s, s});
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int b = 0; b < bs; ++b) {
            for (int i = 0; i < s; ++i) {
                const std::size_t base =
                    (static_cast<std::size_t>(b) * s + static_cast<std::size_t>(i)) * s;
                T mx = vs.data[base];
                for (int j = 1; j <= i; ++j) mx = std::max(mx, vs.data[base + j]);
                T denom{};
                for (int j = 0; j <= i; ++j) {
                    const T e = std::exp(vs.data[base + j] - mx);
                    out.data[base + j] = e;
                    denom += e;
                }
                for (int j = 0; j <= i; ++j) out.data[base + j] /= denom;
                // columns beyond the diagonal stay exactly zero
            }
        }
        Id y = push(std::move(out), needs(scores), nullptr);
        set_back(y, [this, y, scores, bs, s] {
            if (!needs(scores)) return;
            TensorT<T>& gs = ensure_grad(scores);
            const TensorT<T>& g = node(y).grad;
            const TensorT<T>& vy = node(y).value;
            const bool par = gs.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
            for (int b = 0; b < bs; ++b) {
                for (int i = 0; i < s; ++i) {
                    const std::size_t base =
                        (static_cast<std::size_t>(b) * s + static_cast<std::size_t>(i)) * s;
                    T inner{};
                    for (int j = 0; j <= i; ++j) inner += g.data[base + j] * vy.data[base + j];
                    for (int j = 0; j <= i; ++j)
                        gs.data[base + j] += vy.data[base + j] * (g.data[base + j] - inner);
                }
            }
        });
        return y;
    }

    // x [B,H,W,C], weight [kh*kw*C, Cout], bias [Cout]
    Id conv2d(Id x, Id weight, Id bias, int kh, int kw, int stride) {
        const TensorT<T>& vx = val(x);
        const TensorT<T>& vw = val(weight);
        const TensorT<T>& vb = val(bias);
        if (vx.ndim() != 4 || vw.ndim() != 2 || vw.dim(0) != kh * kw * vx.dim(3))
            shape_error("conv2d", vx, vw);
        if (vb.ndim() != 1 || vb.dim(0) != vw.dim(1)) shape_error("conv2d", vw, vb);
        const int bs = vx.dim(0), h = vx.dim(1), w = vx.dim(2), c = vx.dim(3);
        const int cout = vw.dim(1);
        const int oh = conv_out_dim(h, kh, stride);
        const int ow = conv_out_dim(w, kw, stride);
        if (oh <= 0 || ow <= 0) shape_error("conv2d", vx, vw);
        const int rows = bs * oh * ow;
        const int patch = kh * kw * c;
        TensorT<T> col({rows, patch});
        im2col(vx.data.data(), col.data.data(), bs, h, w, c, kh, kw, stride);
        TensorT<T> out({bs, oh, ow, cout});
        const bool par = static_cast<std::size_t>(rows) * cout >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int r = 0; r < rows; ++r)
            for (int co = 0; co < cout; ++co)
                out.data[static_cast<std::size_t>(r) * cout + co] =
                    vb.data[static_cast<std::size_t>(co)];
        gemm_nn(col.data.data(), vw.data.data(), out.data.data(), rows, patch, cout);
        Id y = push(std::move(out), needs(x) || needs(weight) || needs(bias), nullptr);
        set_back(y, [this, y, x, weight, bias, bs, h, w, c, cout, kh, kw, stride, rows, patch] {
            const TensorT<T>& g = node(y).grad;
            // recompute the patch matrix rather than keeping it alive
            TensorT<T> col2({rows, patch});
            im2col(val(x).data.data(), col2.data.data(), bs, h, w, c, kh, kw, stride);
            if (needs(weight)) {
                TensorT<T>& gw = ensure_grad(weight);
                gemm_tn(col2.data.data(), g.data.data(), gw.data.data(), rows, patch, cout);
            }
            if (needs(bias)) {
                TensorT<T>& gb = ensure_grad(bias);
                for (int r = 0; r < rows; ++r)
                    for (int co = 0; co < cout; ++co)
                        gb.data[static_cast<std::size_t>(co)] +=
                            g.data[static_cast<std::size_t>(r) * cout + co];
            }
            if (needs(x)) {
                TensorT<T>& gx = ensure_grad(x);
                TensorT<T> dcol({rows, patch});
                gemm_nt(g.data.data(), val(weight).data.data(), dcol.data.data(), rows, cout,
                        patch);
                col2im_add(dcol.data.data(), gx.data.data(), bs, h, w, c, kh, kw, stride);
            }
        });
        return y;
    }

    // ---- indexing / layout ----

    Id embed_rows(Id table, std::vector<int> rows) {
        const TensorT<T>& vt = val(table);
        if (vt.ndim() != 2) shape_error("embed_rows", vt, vt);
        const int n = vt.dim(0), d = vt.dim(1);
        for (int r : rows)
            if (r < 0 || r >= n) throw RuntimeFailure("embed_rows: index out of range");
        TensorT<T> out({static_cast<int>(rows.size()), d});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(vt.data.data() + static_cast<std::size_t>(rows[i]) * d, d,
                        out.data.data() + i * d);
        Id y = push(std::move(out), needs(table), nullptr);
        set_back(y, [this, y, table, rows = std::move(rows), d] {
            if (!needs(table)) return;
            TensorT<T>& gt = ensure_grad(table);
            const TensorT<T>& g = node(y).grad;
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (int j = 0; j < d; ++j)
                    gt.data[static_cast<std::size_t>(rows[i]) * d + j] += g.data[i * d + j];
        });
        return y;
    }

    Id gather_rows(Id x, std::vector<int> rows) {
        const TensorT<T>& vx = val(x);
        if (vx.ndim() != 2) shape_error("gather_rows", vx, vx);
        const int n = vx.dim(1);
        TensorT<T> out({static_cast<int>(rows.size()), n});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] < 0 || rows[i] >= vx.dim(0))
                throw RuntimeFailure("gather_rows: index out of range");
            std::copy_n(vx.data.data() + static_cast<std::size_t>(rows[i]) * n, n,
                        out.data.data() + i * n);
        }
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x, rows = std::move(rows), n] {
            if (!needs(x)) return;
            TensorT<T>& gx = ensure_grad(x);
            const TensorT<T>& g = node(y).grad;
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (int j = 0; j < n; ++j)
                    gx.data[static_cast<std::size_t>(rows[i]) * n + j] += g.data[i * n + j];
        });
        return y;
    }

    Id concat_cols(const std::vector<Id>& xs) {
        if (xs.empty()) throw RuntimeFailure("concat_cols: empty input list");
        const int m = val(xs[0]).dim(0);
        int total = 0;
        bool any = false;
        for (Id x : xs) {
            const TensorT<T>& v = val(x);
            if (v.ndim() != 2 || v.dim(0) != m) shape_error("concat_cols", val(xs[0]), v);
            total += v.dim(1);
            any = any || needs(x);
        }
        TensorT<T> out({m, total});
        int off = 0;
        for (Id x : xs) {
            const TensorT<T>& v = val(x);
            const int n = v.dim(1);
            for (int i = 0; i < m; ++i)
                std::copy_n(v.data.data() + static_cast<std::size_t>(i) * n, n,
                            out.data.data() + static_cast<std::size_t>(i) * total + off);
            off += n;
        }
        Id y = push(std::move(out), any, nullptr);
        set_back(y, [this, y, xs, m, total] {
            const TensorT<T>& g = node(y).grad;
            int off2 = 0;
            for (Id x : xs) {
                const int n = val(x).dim(1);
                if (needs(x)) {
                    TensorT<T>& gx = ensure_grad(x);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            gx.data[static_cast<std::size_t>(i) * n + j] +=
                                g.data[static_cast<std::size_t>(i) * total + off2 + j];
                }
                off2 += n;
            }
        });
        return y;
    }

    // round-robin rows of k same-shaped matrices: out row i*k+j = xs[j] row i
    Id interleave_rows(const std::vector<Id>& xs) {
        if (xs.empty()) throw RuntimeFailure("interleave_rows: empty input list");
        const TensorT<T>& v0 = val(xs[0]);
        const int m = v0.dim(0), n = v0.dim(1);
        const int k = static_cast<int>(xs.size());
        bool any = false;
        for (Id x : xs) {
            if (val(x).shape != v0.shape) shape_error("interleave_rows", v0, val(x));
            any = any || needs(x);
        }
        TensorT<T> out({m * k, n});
        const bool par = out.data.size() >= kParElem;
        for (int j = 0; j < k; ++j) {
            const TensorT<T>& v = val(xs[static_cast<std::size_t>(j)]);
#pragma omp parallel for schedule(static) if (par)
            for (int i = 0; i < m; ++i)
                std::copy_n(v.data.data() + static_cast<std::size_t>(i) * n, n,
                            out.data.data() + (static_cast<std::size_t>(i) * k + j) * n);
        }
        Id y = push(std::move(out), any, nullptr);
        set_back(y, [this, y, xs, m, n, k] {
            const TensorT<T>& g = node(y).grad;
            for (int j = 0; j < k; ++j) {
                const Id x = xs[static_cast<std::size_t>(j)];
                if (!needs(x)) continue;
                TensorT<T>& gx = ensure_grad(x);
                for (int i = 0; i < m; ++i)
                    for (int c = 0; c < n; ++c)
                        gx.data[static_cast<std::size_t>(i) * n + c] +=
                            g.data[(static_cast<std::size_t>(i) * k + j) * n + c];
            }
        });
        return y;
    }

    // [batch*seq, dim] -> [batch*heads, seq, dim/heads]
    Id split_heads(Id x, int batch, int seq, int heads) {
        const TensorT<T>& vx = val(x);
        if (vx.ndim() != 2 || vx.dim(0) != batch * seq || vx.dim(1) % heads != 0)
            shape_error("split_heads", vx, vx);
        const int d = vx.dim(1);
        const int dh = d / heads;
        TensorT<T> out({batch * heads, seq, dh});
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int b = 0; b < batch; ++b)
            for (int s = 0; s < seq; ++s)
                for (int hh = 0; hh < heads; ++hh)
                    std::copy_n(
                        vx.data.data() + (static_cast<std::size_t>(b) * seq + s) * d + hh * dh, dh,
                        out.data.data() +
                            ((static_cast<std::size_t>(b) * heads + hh) * seq + s) * dh);
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x, batch, seq, heads, d, dh] {
            if (!needs(x)) return;
            TensorT<T>& gx = ensure_grad(x);
            const TensorT<T>& g = node(y).grad;
            for (int b = 0; b < batch; ++b)
                for (int s = 0; s < seq; ++s)
                    for (int hh = 0; hh < heads; ++hh)
                        for (int j = 0; j < dh; ++j)
                            gx.data[(static_cast<std::size_t>(b) * seq + s) * d + hh * dh + j] +=
                                g.data[((static_cast<std::size_t>(b) * heads + hh) * seq + s) * dh +
                                       j];
        });
        return y;
    }

    // inverse of split_heads
    Id merge_heads(Id x, int batch, int seq, int heads) {
        const TensorT<T>& vx = val(x);
        if (vx.ndim() != 3 || vx.dim(0) != batch * heads || vx.dim(1) != seq)
            shape_error("merge_heads", vx, vx);
        const int dh = vx.dim(2);
        const int d = dh * heads;
        TensorT<T> out({batch * seq, d});
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for schedule(static) if (par)
        for (int b = 0; b < batch; ++b)
            for (int s = 0; s < seq; ++s)
                for (int hh = 0; hh < heads; ++hh)
                    std::copy_n(vx.data.data() +
                                    ((static_cast<std::size_t>(b) * heads + hh) * seq + s) * dh,
                                dh,
                                out.data.data() + (static_cast<std::size_t>(b) * seq + s) * d +
                                    hh * dh);
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x, batch, seq, heads, d, dh] {
            if (!needs(x)) return;
            TensorT<T>& gx = ensure_grad(x);
            const TensorT<T>& g = node(y).grad;
            for (int b = 0; b < batch; ++b)
                for (int s = 0; s < seq; ++s)
                    for (int hh = 0; hh < heads; ++hh)
                        for (int j = 0; j < dh; ++j)
                            gx.data[((static_cast<std::size_t>(b) * heads + hh) * seq + s) * dh +
                                    j] +=
                                g.data[(static_cast<std::size_t>(b) * seq + s) * d + hh * dh + j];
        });
        return y;
    }

    Id reshape(Id x, std::vector<int> shape) {
        const TensorT<T>& vx = val(x);
        if (TensorT<T>::numel_of(shape) != vx.numel()) shape_error("reshape", vx, vx);
        TensorT<T> out(shape, vx.data);
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x] {
            if (needs(x)) accumulate(x, node(y).grad.data.data(), T(1));
        });
        return y;
    }

    // inverted dropout; identity when not training or p == 0
    Id dropout(Id x, double p, Rng& rng, bool training) {
        if (!training || p <= 0.0) return x;
        const TensorT<T>& vx = val(x);
        auto mask = std::make_shared<std::vector<T>>(vx.data.size());
        const T scale_keep = static_cast<T>(1.0 / (1.0 - p));
        for (std::size_t i = 0; i < mask->size(); ++i)
            (*mask)[i] = rng.uniform() >= p ? scale_keep : T(0);
        TensorT<T> out = vx;
        const std::int64_t n = static_cast<std::int64_t>(out.data.size());
        const bool par = out.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) out.data[i] *= (*mask)[i];
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x, mask, n, par] {
            if (!needs(x)) return;
            TensorT<T>& gx = ensure_grad(x);
            const TensorT<T>& g = node(y).grad;
#pragma omp parallel for simd schedule(static) if (par)
            for (std::int64_t i = 0; i < n; ++i) gx.data[i] += g.data[i] * (*mask)[i];
        });
        return y;
    }

    // ---- reductions ----

    Id sum(Id x) {
        const TensorT<T>& vx = val(x);
        T s{};
        for (T v : vx.data) s += v;
        TensorT<T> out({1});
        out.data[0] = s;
        Id y = push(std::move(out), needs(x), nullptr);
        set_back(y, [this, y, x] {
            if (!needs(x)) return;
            TensorT<T>& gx = ensure_grad(x);
            const T g = node(y).grad.data[0];
            for (T& v : gx.data) v += g;
        });
        return y;
    }

    Id sq_err_sum(Id pred, Id target) {
        check_same("sq_err_sum", pred, target);
        const TensorT<T>& vp = val(pred);
        const TensorT<T>& vt = val(target);
        T s{};
        for (std::size_t i = 0; i < vp.data.size(); ++i) {
            const T d = vp.data[i] - vt.data[i];
            s += d * d;
        }
        TensorT<T> out({1});
        out.data[0] = s;
        Id y = push(std::move(out), needs(pred) || needs(target), nullptr);
        set_back(y, [this, y, pred, target] {
            const T g = node(y).grad.data[0];
            const TensorT<T>& vp2 = val(pred);
            const TensorT<T>& vt2 = val(target);
            if (needs(pred)) {
                TensorT<T>& gp = ensure_grad(pred);
                for (std::size_t i = 0; i < vp2.data.size(); ++i)
                    gp.data[i] += T(2) * (vp2.data[i] - vt2.data[i]) * g;
            }
            if (needs(target)) {
                TensorT<T>& gt = ensure_grad(target);
                for (std::size_t i = 0; i < vp2.data.size(); ++i)
                    gt.data[i] -= T(2) * (vp2.data[i] - vt2.data[i]) * g;
            }
        });
        return y;
    }

    Id mse(Id pred, Id target) {
        Id sse = sq_err_sum(pred, target);
        return scale(sse, T(1) / static_cast<T>(val(pred).numel()));
    }

    // ---- backward ----

    void backward(Id loss) {
        if (!grad_enabled_) throw RuntimeFailure("backward: tape recorded without gradients");
        if (val(loss).numel() != 1)
            throw RuntimeFailure("backward: loss must be a scalar, got shape " +
                                 TensorT<T>::shape_str(val(loss).shape));
        TensorT<T>& g = ensure_grad(loss);
        g.data[0] = T(1);
        for (Id i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && !n.grad.empty()) n.back();
        }
    }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        bool needs_grad = false;
        std::function<void()> back;
    };

    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    bool needs(Id id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    TensorT<T>& ensure_grad(Id id) {
        Node& n = node(id);
        if (n.grad.empty()) n.grad = TensorT<T>(n.value.shape);
        return n.grad;
    }

    void accumulate(Id id, const T* src, T factor) {
        TensorT<T>& g = ensure_grad(id);
        const std::int64_t n = static_cast<std::int64_t>(g.data.size());
        const bool par = g.data.size() >= kParElem;
#pragma omp parallel for simd schedule(static) if (par)
        for (std::int64_t i = 0; i < n; ++i) g.data[i] += factor * src[i];
    }

    Id push(TensorT<T> v, bool needs_grad, std::function<void()> back) {
        nodes_.push_back(Node{std::move(v), {}, needs_grad && grad_enabled_, std::move(back)});
        return static_cast<Id>(nodes_.size()) - 1;
    }

    void set_back(Id id, std::function<void()> fn) {
        Node& n = node(id);
        if (grad_enabled_ && n.needs_grad) n.back = std::move(fn);
    }

    void check_same(const char* op, Id a, Id b) const {
        if (val(a).shape != val(b).shape) shape_error(op, val(a), val(b));
    }

    [[noreturn]] static void shape_error(const char* op, const TensorT<T>& a,
                                         const TensorT<T>& b) {
        throw RuntimeFailure(std::string(op) + ": incompatible shapes " +
                             TensorT<T>::shape_str(a.shape) + " and " +
                             TensorT<T>::shape_str(b.shape));
    }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace ctnav::nn
