// Times the OpenMP kernels against the serial reference implementations on
// the matrix shapes the training loop actually hits.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "ctnav/nn/kernels.hpp"
#include "ctnav/nn/kernels_ref.hpp"
#include "ctnav/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> random_matrix(std::size_t n, ctnav::Rng& rng) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
}

double time_once(const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

double best_of(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) best = std::min(best, time_once(fn));
    return best;
}

void bench_gemm(const char* name, int m, int k, int n) {
    ctnav::Rng rng(42);
    const std::vector<float> a = random_matrix(static_cast<std::size_t>(m) * k, rng);
    const std::vector<float> b = random_matrix(static_cast<std::size_t>(k) * n, rng);
    std::vector<float> c(static_cast<std::size_t>(m) * n, 0.0f);
    const double flops = 2.0 * m * k * n;

    const double t_ref = best_of(3, [&] {
        std::fill(c.begin(), c.end(), 0.0f);
        ctnav::nn::ref::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
    });
    const double t_omp = best_of(3, [&] {
        std::fill(c.begin(), c.end(), 0.0f);
        ctnav::nn::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
    });
    std::printf("%-22s %5dx%-4dx%-4d  serial %8.2f GFLOP/s   omp %8.2f GFLOP/s   speedup %.2fx\n",
                name, m, k, n, flops / t_ref / 1e9, flops / t_omp / 1e9, t_ref / t_omp);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    // training shapes: batch 128, K=5 windows -> 1920 token rows
    bench_gemm("gemm_nn tokens*dd", 1920, 128, 128);
    bench_gemm("gemm_nn tokens*mlp", 1920, 128, 512);
    bench_gemm("gemm_nn mlp_down", 1920, 512, 128);
    bench_gemm("gemm_nn conv_proj", 640, 800, 128);
    bench_gemm("gemm_nn small", 15, 128, 128);
    return 0;
}
