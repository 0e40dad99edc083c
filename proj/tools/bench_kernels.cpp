// Timing comparison of the serial reference kernels against their OpenMP
// variants, plus a parity check so a broken pragma can't go unnoticed.

#include <chrono>
#include <cstdio>
#include <vector>

#include "agrg/kernels.hpp"
#include "agrg/rng.hpp"

using namespace agrg;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, void (*fn)(const double*, const double*, double*, int, int, int),
               const double* a, const double* b, double* c, int m, int k, int n) {
    fn(a, b, c, m, k, n);  // warm up
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn(a, b, c, m, k, n);
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    std::printf("threads available: %d\n", kern::max_threads());
    std::printf("%-22s %10s %12s %12s %9s\n", "kernel", "size", "serial ms", "omp ms", "speedup");

    struct Case {
        const char* name;
        void (*serial)(const double*, const double*, double*, int, int, int);
        void (*omp)(const double*, const double*, double*, int, int, int);
    };
    const Case cases[] = {
        {"matmul", kern::matmul_serial, kern::matmul_omp},
        {"matmul_bt", kern::matmul_bt_serial, kern::matmul_bt_omp},
        {"matmul_at_acc", kern::matmul_at_acc_serial, kern::matmul_at_acc_omp},
    };

    for (int dim : {64, 128, 256, 512}) {
        SplitMix64 rng(dim);
        std::vector<double> a((size_t)dim * dim), b((size_t)dim * dim);
        std::vector<double> c0((size_t)dim * dim), c1((size_t)dim * dim);
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        for (double& v : b) v = rng.uniform(-1.0, 1.0);
        int reps = dim <= 128 ? 50 : 8;

        for (const Case& k : cases) {
            std::fill(c0.begin(), c0.end(), 0.0);
            std::fill(c1.begin(), c1.end(), 0.0);
            double ts = time_ms(reps, k.serial, a.data(), b.data(), c0.data(), dim, dim, dim);
            double tp = time_ms(reps, k.omp, a.data(), b.data(), c1.data(), dim, dim, dim);
            if (c0 != c1) {
                std::fprintf(stderr, "FATAL: %s omp variant diverged from serial at dim %d\n", k.name, dim);
                return 1;
            }
            std::printf("%-22s %6dx%-4d %12.3f %12.3f %8.2fx\n", k.name, dim, dim, ts, tp, ts / tp);
        }
    }
    return 0;
}
