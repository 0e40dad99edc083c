#include "agrg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace agrg::kern {

bool& parallel_enabled() {
#ifdef _OPENMP
    static bool enabled = true;
#else
    static bool enabled = false;
#endif
    return enabled;
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}


// Fixed 4-lane accumulation order: deterministic and vectorizable without
// float reassociation by the compiler.
static inline double dot4(const double* a, const double* b, int k) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    int p = 0;
    for (; p + 4 <= k; p += 4) {
        a0 += a[p] * b[p];
        a1 += a[p + 1] * b[p + 1];
        a2 += a[p + 2] * b[p + 2];
        a3 += a[p + 3] * b[p + 3];
    }
    for (; p < k; ++p) a0 += a[p] * b[p];
    return ((a0 + a1) + (a2 + a3));
}

// Below the cutoff the fork/join overhead costs more than the loop body.
static inline bool use_parallel(int64_t work) {
    return parallel_enabled() && work >= (int64_t)1 << 15;
}

// ---------------------------------------------------------------------------
// C = A * B, ikj order: the j loop runs over contiguous memory in B and C.
// Accumulation over k is sequential per output element in every variant.

void matmul_serial(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = A + (int64_t)i * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_omp(const double* A, const double* B, double* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = A + (int64_t)i * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul(const double* A, const double* B, double* C, int m, int k, int n) {
    if (use_parallel((int64_t)m * k * n))
        matmul_omp(A, B, C, m, k, n);
    else
        matmul_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------------------
// C = A * B^T: row i of A dotted with row j of B, both contiguous.

void matmul_bt_serial(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = A + (int64_t)i * k;
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] = dot4(ai, B + (int64_t)j * k, k);
    }
}

void matmul_bt_omp(const double* A, const double* B, double* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = A + (int64_t)i * k;
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] = dot4(ai, B + (int64_t)j * k, k);
    }
}

void matmul_bt(const double* A, const double* B, double* C, int m, int k, int n) {
    if (use_parallel((int64_t)m * k * n))
        matmul_bt_omp(A, B, C, m, k, n);
    else
        matmul_bt_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------------------
// C += A^T * B with A stored k x m: C[i][j] += sum_p A[p][i] * B[p][j].
// Parallel over output rows i; p accumulation stays sequential.

void matmul_at_acc_serial(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        for (int p = 0; p < k; ++p) {
            double a = A[(int64_t)p * m + i];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_at_acc_omp(const double* A, const double* B, double* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        for (int p = 0; p < k; ++p) {
            double a = A[(int64_t)p * m + i];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_at_acc(const double* A, const double* B, double* C, int m, int k, int n) {
    if (use_parallel((int64_t)m * k * n))
        matmul_at_acc_omp(A, B, C, m, k, n);
    else
        matmul_at_acc_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------------------

void matmul_acc_serial(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        const double* ai = A + (int64_t)i * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_acc_omp(const double* A, const double* B, double* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = C + (int64_t)i * n;
        const double* ai = A + (int64_t)i * k;
        for (int p = 0; p < k; ++p) {
            double a = ai[p];
            const double* bp = B + (int64_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
        }
    }
}

void matmul_acc(const double* A, const double* B, double* C, int m, int k, int n) {
    if (use_parallel((int64_t)m * k * n))
        matmul_acc_omp(A, B, C, m, k, n);
    else
        matmul_acc_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------------------

void matmul_bt_acc_serial(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = A + (int64_t)i * k;
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] += dot4(ai, B + (int64_t)j * k, k);
    }
}

void matmul_bt_acc_omp(const double* A, const double* B, double* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = A + (int64_t)i * k;
        double* ci = C + (int64_t)i * n;
        for (int j = 0; j < n; ++j) ci[j] += dot4(ai, B + (int64_t)j * k, k);
    }
}

void matmul_bt_acc(const double* A, const double* B, double* C, int m, int k, int n) {
    if (use_parallel((int64_t)m * k * n))
        matmul_bt_acc_omp(A, B, C, m, k, n);
    else
        matmul_bt_acc_serial(A, B, C, m, k, n);
}

}  // namespace agrg::kern
