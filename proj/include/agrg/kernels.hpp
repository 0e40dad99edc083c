#pragma once

#include <cstdint>

// Hot inner loops shared by the graph engine. Each kernel has a serial
// reference implementation and an OpenMP variant; the dispatching entry
// points pick the parallel one when it is enabled and the problem is big
// enough to pay for the fork. Both variants assign each output element to
// exactly one thread with a fixed accumulation order, so results are
// bitwise identical regardless of thread count.

namespace agrg::kern {

// Global switch (on by default when compiled with OpenMP).
bool& parallel_enabled();

// Cap worker threads; 0 leaves the OpenMP default untouched.
void set_threads(int n);
int max_threads();

// C[m x n] = A[m x k] * B[k x n]
void matmul_serial(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_omp(const double* A, const double* B, double* C, int m, int k, int n);
void matmul(const double* A, const double* B, double* C, int m, int k, int n);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_bt_serial(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_bt_omp(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_bt(const double* A, const double* B, double* C, int m, int k, int n);

// C[m x n] += A[k x m]^T * B[k x n]   (accumulating; used for weight grads)
void matmul_at_acc_serial(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_at_acc_omp(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_at_acc(const double* A, const double* B, double* C, int m, int k, int n);

// C[m x n] += A[m x k] * B[k x n]   (accumulating)
void matmul_acc_serial(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_acc_omp(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_acc(const double* A, const double* B, double* C, int m, int k, int n);

// C[m x n] += A[m x k] * B[n x k]^T   (accumulating)
void matmul_bt_acc_serial(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_bt_acc_omp(const double* A, const double* B, double* C, int m, int k, int n);
void matmul_bt_acc(const double* A, const double* B, double* C, int m, int k, int n);

}  // namespace agrg::kern
