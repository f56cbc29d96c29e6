#pragma once

#include <cblas.h>

namespace madf::blas {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// M, N, K refer to the dimensions after transposition. Leading
// dimensions are those of the stored (untransposed) matrices.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

// BLAS worker threads stay at 1; batch-level parallelism is handled by
// madf::parallel_for with deterministic partitioning.
void pin_single_threaded();

}  // namespace madf::blas
