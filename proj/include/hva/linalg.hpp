#pragma once

#include <Eigen/Core>

#include "hva/tensor.hpp"

namespace hva {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// All matrices are dense row-major buffers. Eigen supplies the GEMM kernel;
// everything above this header is library-agnostic.

// C(M,N) = A(M,K) * B(K,N), accumulate adds into C instead of overwriting.
template <typename Real>
void matmul_nn(Real* C, const Real* A, const Real* B, std::int64_t M, std::int64_t K, std::int64_t N,
               bool accumulate = false) {
    Eigen::Map<RowMat<Real>> c(C, M, N);
    Eigen::Map<const RowMat<Real>> a(A, M, K);
    Eigen::Map<const RowMat<Real>> b(B, K, N);
    if (accumulate)
        c.noalias() += a * b;
    else
        c.noalias() = a * b;
}

// C(M,N) = A(M,K) * B^T, with B stored as (N,K).
template <typename Real>
void matmul_nt(Real* C, const Real* A, const Real* B, std::int64_t M, std::int64_t K, std::int64_t N,
               bool accumulate = false) {
    Eigen::Map<RowMat<Real>> c(C, M, N);
    Eigen::Map<const RowMat<Real>> a(A, M, K);
    Eigen::Map<const RowMat<Real>> b(B, N, K);
    if (accumulate)
        c.noalias() += a * b.transpose();
    else
        c.noalias() = a * b.transpose();
}

// C(M,N) = A^T * B, with A stored as (K,M) and B as (K,N).
template <typename Real>
void matmul_tn(Real* C, const Real* A, const Real* B, std::int64_t M, std::int64_t K, std::int64_t N,
               bool accumulate = false) {
    Eigen::Map<RowMat<Real>> c(C, M, N);
    Eigen::Map<const RowMat<Real>> a(A, K, M);
    Eigen::Map<const RowMat<Real>> b(B, K, N);
    if (accumulate)
        c.noalias() += a.transpose() * b;
    else
        c.noalias() = a.transpose() * b;
}

// Orthonormal rows via modified Gram-Schmidt on a Gaussian draw; rows <= cols.
template <typename Real>
Tensor<Real> orthogonal_rows(std::int64_t rows, std::int64_t cols, Rng& rng) {
    if (rows > cols) fail_shape("orthogonal_rows: rows ", rows, " > cols ", cols);
    Tensor<Real> m = random_normal<Real>({rows, cols}, rng);
    for (std::int64_t r = 0; r < rows; ++r) {
        Real* row = m.data() + r * cols;
        for (std::int64_t q = 0; q < r; ++q) {
            const Real* prev = m.data() + q * cols;
            Real dot = 0;
            for (std::int64_t c = 0; c < cols; ++c) dot += row[c] * prev[c];
            for (std::int64_t c = 0; c < cols; ++c) row[c] -= dot * prev[c];
        }
        Real nrm = 0;
        for (std::int64_t c = 0; c < cols; ++c) nrm += row[c] * row[c];
        nrm = std::sqrt(nrm);
        if (nrm < Real(1e-8)) {
            // degenerate draw, redo this row from fresh randomness
            for (std::int64_t c = 0; c < cols; ++c) row[c] = static_cast<Real>(rng.normal());
            --r;
            continue;
        }
        for (std::int64_t c = 0; c < cols; ++c) row[c] /= nrm;
    }
    return m;
}

}  // namespace hva
