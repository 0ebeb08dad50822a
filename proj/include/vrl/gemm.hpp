#pragma once

#include <cstdint>

namespace vrl {

// Row-major accumulating matrix kernels. All single-threaded; parallelism in
// this project happens at the worker level, never inside an op.

// C (MxN) += A (MxK) * B (KxN)
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C);

// C (MxN) += A (MxK) * B (NxK)^T
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C);

// C (MxN) += A (KxM)^T * B (KxN)
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C);

}  // namespace vrl
