#include "vrl/gemm.hpp"

#include <algorithm>
#include <vector>

namespace vrl {

namespace {

// Saxpy-form kernels: four output rows accumulate per B-row read, j loop
// auto-vectorizes, and the j block keeps the C rows in L1.
constexpr int64_t kJBlock = 512;

}  // namespace

template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  if (N <= 24 && K >= 64) {
    // Narrow outputs starve the saxpy inner loop; transpose B (tiny) and use
    // the contiguous dot kernel instead.
    std::vector<T> bt(static_cast<size_t>(N * K));
    for (int64_t k = 0; k < K; ++k)
      for (int64_t j = 0; j < N; ++j) bt[static_cast<size_t>(j * K + k)] = B[k * N + j];
    gemm_nt(M, N, K, A, bt.data(), C);
    return;
  }
  for (int64_t j0 = 0; j0 < N; j0 += kJBlock) {
    const int64_t jn = std::min(kJBlock, N - j0);
    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
      T* c0 = C + (i + 0) * N + j0;
      T* c1 = C + (i + 1) * N + j0;
      T* c2 = C + (i + 2) * N + j0;
      T* c3 = C + (i + 3) * N + j0;
      for (int64_t k = 0; k < K; ++k) {
        const T a0 = A[(i + 0) * K + k];
        const T a1 = A[(i + 1) * K + k];
        const T a2 = A[(i + 2) * K + k];
        const T a3 = A[(i + 3) * K + k];
        const T* brow = B + k * N + j0;
        for (int64_t j = 0; j < jn; ++j) {
          const T b = brow[j];
          c0[j] += a0 * b;
          c1[j] += a1 * b;
          c2[j] += a2 * b;
          c3[j] += a3 * b;
        }
      }
    }
    for (; i < M; ++i) {
      T* c = C + i * N + j0;
      for (int64_t k = 0; k < K; ++k) {
        const T a = A[i * K + k];
        const T* brow = B + k * N + j0;
        for (int64_t j = 0; j < jn; ++j) c[j] += a * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  // Dot-product form, 2x2 output tiles with 16 independent accumulator lanes
  // each; lanes vectorize without float reassociation and B rows are shared
  // across the A-row pair.
  constexpr int64_t L = 16;
  int64_t i = 0;
  for (; i + 2 <= M; i += 2) {
    const T* a0 = A + (i + 0) * K;
    const T* a1 = A + (i + 1) * K;
    int64_t j = 0;
    for (; j + 2 <= N; j += 2) {
      const T* b0 = B + (j + 0) * K;
      const T* b1 = B + (j + 1) * K;
      T acc00[L] = {}, acc01[L] = {}, acc10[L] = {}, acc11[L] = {};
      int64_t k = 0;
      for (; k + L <= K; k += L) {
        for (int64_t l = 0; l < L; ++l) {
          const T av0 = a0[k + l];
          const T av1 = a1[k + l];
          const T bv0 = b0[k + l];
          const T bv1 = b1[k + l];
          acc00[l] += av0 * bv0;
          acc01[l] += av0 * bv1;
          acc10[l] += av1 * bv0;
          acc11[l] += av1 * bv1;
        }
      }
      T s00 = 0, s01 = 0, s10 = 0, s11 = 0;
      for (int64_t l = 0; l < L; ++l) {
        s00 += acc00[l];
        s01 += acc01[l];
        s10 += acc10[l];
        s11 += acc11[l];
      }
      for (; k < K; ++k) {
        s00 += a0[k] * b0[k];
        s01 += a0[k] * b1[k];
        s10 += a1[k] * b0[k];
        s11 += a1[k] * b1[k];
      }
      C[(i + 0) * N + j] += s00;
      C[(i + 0) * N + j + 1] += s01;
      C[(i + 1) * N + j] += s10;
      C[(i + 1) * N + j + 1] += s11;
    }
    for (; j < N; ++j) {
      const T* bj = B + j * K;
      T acc0[L] = {}, acc1[L] = {};
      int64_t k = 0;
      for (; k + L <= K; k += L) {
        for (int64_t l = 0; l < L; ++l) {
          acc0[l] += a0[k + l] * bj[k + l];
          acc1[l] += a1[k + l] * bj[k + l];
        }
      }
      T s0 = 0, s1 = 0;
      for (int64_t l = 0; l < L; ++l) {
        s0 += acc0[l];
        s1 += acc1[l];
      }
      for (; k < K; ++k) {
        s0 += a0[k] * bj[k];
        s1 += a1[k] * bj[k];
      }
      C[(i + 0) * N + j] += s0;
      C[(i + 1) * N + j] += s1;
    }
  }
  for (; i < M; ++i) {
    const T* ai = A + i * K;
    for (int64_t j = 0; j < N; ++j) {
      const T* bj = B + j * K;
      T acc[L] = {};
      int64_t k = 0;
      for (; k + L <= K; k += L)
        for (int64_t l = 0; l < L; ++l) acc[l] += ai[k + l] * bj[k + l];
      T s = 0;
      for (int64_t l = 0; l < L; ++l) s += acc[l];
      for (; k < K; ++k) s += ai[k] * bj[k];
      C[i * N + j] += s;
    }
  }
}

template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  if (N <= 24 && M >= 64) {
    // Narrow outputs: accumulate one output column at a time so the inner
    // loop runs contiguously over A rows.
    std::vector<T> tmp(static_cast<size_t>(M));
    for (int64_t j = 0; j < N; ++j) {
      std::fill(tmp.begin(), tmp.end(), T(0));
      for (int64_t k = 0; k < K; ++k) {
        const T bv = B[k * N + j];
        const T* arow = A + k * M;
        for (int64_t i = 0; i < M; ++i) tmp[static_cast<size_t>(i)] += arow[i] * bv;
      }
      for (int64_t i = 0; i < M; ++i) C[i * N + j] += tmp[static_cast<size_t>(i)];
    }
    return;
  }
  // C[i][j] += sum_k A[k][i] * B[k][j]; saxpy over k with 4-row i blocks.
  for (int64_t j0 = 0; j0 < N; j0 += kJBlock) {
    const int64_t jn = std::min(kJBlock, N - j0);
    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
      T* c0 = C + (i + 0) * N + j0;
      T* c1 = C + (i + 1) * N + j0;
      T* c2 = C + (i + 2) * N + j0;
      T* c3 = C + (i + 3) * N + j0;
      for (int64_t k = 0; k < K; ++k) {
        const T* arow = A + k * M + i;
        const T a0 = arow[0];
        const T a1 = arow[1];
        const T a2 = arow[2];
        const T a3 = arow[3];
        const T* brow = B + k * N + j0;
        for (int64_t j = 0; j < jn; ++j) {
          const T b = brow[j];
          c0[j] += a0 * b;
          c1[j] += a1 * b;
          c2[j] += a2 * b;
          c3[j] += a3 * b;
        }
      }
    }
    for (; i < M; ++i) {
      T* c = C + i * N + j0;
      for (int64_t k = 0; k < K; ++k) {
        const T a = A[k * M + i];
        const T* brow = B + k * N + j0;
        for (int64_t j = 0; j < jn; ++j) c[j] += a * brow[j];
      }
    }
  }
}

template void gemm_nn<float>(int64_t, int64_t, int64_t, const float*, const float*, float*);
template void gemm_nn<double>(int64_t, int64_t, int64_t, const double*, const double*, double*);
template void gemm_nt<float>(int64_t, int64_t, int64_t, const float*, const float*, float*);
template void gemm_nt<double>(int64_t, int64_t, int64_t, const double*, const double*, double*);
template void gemm_tn<float>(int64_t, int64_t, int64_t, const float*, const float*, float*);
template void gemm_tn<double>(int64_t, int64_t, int64_t, const double*, const double*, double*);

}  // namespace vrl
