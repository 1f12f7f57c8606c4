#include "gemm.hpp"

#include <algorithm>

#include "prunekit/parallel.hpp"

namespace prunekit::detail {
namespace {

// Rows below this many multiply-adds run on the calling thread.
constexpr std::size_t kParallelWork = 1 << 15;

template <typename Fn>
void for_rows(std::size_t m, std::size_t work_per_row, Fn&& fn) {
  if (m * work_per_row < kParallelWork) {
    fn(0, m);
  } else {
    parallel_for(m, fn);
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[i + l] * y[i + l];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += x[i] * y[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
         tail;
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  for_rows(m, n * k, [&](std::size_t r0, std::size_t r1) {
    std::size_t i = r0;
    for (; i + 4 <= r1; i += 4) {
      float* c0 = c + i * n;
      float* c1 = c0 + n;
      float* c2 = c1 + n;
      float* c3 = c2 + n;
      if (!accumulate) std::fill(c0, c0 + 4 * n, 0.0f);
      const float* a0 = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const float v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
        if (v0 == 0.0f && v1 == 0.0f && v2 == 0.0f && v3 == 0.0f) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const float bv = brow[j];
          c0[j] += v0 * bv;
          c1[j] += v1 * bv;
          c2[j] += v2 * bv;
          c3[j] += v3 * bv;
        }
      }
    }
    for (; i < r1; ++i) {
      float* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, 0.0f);
      const float* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = arow[p];
        if (av == 0.0f) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  for_rows(m, n * k, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      float* crow = c + i * n;
      const float* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const float v = dot(arow, b + j * k, k);
        crow[j] = accumulate ? crow[j] + v : v;
      }
    }
  });
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  for_rows(m, n * k, [&](std::size_t r0, std::size_t r1) {
    std::size_t i = r0;
    for (; i + 4 <= r1; i += 4) {
      float* c0 = c + i * n;
      float* c1 = c0 + n;
      float* c2 = c1 + n;
      float* c3 = c2 + n;
      if (!accumulate) std::fill(c0, c0 + 4 * n, 0.0f);
      for (std::size_t p = 0; p < k; ++p) {
        const float* ap = a + p * m + i;
        const float v0 = ap[0], v1 = ap[1], v2 = ap[2], v3 = ap[3];
        if (v0 == 0.0f && v1 == 0.0f && v2 == 0.0f && v3 == 0.0f) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const float bv = brow[j];
          c0[j] += v0 * bv;
          c1[j] += v1 * bv;
          c2[j] += v2 * bv;
          c3[j] += v3 * bv;
        }
      }
    }
    for (; i < r1; ++i) {
      float* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, 0.0f);
      for (std::size_t p = 0; p < k; ++p) {
        const float av = a[p * m + i];
        if (av == 0.0f) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

}  // namespace prunekit::detail
