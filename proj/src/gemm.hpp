#pragma once

#include <cstddef>

// Row-major single-precision matrix products used by the convolution and
// dense kernels. Rows of C are distributed over workers; each element keeps a
// fixed accumulation order.
namespace prunekit::detail {

// C(MxN) (+)= A(MxK) * B(KxN)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);
// C(MxN) (+)= A(MxK) * B(NxK)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);
// C(MxN) (+)= A(KxM)^T * B(KxN)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

}  // namespace prunekit::detail
