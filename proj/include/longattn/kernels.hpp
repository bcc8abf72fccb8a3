#pragma once

#include <cstddef>
#include <cstdint>

namespace longattn::kernels {

enum class Backend { Serial, OpenMP };

/// Process-wide kernel backend. Both backends produce bit-identical results:
/// the OpenMP path only distributes independent output rows (or heads).
void set_backend(Backend backend);
Backend backend();
/// Thread count the OpenMP backend will use (1 when built without OpenMP).
int max_threads();
void set_num_threads(int n);

/// Row-major GEMM variants; C is m x n and is overwritten unless `accumulate`.
///   nn: C = A[m,k]   * B[k,n]
///   nt: C = A[m,k]   * B[n,k]^T
///   tn: C = A[k,m]^T * B[k,n]
namespace serial {
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
}  // namespace serial

namespace parallel {
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
}  // namespace parallel

// Dispatch on backend().
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// Multiply-accumulates issued through the dispatching GEMMs on this thread.
std::uint64_t gemm_mac_count();
void reset_gemm_mac_count();

}  // namespace longattn::kernels
