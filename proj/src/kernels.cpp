#include "longattn/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace longattn::kernels {
namespace {

std::atomic<Backend> active_backend{Backend::Serial};

// Row kernels shared by both backends; each writes exactly one output row
// with a fixed accumulation order, which is what makes the backends agree
// bit for bit.
inline void row_nn(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t n,
                   bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double s = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
  }
}

inline void row_nt(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t n,
                   bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = accumulate ? c_row[j] + acc : acc;
  }
}

// Row i of A^T B: sum over p of A[p, i] * B[p, :].
inline void row_tn(const double* a, std::size_t i, std::size_t m, const double* b, double* c_row,
                   std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double s = a[p * m + i];
    if (s == 0.0) continue;
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += s * b_row[j];
  }
}

}  // namespace

void set_backend(Backend backend) { active_backend.store(backend); }
Backend backend() { return active_backend.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_nn(a + i * k, b, c + i * n, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_nt(a + i * k, b, c + i * n, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_tn(a, i, m, b, c + i * n, k, n, accumulate);
}

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    row_nn(a + r * k, b, c + r * n, k, n, accumulate);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    row_nt(a + r * k, b, c + r * n, k, n, accumulate);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    row_tn(a, r, m, b, c + r * n, k, n, accumulate);
  }
}

}  // namespace parallel

// Small products are not worth a parallel region.
namespace {
thread_local std::uint64_t gemm_macs = 0;
constexpr std::size_t kParallelWork = 1u << 15;
bool go_parallel(std::size_t m, std::size_t k, std::size_t n) {
  return active_backend.load(std::memory_order_relaxed) == Backend::OpenMP && m > 1 && m * k * n >= kParallelWork;
}
}  // namespace

std::uint64_t gemm_mac_count() { return gemm_macs; }
void reset_gemm_mac_count() { gemm_macs = 0; }

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  gemm_macs += static_cast<std::uint64_t>(m) * k * n;
  if (go_parallel(m, k, n)) parallel::gemm_nn(a, b, c, m, k, n, accumulate);
  else serial::gemm_nn(a, b, c, m, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  gemm_macs += static_cast<std::uint64_t>(m) * k * n;
  if (go_parallel(m, k, n)) parallel::gemm_nt(a, b, c, m, k, n, accumulate);
  else serial::gemm_nt(a, b, c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  gemm_macs += static_cast<std::uint64_t>(m) * k * n;
  if (go_parallel(m, k, n)) parallel::gemm_tn(a, b, c, m, k, n, accumulate);
  else serial::gemm_tn(a, b, c, m, k, n, accumulate);
}

}  // namespace longattn::kernels
