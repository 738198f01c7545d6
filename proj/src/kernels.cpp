#include "sphynx/kernels.hpp"

namespace sphynx::kernels {

namespace {
Exec g_mode =
#ifdef _OPENMP
    Exec::parallel;
#else
    Exec::serial;
#endif

inline uint64_t mod_mul(uint64_t a, uint64_t b, uint64_t p) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % p);
}

inline double dot(const double* a, const double* b, int k, int ldb) {
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += a[i] * b[static_cast<size_t>(i) * ldb];
  return acc;
}
}  // namespace

Exec exec_mode() { return g_mode; }
void set_exec_mode(Exec m) { g_mode = m; }

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = dot(a + static_cast<size_t>(i) * k, b + j, k, n);
}

void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = dot(a + static_cast<size_t>(i) * k, b + j, k, n);
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (g_mode == Exec::parallel)
    matmul_parallel(a, b, c, m, k, n);
  else
    matmul_serial(a, b, c, m, k, n);
}

void matmul_acc_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] += dot(a + static_cast<size_t>(i) * k, b + j, k, n);
}

void matmul_acc_parallel(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] += dot(a + static_cast<size_t>(i) * k, b + j, k, n);
}

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  if (g_mode == Exec::parallel)
    matmul_acc_parallel(a, b, c, m, k, n);
  else
    matmul_acc_serial(a, b, c, m, k, n);
}

void mod_matvec_serial(const uint64_t* w, const uint64_t* x, uint64_t* out,
                       int rows, int cols, uint64_t p) {
  for (int r = 0; r < rows; ++r) {
    uint64_t acc = 0;
    const uint64_t* row = w + static_cast<size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) {
      acc = (acc + mod_mul(row[j], x[j], p)) % p;
    }
    out[r] = acc;
  }
}

void mod_matvec_parallel(const uint64_t* w, const uint64_t* x, uint64_t* out,
                         int rows, int cols, uint64_t p) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    uint64_t acc = 0;
    const uint64_t* row = w + static_cast<size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) {
      acc = (acc + mod_mul(row[j], x[j], p)) % p;
    }
    out[r] = acc;
  }
}

void mod_matvec(const uint64_t* w, const uint64_t* x, uint64_t* out,
                int rows, int cols, uint64_t p) {
  if (g_mode == Exec::parallel)
    mod_matvec_parallel(w, x, out, rows, cols, p);
  else
    mod_matvec_serial(w, x, out, rows, cols, p);
}

}  // namespace sphynx::kernels
