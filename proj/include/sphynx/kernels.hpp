#pragma once

#include <cstdint>
#include <vector>

namespace sphynx::kernels {

// Compute kernels used by the autodiff engine and the protocol simulator.
// Each kernel has a serial reference and an OpenMP variant parallelised over
// independent output elements; per-element arithmetic is identical, so the
// two paths produce bitwise-equal results. exec_mode() picks the default.

enum class Exec { serial, parallel };

Exec exec_mode();
void set_exec_mode(Exec m);

// c[m,n] = a[m,k] * b[k,n], row-major, c overwritten.
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// c[m,n] += a[m,k] * b[k,n]
void matmul_acc_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_acc_parallel(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);

// out[r] = sum_j w[r*cols + j] * x[j] mod p, for r in [0, rows)
void mod_matvec_serial(const uint64_t* w, const uint64_t* x, uint64_t* out,
                       int rows, int cols, uint64_t p);
void mod_matvec_parallel(const uint64_t* w, const uint64_t* x, uint64_t* out,
                         int rows, int cols, uint64_t p);
void mod_matvec(const uint64_t* w, const uint64_t* x, uint64_t* out,
                int rows, int cols, uint64_t p);

}  // namespace sphynx::kernels
