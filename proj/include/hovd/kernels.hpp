#pragma once

#include <cstddef>
#include <string>

namespace hovd::kernels {

// Elementwise double-precision kernels used by the second-order Taylor
// arithmetic. Gradients are dense length-d arrays and Hessians are packed
// upper triangles of length d*(d+1)/2, so every operation below is a flat
// array loop and a candidate for SIMD.
//
// Contract: every backend computes each output element with the exact same
// sequence of IEEE-754 operations (no fused multiply-add, no reassociation),
// so all backends are bitwise interchangeable. Equivalence is enforced by
// tests, which is what makes runtime dispatch safe for the deterministic
// output guarantees elsewhere in the library.
struct Ops {
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // out[i] = a * x[i] + b * y[i]
  void (*lincomb2)(std::size_t n, double a, const double* x, double b, const double* y, double* out);
  // x[i] *= a
  void (*scale)(std::size_t n, double a, double* x);
  // Packed symmetric rank-1 update: h += a * g g^T (upper triangle, row-major
  // packed: rows i, columns j >= i).
  void (*syr1)(std::size_t d, double a, const double* g, double* h);
  // Packed symmetric rank-2 update: h += a * (u v^T + v u^T).
  void (*syr2)(std::size_t d, double a, const double* u, const double* v, double* h);
  const char* name;
};

// Backend selected at load time: AVX2 when the CPU supports it, otherwise the
// scalar reference. Setting HOVD_KERNELS=scalar (or =avx2) in the environment
// overrides the choice; an unavailable request falls back to scalar.
const Ops& active();

// Always-available reference implementation.
const Ops& scalar_ops();

// AVX2 implementation, or nullptr when not compiled in / not supported.
const Ops* avx2_ops();

// Name of the backend active() currently returns ("scalar" or "avx2").
std::string active_name();

}  // namespace hovd::kernels
