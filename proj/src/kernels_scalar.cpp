#include "hovd/kernels.hpp"

namespace hovd::kernels {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = y[i] + a * x[i];
  }
}

void lincomb2_scalar(std::size_t n, double a, const double* x, double b, const double* y,
                     double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = a * x[i] + b * y[i];
  }
}

void scale_scalar(std::size_t n, double a, double* x) {
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a * x[i];
  }
}

void syr1_scalar(std::size_t d, double a, const double* g, double* h) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double agi = a * g[i];
    for (std::size_t j = i; j < d; ++j) {
      h[k] = h[k] + agi * g[j];
      ++k;
    }
  }
}

void syr2_scalar(std::size_t d, double a, const double* u, const double* v, double* h) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double aui = a * u[i];
    const double avi = a * v[i];
    for (std::size_t j = i; j < d; ++j) {
      h[k] = h[k] + (aui * v[j] + avi * u[j]);
      ++k;
    }
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{axpy_scalar, lincomb2_scalar, scale_scalar, syr1_scalar, syr2_scalar,
                       "scalar"};
  return ops;
}

}  // namespace hovd::kernels
