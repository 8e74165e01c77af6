#include "hovd/taylor2.hpp"

#include <cmath>
#include <stdexcept>

#include "hovd/kernels.hpp"

namespace hovd {
namespace {

void check_same_dim(const Taylor2Scalar& a, const Taylor2Scalar& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("Taylor2Scalar: mixing scalars of different dimension");
  }
}

void check_index(int i, int dim) {
  if (i < 0 || i >= dim) {
    throw std::out_of_range("Taylor2Scalar: derivative index out of range");
  }
}

}  // namespace

Taylor2Scalar::Taylor2Scalar(int dim, double value)
    : dim_(dim), val_(value), buf_(static_cast<std::size_t>(dim) + packed_size(dim), 0.0) {
  if (dim < 0) {
    throw std::invalid_argument("Taylor2Scalar: negative dimension");
  }
}

Taylor2Scalar Taylor2Scalar::constant(double value, int dim) { return Taylor2Scalar(dim, value); }

Taylor2Scalar Taylor2Scalar::variable(double value, int index, int dim) {
  Taylor2Scalar r(dim, value);
  check_index(index, dim);
  r.buf_[static_cast<std::size_t>(index)] = 1.0;
  return r;
}

double Taylor2Scalar::grad(int i) const {
  check_index(i, dim_);
  return buf_[static_cast<std::size_t>(i)];
}

double Taylor2Scalar::hess(int i, int j) const {
  check_index(i, dim_);
  check_index(j, dim_);
  if (i > j) {
    std::swap(i, j);
  }
  return hptr()[packed_index(i, j, dim_)];
}

std::vector<double> Taylor2Scalar::grad_vector() const {
  return std::vector<double>(gptr(), gptr() + gsize());
}

std::vector<double> Taylor2Scalar::hess_dense() const { return packed_to_dense(dim_, hess_packed()); }

Taylor2Scalar& Taylor2Scalar::operator+=(const Taylor2Scalar& o) {
  check_same_dim(*this, o);
  val_ += o.val_;
  kernels::active().axpy(buf_.size(), 1.0, o.buf_.data(), buf_.data());
  return *this;
}

Taylor2Scalar& Taylor2Scalar::operator-=(const Taylor2Scalar& o) {
  check_same_dim(*this, o);
  val_ -= o.val_;
  kernels::active().axpy(buf_.size(), -1.0, o.buf_.data(), buf_.data());
  return *this;
}

Taylor2Scalar& Taylor2Scalar::operator*=(const Taylor2Scalar& o) {
  check_same_dim(*this, o);
  const auto& k = kernels::active();
  const double va = val_;
  // Hessian first: it reads this scalar's old gradient. Then the gradient,
  // then the value.
  if (this == &o) {
    // Squaring: the generic path would read the factor's buffers after
    // overwriting them.
    k.scale(hsize(), 2.0 * va, hptr());
    k.syr1(gsize(), 2.0, gptr(), hptr());
    k.scale(gsize(), 2.0 * va, gptr());
    val_ = va * va;
    return *this;
  }
  k.scale(hsize(), o.val_, hptr());
  k.axpy(hsize(), va, o.hptr(), hptr());
  k.syr2(gsize(), 1.0, gptr(), o.gptr(), hptr());
  k.lincomb2(gsize(), o.val_, gptr(), va, o.gptr(), gptr());
  val_ = va * o.val_;
  return *this;
}

Taylor2Scalar& Taylor2Scalar::operator*=(double c) {
  val_ *= c;
  kernels::active().scale(buf_.size(), c, buf_.data());
  return *this;
}

Taylor2Scalar& Taylor2Scalar::add_scaled(const Taylor2Scalar& o, double c) {
  check_same_dim(*this, o);
  val_ += c * o.val_;
  kernels::active().axpy(buf_.size(), c, o.buf_.data(), buf_.data());
  return *this;
}

Taylor2Scalar operator+(const Taylor2Scalar& a, const Taylor2Scalar& b) {
  Taylor2Scalar r = a;
  r += b;
  return r;
}

Taylor2Scalar operator-(const Taylor2Scalar& a, const Taylor2Scalar& b) {
  Taylor2Scalar r = a;
  r -= b;
  return r;
}

Taylor2Scalar operator*(const Taylor2Scalar& a, const Taylor2Scalar& b) {
  Taylor2Scalar r = a;
  r *= b;
  return r;
}

Taylor2Scalar operator/(const Taylor2Scalar& a, const Taylor2Scalar& b) {
  check_same_dim(a, b);
  if (b.val_ == 0.0) {
    throw std::domain_error("Taylor2Scalar: division by a scalar with zero value");
  }
  const auto& k = kernels::active();
  Taylor2Scalar q(a.dim_, a.val_ / b.val_);
  const double inv = 1.0 / b.val_;
  // q.grad = (a.grad - q.value * b.grad) / b.value
  k.lincomb2(q.gsize(), inv, a.gptr(), -q.val_ * inv, b.gptr(), q.gptr());
  // q.hess = (a.hess - q.value * b.hess - q.grad b.grad^T - b.grad q.grad^T) / b.value
  k.lincomb2(q.hsize(), inv, a.hptr(), -q.val_ * inv, b.hptr(), q.hptr());
  k.syr2(q.gsize(), -inv, q.gptr(), b.gptr(), q.hptr());
  return q;
}

Taylor2Scalar operator-(const Taylor2Scalar& a) {
  Taylor2Scalar r = a;
  r *= -1.0;
  return r;
}

Taylor2Scalar operator+(const Taylor2Scalar& a, double c) {
  Taylor2Scalar r = a;
  r.val_ += c;
  return r;
}

Taylor2Scalar operator+(double c, const Taylor2Scalar& a) { return a + c; }

Taylor2Scalar operator-(const Taylor2Scalar& a, double c) { return a + (-c); }

Taylor2Scalar operator-(double c, const Taylor2Scalar& a) {
  Taylor2Scalar r = -a;
  r.val_ += c;
  return r;
}

Taylor2Scalar operator*(const Taylor2Scalar& a, double c) {
  Taylor2Scalar r = a;
  r *= c;
  return r;
}

Taylor2Scalar operator*(double c, const Taylor2Scalar& a) { return a * c; }

Taylor2Scalar operator/(const Taylor2Scalar& a, double c) {
  if (c == 0.0) {
    throw std::domain_error("Taylor2Scalar: division by zero");
  }
  Taylor2Scalar r = a;
  r *= 1.0 / c;
  return r;
}

Taylor2Scalar exp(const Taylor2Scalar& a) {
  const auto& k = kernels::active();
  Taylor2Scalar r(a.dim_, std::exp(a.val_));
  // r.grad = r.value * a.grad; r.hess = r.value * (a.hess + a.grad a.grad^T)
  k.axpy(r.gsize(), r.val_, a.gptr(), r.gptr());
  k.axpy(r.hsize(), r.val_, a.hptr(), r.hptr());
  k.syr1(r.gsize(), r.val_, a.gptr(), r.hptr());
  return r;
}

Taylor2Scalar log(const Taylor2Scalar& a) {
  if (!(a.val_ > 0.0)) {
    throw std::domain_error("Taylor2Scalar: log of a non-positive value");
  }
  const auto& k = kernels::active();
  Taylor2Scalar r(a.dim_, std::log(a.val_));
  const double inv = 1.0 / a.val_;
  // r.grad = a.grad / a.value; r.hess = a.hess / a.value - r.grad r.grad^T
  k.axpy(r.gsize(), inv, a.gptr(), r.gptr());
  k.axpy(r.hsize(), inv, a.hptr(), r.hptr());
  k.syr1(r.gsize(), -1.0, r.gptr(), r.hptr());
  return r;
}

void packed_symv(int d, std::span<const double> packed, std::span<const double> v,
                 std::span<double> out) {
  if (packed.size() != packed_size(d) || v.size() != static_cast<std::size_t>(d) ||
      out.size() != static_cast<std::size_t>(d)) {
    throw std::invalid_argument("packed_symv: size mismatch");
  }
  for (int i = 0; i < d; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      const std::size_t idx = i <= j ? packed_index(i, j, d) : packed_index(j, i, d);
      acc += packed[idx] * v[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
}

std::vector<double> packed_to_dense(int d, std::span<const double> packed) {
  if (packed.size() != packed_size(d)) {
    throw std::invalid_argument("packed_to_dense: size mismatch");
  }
  std::vector<double> dense(static_cast<std::size_t>(d) * static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double x = packed[packed_index(i, j, d)];
      dense[static_cast<std::size_t>(i) * d + j] = x;
      dense[static_cast<std::size_t>(j) * d + i] = x;
    }
  }
  return dense;
}

}  // namespace hovd
