#pragma once

#include <span>
#include <vector>

namespace hovd {

// Forward-mode scalar carrying a value, a dense gradient of length dim, and a
// dense symmetric Hessian with respect to a fixed set of dim inputs. The
// Hessian is stored as a packed row-major upper triangle (dim*(dim+1)/2
// entries), so symmetry holds by construction: hess(i, j) and hess(j, i) read
// the same element.
//
// Arithmetic follows the exact second-order chain rules. For h = f * g:
//   h.value = f.value * g.value
//   h.grad  = f.value * g.grad + g.value * f.grad
//   h.hess  = f.value * g.hess + g.value * f.hess + f.grad g.grad^T + g.grad f.grad^T
// Quotients, exp and log are derived from the same rules. Propagating a
// computation built from these primitives yields the exact gradient and
// Hessian of the computed value, not a finite-difference approximation.
class Taylor2Scalar {
 public:
  Taylor2Scalar() : dim_(0), val_(0.0) {}

  // A value with zero gradient and Hessian.
  static Taylor2Scalar constant(double value, int dim);

  // The input variable at position `index`: gradient is the indicator basis
  // vector, Hessian is zero.
  static Taylor2Scalar variable(double value, int index, int dim);

  int dim() const { return dim_; }
  double value() const { return val_; }

  std::span<const double> grad() const { return {buf_.data(), static_cast<std::size_t>(dim_)}; }
  std::span<const double> hess_packed() const {
    return {buf_.data() + dim_, buf_.size() - static_cast<std::size_t>(dim_)};
  }

  double grad(int i) const;
  // Mirrored access: hess(i, j) == hess(j, i) exactly.
  double hess(int i, int j) const;

  std::vector<double> grad_vector() const;
  // Row-major dim x dim matrix mirrored from the packed triangle.
  std::vector<double> hess_dense() const;

  // A constant with this scalar's value and dimension; used to cut the
  // derivative flow of a subexpression (truncation, stop-gradient).
  Taylor2Scalar detached() const { return constant(val_, dim_); }

  Taylor2Scalar& operator+=(const Taylor2Scalar& o);
  Taylor2Scalar& operator-=(const Taylor2Scalar& o);
  Taylor2Scalar& operator*=(const Taylor2Scalar& o);
  Taylor2Scalar& operator+=(double c) {
    val_ += c;
    return *this;
  }
  Taylor2Scalar& operator-=(double c) {
    val_ -= c;
    return *this;
  }
  Taylor2Scalar& operator*=(double c);

  // this += c * o. One pass over the arrays, no temporary.
  Taylor2Scalar& add_scaled(const Taylor2Scalar& o, double c);

  friend Taylor2Scalar operator+(const Taylor2Scalar& a, const Taylor2Scalar& b);
  friend Taylor2Scalar operator-(const Taylor2Scalar& a, const Taylor2Scalar& b);
  friend Taylor2Scalar operator*(const Taylor2Scalar& a, const Taylor2Scalar& b);
  friend Taylor2Scalar operator/(const Taylor2Scalar& a, const Taylor2Scalar& b);
  friend Taylor2Scalar operator-(const Taylor2Scalar& a);

  friend Taylor2Scalar operator+(const Taylor2Scalar& a, double c);
  friend Taylor2Scalar operator+(double c, const Taylor2Scalar& a);
  friend Taylor2Scalar operator-(const Taylor2Scalar& a, double c);
  friend Taylor2Scalar operator-(double c, const Taylor2Scalar& a);
  friend Taylor2Scalar operator*(const Taylor2Scalar& a, double c);
  friend Taylor2Scalar operator*(double c, const Taylor2Scalar& a);
  friend Taylor2Scalar operator/(const Taylor2Scalar& a, double c);

  friend Taylor2Scalar exp(const Taylor2Scalar& a);
  friend Taylor2Scalar log(const Taylor2Scalar& a);

 private:
  Taylor2Scalar(int dim, double value);

  double* gptr() { return buf_.data(); }
  double* hptr() { return buf_.data() + dim_; }
  const double* gptr() const { return buf_.data(); }
  const double* hptr() const { return buf_.data() + dim_; }
  std::size_t gsize() const { return static_cast<std::size_t>(dim_); }
  std::size_t hsize() const { return buf_.size() - gsize(); }

  int dim_;
  double val_;
  // Gradient in [0, dim), packed Hessian triangle in [dim, dim + dim*(dim+1)/2).
  std::vector<double> buf_;
};

// Number of entries in a packed upper triangle of a d x d symmetric matrix.
inline std::size_t packed_size(int d) {
  return static_cast<std::size_t>(d) * static_cast<std::size_t>(d + 1) / 2;
}

// Index of (i, j) with i <= j in the packed row-major upper triangle.
inline std::size_t packed_index(int i, int j, int d) {
  return static_cast<std::size_t>(i) * static_cast<std::size_t>(d) -
         static_cast<std::size_t>(i) * static_cast<std::size_t>(i - 1) / 2 +
         static_cast<std::size_t>(j - i);
}

// out = H * v for a packed symmetric H. Plain sequential reduction; the order
// of additions is fixed so results are reproducible.
void packed_symv(int d, std::span<const double> packed, std::span<const double> v,
                 std::span<double> out);

// Mirror a packed upper triangle into a dense row-major d x d matrix.
std::vector<double> packed_to_dense(int d, std::span<const double> packed);

}  // namespace hovd
