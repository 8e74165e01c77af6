#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "hovd/taylor2.hpp"

using hovd::Taylor2Scalar;

namespace {

// f evaluated with plain doubles, used as the finite-difference target.
double composite(const std::vector<double>& t) {
  return std::exp(0.3 * t[0] - 0.2 * t[1]) * t[2] + t[0] * t[1] / (1.0 + t[2] * t[2]) +
         std::log(2.0 + t[1] * t[1]);
}

Taylor2Scalar composite_taylor(const std::vector<double>& t) {
  const int d = static_cast<int>(t.size());
  const Taylor2Scalar x = Taylor2Scalar::variable(t[0], 0, d);
  const Taylor2Scalar y = Taylor2Scalar::variable(t[1], 1, d);
  const Taylor2Scalar z = Taylor2Scalar::variable(t[2], 2, d);
  return exp(0.3 * x - 0.2 * y) * z + x * y / (1.0 + z * z) + log(2.0 + y * y);
}

}  // namespace

TEST_SUITE("taylor2") {

TEST_CASE("variables and constants seed the right derivatives") {
  const Taylor2Scalar c = Taylor2Scalar::constant(3.5, 4);
  CHECK(c.value() == 3.5);
  for (int i = 0; i < 4; ++i) {
    CHECK(c.grad(i) == 0.0);
    for (int j = 0; j < 4; ++j) {
      CHECK(c.hess(i, j) == 0.0);
    }
  }
  const Taylor2Scalar v = Taylor2Scalar::variable(-1.25, 2, 4);
  CHECK(v.value() == -1.25);
  CHECK(v.grad(2) == 1.0);
  CHECK(v.grad(0) == 0.0);
  CHECK(v.hess(2, 2) == 0.0);
}

TEST_CASE("product rule") {
  const Taylor2Scalar x = Taylor2Scalar::variable(2.0, 0, 2);
  const Taylor2Scalar y = Taylor2Scalar::variable(3.0, 1, 2);
  const Taylor2Scalar p = x * y;
  CHECK(p.value() == 6.0);
  CHECK(p.grad(0) == 3.0);
  CHECK(p.grad(1) == 2.0);
  CHECK(p.hess(0, 0) == 0.0);
  CHECK(p.hess(0, 1) == 1.0);
  CHECK(p.hess(1, 1) == 0.0);
}

TEST_CASE("quotient rule") {
  const Taylor2Scalar x = Taylor2Scalar::variable(2.0, 0, 2);
  const Taylor2Scalar y = Taylor2Scalar::variable(4.0, 1, 2);
  const Taylor2Scalar q = x / y;
  CHECK(q.value() == 0.5);
  CHECK(q.grad(0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(q.grad(1) == doctest::Approx(-0.125).epsilon(1e-14));
  CHECK(q.hess(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(q.hess(0, 1) == doctest::Approx(-0.0625).epsilon(1e-14));
  CHECK(q.hess(1, 1) == doctest::Approx(0.0625).epsilon(1e-14));
}

TEST_CASE("exp and log carry their own derivatives") {
  const Taylor2Scalar x = Taylor2Scalar::variable(0.3, 0, 1);
  const Taylor2Scalar e = exp(x);
  const double want = std::exp(0.3);
  CHECK(e.value() == doctest::Approx(want).epsilon(1e-15));
  CHECK(e.grad(0) == doctest::Approx(want).epsilon(1e-15));
  CHECK(e.hess(0, 0) == doctest::Approx(want).epsilon(1e-15));

  const Taylor2Scalar y = Taylor2Scalar::variable(2.0, 0, 1);
  const Taylor2Scalar l = log(y);
  CHECK(l.value() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(l.grad(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(l.hess(0, 0) == doctest::Approx(-0.25).epsilon(1e-15));

  const Taylor2Scalar roundtrip = exp(log(y));
  CHECK(roundtrip.value() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(roundtrip.grad(0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(roundtrip.hess(0, 0) == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("in-place squaring matches the out-of-place product") {
  Taylor2Scalar t = Taylor2Scalar::variable(1.7, 0, 2) + 0.4 * Taylor2Scalar::variable(-0.3, 1, 2);
  const Taylor2Scalar ref = t * t;
  t *= t;
  CHECK(t.value() == ref.value());
  for (int i = 0; i < 2; ++i) {
    CHECK(t.grad(i) == doctest::Approx(ref.grad(i)).epsilon(1e-15));
    for (int j = i; j < 2; ++j) {
      CHECK(t.hess(i, j) == doctest::Approx(ref.hess(i, j)).epsilon(1e-15));
    }
  }
}

TEST_CASE("composite expression agrees with central finite differences") {
  const std::vector<double> at = {0.7, -0.4, 1.2};
  const Taylor2Scalar f = composite_taylor(at);
  CHECK(f.value() == doctest::Approx(composite(at)).epsilon(1e-14));

  const double hg = 1e-5;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> plus = at;
    std::vector<double> minus = at;
    plus[static_cast<std::size_t>(i)] += hg;
    minus[static_cast<std::size_t>(i)] -= hg;
    const double fd = (composite(plus) - composite(minus)) / (2.0 * hg);
    CHECK(f.grad(i) == doctest::Approx(fd).epsilon(1e-7));
  }

  const double hh = 1e-4;
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      std::vector<double> pp = at, pm = at, mp = at, mm = at;
      pp[static_cast<std::size_t>(i)] += hh;
      pp[static_cast<std::size_t>(j)] += hh;
      pm[static_cast<std::size_t>(i)] += hh;
      pm[static_cast<std::size_t>(j)] -= hh;
      mp[static_cast<std::size_t>(i)] -= hh;
      mp[static_cast<std::size_t>(j)] += hh;
      mm[static_cast<std::size_t>(i)] -= hh;
      mm[static_cast<std::size_t>(j)] -= hh;
      const double fd =
          (composite(pp) - composite(pm) - composite(mp) + composite(mm)) / (4.0 * hh * hh);
      CHECK(f.hess(i, j) == doctest::Approx(fd).epsilon(5e-5));
    }
  }
}

TEST_CASE("Hessian access is symmetric by construction") {
  const std::vector<double> at = {0.7, -0.4, 1.2};
  const Taylor2Scalar f = composite_taylor(at);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(f.hess(i, j) == f.hess(j, i));
    }
  }
  const std::vector<double> dense = f.hess_dense();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(dense[static_cast<std::size_t>(i * 3 + j)] == f.hess(i, j));
    }
  }
}

TEST_CASE("packed helpers round-trip indices and matrix-vector products") {
  const int d = 5;
  CHECK(hovd::packed_size(d) == 15);
  std::size_t k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      CHECK(hovd::packed_index(i, j, d) == k);
      ++k;
    }
  }
  std::vector<double> packed(hovd::packed_size(d));
  for (std::size_t m = 0; m < packed.size(); ++m) {
    packed[m] = 0.1 * static_cast<double>(m) - 0.4;
  }
  const std::vector<double> dense = hovd::packed_to_dense(d, packed);
  std::vector<double> v = {1.0, -1.0, 2.0, 0.5, -0.25};
  std::vector<double> got(static_cast<std::size_t>(d), 0.0);
  hovd::packed_symv(d, packed, v, got);
  for (int i = 0; i < d; ++i) {
    double want = 0.0;
    for (int j = 0; j < d; ++j) {
      want += dense[static_cast<std::size_t>(i * d + j)] * v[static_cast<std::size_t>(j)];
    }
    CHECK(got[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("detached drops derivatives but keeps the value") {
  const Taylor2Scalar x = Taylor2Scalar::variable(1.5, 0, 2);
  const Taylor2Scalar d = (x * x).detached();
  CHECK(d.value() == 2.25);
  CHECK(d.grad(0) == 0.0);
  CHECK(d.hess(0, 0) == 0.0);
}

TEST_CASE("dimension and domain errors are reported") {
  const Taylor2Scalar a = Taylor2Scalar::variable(1.0, 0, 2);
  const Taylor2Scalar b = Taylor2Scalar::variable(1.0, 0, 3);
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(log(Taylor2Scalar::constant(-1.0, 2)), std::domain_error);
  CHECK_THROWS_AS(a / Taylor2Scalar::constant(0.0, 2), std::domain_error);
  CHECK_THROWS_AS(a.grad(5), std::out_of_range);
  CHECK_THROWS_AS(a.hess(0, 2), std::out_of_range);
}

}  // TEST_SUITE
