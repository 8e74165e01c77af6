#include <random>
#include <string>
#include <vector>

#include "doctest.h"

#include "hovd/kernels.hpp"
#include "hovd/mdp.hpp"

using hovd::kernels::Ops;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) {
    x = unif(rng);
  }
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (hovd::double_bits(a[i]) != hovd::double_bits(b[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("axpy, lincomb2 and scale against plain arithmetic") {
  const Ops& ops = hovd::kernels::scalar_ops();
  std::vector<double> x = {1.0, -2.0, 3.0};
  std::vector<double> y = {0.5, 0.5, 0.5};
  ops.axpy(3, 2.0, x.data(), y.data());
  CHECK(y[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-3.5).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(6.5).epsilon(1e-15));

  std::vector<double> out(3, 0.0);
  ops.lincomb2(3, 2.0, x.data(), -1.0, y.data(), out.data());
  CHECK(out[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(-0.5).epsilon(1e-15));

  ops.scale(3, -2.0, out.data());
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("packed rank-1 update matches the dense outer product") {
  const Ops& ops = hovd::kernels::scalar_ops();
  const int d = 4;
  std::vector<double> g = {1.0, 2.0, -1.0, 0.5};
  std::vector<double> h(hovd::packed_size(d), 0.0);
  ops.syr1(d, 2.0, g.data(), h.data());
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      CHECK(h[hovd::packed_index(i, j, d)] ==
            doctest::Approx(2.0 * g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)])
                .epsilon(1e-15));
    }
  }
}

TEST_CASE("packed rank-2 update matches the dense symmetrized product") {
  const Ops& ops = hovd::kernels::scalar_ops();
  const int d = 3;
  std::vector<double> u = {1.0, 0.0, -2.0};
  std::vector<double> v = {0.5, 3.0, 1.0};
  std::vector<double> h(hovd::packed_size(d), 0.0);
  ops.syr2(d, 1.5, u.data(), v.data(), h.data());
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double want = 1.5 * (u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)] +
                                 v[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(j)]);
      CHECK(h[hovd::packed_index(i, j, d)] == doctest::Approx(want).epsilon(1e-15));
    }
  }
}

TEST_CASE("active backend reports a recognized name") {
  const std::string name = hovd::kernels::active_name();
  CHECK((name == "scalar" || name == "avx2"));
  CHECK(hovd::kernels::active().name == name);
}

TEST_CASE("scalar and avx2 backends agree bit for bit") {
  const Ops* avx2 = hovd::kernels::avx2_ops();
  if (avx2 == nullptr) {
    MESSAGE("avx2 backend unavailable on this build/host; nothing to compare");
    return;
  }
  const Ops& scalar = hovd::kernels::scalar_ops();
  std::mt19937_64 rng(1234);
  // Sizes straddle the vector width so remainder loops are exercised too.
  for (const int d : {1, 2, 3, 4, 5, 7, 8, 13, 32, 33}) {
    const std::size_t p = hovd::packed_size(d);
    const auto g = random_vec(static_cast<std::size_t>(d), rng);
    const auto u = random_vec(static_cast<std::size_t>(d), rng);
    const auto v = random_vec(static_cast<std::size_t>(d), rng);
    const auto x = random_vec(p, rng);
    auto y1 = random_vec(p, rng);
    auto y2 = y1;
    auto h1 = random_vec(p, rng);
    auto h2 = h1;
    std::vector<double> o1(p), o2(p);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    const double a = unif(rng);
    const double b = unif(rng);

    scalar.axpy(p, a, x.data(), y1.data());
    avx2->axpy(p, a, x.data(), y2.data());
    CHECK(bitwise_equal(y1, y2));

    scalar.lincomb2(p, a, x.data(), b, y1.data(), o1.data());
    avx2->lincomb2(p, a, x.data(), b, y2.data(), o2.data());
    CHECK(bitwise_equal(o1, o2));

    scalar.scale(p, b, y1.data());
    avx2->scale(p, b, y2.data());
    CHECK(bitwise_equal(y1, y2));

    scalar.syr1(d, a, g.data(), h1.data());
    avx2->syr1(d, a, g.data(), h2.data());
    CHECK(bitwise_equal(h1, h2));

    scalar.syr2(d, b, u.data(), v.data(), h1.data());
    avx2->syr2(d, b, u.data(), v.data(), h2.data());
    CHECK(bitwise_equal(h1, h2));
  }
}

}  // TEST_SUITE
