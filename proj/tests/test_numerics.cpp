#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "gatepro/errors.hpp"
#include "gatepro/numerics.hpp"
#include "gatepro/rng.hpp"

using namespace gatepro;

namespace {

// Independent splitmix64 written from the published constants, used as the
// oracle for the Rng stream tests.
std::uint64_t reference_splitmix64(std::uint64_t& state) {
  state = state + 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

Mat random_symmetric(int n, Rng& rng) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = rng.next_gaussian();
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("matvec basic cases") {
  Mat eye(2, 2, {1, 0, 0, 1});
  CHECK(matvec(eye, Vec{3, 1}) == Vec{3, 1});

  Mat m(2, 2, {1, 2, 3, 4});
  CHECK(matvec(m, Vec{0, 0}) == Vec{0, 0});
  CHECK(matvec(m, Vec{1, 1}) == Vec{3, 7});

  CHECK_THROWS_AS(matvec(m, Vec{1, 2, 3}), ContractViolation);
}

TEST_CASE("matvec distributes over vector addition") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mat m(5, 7);
    Vec a(7);
    Vec b(7);
    for (double& v : m.data()) v = rng.next_gaussian();
    for (std::size_t i = 0; i < 7; ++i) {
      a[i] = rng.next_gaussian();
      b[i] = rng.next_gaussian();
    }
    Vec sum(7);
    for (std::size_t i = 0; i < 7; ++i) sum[i] = a[i] + b[i];
    const Vec lhs = matvec(m, sum);
    const Vec ra = matvec(m, a);
    const Vec rb = matvec(m, b);
    for (std::size_t i = 0; i < 5; ++i) {
      const double expect = ra[i] + rb[i];
      const double scale = std::max(1.0, std::abs(expect));
      CHECK(std::abs(lhs[i] - expect) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("matvec_transposed agrees with explicit transpose") {
  Rng rng(12);
  Mat m(4, 6);
  Vec v(4);
  for (double& x : m.data()) x = rng.next_gaussian();
  for (std::size_t i = 0; i < 4; ++i) v[i] = rng.next_gaussian();

  const Vec got = matvec_transposed(m, v);
  REQUIRE(got.size() == 6);
  for (std::size_t j = 0; j < 6; ++j) {
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) expect += m(i, j) * v[i];
    CHECK(got[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("add_outer accumulates a * b^T") {
  Mat acc(2, 3, {1, 1, 1, 1, 1, 1});
  add_outer(acc, Vec{2, 3}, Vec{1, 0, -1});
  CHECK(acc == Mat(2, 3, {3, 1, -1, 4, 1, -2}));
  Vec wrong(4);
  CHECK_THROWS_AS(add_outer(acc, wrong, Vec{1, 0, -1}), ContractViolation);
}

TEST_CASE("top_k_indices selection and ties") {
  CHECK(top_k_indices(Vec{1, 2, 3}, 2) == std::vector<int>{1, 2});
  CHECK(top_k_indices(Vec{5, 5, 5}, 2) == std::vector<int>{0, 1});

  // Exhaustive 3-subset enumeration over (0.3, -1.2, 0.3, 7.0): the sums are
  // {0,1,2}=-0.6, {0,1,3}=6.1, {0,2,3}=7.6, {1,2,3}=6.1, so {0,2,3} wins.
  CHECK(top_k_indices(Vec{0.3, -1.2, 0.3, 7.0}, 3) ==
        std::vector<int>{0, 2, 3});

  CHECK_THROWS_AS(top_k_indices(Vec{1, 2}, 0), ContractViolation);
  CHECK_THROWS_AS(top_k_indices(Vec{1, 2}, 3), ContractViolation);
}

TEST_CASE("top_k_indices is permutation-consistent for strict gaps") {
  // When every selected value strictly exceeds every unselected one, the
  // selected positions must follow the values under any permutation.
  Rng rng(13);
  const Vec base{9.0, 8.0, 7.0, 0.3, 0.2, 0.1};
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  for (int trial = 0; trial < 30; ++trial) {
    for (std::size_t i = perm.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next_uniform() * i);
      std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
    }
    Vec shuffled(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      shuffled[static_cast<std::size_t>(perm[i])] = base[i];
    }
    std::vector<int> expect;
    for (std::size_t i = 0; i < 3; ++i) {
      expect.push_back(perm[i]);  // images of the top three values
    }
    std::sort(expect.begin(), expect.end());
    CHECK(top_k_indices(shuffled, 3) == expect);
  }
}

TEST_CASE("softmax_over matches direct evaluation") {
  const Vec w = softmax_over(Vec{2, 3}, {0, 1});
  // exp(2)/(exp(2)+exp(3)) = 1/(1+e) and its complement.
  CHECK(w[0] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.7310585786300049).epsilon(1e-12));

  const Vec ties = softmax_over(Vec{4.2, 4.2, 4.2}, {0, 1, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ties[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  const Vec big = softmax_over(Vec{1000, 1001}, {0, 1});
  CHECK(all_finite(big));
  CHECK(big[0] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(big[1] == doctest::Approx(0.7310585786300049).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_over(Vec{1, 2}, {}), ContractViolation);
  CHECK_THROWS_AS(softmax_over(Vec{1, 2}, {0, 0}), ContractViolation);
  CHECK_THROWS_AS(softmax_over(Vec{1, 2}, {2}), ContractViolation);
}

TEST_CASE("softmax_over zeroes non-subset entries and sums to one") {
  Rng rng(14);
  for (int trial = 0; trial < 25; ++trial) {
    Vec values(8);
    for (std::size_t i = 0; i < 8; ++i) values[i] = 4.0 * rng.next_gaussian();
    const Vec w = softmax_over(values, {1, 4, 6});
    double total = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      if (i == 1 || i == 4 || i == 6) {
        CHECK(w[i] > 0.0);
        total += w[i];
      } else {
        CHECK(w[i] == 0.0);
      }
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);

    // Shift invariance within 1e-12.
    Vec shifted(8);
    for (std::size_t i = 0; i < 8; ++i) shifted[i] = values[i] + 17.5;
    const Vec ws = softmax_over(shifted, {1, 4, 6});
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::abs(ws[i] - w[i]) <= 1e-12);
    }
  }
}

TEST_CASE("softmax_full normalizes over every entry") {
  const Vec w = softmax_full(Vec{0, 0, 0, 0});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("sym_eigenvalues handles hand-solved cases") {
  Mat eye(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Vec ones = sym_eigenvalues(eye);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ones[i] == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Characteristic polynomial of [[0,1],[1,0]] is l^2 - 1.
  const Vec pm = sym_eigenvalues(Mat(2, 2, {0, 1, 1, 0}));
  CHECK(pm[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pm[1] == doctest::Approx(-1.0).epsilon(1e-12));

  const Vec diag = sym_eigenvalues(Mat(3, 3, {2, 0, 0, 0, 1, 0, 0, 0, 0}));
  CHECK(diag[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(diag[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(diag[2] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(sym_eigenvalues(Mat(2, 2, {0, 1, 0.5, 0})),
                  ContractViolation);
  CHECK_THROWS_AS(sym_eigenvalues(Mat(2, 3)), ContractViolation);
}

TEST_CASE("sym_eig satisfies trace, norm, and residual bounds") {
  Rng rng(15);
  for (int n : {2, 5, 16, 32}) {
    Mat m = random_symmetric(n, rng);
    const double mnorm = frobenius_norm(m);
    const SymEig eig = sym_eig(m);

    double trace = 0.0;
    for (int i = 0; i < n; ++i) trace += m(i, i);
    double lam_sum = 0.0;
    double lam_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      lam_sum += eig.values[static_cast<std::size_t>(i)];
      lam_sq += eig.values[static_cast<std::size_t>(i)] *
                eig.values[static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(lam_sum - trace) <= 1e-9 * std::max(1.0, mnorm));
    CHECK(std::abs(lam_sq - mnorm * mnorm) <=
          1e-9 * std::max(1.0, mnorm * mnorm));

    // Descending order and eigenpair residuals.
    for (int j = 0; j < n; ++j) {
      if (j > 0) {
        CHECK(eig.values[static_cast<std::size_t>(j - 1)] >=
              eig.values[static_cast<std::size_t>(j)]);
      }
      Vec v(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] =
            eig.vectors(static_cast<std::size_t>(i),
                        static_cast<std::size_t>(j));
      }
      const Vec mv = matvec(m, v);
      double resid = 0.0;
      for (int i = 0; i < n; ++i) {
        const double r = mv[static_cast<std::size_t>(i)] -
                         eig.values[static_cast<std::size_t>(j)] *
                             v[static_cast<std::size_t>(i)];
        resid += r * r;
      }
      CHECK(std::sqrt(resid) <= 1e-9 * std::max(1.0, mnorm));
    }
  }
}

TEST_CASE("checked construction rejects non-finite values") {
  CHECK_THROWS_AS(Vec({1.0, std::nan("")}), ContractViolation);
  CHECK_THROWS_AS(Mat(1, 2, {1.0, HUGE_VAL}), ContractViolation);
  CHECK_THROWS_AS(Mat(2, 2, {1.0, 2.0, 3.0}), ContractViolation);
}

TEST_CASE("rng matches the reference splitmix64 stream") {
  std::uint64_t ref_state = 0;
  CHECK(reference_splitmix64(ref_state) == 0xE220A8397B1DCDAFull);

  for (std::uint64_t seed : {std::uint64_t{0}, std::uint64_t{1},
                             std::uint64_t{2}, std::uint64_t{0xDEADBEEF}}) {
    Rng rng(seed);
    std::uint64_t ref = seed;
    for (int i = 0; i < 1000; ++i) {
      CHECK(rng.next_u64() == reference_splitmix64(ref));
    }
  }

  // Distinct seeds diverge immediately.
  CHECK(Rng(1).next_u64() != Rng(2).next_u64());

  // Identical seeds give identical streams.
  Rng a(77);
  Rng b(77);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng uniforms are the top 53 bits and gaussians are Box-Muller") {
  Rng rng(5);
  std::uint64_t ref = 5;
  for (int i = 0; i < 200; ++i) {
    const double expect =
        static_cast<double>(reference_splitmix64(ref) >> 11) *
        std::pow(2.0, -53);
    const double got = rng.next_uniform();
    CHECK(got == expect);
    CHECK(got >= 0.0);
    CHECK(got < 1.0);
  }

  Rng grng(6);
  std::uint64_t gref = 6;
  for (int i = 0; i < 200; ++i) {
    const double u1 = static_cast<double>(reference_splitmix64(gref) >> 11) *
                      std::pow(2.0, -53);
    const double u2 = static_cast<double>(reference_splitmix64(gref) >> 11) *
                      std::pow(2.0, -53);
    const double expect = std::sqrt(-2.0 * std::log1p(-u1)) *
                          std::cos(6.283185307179586476925286766559 * u2);
    CHECK(grng.next_gaussian() == expect);
  }
}

TEST_CASE("rng gaussian moments at one million draws") {
  Rng rng(123);
  const int n = 1000000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gaussian();
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(mean > -0.01);
  CHECK(mean < 0.01);
  CHECK(var > 0.99);
  CHECK(var < 1.01);
}
