#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"
#include "a2gnn/oracles.hpp"
#include "test_util.hpp"

using namespace a2gnn;

TEST_CASE("jacobi eigensolver on a diagonal matrix") {
  dmat m(3, 3);
  m(0, 0) = 3.0;
  m(1, 1) = -1.0;
  m(2, 2) = 0.5;
  const auto d = oracle::eig_symmetric(m);
  CHECK(d.eigenvalues[0] == Catch::Approx(-1.0));
  CHECK(d.eigenvalues[1] == Catch::Approx(0.5));
  CHECK(d.eigenvalues[2] == Catch::Approx(3.0));
  // eigenvectors are signed unit basis vectors in some order
  for (int j = 0; j < 3; ++j) {
    double maxc = 0;
    for (int i = 0; i < 3; ++i) maxc = std::max(maxc, std::abs(d.eigenvectors(i, j)));
    CHECK(maxc == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("jacobi eigensolver on the single-edge laplacian") {
  dmat a(2, 2);
  a(0, 1) = a(1, 0) = 1.0;
  const auto d = oracle::eig_symmetric(normalized_laplacian(a));
  CHECK(d.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(d.eigenvalues[1] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("jacobi eigensolver self-checks on random symmetric matrices") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8;
    dmat m(n, n);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) m(i, j) = m(j, i) = dist(rng);

    const auto d = oracle::eig_symmetric(m);

    // orthonormality
    const dmat utu = matmul(transpose(d.eigenvectors), d.eigenvectors);
    CHECK(max_abs_diff(utu, dmat::identity(n)) < 1e-9);

    // reconstruction
    dmat lam(n, n);
    for (int i = 0; i < n; ++i) lam(i, i) = d.eigenvalues[i];
    const dmat rec = matmul(d.eigenvectors, matmul(lam, transpose(d.eigenvectors)));
    CHECK(max_abs_diff(rec, m) < 1e-8);

    // ascending order
    for (int i = 1; i < n; ++i) CHECK(d.eigenvalues[i] >= d.eigenvalues[i - 1]);
  }
}

TEST_CASE("eigensolver rejects asymmetric input") {
  dmat m(2, 2);
  m(0, 1) = 1.0;
  CHECK_THROWS(oracle::eig_symmetric(m));
}

TEST_CASE("spectral filter oracle edge cases") {
  std::mt19937_64 rng(103);
  const int n = 5;
  const auto edges = testutil::random_connected_edges(rng, n, 1);
  const dmat l_norm = normalized_laplacian(adjacency_from_edges(n, edges));
  const dmat x = random_uniform<double>(rng, n, 3, -1.0, 1.0);

  SECTION("K=1 reduces to X * Theta_0") {
    const dmat theta = random_uniform<double>(rng, 3, 4, -1.0, 1.0);
    const dmat z = oracle::spectral_filter_oracle(l_norm, x, theta, 1, 2.0);
    CHECK(max_abs_diff(z, matmul(x, theta)) < 1e-12);
  }

  SECTION("zero Theta gives zero response") {
    const dmat theta(3 * 4, 2);
    const dmat z = oracle::spectral_filter_oracle(l_norm, x, theta, 4, 2.0);
    CHECK(max_abs(z) == 0.0);
  }

  SECTION("mismatched Theta rows rejected") {
    const dmat theta(7, 2);
    CHECK_THROWS(oracle::spectral_filter_oracle(l_norm, x, theta, 4, 2.0));
  }
}

TEST_CASE("finite differences on a quadratic") {
  std::mt19937_64 rng(107);
  dmat p = random_uniform<double>(rng, 3, 4, -1.0, 1.0);
  auto loss = [&]() {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += p.data()[i] * p.data()[i];
    return s;
  };
  const dmat g = oracle::finite_diff_grad(loss, p, 1e-5);
  const dmat expect = scale(p, 2.0);
  CHECK(max_abs_diff(g, expect) < 1e-8);

  CHECK_THROWS_WITH(oracle::finite_diff_grad(loss, p, 0.0), Catch::Matchers::ContainsSubstring("degenerate step"));
}
