#include "gvimp/errors.hpp"
#include "gvimp/gbp.hpp"

#include "../support/generators.hpp"

#include <doctest.h>

using namespace gvimp;
using gvimp::testing::Gen;
using gvimp::testing::rel_err;

TEST_CASE("block diagonal precision gives inverse blocks") {
  Gen gen(61);
  std::vector<Matrix> diag;
  for (int i = 0; i < 6; ++i) diag.push_back(gen.spd(3));
  const BlockTridiagonalMatrix prec(diag, std::vector<Matrix>(5, Matrix::Zero(3, 3)));
  const auto marg = gbp_marginals(prec);
  for (int i = 0; i < 6; ++i) CHECK(rel_err(marg.diag[i], diag[i].inverse()) <= 1e-12);
  for (const auto& c : marg.cross) CHECK(c.norm() <= 1e-15);
}

TEST_CASE("two scalar states") {
  const BlockTridiagonalMatrix prec({Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 2.0)},
                                    {Matrix::Constant(1, 1, -1.0)});
  const auto marg = gbp_marginals(prec);
  CHECK(marg.diag[0](0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(marg.diag[1](0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(marg.cross[0](0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("marginals match dense inversion on random chains") {
  Gen gen(62);
  for (int trial = 0; trial < 40; ++trial) {
    const int blocks = gen.integer(1, 50);
    const int n = gen.integer(1, 4);
    const auto prec = gen.spd_block_tridiagonal(blocks, n);
    const Matrix cov = prec.to_dense().inverse();
    const auto marg = gbp_marginals(prec);
    REQUIRE(marg.diag.size() == static_cast<std::size_t>(blocks));
    REQUIRE(marg.cross.size() == static_cast<std::size_t>(blocks - 1));
    for (int i = 0; i < blocks; ++i) {
      CHECK(rel_err(marg.diag[i], cov.block(i * n, i * n, n, n)) <= 1e-10);
      CHECK(marg.diag[i] == marg.diag[i].transpose());
      if (i + 1 < blocks) CHECK(rel_err(marg.cross[i], cov.block(i * n, (i + 1) * n, n, n)) <= 1e-10);
    }
    const Vector eta = gen.vector(blocks * n);
    CHECK(rel_err(gbp_mean_solve(prec, eta), prec.to_dense().llt().solve(eta)) <= 1e-10);
  }
}

TEST_CASE("indefinite chains are rejected") {
  auto prec = BlockTridiagonalMatrix::identity(4, 2);
  prec.upper(1) = 3.0 * Matrix::Identity(2, 2);
  CHECK_THROWS_AS(gbp_marginals(prec), NumericalError);
}
