#include <catch2/catch_amalgamated.hpp>

#include "motorec/matrix.hpp"
#include "motorec/rng.hpp"
#include "support/oracles.hpp"

using namespace motorec;

namespace {

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  std::vector<std::tuple<std::size_t, std::size_t, double>> t;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) t.emplace_back(r, c, rng.normal());
  return SparseMatrix::from_triplets(rows, cols, t);
}

SparseMatrix identity_sparse(std::size_t n) {
  std::vector<std::tuple<std::size_t, std::size_t, double>> t;
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  return SparseMatrix::from_triplets(n, n, t);
}

}  // namespace

TEST_CASE("dense basics") {
  DenseMatrix a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  REQUIRE(a(1, 0) == 3.0);
  REQUIRE(sum_all(a) == 10.0);
  DenseMatrix t = transpose(a);
  REQUIRE(t(0, 1) == 3.0);
  REQUIRE_THROWS_AS(add(a, DenseMatrix(3, 2)), dimension_error);
  REQUIRE_THROWS_AS(matmul(a, DenseMatrix(3, 2)), dimension_error);
}

TEST_CASE("matmul matches reference on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.bounded(6);
    const std::size_t k = 1 + rng.bounded(6);
    const std::size_t n = 1 + rng.bounded(6);
    DenseMatrix a(m, k), b(k, n);
    a.fill_normal(rng, 0.0, 1.0);
    b.fill_normal(rng, 0.0, 1.0);
    DenseMatrix got = matmul(a, b);
    DenseMatrix want = oracles::dense_matmul_ref(a, b);
    REQUIRE(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("sparse construction validates invariants") {
  SparseMatrix s = SparseMatrix::from_triplets(3, 4, {{0, 1, 2.0}, {2, 0, 1.0}, {0, 3, 4.0}});
  s.validate();
  REQUIRE(s.nnz() == 3);
  REQUIRE(s.densify()(0, 3) == 4.0);

  // duplicates are summed
  SparseMatrix d = SparseMatrix::from_triplets(2, 2, {{1, 1, 1.0}, {1, 1, 2.5}});
  REQUIRE(d.nnz() == 1);
  REQUIRE(d.densify()(1, 1) == 3.5);

  REQUIRE_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), dimension_error);
}

TEST_CASE("spmm identity and zero") {
  Rng rng(11);
  DenseMatrix b(5, 3);
  b.fill_normal(rng, 0.0, 1.0);

  DenseMatrix viaId = spmm(identity_sparse(5), b);
  REQUIRE(max_abs_diff(viaId, b) == 0.0);

  SparseMatrix zero = SparseMatrix::from_triplets(5, 5, {});
  DenseMatrix viaZero = spmm(zero, b);
  REQUIRE(frobenius_norm(viaZero) == 0.0);
}

TEST_CASE("spmm matches densify-and-multiply oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    SparseMatrix s = random_sparse(5, 5, 0.4, rng);
    DenseMatrix b(5, 3);
    b.fill_normal(rng, 0.0, 1.0);
    DenseMatrix got = spmm(s, b);
    DenseMatrix want = oracles::dense_matmul_ref(s.densify(), b);
    for (std::size_t i = 0; i < got.size(); ++i)
      REQUIRE(oracles::rel_err(got.v[i], want.v[i], 1e-30) < 1e-12);
  }
}

TEST_CASE("spmm_transposed matches transposed reference") {
  Rng rng(17);
  SparseMatrix s = random_sparse(6, 4, 0.5, rng);
  DenseMatrix b(6, 3);
  b.fill_normal(rng, 0.0, 1.0);
  DenseMatrix got = spmm_transposed(s, b);
  DenseMatrix want = oracles::dense_matmul_ref(transpose(s.densify()), b);
  REQUIRE(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("spmm shape mismatch raises dimension error") {
  SparseMatrix s = SparseMatrix::from_triplets(3, 3, {{0, 0, 1.0}});
  REQUIRE_THROWS_AS(spmm(s, DenseMatrix(4, 2)), dimension_error);
}
