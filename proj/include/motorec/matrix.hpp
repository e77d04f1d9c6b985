// Dense (row-major, f64) and CSR sparse matrices plus the plain kernels the
// rest of the library builds on. Loop orders are fixed; no reassociation, so
// results are reproducible run to run.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "motorec/errors.hpp"
#include "motorec/rng.hpp"

namespace motorec {

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;  // row-major, rows * cols entries

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), v(r * c, fill) {}

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> data) {
    DenseMatrix m(data.size(), data.size() ? data.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : data) {
      if (row.size() != m.cols) throw dimension_error("from_rows: ragged rows");
      std::size_t c = 0;
      for (double x : row) m(r, c++) = x;
      ++r;
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  double* row(std::size_t r) { return v.data() + r * cols; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }

  std::size_t size() const { return v.size(); }
  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }

  bool is_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double scalar() const {
    if (rows != 1 || cols != 1) throw contract_error("scalar() on non 1x1 matrix");
    return v[0];
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  void fill_normal(Rng& rng, double mean, double stddev) {
    for (double& x : v) x = rng.normal(mean, stddev);
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : v) x = rng.uniform(lo, hi);
  }

  bool operator==(const DenseMatrix& o) const {
    return rows == o.rows && cols == o.cols && v == o.v;
  }
};

// Named parameter tensors; ordered so that iteration is deterministic.
using ParamMap = std::map<std::string, DenseMatrix>;

inline void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b))
    throw dimension_error(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols));
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "add");
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "sub");
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "hadamard");
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline DenseMatrix scale(const DenseMatrix& a, double s) {
  DenseMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * s;
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols, a.rows);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
  return out;
}

// i-k-j order; inner loop runs over contiguous rows of both b and out.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows)
    throw dimension_error("matmul: inner dims " + std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows));
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* orow = out.row(i);
    const double* arow = a.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double sum_all(const DenseMatrix& a) {
  double s = 0.0;
  for (double x : a.v) s += x;
  return s;
}

inline double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double x : a.v) s += x * x;
  return std::sqrt(s);
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

// Compressed-row sparse matrix. Column indices are strictly increasing within
// each row; values are immutable after construction.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 offsets, nondecreasing
  std::vector<std::uint32_t> col_idx;
  std::vector<double> vals;

  SparseMatrix() = default;

  // Builds from (row, col, value) triplets; duplicates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<std::tuple<std::size_t, std::size_t, double>> t) {
    for (const auto& [r, c, x] : t) {
      (void)x;
      if (r >= rows || c >= cols) throw dimension_error("from_triplets: index out of bounds");
    }
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                              : std::get<1>(a) < std::get<1>(b);
    });
    SparseMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    std::size_t prev_r = rows, prev_c = cols;  // sentinel: matches nothing
    for (const auto& [r, c, x] : t) {
      if (r == prev_r && c == prev_c) {
        m.vals.back() += x;  // duplicate entry
        continue;
      }
      // row_ptr holds per-row counts until the prefix sum below
      m.col_idx.push_back(static_cast<std::uint32_t>(c));
      m.vals.push_back(x);
      m.row_ptr[r + 1]++;
      prev_r = r;
      prev_c = c;
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
  }

  std::size_t nnz() const { return vals.size(); }

  DenseMatrix densify() const {
    DenseMatrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out(r, col_idx[k]) = vals[k];
    return out;
  }

  void validate() const {
    if (row_ptr.size() != rows + 1) throw contract_error("sparse: bad row_ptr length");
    if (row_ptr.front() != 0 || row_ptr.back() != nnz())
      throw contract_error("sparse: bad offsets");
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_ptr[r] > row_ptr[r + 1]) throw contract_error("sparse: decreasing offsets");
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        if (col_idx[k] >= cols) throw contract_error("sparse: column out of bounds");
        if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
          throw contract_error("sparse: columns not strictly increasing");
      }
    }
  }
};

// out = a * b, a sparse.
inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows)
    throw dimension_error("spmm: inner dims " + std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows));
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* orow = out.row(r);
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const double x = a.vals[k];
      const double* brow = b.row(a.col_idx[k]);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

// out = a^T * b, a sparse; used by spmm's backward pass.
inline DenseMatrix spmm_transposed(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows)
    throw dimension_error("spmm_transposed: inner dims " + std::to_string(a.rows) + " vs " +
                          std::to_string(b.rows));
  DenseMatrix out(a.cols, b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* brow = b.row(r);
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const double x = a.vals[k];
      double* orow = out.row(a.col_idx[k]);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

}  // namespace motorec
