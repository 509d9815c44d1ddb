#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "gatepro/errors.hpp"

namespace gatepro {

/// Dense vector of 64-bit reals. Entries are checked finite when the
/// vector is constructed from existing values.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n) : data_(n, 0.0) {}
  explicit Vec(std::vector<double> values);
  Vec(std::initializer_list<double> values)
      : Vec(std::vector<double>(values)) {}

  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Vec& other) const = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of 64-bit reals, finite on checked construction.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Mat& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// -- linear algebra primitives ------------------------------------------

/// result[i] = sum_j m(i,j) * v[j]
Vec matvec(const Mat& m, const Vec& v);

/// result[j] = sum_i m(i,j) * v[i]
Vec matvec_transposed(const Mat& m, const Vec& v);

/// acc += a * b^T
void add_outer(Mat& acc, const Vec& a, const Vec& b);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);
double frobenius_norm(const Mat& m);

/// Indices of the k entries maximizing the selected sum. Ties break toward
/// the lowest index; the result is sorted ascending.
std::vector<int> top_k_indices(const Vec& values, int k);

/// Softmax normalized over `subset` only (max-subtracted for stability);
/// entries outside the subset are zero.
Vec softmax_over(const Vec& values, const std::vector<int>& subset);

/// Softmax over all entries.
Vec softmax_full(const Vec& values);

struct SymEig {
  Vec values;   // descending
  Mat vectors;  // column j pairs with values[j]
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
/// swept until the off-diagonal Frobenius norm drops below 1e-12.
SymEig sym_eig(const Mat& m);

/// Eigenvalues of a symmetric matrix, descending.
Vec sym_eigenvalues(const Mat& m);

}  // namespace gatepro
