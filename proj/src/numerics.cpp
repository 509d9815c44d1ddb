#include "gatepro/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gatepro {

namespace {

bool finite_range(const std::vector<double>& xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

Vec::Vec(std::vector<double> values) : data_(std::move(values)) {
  if (!finite_range(data_)) {
    throw ContractViolation("Vec: non-finite entry");
  }
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractViolation("Mat: data length does not match rows*cols");
  }
  if (!finite_range(data_)) {
    throw ContractViolation("Mat: non-finite entry");
  }
}

bool all_finite(const Vec& v) { return finite_range(v.data()); }
bool all_finite(const Mat& m) { return finite_range(m.data()); }

Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols() != v.size()) {
    throw ContractViolation("matvec: dimension mismatch");
  }
  Vec result(m.rows());
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      acc += row[j] * v[j];
    }
    result[i] = acc;
  }
  return result;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
  if (m.rows() != v.size()) {
    throw ContractViolation("matvec_transposed: dimension mismatch");
  }
  Vec result(m.cols());
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    const double vi = v[i];
    for (std::size_t j = 0; j < cols; ++j) {
      result[j] += vi * row[j];
    }
  }
  return result;
}

void add_outer(Mat& acc, const Vec& a, const Vec& b) {
  if (acc.rows() != a.size() || acc.cols() != b.size()) {
    throw ContractViolation("add_outer: dimension mismatch");
  }
  const std::size_t cols = acc.cols();
  for (std::size_t i = 0; i < a.size(); ++i) {
    double* row = acc.row(i);
    const double ai = a[i];
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] += ai * b[j];
    }
  }
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw ContractViolation("dot: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Mat& m) {
  double acc = 0.0;
  for (double x : m.data()) acc += x * x;
  return std::sqrt(acc);
}

std::vector<int> top_k_indices(const Vec& values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k > n) {
    throw ContractViolation("top_k_indices: k out of range");
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Vec softmax_over(const Vec& values, const std::vector<int>& subset) {
  if (subset.empty()) {
    throw ContractViolation("softmax_over: empty subset");
  }
  const std::size_t n = values.size();
  std::vector<char> seen(n, 0);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i : subset) {
    if (i < 0 || static_cast<std::size_t>(i) >= n) {
      throw ContractViolation("softmax_over: index out of range");
    }
    if (seen[i]) {
      throw ContractViolation("softmax_over: duplicate index");
    }
    seen[i] = 1;
    mx = std::max(mx, values[i]);
  }
  Vec result(n);
  double sum = 0.0;
  for (int i : subset) {
    const double e = std::exp(values[i] - mx);
    result[i] = e;
    sum += e;
  }
  for (int i : subset) {
    result[i] /= sum;
  }
  return result;
}

Vec softmax_full(const Vec& values) {
  if (values.size() == 0) {
    throw ContractViolation("softmax_full: empty input");
  }
  const std::size_t n = values.size();
  double mx = values[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, values[i]);
  Vec result(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(values[i] - mx);
    result[i] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < n; ++i) result[i] /= sum;
  return result;
}

namespace {

double off_diagonal_norm(const Mat& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) acc += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(acc);
}

}  // namespace

SymEig sym_eig(const Mat& m) {
  if (m.rows() != m.cols()) {
    throw ContractViolation("sym_eig: matrix not square");
  }
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-12) {
        throw ContractViolation("sym_eig: matrix not symmetric");
      }
    }
  }

  Mat a = m;
  Mat v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  const double tol = 1e-12;
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diagonal_norm(a) < tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = akp - s * (akq + tau * akp);
          a(p, k) = a(k, p);
          a(k, q) = akq + s * (akp - tau * akq);
          a(q, k) = a(k, q);
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = vkp - s * (vkq + tau * vkp);
          v(k, q) = vkq + s * (vkp - tau * vkq);
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return a(x, x) > a(y, y);
  });

  SymEig result;
  result.values = Vec(n);
  result.vectors = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const int src = order[j];
    result.values[j] = a(src, src);
    for (std::size_t i = 0; i < n; ++i) {
      result.vectors(i, j) = v(i, src);
    }
  }
  return result;
}

Vec sym_eigenvalues(const Mat& m) { return sym_eig(m).values; }

}  // namespace gatepro
