#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "edfree/error.hpp"

namespace edfree {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);
  static Mat diagonal(std::span<const double> d);
  static Mat column(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vec col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> v);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Mat& operator+=(const Mat& o);
  Mat& operator-=(const Mat& o);
  Mat& operator*=(double s);

  bool operator==(const Mat& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(Mat a, double s);
Mat operator*(double s, Mat a);
Mat operator*(const Mat& a, const Mat& b);
Vec operator*(const Mat& a, std::span<const double> v);

Mat transpose(const Mat& a);
double trace(const Mat& a);
double frobenius_norm(const Mat& a);
bool all_finite(const Mat& a);
bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
Vec normalized(std::span<const double> v);
Mat outer(std::span<const double> a, std::span<const double> b);
Vec cross(std::span<const double> a, std::span<const double> b);

/// Cross-product matrix [v]x of a 3-vector.
Mat skew(std::span<const double> v);

/// Determinant for 1x1 through 3x3.
double det(const Mat& a);

/// Solves a x = b for 2x2 or 3x3 `a` by partially pivoted elimination.
Vec solve_small(const Mat& a, std::span<const double> b);

/// Inverse of a 3x3 matrix.
Mat inverse3(const Mat& a);

struct SymEigResult {
  Vec values;   // ascending
  Mat vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (d <= 16).
/// Eigenvectors are normalized so their largest-magnitude entry is positive.
SymEigResult sym_eig(const Mat& s);

struct SvdResult {
  Mat u;    // m x r
  Vec s;    // r values, descending
  Mat v;    // n x r
};

/// Thin SVD by one-sided Jacobi (rows <= 512, cols <= 16), r = min(m, n).
SvdResult svd_small(const Mat& a);

/// Nearest rotation in the Frobenius sense, U diag(1, 1, det(UV^T)) V^T.
Mat procrustes_to_rotation(const Mat& m);

}  // namespace edfree
