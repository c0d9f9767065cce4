#include "edfree/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edfree {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::DegenerateConic: return "DegenerateConic";
    case ErrorCode::DegeneratePose: return "DegeneratePose";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::DegenerateScene: return "DegenerateScene";
    case ErrorCode::DegenerateEigengap: return "DegenerateEigengap";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::AbortNonFinite: return "AbortNonFinite";
  }
  return "Unknown";
}

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorCode::InvalidInput, "Mat: data length != rows*cols");
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, ErrorCode::InvalidInput, "Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(std::span<const double> d) {
  Mat m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Mat Mat::column(std::span<const double> v) { return Mat(v.size(), 1, Vec(v.begin(), v.end())); }

Vec Mat::col(std::size_t c) const {
  Vec out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Mat::set_col(std::size_t c, std::span<const double> v) {
  require(v.size() == rows_, ErrorCode::InvalidInput, "set_col: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

Mat& Mat::operator+=(const Mat& o) {
  require(rows_ == o.rows_ && cols_ == o.cols_, ErrorCode::InvalidInput, "Mat +=: dimension mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& o) {
  require(rows_ == o.rows_ && cols_ == o.cols_, ErrorCode::InvalidInput, "Mat -=: dimension mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator*(Mat a, double s) { return a *= s; }
Mat operator*(double s, Mat a) { return a *= s; }

Mat operator*(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), ErrorCode::InvalidInput, "Mat *: dimension mismatch");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Vec operator*(const Mat& a, std::span<const double> v) {
  require(a.cols() == v.size(), ErrorCode::InvalidInput, "Mat * vec: dimension mismatch");
  Vec out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), v);
  return out;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double trace(const Mat& a) {
  require(a.rows() == a.cols(), ErrorCode::InvalidInput, "trace: matrix not square");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double frobenius_norm(const Mat& a) { return norm(a.data()); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Mat& a) { return all_finite(a.data()); }

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::InvalidInput, "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Vec normalized(std::span<const double> v) {
  const double n = norm(v);
  require(n > 0.0, ErrorCode::InvalidInput, "normalized: zero vector");
  Vec out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

Mat outer(std::span<const double> a, std::span<const double> b) {
  Mat m(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

Vec cross(std::span<const double> a, std::span<const double> b) {
  require(a.size() == 3 && b.size() == 3, ErrorCode::InvalidInput, "cross: need 3-vectors");
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Mat skew(std::span<const double> v) {
  require(v.size() == 3, ErrorCode::InvalidInput, "skew: need a 3-vector");
  return Mat{{0.0, -v[2], v[1]}, {v[2], 0.0, -v[0]}, {-v[1], v[0], 0.0}};
}

double det(const Mat& a) {
  require(a.rows() == a.cols(), ErrorCode::InvalidInput, "det: matrix not square");
  switch (a.rows()) {
    case 1: return a(0, 0);
    case 2: return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    case 3:
      return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
             a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
             a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    default: throw Error(ErrorCode::InvalidInput, "det: only sizes 1..3 supported");
  }
}

Vec solve_small(const Mat& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  require(a.cols() == n && (n == 2 || n == 3), ErrorCode::InvalidInput, "solve_small: need 2x2 or 3x3");
  require(b.size() == n, ErrorCode::InvalidInput, "solve_small: rhs length mismatch");
  Mat m = a;
  Vec x(b.begin(), b.end());
  const double scale = frobenius_norm(a);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m(i, k)) > std::abs(m(piv, k))) piv = i;
    if (std::abs(m(piv, k)) <= 1e-14 * scale || scale == 0.0)
      throw Error(ErrorCode::DegenerateInput, "solve_small: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = m(i, k) / m(k, k);
      for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = x[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= m(k, j) * x[j];
    x[k] = s / m(k, k);
  }
  return x;
}

Mat inverse3(const Mat& a) {
  require(a.rows() == 3 && a.cols() == 3, ErrorCode::InvalidInput, "inverse3: need 3x3");
  const double d = det(a);
  const double scale = frobenius_norm(a);
  if (!(std::abs(d) > 1e-14 * scale * scale * scale))
    throw Error(ErrorCode::InvalidInput, "inverse3: singular matrix");
  Mat inv(3, 3);
  inv(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  inv(0, 1) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
  inv(0, 2) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
  inv(1, 0) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
  inv(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  inv(1, 2) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
  inv(2, 0) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  inv(2, 1) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
  inv(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  return inv * (1.0 / d);
}

namespace {

constexpr std::size_t kMaxSweeps = 64;

// Flip so the largest-magnitude entry (first one on ties) is positive.
void canonical_sign(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0.0)
    for (auto& x : v) x = -x;
}

void canonical_sign_col(Mat& m, std::size_t c) {
  Vec v = m.col(c);
  canonical_sign(v);
  m.set_col(c, v);
}

// Fills column k of u with a unit vector orthogonal to columns [0, k).
void complete_basis(Mat& u, std::size_t k) {
  const std::size_t m = u.rows();
  for (std::size_t j = 0; j < m; ++j) {
    Vec cand(m, 0.0);
    cand[j] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t c = 0; c < k; ++c) {
        double proj = 0.0;
        for (std::size_t r = 0; r < m; ++r) proj += cand[r] * u(r, c);
        for (std::size_t r = 0; r < m; ++r) cand[r] -= proj * u(r, c);
      }
    }
    const double n = norm(cand);
    if (n > 0.5) {
      for (std::size_t r = 0; r < m; ++r) u(r, k) = cand[r] / n;
      return;
    }
  }
  throw Error(ErrorCode::NotConverged, "complete_basis: no candidate direction");
}

}  // namespace

SymEigResult sym_eig(const Mat& s) {
  const std::size_t d = s.rows();
  require(s.cols() == d && d >= 1, ErrorCode::InvalidInput, "sym_eig: matrix not square");
  require(d <= 16, ErrorCode::InvalidInput, "sym_eig: dimension above 16");
  require(all_finite(s), ErrorCode::InvalidInput, "sym_eig: non-finite entries");
  const double fro = frobenius_norm(s);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-12 * fro)
        throw Error(ErrorCode::InvalidInput, "sym_eig: matrix not symmetric");

  Mat a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));
  Mat v = Mat::identity(d);

  const double tol = 1e-14 * fro;
  bool converged = false;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off = std::max(off, std::abs(a(p, q)));
    if (off <= tol) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= tol) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          if (r == p || r == q) continue;
          const double g = a(r, p);
          const double h = a(r, q);
          a(r, p) = a(p, r) = c * g - sn * h;
          a(r, q) = a(q, r) = sn * g + c * h;
        }
        for (std::size_t r = 0; r < d; ++r) {
          const double g = v(r, p);
          const double h = v(r, q);
          v(r, p) = c * g - sn * h;
          v(r, q) = sn * g + c * h;
        }
      }
    }
  }
  if (!converged) throw Error(ErrorCode::NotConverged, "sym_eig: Jacobi sweep cap reached");

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  SymEigResult out{Vec(d), Mat(d, d)};
  for (std::size_t k = 0; k < d; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < d; ++r) out.vectors(r, k) = v(r, order[k]);
    canonical_sign_col(out.vectors, k);
  }
  return out;
}

namespace {

// One-sided Jacobi for m >= n.
SvdResult svd_tall(const Mat& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Mat u = a;
  Mat v = Mat::identity(n);
  bool converged = false;
  for (std::size_t sweep = 0; sweep < 2 * kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += u(i, p) * u(i, p);
          beta += u(i, q) * u(i, q);
          gamma += u(i, p) * u(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u(i, p);
          const double uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw Error(ErrorCode::NotConverged, "svd_small: Jacobi sweep cap reached");

  Vec sv(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) s2 += u(i, k) * u(i, k);
    sv[k] = std::sqrt(s2);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sv[i] > sv[j]; });

  SvdResult out{Mat(m, n), Vec(n), Mat(n, n)};
  const double smax = sv[order[0]];
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.s[k] = sv[src];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, src);
    if (sv[src] > 1e-13 * smax && sv[src] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = u(i, src) / sv[src];
    } else {
      complete_basis(out.u, k);
    }
  }
  return out;
}

}  // namespace

SvdResult svd_small(const Mat& a) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorCode::InvalidInput, "svd_small: empty matrix");
  require(a.rows() <= 512 && a.cols() <= 16, ErrorCode::InvalidInput, "svd_small: matrix too large");
  require(all_finite(a), ErrorCode::InvalidInput, "svd_small: non-finite entries");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(transpose(a));
  return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
}

Mat procrustes_to_rotation(const Mat& m) {
  require(m.rows() == 3 && m.cols() == 3, ErrorCode::InvalidInput, "procrustes: need 3x3");
  const SvdResult svd = svd_small(m);
  if (!(svd.s[0] > 0.0) || svd.s[1] <= 1e-12 * svd.s[0])
    throw Error(ErrorCode::DegenerateInput, "procrustes: rank below 2");
  const Mat vt = transpose(svd.v);
  const double d = det(svd.u * vt) < 0.0 ? -1.0 : 1.0;
  const double diag[3] = {1.0, 1.0, d};
  return svd.u * Mat::diagonal(diag) * vt;
}

}  // namespace edfree
