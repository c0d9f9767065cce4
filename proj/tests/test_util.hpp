#pragma once

#include <algorithm>
#include <cmath>

#include "edfree/linalg.hpp"
#include "edfree/synth.hpp"

namespace tu {

using edfree::CounterRng;
using edfree::Mat;
using edfree::Vec;

inline Mat random_mat(CounterRng& rng, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

inline Mat random_sym(CounterRng& rng, std::size_t d) {
  Mat a = random_mat(rng, d, d);
  return 0.5 * (a + edfree::transpose(a));
}

inline Vec random_unit(CounterRng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  return edfree::normalized(v);
}

/// Rotation from a uniformly random unit quaternion.
inline Mat random_rotation(CounterRng& rng) {
  const Vec q = random_unit(rng, 4);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return Mat{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

template <class F>
Vec fd_grad(Vec x, F&& f, double h = 1e-6) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// max |a - b| / max(max |b|, floor)
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-12) {
  double d = 0, s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    s = std::max(s, std::abs(b[i]));
  }
  return d / std::max(s, floor);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

inline Vec to_vec(const Mat& m) { return Vec(m.data().begin(), m.data().end()); }

}  // namespace tu
