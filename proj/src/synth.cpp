#include "edfree/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

namespace edfree {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr int kMaxRetries = 1000;

Vec random_unit3(CounterRng& rng) {
  for (;;) {
    Vec v = {rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-12) {
      for (auto& x : v) x /= n;
      return v;
    }
  }
}

Mat random_rotation(CounterRng& rng) {
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& x : q) {
      x = rng.normal();
      n += x * x;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return Mat{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

// First n_outliers entries of a partial Fisher-Yates shuffle.
std::vector<std::uint8_t> choose_inlier_mask(CounterRng& rng, std::size_t n, std::size_t n_outliers) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<std::uint8_t> mask(n, 1);
  for (std::size_t k = 0; k < n_outliers; ++k) {
    const std::size_t j = k + rng.below(n - k);
    std::swap(idx[k], idx[j]);
    mask[idx[k]] = 0;
  }
  return mask;
}

bool inside(const Camera& cam, double px, double py) {
  return px >= 0.0 && px < cam.width && py >= 0.0 && py < cam.height;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(seed ^ splitmix64(stream ^ 0x632BE59BD9B4E019ULL))) {}

std::uint64_t CounterRng::next_u64() { return splitmix64(key_ + kGolden * counter_++); }

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double CounterRng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  return r * std::cos(a);
}

std::size_t CounterRng::below(std::size_t n) {
  require(n > 0, ErrorCode::InvalidInput, "CounterRng::below: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do x = next_u64();
  while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t GenConfig::points() const {
  if (n_points) return *n_points;
  switch (variant) {
    case Variant::Plane: return 100;
    case Variant::Stereo: return 100;
    default: return 200;
  }
}

double GenConfig::sigma() const {
  if (noise_sigma) return *noise_sigma;
  switch (variant) {
    case Variant::Plane: return 1e-3;
    case Variant::Ellipse: return 1e-2;
    case Variant::Pnp: return 5.0;
    case Variant::Stereo: return 1.0;
  }
  return 0.0;
}

void GenConfig::validate() const {
  require(n_outliers <= points(), ErrorCode::InvalidInput, "GenConfig: more outliers than points");
  require(std::isfinite(sigma()) && sigma() >= 0.0, ErrorCode::InvalidInput, "GenConfig: noise must be >= 0");
  const std::size_t inliers = variant == Variant::Plane ? points() : points() - n_outliers;
  require(inliers >= minimal_sample(variant), ErrorCode::InvalidInput, "GenConfig: too few inliers");
}

TaskInstance gen_plane(const GenConfig& cfg) {
  require(cfg.variant == Variant::Plane, ErrorCode::InvalidInput, "gen_plane: variant mismatch");
  cfg.validate();
  CounterRng rng(cfg.seed, cfg.stream);
  const std::size_t n_in = cfg.points();
  const std::size_t n = n_in + cfg.n_outliers;
  TaskInstance inst;
  inst.variant = Variant::Plane;
  inst.measurements = Mat(n, 3);
  inst.inlier_mask.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    inst.measurements(i, 0) = rng.uniform(0.0, 40.0);
    inst.measurements(i, 1) = rng.uniform(0.0, 2.0);
    if (i < n_in) {
      inst.measurements(i, 2) = 1.0 + cfg.sigma() * rng.normal();
    } else {
      inst.measurements(i, 2) = 50.0 + rng.normal();
      inst.inlier_mask[i] = 0;
    }
  }
  inst.ground_truth = PlaneModel{{0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}};
  return inst;
}

TaskInstance gen_ellipse(const GenConfig& cfg) {
  require(cfg.variant == Variant::Ellipse, ErrorCode::InvalidInput, "gen_ellipse: variant mismatch");
  cfg.validate();
  CounterRng rng(cfg.seed, cfg.stream);
  const double cx = rng.uniform(-0.5, 0.5);
  const double cy = rng.uniform(-0.5, 0.5);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double a = rng.uniform(0.2, 1.0);
  const double b = rng.uniform(0.2, 1.0);
  const EllipseParams gt = ellipse_from_geometry(cx, cy, a, b, angle);
  const double cs = std::cos(angle), sn = std::sin(angle);
  const double sigma = cfg.sigma();

  const std::size_t n = cfg.points();
  TaskInstance inst;
  inst.variant = Variant::Ellipse;
  inst.measurements = Mat(n, 2);
  inst.inlier_mask = choose_inlier_mask(rng, n, cfg.n_outliers);
  for (std::size_t i = 0; i < n; ++i) {
    if (inst.inlier_mask[i]) {
      const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double ex = a * std::cos(th), ey = b * std::sin(th);
      inst.measurements(i, 0) = cx + cs * ex - sn * ey + sigma * rng.normal();
      inst.measurements(i, 1) = cy + sn * ex + cs * ey + sigma * rng.normal();
    } else {
      for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        inst.measurements(i, 0) = rng.uniform(-1.0, 1.0);
        inst.measurements(i, 1) = rng.uniform(-1.0, 1.0);
        if (conic_sampson_distance(gt.coeffs, inst.measurements(i, 0), inst.measurements(i, 1)) >= 10.0 * sigma)
          break;
      }
    }
  }
  inst.ground_truth = gt;
  return inst;
}

TaskInstance gen_pnp(const GenConfig& cfg) {
  require(cfg.variant == Variant::Pnp, ErrorCode::InvalidInput, "gen_pnp: variant mismatch");
  cfg.validate();
  CounterRng rng(cfg.seed, cfg.stream);
  const Camera& cam = cfg.camera;
  const double sigma = cfg.sigma();
  const std::size_t n = cfg.points();
  const Mat r = random_rotation(rng);

  TaskInstance inst;
  inst.variant = Variant::Pnp;
  inst.camera = cam;
  inst.inlier_mask = choose_inlier_mask(rng, n, cfg.n_outliers);
  Mat xc(n, 3);
  inst.pixels = Mat(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      xc(i, 0) = rng.uniform(-2.0, 2.0);
      xc(i, 1) = rng.uniform(-2.0, 2.0);
      xc(i, 2) = rng.uniform(4.0, 8.0);
      const double px = cam.focal * xc(i, 0) / xc(i, 2) + cam.cx;
      const double py = cam.focal * xc(i, 1) / xc(i, 2) + cam.cy;
      if (inst.inlier_mask[i]) {
        inst.pixels(i, 0) = px + sigma * rng.normal();
        inst.pixels(i, 1) = py + sigma * rng.normal();
        ok = xc(i, 2) > 0.0 && inside(cam, inst.pixels(i, 0), inst.pixels(i, 1));
      } else {
        for (int k = 0; k < kMaxRetries; ++k) {
          inst.pixels(i, 0) = rng.uniform(0.0, cam.width);
          inst.pixels(i, 1) = rng.uniform(0.0, cam.height);
          if (std::hypot(inst.pixels(i, 0) - px, inst.pixels(i, 1) - py) >= 10.0 * sigma) break;
        }
        ok = xc(i, 2) > 0.0;
      }
    }
    if (!ok) throw Error(ErrorCode::DegenerateScene, "gen_pnp: could not place a visible point");
  }
  Vec t(3, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) t[k] += xc(i, k) / static_cast<double>(n);
  inst.measurements = Mat(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec d = {xc(i, 0) - t[0], xc(i, 1) - t[1], xc(i, 2) - t[2]};
    for (std::size_t k = 0; k < 3; ++k) inst.measurements(i, k) = r(0, k) * d[0] + r(1, k) * d[1] + r(2, k) * d[2];
    inst.measurements(i, 3) = (inst.pixels(i, 0) - cam.cx) / cam.focal;
    inst.measurements(i, 4) = (inst.pixels(i, 1) - cam.cy) / cam.focal;
  }
  inst.ground_truth = Pose{r, t};
  return inst;
}

TaskInstance gen_stereo(const GenConfig& cfg) {
  require(cfg.variant == Variant::Stereo, ErrorCode::InvalidInput, "gen_stereo: variant mismatch");
  cfg.validate();
  require(cfg.stereo_baseline > 0.0, ErrorCode::InvalidInput, "gen_stereo: baseline must be positive");
  CounterRng rng(cfg.seed, cfg.stream);
  const Camera& cam = cfg.camera;
  const double sigma = cfg.sigma();
  const std::size_t n = cfg.points();

  const Vec axis = random_unit3(rng);
  const Mat r = rotation_from_axis_angle(axis, cfg.stereo_rotation_deg * std::numbers::pi / 180.0);
  Vec t = random_unit3(rng);
  for (auto& x : t) x *= cfg.stereo_baseline;
  const Mat e = skew(t) * r;
  EssentialMat e_gt{Mat(3, 3, normalized(e.data()))};

  TaskInstance inst;
  inst.variant = Variant::Stereo;
  inst.camera = cam;
  inst.inlier_mask = choose_inlier_mask(rng, n, cfg.n_outliers);
  inst.pixels = Mat(n, 4);
  inst.measurements = Mat(n, 4);
  auto to_norm = [&](std::size_t i) {
    inst.measurements(i, 0) = (inst.pixels(i, 0) - cam.cx) / cam.focal;
    inst.measurements(i, 1) = (inst.pixels(i, 1) - cam.cy) / cam.focal;
    inst.measurements(i, 2) = (inst.pixels(i, 2) - cam.cx) / cam.focal;
    inst.measurements(i, 3) = (inst.pixels(i, 3) - cam.cy) / cam.focal;
  };
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      const Vec x1 = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(4.0, 8.0)};
      Vec x2 = r * x1;
      for (std::size_t k = 0; k < 3; ++k) x2[k] += t[k];
      if (x2[2] <= 0.0) continue;
      inst.pixels(i, 0) = cam.focal * x1[0] / x1[2] + cam.cx + sigma * rng.normal();
      inst.pixels(i, 1) = cam.focal * x1[1] / x1[2] + cam.cy + sigma * rng.normal();
      inst.pixels(i, 2) = cam.focal * x2[0] / x2[2] + cam.cx + sigma * rng.normal();
      inst.pixels(i, 3) = cam.focal * x2[1] / x2[2] + cam.cy + sigma * rng.normal();
      ok = inside(cam, inst.pixels(i, 0), inst.pixels(i, 1)) && inside(cam, inst.pixels(i, 2), inst.pixels(i, 3));
    }
    if (!ok) throw Error(ErrorCode::DegenerateScene, "gen_stereo: could not place a point visible in both views");
    if (!inst.inlier_mask[i]) {
      for (int k = 0; k < kMaxRetries; ++k) {
        inst.pixels(i, 2) = rng.uniform(0.0, cam.width);
        inst.pixels(i, 3) = rng.uniform(0.0, cam.height);
        to_norm(i);
        if (symmetric_epipolar_distance(e_gt.e, inst.measurements.row(i)) >= 10.0 * sigma / cam.focal) break;
      }
    }
    to_norm(i);
  }
  inst.ground_truth = StereoTruth{e_gt, Pose{r, t}};
  return inst;
}

TaskInstance generate(const GenConfig& cfg) {
  switch (cfg.variant) {
    case Variant::Plane: return gen_plane(cfg);
    case Variant::Ellipse: return gen_ellipse(cfg);
    case Variant::Pnp: return gen_pnp(cfg);
    case Variant::Stereo: return gen_stereo(cfg);
  }
  throw Error(ErrorCode::InvalidInput, "generate: unknown variant");
}

namespace {

void write_values(std::ostream& os, std::span<const double> v) {
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.17g", x);
    os << buf;
  }
}

Vec read_values(std::istream& line, std::size_t n) {
  Vec v(n);
  for (auto& x : v) {
    std::string tok;
    if (!(line >> tok)) throw Error(ErrorCode::InvalidInput, "read_instance: truncated line");
    x = std::stod(tok);
  }
  return v;
}

std::istringstream next_line(std::istream& is, std::string_view key) {
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k == "config") continue;
    if (k != key) throw Error(ErrorCode::InvalidInput, "read_instance: expected '" + std::string(key) + "'");
    return ls;
  }
  throw Error(ErrorCode::InvalidInput, "read_instance: unexpected end of input");
}

}  // namespace

void write_instance(std::ostream& os, const TaskInstance& inst, const GenConfig* cfg) {
  os << "edfree-instance 1\n";
  if (cfg) {
    os << "config seed " << cfg->seed << "\n";
    os << "config stream " << cfg->stream << "\n";
    os << "config n_points " << cfg->points() << "\n";
    os << "config n_outliers " << cfg->n_outliers << "\n";
    os << "config noise_sigma";
    write_values(os, Vec{cfg->sigma()});
    os << "\n";
  }
  os << "variant " << to_string(inst.variant) << "\n";
  os << "size " << inst.size() << " " << inst.pixels.cols() << "\n";
  os << "camera";
  write_values(os, Vec{inst.camera.focal, inst.camera.cx, inst.camera.cy, inst.camera.width, inst.camera.height});
  os << "\ntruth";
  switch (inst.variant) {
    case Variant::Plane: {
      const auto& p = std::get<PlaneModel>(inst.ground_truth);
      write_values(os, p.normal);
      write_values(os, p.point);
      break;
    }
    case Variant::Ellipse: write_values(os, std::get<EllipseParams>(inst.ground_truth).coeffs); break;
    case Variant::Pnp: {
      const auto& p = std::get<Pose>(inst.ground_truth);
      write_values(os, p.r.data());
      write_values(os, p.t);
      break;
    }
    case Variant::Stereo: {
      const auto& s = std::get<StereoTruth>(inst.ground_truth);
      write_values(os, s.essential.e.data());
      write_values(os, s.relative.r.data());
      write_values(os, s.relative.t);
      break;
    }
  }
  os << "\n";
  for (std::size_t i = 0; i < inst.size(); ++i) {
    os << "m " << static_cast<int>(inst.inlier_mask[i]);
    write_values(os, inst.measurements.row(i));
    if (!inst.pixels.empty()) write_values(os, inst.pixels.row(i));
    os << "\n";
  }
}

TaskInstance read_instance(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header != "edfree-instance 1")
    throw Error(ErrorCode::InvalidInput, "read_instance: bad header");
  TaskInstance inst;
  {
    auto ls = next_line(is, "variant");
    std::string name;
    ls >> name;
    inst.variant = variant_from_string(name);
  }
  std::size_t n = 0, pcols = 0;
  {
    auto ls = next_line(is, "size");
    if (!(ls >> n >> pcols)) throw Error(ErrorCode::InvalidInput, "read_instance: bad size line");
  }
  {
    auto ls = next_line(is, "camera");
    const Vec c = read_values(ls, 5);
    inst.camera = Camera{c[0], c[1], c[2], c[3], c[4]};
  }
  {
    auto ls = next_line(is, "truth");
    switch (inst.variant) {
      case Variant::Plane: {
        const Vec v = read_values(ls, 6);
        inst.ground_truth = PlaneModel{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
        break;
      }
      case Variant::Ellipse: {
        const Vec v = read_values(ls, 6);
        EllipseParams p;
        std::ranges::copy(v, p.coeffs.begin());
        inst.ground_truth = p;
        break;
      }
      case Variant::Pnp: {
        const Vec v = read_values(ls, 12);
        inst.ground_truth = Pose{Mat(3, 3, Vec(v.begin(), v.begin() + 9)), Vec(v.begin() + 9, v.end())};
        break;
      }
      case Variant::Stereo: {
        const Vec v = read_values(ls, 21);
        inst.ground_truth = StereoTruth{EssentialMat{Mat(3, 3, Vec(v.begin(), v.begin() + 9))},
                                        Pose{Mat(3, 3, Vec(v.begin() + 9, v.begin() + 18)), Vec(v.begin() + 18, v.end())}};
        break;
      }
    }
  }
  const std::size_t width = measurement_width(inst.variant);
  inst.measurements = Mat(n, width);
  if (pcols) inst.pixels = Mat(n, pcols);
  inst.inlier_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ls = next_line(is, "m");
    int mask = 0;
    if (!(ls >> mask)) throw Error(ErrorCode::InvalidInput, "read_instance: bad mask");
    inst.inlier_mask[i] = static_cast<std::uint8_t>(mask != 0);
    const Vec v = read_values(ls, width + pcols);
    for (std::size_t k = 0; k < width; ++k) inst.measurements(i, k) = v[k];
    for (std::size_t k = 0; k < pcols; ++k) inst.pixels(i, k) = v[width + k];
  }
  return inst;
}

}  // namespace edfree
