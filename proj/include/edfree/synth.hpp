#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "edfree/geometry.hpp"

namespace edfree {

/// Counter-based generator: output k of stream (seed, stream) is a keyed
/// SplitMix64 finalizer applied to k, so any stream can be derived independently.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();   // Box-Muller, standard normal
  std::size_t below(std::size_t n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// n_points and noise_sigma fall back to per-variant defaults when unset.
/// Plane: n_points counts inliers and outliers are appended; other variants:
/// n_outliers of the n_points measurements are outliers.
struct GenConfig {
  Variant variant = Variant::Plane;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::optional<std::size_t> n_points;
  std::size_t n_outliers = 0;
  std::optional<double> noise_sigma;  // world units for plane/ellipse, pixels for PnP/stereo
  double stereo_rotation_deg = 15.0;
  double stereo_baseline = 1.0;
  Camera camera;

  std::size_t points() const;
  double sigma() const;
  void validate() const;
};

TaskInstance gen_plane(const GenConfig& cfg);
TaskInstance gen_ellipse(const GenConfig& cfg);
TaskInstance gen_pnp(const GenConfig& cfg);
TaskInstance gen_stereo(const GenConfig& cfg);
TaskInstance generate(const GenConfig& cfg);

/// Line-oriented fixture format: a header line, optional "config" lines,
/// camera and ground truth, then one measurement per line (mask, values, pixels).
void write_instance(std::ostream& os, const TaskInstance& inst, const GenConfig* cfg = nullptr);
TaskInstance read_instance(std::istream& is);

}  // namespace edfree
