#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <sstream>

#include "edfree/synth.hpp"
#include "edfree/weightnet.hpp"
#include "test_util.hpp"

using namespace edfree;

namespace {

TaskInstance ellipse(std::uint64_t seed, std::uint64_t stream, std::size_t n = 40, std::size_t outliers = 5,
                     double noise = 1e-2) {
  GenConfig g;
  g.variant = Variant::Ellipse;
  g.seed = seed;
  g.stream = stream;
  g.n_points = n;
  g.n_outliers = outliers;
  g.noise_sigma = noise;
  return generate(g);
}

double worst_fd(const NetConfig& cfg, std::uint64_t seed, const std::vector<TaskInstance>& batch, const LossParams& lp) {
  const NetParams p = NetParams::init(cfg, seed);
  Vec g;
  batch_loss_and_grad(p, cfg, batch, lp, &g);
  CounterRng rng(seed, 77);
  double diff = 0, scale = 1e-12;
  for (int k = 0; k < 50; ++k) {
    const std::size_t j = rng.below(p.values.size());
    const double h = 1e-6 * std::max(1.0, std::abs(p.values[j]));
    NetParams a = p, b = p;
    a.values[j] += h;
    b.values[j] -= h;
    const double fd =
        (batch_loss_and_grad(a, cfg, batch, lp, nullptr) - batch_loss_and_grad(b, cfg, batch, lp, nullptr)) / (2 * h);
    diff = std::max(diff, std::abs(fd - g[j]));
    scale = std::max(scale, std::abs(g[j]));
  }
  return diff / scale;
}

}  // namespace

TEST_CASE("config validation and parameter layout") {
  NetConfig c;
  CHECK_NOTHROW(c.validate());
  c.blocks = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.blocks = 1;
  c.out_channels = 2;
  CHECK_THROWS_AS(c.validate(), Error);
  NetConfig d;
  d.in_channels = 2;
  d.blocks = 3;
  d.channels = 32;
  CHECK(d.param_count() == 32 * 2 + 32 + 6 * (32 * 32 + 32) + 32 + 1);
  CHECK(NetParams::init(d, 1).values.size() == d.param_count());
  CHECK(all_finite(NetParams::init(d, 1).values));
}

TEST_CASE("permutation equivariance is exact") {
  NetConfig cfg;
  cfg.out_channels = 3;
  const NetParams p = NetParams::init(cfg, 2);
  const TaskInstance inst = ellipse(1, 0);
  const Mat& x = inst.measurements;
  std::vector<std::size_t> perm(x.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (7 * i + 3) % perm.size();
  Mat xp(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
  const NetOutput a = forward(p, cfg, x), b = forward(p, cfg, xp);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK(std::memcmp(&b.weights[i], &a.weights[perm[i]], sizeof(double)) == 0);
    CHECK(std::memcmp(b.displacements.row(i).data(), a.displacements.row(perm[i]).data(), 2 * sizeof(double)) == 0);
  }
  for (double w : a.weights) {
    CHECK(w > 0.0);
    CHECK(w < 1.0);
  }
}

TEST_CASE("duplicated points get identical outputs") {
  NetConfig cfg;
  const NetParams p = NetParams::init(cfg, 3);
  Mat x = ellipse(2, 0).measurements;
  std::copy(x.row(0).begin(), x.row(0).end(), x.row(5).begin());
  const NetOutput o = forward(p, cfg, x);
  CHECK(o.weights[0] == o.weights[5]);
}

TEST_CASE("context normalization statistics") {
  NetConfig cfg;
  const NetParams p = NetParams::init(cfg, 4);
  ForwardCache cache;
  forward(p, cfg, ellipse(3, 0).measurements, &cache);
  for (const Mat& y : cache.normed) {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      double m = 0, v = 0;
      for (std::size_t i = 0; i < y.rows(); ++i) m += y(i, j);
      m /= y.rows();
      for (std::size_t i = 0; i < y.rows(); ++i) v += (y(i, j) - m) * (y(i, j) - m);
      v /= y.rows();
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1) < 1e-6);
    }
  }
}

TEST_CASE("backward preconditions and zero gradient") {
  NetConfig cfg;
  const NetParams p = NetParams::init(cfg, 5);
  Vec g;
  CHECK_THROWS_AS(backward(p, cfg, ForwardCache{}, Mat(4, 1), g), Error);
  try {
    backward(p, cfg, ForwardCache{}, Mat(4, 1), g);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidState);
  }
  ForwardCache cache;
  const Mat x = ellipse(4, 0).measurements;
  forward(p, cfg, x, &cache);
  backward(p, cfg, cache, Mat(x.rows(), 1), g);
  for (double v : g) CHECK(v == 0.0);
  CHECK_THROWS_AS(forward_batch(p, cfg, {x, ellipse(5, 0, 30).measurements}), Error);
}

TEST_CASE("output layer gradient matches the hand-derived affine and sigmoid chain") {
  NetConfig cfg;
  cfg.blocks = 1;
  cfg.channels = 4;
  const NetParams p = NetParams::init(cfg, 6);
  const Mat x = ellipse(6, 0, 12, 2).measurements;
  ForwardCache cache;
  const NetOutput o = forward(p, cfg, x, &cache);
  // L = sum_i a_i sigmoid(out_i): dL/dout_i = a_i w_i (1 - w_i)
  Vec a(x.rows());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.1 * (i + 1);
  Mat d(x.rows(), 1);
  for (std::size_t i = 0; i < a.size(); ++i) d(i, 0) = a[i] * o.weights[i] * (1 - o.weights[i]);
  Vec g;
  backward(p, cfg, cache, d, g);
  const std::size_t out_w = p.values.size() - cfg.channels - 1;
  double db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) db += d(i, 0);
  CHECK(g.back() == doctest::Approx(db).epsilon(1e-13));
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    double dw = 0;
    for (std::size_t i = 0; i < a.size(); ++i) dw += d(i, 0) * cache.features(i, c);
    CHECK(g[out_w + c] == doctest::Approx(dw).epsilon(1e-12));
  }
}

TEST_CASE("full network gradient matches finite differences") {
  const std::vector<TaskInstance> batch = {ellipse(7, 0), ellipse(7, 1)};
  NetConfig cfg;
  CHECK(worst_fd(cfg, 8, batch, {1, 5e-3, 0}) < 1e-4);
  cfg.out_channels = 3;
  CHECK(worst_fd(cfg, 9, batch, {1, 5e-3, 1e-2}) < 1e-4);
  CounterRng rng(10);
  for (int k = 0; k < 4; ++k) {
    NetConfig small;
    small.blocks = 1 + rng.below(3);
    small.channels = 2 + rng.below(8);
    small.out_channels = rng.below(2) ? 3 : 1;
    CHECK(worst_fd(small, 20 + k, batch, {rng.uniform(0.5, 2), 1e-2, 1e-2}) < 1e-4);
  }
}

TEST_CASE("training: zero epochs, determinism, learning") {
  NetConfig cfg;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  const InstanceGenerator gen = [](std::uint64_t s, std::uint64_t i) { return ellipse(s, i, 40, 8); };
  TrainOptions opt;
  opt.epochs = 0;
  opt.val_instances = 4;
  opt.seed = 3;
  opt.loss = {1, 5e-3, 0};
  const TrainResult zero = train(cfg, gen, opt);
  CHECK(zero.best.values == NetParams::init(cfg, 3).values);
  CHECK(zero.curve.size() == 1);

  opt.epochs = 2;
  opt.batches_per_epoch = 2;
  const TrainResult a = train(cfg, gen, opt), b = train(cfg, gen, opt);
  REQUIRE(a.curve.size() == 3);
  for (std::size_t i = 1; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
    CHECK(a.curve[i].val_error == b.curve[i].val_error);
  }
  CHECK(a.best.values == b.best.values);
  std::ostringstream os;
  write_curve_csv(os, a.curve);
  CHECK(os.str().rfind("epoch,train_loss,val_error\n", 0) == 0);

  const InstanceGenerator single = [](std::uint64_t, std::uint64_t) { return ellipse(42, 0, 60, 12, 0.0); };
  NetConfig c2;
  c2.batch = 8;
  c2.lr = 1e-3;
  TrainOptions o2;
  o2.epochs = 15;
  o2.batches_per_epoch = 5;
  o2.val_instances = 1;
  o2.loss = {1, 5e-3, 0};
  const TrainResult r = train(c2, single, o2);
  CHECK(r.best_val_error * 5 <= r.init_val_error);
}

TEST_CASE("trace regularizer keeps some weights above one half on all-inlier data") {
  NetConfig cfg;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  const InstanceGenerator gen = [](std::uint64_t s, std::uint64_t i) { return ellipse(s, i, 40, 0, 0.0); };
  TrainOptions opt;
  opt.epochs = 3;
  opt.batches_per_epoch = 5;
  opt.val_instances = 2;
  opt.loss = {1, 5e-3, 0};
  const TrainResult r = train(cfg, gen, opt);
  const NetOutput o = forward(r.best, cfg, ellipse(99, 0, 40, 0, 0.0).measurements);
  CHECK(*std::max_element(o.weights.begin(), o.weights.end()) > 0.5);
}

TEST_CASE("checkpoint round trip") {
  NetConfig cfg;
  cfg.out_channels = 3;
  cfg.channels = 8;
  const NetParams p = NetParams::init(cfg, 11);
  std::stringstream ss;
  save_checkpoint(ss, cfg, p);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "EFWN");
  const auto [c2, p2] = load_checkpoint(ss);
  CHECK(c2.channels == 8);
  CHECK(c2.out_channels == 3);
  CHECK(p2.values == p.values);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(load_checkpoint(bad), Error);
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(cut), Error);
}
