#include "edfree/weightnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "edfree/fitting.hpp"
#include "edfree/optim.hpp"
#include "edfree/synth.hpp"

namespace edfree {

void NetConfig::validate() const {
  require(in_channels >= 1, ErrorCode::InvalidInput, "in_channels must be >= 1");
  require(blocks >= 1, ErrorCode::InvalidInput, "blocks must be >= 1");
  require(channels >= 1, ErrorCode::InvalidInput, "channels must be >= 1");
  require(out_channels == 1 || out_channels == 3, ErrorCode::InvalidInput, "out_channels must be 1 or 3");
  require(std::isfinite(lr) && lr > 0.0, ErrorCode::InvalidInput, "lr must be positive");
  require(batch >= 1, ErrorCode::InvalidInput, "batch must be >= 1");
  require(cn_eps >= 0.0 && std::isfinite(cn_eps), ErrorCode::InvalidInput, "cn_eps must be non-negative");
}

std::size_t NetConfig::param_count() const {
  const std::size_t c = channels;
  return c * in_channels + c + blocks * 2 * (c * c + c) + out_channels * c + out_channels;
}

namespace {

struct Layout {
  std::size_t in_w, in_b;
  std::vector<std::size_t> w, b;  // per hidden layer, 2 per block
  std::size_t out_w, out_b;
};

Layout layout(const NetConfig& cfg) {
  Layout l;
  const std::size_t c = cfg.channels;
  std::size_t off = 0;
  l.in_w = off;
  off += c * cfg.in_channels;
  l.in_b = off;
  off += c;
  for (std::size_t k = 0; k < 2 * cfg.blocks; ++k) {
    l.w.push_back(off);
    off += c * c;
    l.b.push_back(off);
    off += c;
  }
  l.out_w = off;
  off += cfg.out_channels * c;
  l.out_b = off;
  return l;
}

// y = x W^T + b with W stored (out x in) row-major.
Mat affine(const Mat& x, const double* w, const double* b, std::size_t out) {
  const std::size_t n = x.rows(), in = x.cols();
  Mat y(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    double* yi = y.row(i).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double s = b[o];
      for (std::size_t k = 0; k < in; ++k) s += wo[k] * xi[k];
      yi[o] = s;
    }
  }
  return y;
}

// Accumulates dW += dy^T x, db += colsum(dy); returns dx = dy W.
Mat affine_back(const Mat& x, const Mat& dy, const double* w, double* dw, double* db, bool need_dx) {
  const std::size_t n = x.rows(), in = x.cols(), out = dy.cols();
  Mat dx = need_dx ? Mat(n, in) : Mat();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    const double* gi = dy.row(i).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gi[o];
      if (g == 0.0) continue;
      db[o] += g;
      double* dwo = dw + o * in;
      for (std::size_t k = 0; k < in; ++k) dwo[k] += g * xi[k];
      if (need_dx) {
        const double* wo = w + o * in;
        double* dxi = dx.row(i).data();
        for (std::size_t k = 0; k < in; ++k) dxi[k] += g * wo[k];
      }
    }
  }
  return dx;
}

// Sum whose result depends only on the multiset of values.
double ordered_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void context_norm(const Mat& z, double eps, Mat& y, Vec& inv_std) {
  const std::size_t n = z.rows(), c = z.cols();
  y = Mat(n, c);
  inv_std.assign(c, 0.0);
  std::vector<double> buf(n);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = z(i, j);
    const double mu = ordered_sum(buf) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = z(i, j) - mu;
      buf[i] = d * d;
    }
    const double var = ordered_sum(buf) / static_cast<double>(n);
    const double denom = std::sqrt(var + eps);
    const double inv = denom > 0.0 ? 1.0 / denom : 0.0;
    inv_std[j] = inv;
    for (std::size_t i = 0; i < n; ++i) y(i, j) = (z(i, j) - mu) * inv;
  }
}

Mat context_norm_back(const Mat& y, const Vec& inv_std, const Mat& dy) {
  const std::size_t n = y.rows(), c = y.cols();
  Mat dz(n, c);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < c; ++j) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s1 += dy(i, j);
      s2 += dy(i, j) * y(i, j);
    }
    s1 *= inv_n;
    s2 *= inv_n;
    for (std::size_t i = 0; i < n; ++i) dz(i, j) = inv_std[j] * (dy(i, j) - s1 - y(i, j) * s2);
  }
  return dz;
}

Mat relu(const Mat& x) {
  Mat y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

}  // namespace

NetParams NetParams::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Layout l = layout(cfg);
  NetParams p;
  p.values.assign(cfg.param_count(), 0.0);
  CounterRng rng(seed, 0x4E4554);
  auto fill = [&](std::size_t off, std::size_t count, double scale) {
    for (std::size_t k = 0; k < count; ++k) p.values[off + k] = scale * rng.normal();
  };
  const double c = static_cast<double>(cfg.channels);
  fill(l.in_w, cfg.channels * cfg.in_channels, std::sqrt(2.0 / static_cast<double>(cfg.in_channels)));
  for (std::size_t k = 0; k < l.w.size(); ++k) fill(l.w[k], cfg.channels * cfg.channels, std::sqrt(2.0 / c));
  fill(l.out_w, cfg.out_channels * cfg.channels, std::sqrt(1.0 / c));
  return p;
}

NetOutput forward(const NetParams& params, const NetConfig& cfg, const Mat& points, ForwardCache* cache) {
  cfg.validate();
  require(params.values.size() == cfg.param_count(), ErrorCode::InvalidInput, "parameter count does not match config");
  require(points.cols() == cfg.in_channels, ErrorCode::InvalidInput, "input width does not match in_channels");
  require(points.rows() >= 1, ErrorCode::InvalidInput, "empty instance");
  const Layout l = layout(cfg);
  const double* p = params.values.data();
  const std::size_t c = cfg.channels;

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc = ForwardCache{};
  fc.n = points.rows();
  fc.input = points;

  Mat h = affine(points, p + l.in_w, p + l.in_b, c);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    fc.block_in.push_back(h);
    Mat x = h;
    for (std::size_t s = 0; s < 2; ++s) {
      const std::size_t k = 2 * b + s;
      fc.act.push_back(x);
      Mat z = affine(x, p + l.w[k], p + l.b[k], c);
      Mat y;
      Vec inv;
      context_norm(z, cfg.cn_eps, y, inv);
      x = relu(y);
      fc.pre.push_back(std::move(z));
      fc.normed.push_back(std::move(y));
      fc.inv_std.push_back(std::move(inv));
    }
    x += h;
    h = std::move(x);
  }
  fc.features = h;
  fc.out = affine(h, p + l.out_w, p + l.out_b, cfg.out_channels);

  NetOutput out;
  const std::size_t n = points.rows();
  out.logits.resize(n);
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.logits[i] = fc.out(i, 0);
    out.weights[i] = sigmoid(fc.out(i, 0));
  }
  if (cfg.out_channels == 3) {
    out.displacements = Mat(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      out.displacements(i, 0) = cfg.displacement_scale * fc.out(i, 1);
      out.displacements(i, 1) = cfg.displacement_scale * fc.out(i, 2);
    }
  }
  return out;
}

std::vector<NetOutput> forward_batch(const NetParams& params, const NetConfig& cfg, const std::vector<Mat>& batch,
                                     std::vector<ForwardCache>* caches) {
  require(!batch.empty(), ErrorCode::InvalidInput, "empty batch");
  for (const Mat& m : batch)
    require(m.rows() == batch.front().rows(), ErrorCode::InvalidInput, "ragged batch: point counts differ");
  std::vector<NetOutput> outs;
  if (caches) caches->assign(batch.size(), ForwardCache{});
  for (std::size_t i = 0; i < batch.size(); ++i)
    outs.push_back(forward(params, cfg, batch[i], caches ? &(*caches)[i] : nullptr));
  return outs;
}

void backward(const NetParams& params, const NetConfig& cfg, const ForwardCache& cache, const Mat& d_out, Vec& grad) {
  require(cache.n > 0 && cache.act.size() == 2 * cfg.blocks && !cache.out.empty(), ErrorCode::InvalidState,
          "backward called without a forward cache");
  require(d_out.rows() == cache.n && d_out.cols() == cfg.out_channels, ErrorCode::InvalidInput,
          "output gradient shape mismatch");
  if (grad.size() != params.values.size()) grad.assign(params.values.size(), 0.0);
  const Layout l = layout(cfg);
  const double* p = params.values.data();
  double* g = grad.data();

  Mat dh = affine_back(cache.features, d_out, p + l.out_w, g + l.out_w, g + l.out_b, true);
  for (std::size_t b = cfg.blocks; b-- > 0;) {
    Mat dx = dh;
    for (std::size_t s = 2; s-- > 0;) {
      const std::size_t k = 2 * b + s;
      const Mat& y = cache.normed[k];
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(y.data()[i] > 0.0)) dx.data()[i] = 0.0;
      Mat dz = context_norm_back(y, cache.inv_std[k], dx);
      dx = affine_back(cache.act[k], dz, p + l.w[k], g + l.w[k], g + l.b[k], true);
    }
    dx += dh;
    dh = std::move(dx);
  }
  affine_back(cache.input, dh, p + l.in_w, g + l.in_w, g + l.in_b, false);
}

InstanceLoss instance_loss(const NetOutput& out, const NetConfig& cfg, const TaskInstance& inst, const LossParams& lp) {
  const FitProblem prob = make_fit_problem(inst);
  const LossTarget target(prob.target);
  const std::size_t n = inst.size();
  FitState st;
  st.logits = out.logits;
  st.weight_mode = WeightMode::Sigmoid;
  InstanceLoss r;
  r.d_out = Mat(n, cfg.out_channels);

  if (cfg.out_channels == 3) {
    require(inst.variant == Variant::Ellipse || inst.variant == Variant::Pnp, ErrorCode::InvalidInput,
            "displacement outputs need an ellipse or PnP task");
    st.displacements = out.displacements;
    const DataMatrixBuilder builder(inst.variant);
    r.value = loss_denoise(prob.measurements, st, builder, target, lp);
    const DenoiseGrad g = grad_denoise(prob.measurements, st, builder, target, lp);
    for (std::size_t i = 0; i < n; ++i) {
      r.d_out(i, 0) = g.d_logits[i];
      r.d_out(i, 1) = cfg.displacement_scale * g.d_displacements(i, 0);
      r.d_out(i, 2) = cfg.displacement_scale * g.d_displacements(i, 1);
    }
    return r;
  }

  WeightedGrad g;
  if (inst.variant == Variant::Plane) {
    r.value = loss_plane(prob.measurements, st, target, lp);
    g = grad_plane(prob.measurements, st, target, lp);
  } else {
    const Mat x = DataMatrixBuilder(inst.variant).build(prob.measurements);
    r.value = loss_weighted(x, st, target, lp);
    g = grad_weighted(x, st, target, lp);
  }
  for (std::size_t i = 0; i < n; ++i) r.d_out(i, 0) = g.d_logits[i];
  return r;
}

double batch_loss_and_grad(const NetParams& params, const NetConfig& cfg, const std::vector<TaskInstance>& batch,
                           const LossParams& lp, Vec* grad) {
  std::vector<Mat> inputs;
  for (const TaskInstance& t : batch) inputs.push_back(make_fit_problem(t).measurements);
  std::vector<ForwardCache> caches;
  const auto outs = forward_batch(params, cfg, inputs, grad ? &caches : nullptr);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  if (grad) grad->assign(params.values.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    InstanceLoss il = instance_loss(outs[i], cfg, batch[i], lp);
    total += il.value.total;
    if (grad) {
      il.d_out *= inv_b;
      backward(params, cfg, caches[i], il.d_out, *grad);
    }
  }
  return total * inv_b;
}

double validation_error(const NetParams& params, const NetConfig& cfg, const std::vector<TaskInstance>& val) {
  require(!val.empty(), ErrorCode::InvalidInput, "empty validation set");
  Vec errs;
  for (const TaskInstance& inst : val) {
    double e = std::numeric_limits<double>::infinity();
    try {
      const FitProblem prob = make_fit_problem(inst);
      const NetOutput out = forward(params, cfg, prob.measurements);
      const Mat* disp = cfg.out_channels == 3 ? &out.displacements : nullptr;
      const Model m = fit_model(inst, prob, out.weights, disp);
      const MetricRecord rec = metrics(model_estimate(m, inst, out.weights), inst);
      std::optional<double> v;
      switch (inst.variant) {
        case Variant::Plane: v = rec.normal_angle_deg; break;
        case Variant::Ellipse: v = rec.center_err; break;
        case Variant::Pnp:
        case Variant::Stereo: v = rec.rotation_err_deg; break;
      }
      if (v && std::isfinite(*v)) e = *v;
    } catch (const Error&) {
    }
    errs.push_back(e);
  }
  std::sort(errs.begin(), errs.end());
  const std::size_t m = errs.size();
  return m % 2 ? errs[m / 2] : 0.5 * (errs[m / 2 - 1] + errs[m / 2]);
}

namespace {

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(std::max<std::size_t>(cap, 1)) {}

  bool push(T v) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return q_.size() < cap_ || closed_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t cap_;
  std::deque<T> q_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace

TrainResult train(const NetConfig& cfg, const InstanceGenerator& gen, const TrainOptions& opt) {
  cfg.validate();
  opt.loss.validate();
  TrainResult res;
  NetParams params = NetParams::init(cfg, opt.seed);

  const std::uint64_t val_seed = splitmix64(opt.seed ^ 0x56414C49ULL);
  std::vector<TaskInstance> val;
  for (std::size_t i = 0; i < std::max<std::size_t>(opt.val_instances, 1); ++i) val.push_back(gen(val_seed, i));

  res.best = params;
  res.init_val_error = validation_error(params, cfg, val);
  res.best_val_error = res.init_val_error;
  res.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), res.init_val_error});
  if (opt.epochs == 0) return res;

  const std::uint64_t train_seed = splitmix64(opt.seed ^ 0x5452414EULL);
  const std::size_t total_batches = opt.epochs * opt.batches_per_epoch;
  BoundedQueue<std::vector<TaskInstance>> queue(opt.queue_capacity);
  std::thread producer([&] {
    for (std::size_t b = 0; b < total_batches; ++b) {
      std::vector<TaskInstance> batch;
      batch.reserve(cfg.batch);
      for (std::size_t j = 0; j < cfg.batch; ++j) batch.push_back(gen(train_seed, b * cfg.batch + j));
      if (!queue.push(std::move(batch))) return;
    }
    queue.close();
  });

  AdamState adam = AdamState::make(params.values.size(), cfg.lr);
  Vec grad;
  try {
    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < opt.batches_per_epoch; ++b) {
        auto batch = queue.pop();
        require(batch.has_value(), ErrorCode::InvalidState, "training data queue closed early");
        const double loss = batch_loss_and_grad(params, cfg, *batch, opt.loss, &grad);
        require(std::isfinite(loss), ErrorCode::AbortNonFinite, "non-finite training loss");
        adam_step(adam, params.values, grad);
        sum += loss;
      }
      const double ve = validation_error(params, cfg, val);
      res.curve.push_back({epoch, sum / static_cast<double>(opt.batches_per_epoch), ve});
      if (ve < res.best_val_error) {
        res.best_val_error = ve;
        res.best = params;
      }
    }
  } catch (const Error& e) {
    res.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(res.curve.size());
  }
  queue.close();
  producer.join();
  return res;
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "epoch,train_loss,val_error\n";
  char buf[96];
  for (const CurvePoint& c : curve) {
    os << c.epoch << ',';
    if (std::isfinite(c.train_loss)) {
      std::snprintf(buf, sizeof buf, "%.17g", c.train_loss);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", c.val_error);
    os << buf;
  }
}

namespace {

constexpr char kMagic[4] = {'E', 'F', 'W', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  require(static_cast<bool>(is), ErrorCode::InvalidInput, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& os, const NetConfig& cfg, const NetParams& params) {
  cfg.validate();
  require(params.values.size() == cfg.param_count(), ErrorCode::InvalidInput, "parameter count does not match config");
  os.write(kMagic, 4);
  put_u64(os, kVersion);
  for (std::size_t v : {cfg.in_channels, cfg.blocks, cfg.channels, cfg.out_channels, cfg.batch})
    put_u64(os, v);
  for (double v : {cfg.lr, cfg.cn_eps, cfg.displacement_scale}) put_u64(os, std::bit_cast<std::uint64_t>(v));
  put_u64(os, params.values.size());
  for (double v : params.values) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::pair<NetConfig, NetParams> load_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0, ErrorCode::InvalidInput, "bad checkpoint magic");
  require(get_u64(is) == kVersion, ErrorCode::InvalidInput, "unsupported checkpoint version");
  NetConfig cfg;
  cfg.in_channels = get_u64(is);
  cfg.blocks = get_u64(is);
  cfg.channels = get_u64(is);
  cfg.out_channels = get_u64(is);
  cfg.batch = get_u64(is);
  cfg.lr = std::bit_cast<double>(get_u64(is));
  cfg.cn_eps = std::bit_cast<double>(get_u64(is));
  cfg.displacement_scale = std::bit_cast<double>(get_u64(is));
  cfg.validate();
  const std::uint64_t count = get_u64(is);
  require(count == cfg.param_count(), ErrorCode::InvalidInput, "checkpoint parameter count mismatch");
  NetParams p;
  p.values.resize(count);
  for (double& v : p.values) v = std::bit_cast<double>(get_u64(is));
  require(all_finite(p.values), ErrorCode::InvalidInput, "non-finite checkpoint parameters");
  return {cfg, p};
}

}  // namespace edfree
