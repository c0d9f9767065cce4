#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edfree/geometry.hpp"
#include "edfree/loss_edfree.hpp"

namespace edfree {

struct NetConfig {
  std::size_t in_channels = 2;
  std::size_t blocks = 3;
  std::size_t channels = 32;
  std::size_t out_channels = 1;  // 1: weights; 3: weights and 2D displacements
  double lr = 1e-4;
  std::size_t batch = 32;
  double cn_eps = 1e-9;
  double displacement_scale = 0.1;

  void validate() const;
  std::size_t param_count() const;
};

/// Flat parameter vector with named views.
/// Layout: input layer W (C x in), b (C); per block two layers W (C x C), b (C); output W (out x C), b (out).
struct NetParams {
  Vec values;

  static NetParams init(const NetConfig& cfg, std::uint64_t seed);
};

/// Per-layer activations of one instance, needed by backward.
struct ForwardCache {
  std::size_t n = 0;
  Mat input;
  std::vector<Mat> pre;    // linear outputs before context normalization, one per block layer
  std::vector<Mat> normed; // context-normalized values
  std::vector<Vec> inv_std;
  std::vector<Mat> act;    // layer inputs: act[0] = input layer output, then each layer's ReLU output
  std::vector<Mat> block_in;
  Mat features;            // input to the output layer
  Mat out;                 // raw N x out_channels
};

struct NetOutput {
  Vec weights;       // sigmoid of channel 0
  Vec logits;        // raw channel 0
  Mat displacements; // N x 2 scaled channels 1..2, empty when out_channels == 1
};

NetOutput forward(const NetParams& params, const NetConfig& cfg, const Mat& points, ForwardCache* cache = nullptr);

/// Batched forward; all instances must share the point count.
std::vector<NetOutput> forward_batch(const NetParams& params, const NetConfig& cfg, const std::vector<Mat>& batch,
                                     std::vector<ForwardCache>* caches = nullptr);

/// Gradient of the parameters given dL/d(raw outputs) (N x out_channels). Accumulates into grad.
void backward(const NetParams& params, const NetConfig& cfg, const ForwardCache& cache, const Mat& d_out, Vec& grad);

/// Per-instance ED-free loss on network outputs and its gradient wrt the raw outputs.
struct InstanceLoss {
  LossValue value;
  Mat d_out;
};

InstanceLoss instance_loss(const NetOutput& out, const NetConfig& cfg, const TaskInstance& inst, const LossParams& lp);

/// Mean loss of a batch and its parameter gradient.
double batch_loss_and_grad(const NetParams& params, const NetConfig& cfg, const std::vector<TaskInstance>& batch,
                           const LossParams& lp, Vec* grad);

/// Median validation error of the weighted DLT fit: center error, normal angle, or rotation error.
double validation_error(const NetParams& params, const NetConfig& cfg, const std::vector<TaskInstance>& val);

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batches_per_epoch = 20;
  std::size_t val_instances = 64;
  std::size_t queue_capacity = 4;
  std::uint64_t seed = 0;
  LossParams loss;
};

struct CurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_error = 0.0;
};

struct TrainResult {
  NetParams best;
  double init_val_error = 0.0;
  double best_val_error = 0.0;
  std::vector<CurvePoint> curve;
  std::optional<std::string> abort_reason;
};

/// Makes training instance `index` of a seed stream; must be a pure function of its arguments.
using InstanceGenerator = std::function<TaskInstance(std::uint64_t seed, std::uint64_t index)>;

/// Adam training with a producer thread feeding batches through a bounded queue.
/// Returns the parameters with the lowest validation error (epoch 0 = initialization).
TrainResult train(const NetConfig& cfg, const InstanceGenerator& gen, const TrainOptions& opt);

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

void save_checkpoint(std::ostream& os, const NetConfig& cfg, const NetParams& params);
std::pair<NetConfig, NetParams> load_checkpoint(std::istream& is);

}  // namespace edfree
