#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scoretune/linalg.hpp"
#include "scoretune/oracle.hpp"
#include "scoretune/random.hpp"
#include "scoretune/schedule.hpp"

namespace scoretune {

enum class Activation { softplus, tanh, silu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

struct NetShape {
  std::int64_t D = 2;
  std::int64_t hidden = 128;
  int depth = 2;  // hidden layers; 0 gives a single affine map D -> D
  Activation activation = Activation::softplus;
};

/// Fully connected network D -> H -> ... -> H -> D whose output is read as
/// sigma * score. All weights and biases live in one flat parameter vector,
/// layer by layer, each layer stored as W (out x in, row-major) then b.
class MlpScoreNet final : public ScoreField {
 public:
  /// Uniform Glorot initialization of weights, zero biases.
  MlpScoreNet(NetShape shape, std::uint64_t seed);
  MlpScoreNet(NetShape shape, Vector params);

  const NetShape& shape() const { return shape_; }
  std::size_t layers() const { return layer_in_.size(); }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  std::int64_t dims() const override { return shape_.D; }

  /// Unconditional output s(x), row-wise.
  Matrix forward(const Matrix& x) const;

  /// s(x) / sigma. Throws InvalidInput for sigma <= 0.
  using ScoreField::score;
  Matrix score(const Matrix& x, double sigma) const override;

  /// Gradient of sum_m <upstream_m, s(x_m)> with respect to the parameters;
  /// `out` must have num_params() entries and is accumulated into.
  void backward(const Matrix& x, const Matrix& upstream, Eigen::Ref<Vector> out) const;

 private:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activations of hidden layers
  };
  Matrix forward_cached(const Matrix& x, Cache* cache) const;
  void build_layout();

  NetShape shape_;
  Vector params_;
  std::vector<std::int64_t> layer_in_, layer_out_;
  std::vector<std::size_t> weight_offset_, bias_offset_;
};

/// Convenience name for s(x, sigma) = s(x) / sigma on a single point.
Vector score_forward(const MlpScoreNet& net, const Vector& x, double sigma);

// ---------------------------------------------------------------------------
// Denoising score matching
// ---------------------------------------------------------------------------

/// One scale index (uniform over 0..L-1) and one N(0, I) noise row per example.
struct DsmDraw {
  std::vector<std::size_t> scale_index;
  Matrix noise;
};

DsmDraw draw_dsm(std::size_t rows, std::int64_t D, const NoiseSchedule& schedule, Rng& rng);

/// mean_m 1/2 || scaled_m + noise_m ||^2 where scaled_m = sigma_m s(x~_m, sigma_m)
/// and noise_m = (x~_m - x_m) / sigma_m.
double dsm_objective(const Matrix& scaled_scores, const Matrix& noise);

/// Loss on a fixed draw; x~ = x + sigma_m z_m.
double dsm_loss(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule,
                const DsmDraw& draw);
/// Draws from `rng`, then evaluates the loss.
double dsm_loss(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule, Rng& rng);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

/// Loss and its exact parameter gradient on a fixed draw.
LossAndGrad dsm_grad(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule,
                     const DsmDraw& draw);

// ---------------------------------------------------------------------------
// Optimizer and EMA
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(Eigen::Ref<Vector> params, const Vector& grads, AdamState& state,
               const AdamConfig& config);

struct EmaState {
  Vector shadow;
  double momentum = 0.999;

  static EmaState track(const MlpScoreNet& net, double momentum);
};

/// shadow <- m * shadow + (1 - m) * params.
void ema_update(EmaState& ema, const MlpScoreNet& net);

/// Copy of `net` carrying the shadow parameters.
MlpScoreNet ema_network(const MlpScoreNet& net, const EmaState& ema);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 128;
  AdamConfig adam;
  double ema_momentum = 0.999;
};

struct TrainResult {
  MlpScoreNet net;
  EmaState ema;
  std::vector<double> losses;
};

/// Minibatch Adam on the DSM loss; batches are drawn uniformly with
/// replacement. The EMA is refreshed after every optimizer step.
TrainResult train(MlpScoreNet net, const Matrix& data, const NoiseSchedule& schedule,
                  const TrainConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
  MlpScoreNet net;
  EmaState ema;
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
};

/// "STCKPT01", u64 LE header length, JSON header, then raw and EMA parameters
/// as little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scoretune
