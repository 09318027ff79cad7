#include "scoretune/net.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "binary_io.hpp"
#include "scoretune/error.hpp"

namespace scoretune {

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'T', 'C', 'K', 'P', 'T', '0', '1'};

double act_value(Activation act, double a) {
  switch (act) {
    case Activation::softplus:
      return a > 30.0 ? a : std::log1p(std::exp(a));
    case Activation::tanh:
      return std::tanh(a);
    case Activation::silu:
      return a / (1.0 + std::exp(-a));
  }
  return a;
}

double act_derivative(Activation act, double a) {
  switch (act) {
    case Activation::softplus:
      return 1.0 / (1.0 + std::exp(-a));
    case Activation::tanh: {
      const double t = std::tanh(a);
      return 1.0 - t * t;
    }
    case Activation::silu: {
      const double s = 1.0 / (1.0 + std::exp(-a));
      return s * (1.0 + a * (1.0 - s));
    }
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::softplus:
      return "softplus";
    case Activation::tanh:
      return "tanh";
    case Activation::silu:
      return "silu";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "softplus") return Activation::softplus;
  if (name == "tanh") return Activation::tanh;
  if (name == "silu") return Activation::silu;
  throw InvalidInput("unknown activation '" + name + "'");
}

void MlpScoreNet::build_layout() {
  if (shape_.D < 1) throw InvalidInput("network input width must be positive");
  if (shape_.depth < 0) throw InvalidInput("network depth must be non-negative");
  if (shape_.depth > 0 && shape_.hidden < 1) throw InvalidInput("hidden width must be positive");
  layer_in_.clear();
  layer_out_.clear();
  weight_offset_.clear();
  bias_offset_.clear();
  std::int64_t in = shape_.D;
  std::size_t offset = 0;
  for (int l = 0; l <= shape_.depth; ++l) {
    const std::int64_t out = (l == shape_.depth) ? shape_.D : shape_.hidden;
    layer_in_.push_back(in);
    layer_out_.push_back(out);
    weight_offset_.push_back(offset);
    offset += static_cast<std::size_t>(in * out);
    bias_offset_.push_back(offset);
    offset += static_cast<std::size_t>(out);
    in = out;
  }
  if (params_.size() == 0) params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
  if (static_cast<std::size_t>(params_.size()) != offset)
    throw InvalidInput("parameter vector does not match the network shape");
}

MlpScoreNet::MlpScoreNet(NetShape shape, std::uint64_t seed) : shape_(shape) {
  build_layout();
  Rng rng(seed);
  for (std::size_t l = 0; l < layers(); ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer_in_[l] + layer_out_[l]));
    std::uniform_real_distribution<double> u(-limit, limit);
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  }
}

MlpScoreNet::MlpScoreNet(NetShape shape, Vector params) : shape_(shape), params_(std::move(params)) {
  if (params_.size() == 0) throw InvalidInput("empty parameter vector");
  build_layout();
  if (!params_.allFinite()) throw InvalidInput("network parameters must be finite");
}

Eigen::Map<Matrix> MlpScoreNet::weight(std::size_t l) {
  return {params_.data() + weight_offset_.at(l), layer_out_[l], layer_in_[l]};
}
Eigen::Map<const Matrix> MlpScoreNet::weight(std::size_t l) const {
  return {params_.data() + weight_offset_.at(l), layer_out_[l], layer_in_[l]};
}
Eigen::Map<Vector> MlpScoreNet::bias(std::size_t l) {
  return {params_.data() + bias_offset_.at(l), layer_out_[l]};
}
Eigen::Map<const Vector> MlpScoreNet::bias(std::size_t l) const {
  return {params_.data() + bias_offset_.at(l), layer_out_[l]};
}

Matrix MlpScoreNet::forward_cached(const Matrix& x, Cache* cache) const {
  if (x.cols() != shape_.D) throw InvalidInput("network input has the wrong width");
  Matrix h = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    if (cache) cache->inputs.push_back(h);
    Matrix a = h * weight(l).transpose();
    a.rowwise() += bias(l).transpose();
    if (l + 1 == layers()) return a;
    if (cache) cache->pre.push_back(a);
    h = a.unaryExpr([act = shape_.activation](double v) { return act_value(act, v); });
  }
  return h;
}

Matrix MlpScoreNet::forward(const Matrix& x) const { return forward_cached(x, nullptr); }

Matrix MlpScoreNet::score(const Matrix& x, double sigma) const {
  if (!(sigma > 0.0)) throw InvalidInput("score_forward: sigma must be positive");
  return forward(x) / sigma;
}

void MlpScoreNet::backward(const Matrix& x, const Matrix& upstream, Eigen::Ref<Vector> out) const {
  if (static_cast<std::size_t>(out.size()) != num_params())
    throw InvalidInput("gradient buffer has the wrong size");
  Cache cache;
  forward_cached(x, &cache);
  if (upstream.rows() != x.rows() || upstream.cols() != shape_.D)
    throw InvalidInput("upstream gradient has the wrong shape");

  Matrix delta = upstream;  // d/d(pre-activation) of the current layer
  for (std::size_t k = layers(); k-- > 0;) {
    const Matrix& input = cache.inputs[k];
    Eigen::Map<Matrix> gw(out.data() + weight_offset_[k], layer_out_[k], layer_in_[k]);
    Eigen::Map<Vector> gb(out.data() + bias_offset_[k], layer_out_[k]);
    gw.noalias() += delta.transpose() * input;
    gb += delta.colwise().sum().transpose();
    if (k == 0) break;
    Matrix back = delta * weight(k);
    const Matrix& pre = cache.pre[k - 1];
    for (Eigen::Index i = 0; i < back.rows(); ++i)
      for (Eigen::Index j = 0; j < back.cols(); ++j)
        back(i, j) *= act_derivative(shape_.activation, pre(i, j));
    delta = std::move(back);
  }
}

Vector score_forward(const MlpScoreNet& net, const Vector& x, double sigma) {
  return net.ScoreField::score(x, sigma);
}

DsmDraw draw_dsm(std::size_t rows, std::int64_t D, const NoiseSchedule& schedule, Rng& rng) {
  if (schedule.sigmas.empty()) throw InvalidInput("draw_dsm: empty schedule");
  DsmDraw draw;
  draw.scale_index.resize(rows);
  std::uniform_int_distribution<std::size_t> pick(0, schedule.L() - 1);
  draw.noise.resize(static_cast<Eigen::Index>(rows), D);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t m = 0; m < rows; ++m) {
    draw.scale_index[m] = pick(rng);
    for (Eigen::Index d = 0; d < D; ++d) draw.noise(static_cast<Eigen::Index>(m), d) = n01(rng);
  }
  return draw;
}

double dsm_objective(const Matrix& scaled_scores, const Matrix& noise) {
  if (scaled_scores.rows() != noise.rows() || scaled_scores.cols() != noise.cols())
    throw InvalidInput("dsm_objective: shape mismatch");
  if (noise.rows() == 0) throw InvalidInput("dsm_objective: empty batch");
  return 0.5 * (scaled_scores + noise).squaredNorm() / static_cast<double>(noise.rows());
}

namespace {

struct Perturbed {
  Matrix noisy;
  Vector sigma;
};

Perturbed perturb(const Matrix& batch, const NoiseSchedule& schedule, const DsmDraw& draw) {
  if (batch.rows() == 0) throw InvalidInput("DSM: empty batch");
  if (draw.noise.rows() != batch.rows() || draw.noise.cols() != batch.cols() ||
      draw.scale_index.size() != static_cast<std::size_t>(batch.rows()))
    throw InvalidInput("DSM: draw does not match the batch");
  Perturbed p;
  p.sigma.resize(batch.rows());
  for (Eigen::Index m = 0; m < batch.rows(); ++m)
    p.sigma(m) = schedule.sigmas.at(draw.scale_index[static_cast<std::size_t>(m)]);
  p.noisy = batch + p.sigma.asDiagonal() * draw.noise;
  return p;
}

// sigma_m * s(x~_m, sigma_m) row by row, using the same rescaling path as score().
Matrix scaled_scores(const MlpScoreNet& net, const Perturbed& p) {
  Matrix out = net.forward(p.noisy);
  for (Eigen::Index m = 0; m < out.rows(); ++m) out.row(m) = (out.row(m) / p.sigma(m)) * p.sigma(m);
  return out;
}

}  // namespace

double dsm_loss(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule,
                const DsmDraw& draw) {
  const Perturbed p = perturb(batch, schedule, draw);
  return dsm_objective(scaled_scores(net, p), draw.noise);
}

double dsm_loss(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule, Rng& rng) {
  const DsmDraw draw = draw_dsm(static_cast<std::size_t>(batch.rows()), batch.cols(), schedule, rng);
  return dsm_loss(net, batch, schedule, draw);
}

LossAndGrad dsm_grad(const MlpScoreNet& net, const Matrix& batch, const NoiseSchedule& schedule,
                     const DsmDraw& draw) {
  const Perturbed p = perturb(batch, schedule, draw);
  const Matrix residual = scaled_scores(net, p) + draw.noise;
  const double rows = static_cast<double>(batch.rows());
  LossAndGrad out;
  out.loss = 0.5 * residual.squaredNorm() / rows;
  out.grad = Vector::Zero(static_cast<Eigen::Index>(net.num_params()));
  net.backward(p.noisy, residual / rows, out.grad);
  return out;
}

void adam_step(Eigen::Ref<Vector> params, const Vector& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) throw InvalidInput("adam_step: gradient size mismatch");
  if (state.m.size() == 0) state.m = Vector::Zero(params.size());
  if (state.v.size() == 0) state.v = Vector::Zero(params.size());
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidInput("adam_step: moment size mismatch");
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  params.array() -= config.lr * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.eps);
}

EmaState EmaState::track(const MlpScoreNet& net, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidInput("EMA momentum must lie in [0, 1]");
  return EmaState{net.params(), momentum};
}

void ema_update(EmaState& ema, const MlpScoreNet& net) {
  if (ema.shadow.size() != net.params().size())
    throw InvalidInput("ema_update: shadow and network shapes differ");
  const double m = ema.momentum;
  if (m == 1.0) return;
  if (m == 0.0) {
    ema.shadow = net.params();
    return;
  }
  ema.shadow = m * ema.shadow + (1.0 - m) * net.params();
}

MlpScoreNet ema_network(const MlpScoreNet& net, const EmaState& ema) {
  return MlpScoreNet(net.shape(), ema.shadow);
}

TrainResult train(MlpScoreNet net, const Matrix& data, const NoiseSchedule& schedule,
                  const TrainConfig& config, std::uint64_t seed) {
  if (data.cols() != net.dims()) throw InvalidInput("train: data width does not match the network");
  if (data.rows() < 1) throw InvalidInput("train: empty dataset");
  if (config.batch_size < 1) throw InvalidInput("train: batch size must be positive");

  TrainResult result{net, EmaState::track(net, config.ema_momentum), {}};
  result.losses.reserve(config.iterations);
  AdamState adam;
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
  Matrix batch(static_cast<Eigen::Index>(config.batch_size), data.cols());

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (Eigen::Index m = 0; m < batch.rows(); ++m) batch.row(m) = data.row(pick(rng));
    const DsmDraw draw = draw_dsm(config.batch_size, data.cols(), schedule, rng);
    LossAndGrad lg = dsm_grad(result.net, batch, schedule, draw);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
      throw Diverged("training diverged at iteration " + std::to_string(it + 1));
    adam_step(result.net.params(), lg.grad, adam, config.adam);
    ema_update(result.ema, result.net);
    result.losses.push_back(lg.loss);
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (ck.ema.shadow.size() != ck.net.params().size())
    throw InvalidInput("save_checkpoint: EMA shape does not match the network");
  nlohmann::ordered_json header;
  header["format"] = "scoretune.checkpoint";
  header["version"] = 1;
  header["D"] = ck.net.shape().D;
  header["hidden"] = ck.net.shape().hidden;
  header["depth"] = ck.net.shape().depth;
  header["activation"] = to_string(ck.net.shape().activation);
  header["num_params"] = ck.net.num_params();
  header["ema_momentum"] = ck.ema.momentum;
  header["iteration"] = ck.iteration;
  header["seed"] = ck.seed;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_f64(os, {ck.net.params().data(), ck.net.num_params()});
  detail::write_f64(os, {ck.ema.shadow.data(), static_cast<std::size_t>(ck.ema.shadow.size())});
  if (!os) throw FormatError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("not a scoretune checkpoint: " + path.string());
  std::uint64_t header_len = 0;
  if (!detail::read_u64(is, header_len) || header_len > (1u << 20))
    throw FormatError("corrupt checkpoint header: " + path.string());
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len)))
    throw FormatError("truncated checkpoint header: " + path.string());

  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format") != "scoretune.checkpoint" || header.at("version") != 1)
      throw FormatError("unsupported checkpoint format: " + path.string());
    NetShape shape;
    shape.D = header.at("D").get<std::int64_t>();
    shape.hidden = header.at("hidden").get<std::int64_t>();
    shape.depth = header.at("depth").get<int>();
    shape.activation = activation_from_string(header.at("activation").get<std::string>());
    const auto n = header.at("num_params").get<std::size_t>();
    Vector params(static_cast<Eigen::Index>(n));
    Vector shadow(static_cast<Eigen::Index>(n));
    if (!detail::read_f64(is, {params.data(), n}) || !detail::read_f64(is, {shadow.data(), n}))
      throw FormatError("truncated checkpoint parameters: " + path.string());
    if (is.peek() != std::char_traits<char>::eof())
      throw FormatError("trailing bytes in checkpoint: " + path.string());
    Checkpoint ck{MlpScoreNet(shape, std::move(params)),
                  EmaState{std::move(shadow), header.at("ema_momentum").get<double>()},
                  header.at("iteration").get<std::size_t>(), header.at("seed").get<std::uint64_t>()};
    if (ck.net.num_params() != n) throw FormatError("checkpoint shape mismatch: " + path.string());
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + path.string() + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError("bad checkpoint in " + path.string() + ": " + e.what());
  }
}

}  // namespace scoretune
