#include "scoretune/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <json.hpp>

#include "scoretune/data.hpp"
#include "scoretune/error.hpp"
#include "scoretune/random.hpp"

namespace scoretune {

NoiseTape::NoiseTape(std::size_t L_, std::size_t T_, std::int64_t D_, std::size_t chains_)
    : L(L_), T(T_), D(D_), chains(chains_) {
  steps.assign(L * T, Matrix::Zero(static_cast<Eigen::Index>(chains), D));
}

bool NoiseTape::same_shape(const NoiseTape& other) const {
  return L == other.L && T == other.T && D == other.D && chains == other.chains &&
         steps.size() == other.steps.size();
}

NoiseTape NoiseTape::chain(std::size_t index) const {
  if (index >= chains) throw InvalidInput("NoiseTape::chain: index out of range");
  NoiseTape out(L, T, D, 1);
  for (std::size_t k = 0; k < steps.size(); ++k)
    out.steps[k] = steps[k].row(static_cast<Eigen::Index>(index));
  return out;
}

namespace {

void check_inputs(const ScoreField& field, const NoiseSchedule& schedule,
                  const LangevinConfig& config, const Matrix& init) {
  config.validate();
  if (schedule.sigmas.empty()) throw InvalidInput("sampler: empty schedule");
  if (init.rows() < 1) throw InvalidInput("sampler: need at least one chain");
  if (init.cols() != schedule.D)
    throw InvalidInput("sampler: init width does not match schedule dimensionality");
  if (field.dims() != schedule.D)
    throw InvalidInput("sampler: score field dimensionality does not match schedule");
  if (!init.allFinite()) throw InvalidInput("sampler: init contains non-finite values");
}

void check_divergence(const Matrix& x, double threshold, std::uint64_t first_chain,
                      std::size_t scale, double sigma, std::size_t step) {
  for (Eigen::Index m = 0; m < x.rows(); ++m) {
    const auto row = x.row(m);
    if (row.allFinite() && row.cwiseAbs().maxCoeff() <= threshold) continue;
    char msg[200];
    std::snprintf(msg, sizeof msg,
                  "chain %lld diverged at scale %zu (sigma=%.6g), step %zu: |x| exceeded %.3g",
                  static_cast<long long>(first_chain + static_cast<std::uint64_t>(m)), scale + 1, sigma, step + 1, threshold);
    throw Diverged(msg);
  }
}

// Algorithm core shared by fresh sampling and tape replay. `draw(scale, step, z)`
// fills z (chains x D) with the noise for that iteration.
template <typename DrawNoise>
Matrix run_annealed(const ScoreField& field, const NoiseSchedule& schedule,
                    const LangevinConfig& config, const Matrix& init, const SampleOptions& options,
                    DrawNoise&& draw) {
  Matrix x = init;
  Matrix z(x.rows(), x.cols());
  const double sigmaL = schedule.sigmaL();
  for (std::size_t i = 0; i < schedule.L(); ++i) {
    const double sigma = schedule.sigmas[i];
    const double alpha = config.epsilon * (sigma / sigmaL) * (sigma / sigmaL);
    const double noise_scale = std::sqrt(2.0 * alpha);
    for (std::size_t t = 0; t < static_cast<std::size_t>(config.T); ++t) {
      draw(i, t, z);
      const Matrix s = field.score(x, sigma);
      x += alpha * s + noise_scale * z;
      check_divergence(x, options.divergence_threshold, options.first_chain, i, sigma, t);
    }
    if (options.on_scale_end) options.on_scale_end(i, x);
  }
  if (config.denoise) x = denoise(x, field, sigmaL);
  return x;
}

}  // namespace

Vector langevin_step(const Vector& x, const Vector& score, double alpha, const Vector& z) {
  if (!(alpha > 0.0)) throw InvalidInput("langevin_step: alpha must be positive");
  return x + alpha * score + std::sqrt(2.0 * alpha) * z;
}

Matrix denoise(const Matrix& x, const ScoreField& field, double sigma_last) {
  if (!(sigma_last > 0.0)) throw InvalidInput("denoise: sigma must be positive");
  return x + (sigma_last * sigma_last) * field.score(x, sigma_last);
}

Vector denoise(const Vector& x, const ScoreField& field, double sigma_last) {
  if (!(sigma_last > 0.0)) throw InvalidInput("denoise: sigma must be positive");
  return x + (sigma_last * sigma_last) * field.score(x, sigma_last);
}

SampleResult anneal_sample(const ScoreField& field, const NoiseSchedule& schedule,
                           const LangevinConfig& config, const Matrix& init, std::uint64_t seed,
                           const SampleOptions& options) {
  check_inputs(field, schedule, config, init);
  const auto chains = static_cast<std::size_t>(init.rows());

  std::vector<Rng> streams;
  streams.reserve(chains);
  for (std::size_t m = 0; m < chains; ++m) streams.emplace_back(derive_seed(seed, options.first_chain + m));

  SampleResult result;
  if (options.record_tape)
    result.tape = NoiseTape(schedule.L(), static_cast<std::size_t>(config.T), schedule.D, chains);

  auto draw = [&](std::size_t i, std::size_t t, Matrix& z) {
    for (std::size_t m = 0; m < chains; ++m)
      fill_standard_normal(streams[m], std::span<double>(z.row(static_cast<Eigen::Index>(m)).data(),
                                                         static_cast<std::size_t>(z.cols())));
    if (options.record_tape) result.tape.at(i, t) = z;
  };

  result.batch.samples = run_annealed(field, schedule, config, init, options, draw);
  result.batch.schedule_id = schedule.id();
  result.batch.config = config;
  result.batch.seed = seed;
  result.batch.denoised = config.denoise;
  return result;
}

SampleBatch replay(const ScoreField& field, const NoiseSchedule& schedule,
                   const LangevinConfig& config, const Matrix& init, const NoiseTape& tape,
                   const SampleOptions& options) {
  check_inputs(field, schedule, config, init);
  if (tape.L != schedule.L() || tape.T != static_cast<std::size_t>(config.T) ||
      tape.D != schedule.D || tape.chains != static_cast<std::size_t>(init.rows()) ||
      tape.steps.size() != tape.L * tape.T)
    throw InvalidInput("replay: tape shape does not match schedule, config and init");

  auto draw = [&](std::size_t i, std::size_t t, Matrix& z) { z = tape.at(i, t); };

  SampleBatch batch;
  batch.samples = run_annealed(field, schedule, config, init, options, draw);
  batch.schedule_id = schedule.id();
  batch.config = config;
  batch.denoised = config.denoise;
  return batch;
}

NoiseTape mix_tapes(const NoiseTape& a, const NoiseTape& b, double theta) {
  if (!a.same_shape(b)) throw InvalidInput("mix_tapes: tape shapes differ");
  NoiseTape out = a;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t k = 0; k < out.steps.size(); ++k) out.steps[k] = c * a.steps[k] + s * b.steps[k];
  return out;
}

Interpolation interpolate(const ScoreField& field, const NoiseSchedule& schedule,
                          const LangevinConfig& config, const Vector& init,
                          const NoiseTape& tape1, const NoiseTape& tape2, std::size_t K) {
  if (!tape1.same_shape(tape2)) throw InvalidInput("interpolate: tape shapes differ");
  if (tape1.chains != 1) throw InvalidInput("interpolate: tapes must hold a single chain");
  if (K < 1) throw InvalidInput("interpolate: K must be at least 1");
  const Matrix start = init.transpose();

  Interpolation out;
  out.interior.resize(static_cast<Eigen::Index>(K), schedule.D);
  out.endpoints.resize(2, schedule.D);
  out.endpoints.row(0) = replay(field, schedule, config, start, tape1).samples.row(0);
  out.endpoints.row(1) = replay(field, schedule, config, start, tape2).samples.row(0);
  for (std::size_t k = 1; k <= K; ++k) {
    const double theta =
        static_cast<double>(k) * std::numbers::pi / (2.0 * static_cast<double>(K + 1));
    out.angles.push_back(theta);
    const NoiseTape mixed = mix_tapes(tape1, tape2, theta);
    out.interior.row(static_cast<Eigen::Index>(k - 1)) =
        replay(field, schedule, config, start, mixed).samples.row(0);
  }
  return out;
}

Matrix make_init(InitKind kind, std::size_t M, std::int64_t D, std::uint64_t seed, double scale) {
  if (M < 1 || D < 1) throw InvalidInput("make_init: M and D must be positive");
  Matrix out(static_cast<Eigen::Index>(M), D);
  for (std::size_t m = 0; m < M; ++m) {
    Rng rng(derive_seed(seed, m));
    auto row = out.row(static_cast<Eigen::Index>(m));
    if (kind == InitKind::uniform) {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (Eigen::Index d = 0; d < D; ++d) row(d) = u01(rng);
    } else {
      std::normal_distribution<double> n01(0.0, 1.0);
      for (Eigen::Index d = 0; d < D; ++d) row(d) = scale * n01(rng);
    }
  }
  return out;
}

void save_sample_batch(const std::filesystem::path& file, const SampleBatch& batch) {
  nlohmann::ordered_json extra;
  extra["kind"] = "sample_batch";
  extra["seed"] = batch.seed;
  extra["schedule_id"] = batch.schedule_id;
  extra["epsilon"] = batch.config.epsilon;
  extra["T"] = batch.config.T;
  extra["denoised"] = batch.denoised;
  write_matrix_binary(file, batch.samples, extra.dump());
}

SampleBatch load_sample_batch(const std::filesystem::path& file) {
  MatrixFile mf = read_matrix_binary(file);
  try {
    const auto side = nlohmann::json::parse(mf.sidecar_json);
    if (side.value("kind", std::string{}) != "sample_batch")
      throw FormatError("not a sample batch: " + file.string());
    SampleBatch batch;
    batch.samples = std::move(mf.matrix);
    batch.seed = side.at("seed").get<std::uint64_t>();
    batch.schedule_id = side.at("schedule_id").get<std::string>();
    batch.config.epsilon = side.at("epsilon").get<double>();
    batch.config.T = side.at("T").get<int>();
    batch.denoised = side.at("denoised").get<bool>();
    batch.config.denoise = batch.denoised;
    return batch;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sample batch sidecar for " + file.string() + ": " + e.what());
  }
}

void save_tape(const std::filesystem::path& file, const NoiseTape& tape,
               const std::string& extra_json) {
  nlohmann::ordered_json extra;
  try {
    extra = nlohmann::ordered_json::parse(extra_json);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("tape extras: ") + e.what());
  }
  extra["kind"] = "noise_tape";
  extra["L"] = tape.L;
  extra["T"] = tape.T;
  extra["chains"] = tape.chains;
  Matrix stacked(static_cast<Eigen::Index>(tape.steps.size() * tape.chains), tape.D);
  for (std::size_t k = 0; k < tape.steps.size(); ++k)
    stacked.middleRows(static_cast<Eigen::Index>(k * tape.chains),
                       static_cast<Eigen::Index>(tape.chains)) = tape.steps[k];
  write_matrix_binary(file, stacked, extra.dump());
}

NoiseTape load_tape(const std::filesystem::path& file) {
  const MatrixFile mf = read_matrix_binary(file);
  try {
    const auto side = nlohmann::json::parse(mf.sidecar_json);
    if (side.value("kind", std::string{}) != "noise_tape")
      throw FormatError("not a noise tape: " + file.string());
    NoiseTape tape(side.at("L").get<std::size_t>(), side.at("T").get<std::size_t>(),
                   mf.matrix.cols(), side.at("chains").get<std::size_t>());
    if (static_cast<std::size_t>(mf.matrix.rows()) != tape.L * tape.T * tape.chains)
      throw FormatError("noise tape " + file.string() + " has the wrong number of rows");
    for (std::size_t k = 0; k < tape.steps.size(); ++k)
      tape.steps[k] = mf.matrix.middleRows(static_cast<Eigen::Index>(k * tape.chains),
                                           static_cast<Eigen::Index>(tape.chains));
    return tape;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad noise tape sidecar for " + file.string() + ": " + e.what());
  }
}

}  // namespace scoretune
