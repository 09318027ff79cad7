#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scoretune/linalg.hpp"
#include "scoretune/oracle.hpp"
#include "scoretune/schedule.hpp"

namespace scoretune {

/// Every Gaussian vector injected by one annealed run, in the order
/// z_{1,1}, ..., z_{1,T}, z_{2,1}, ..., z_{L,T}. Each entry holds one row per chain.
struct NoiseTape {
  std::size_t L = 0;
  std::size_t T = 0;
  std::int64_t D = 0;
  std::size_t chains = 0;
  std::vector<Matrix> steps;  // L*T entries, each chains x D

  NoiseTape() = default;
  NoiseTape(std::size_t L, std::size_t T, std::int64_t D, std::size_t chains);

  bool empty() const { return steps.empty(); }
  Matrix& at(std::size_t scale, std::size_t step) { return steps.at(scale * T + step); }
  const Matrix& at(std::size_t scale, std::size_t step) const { return steps.at(scale * T + step); }

  bool same_shape(const NoiseTape& other) const;

  /// Tape restricted to a single chain.
  NoiseTape chain(std::size_t index) const;
};

struct SampleBatch {
  Matrix samples;  // M x D
  std::string schedule_id;
  LangevinConfig config;
  std::uint64_t seed = 0;
  bool denoised = false;
};

/// Called after the last Langevin step of every scale with the current
/// (pre-denoise) state.
using ScaleObserver = std::function<void(std::size_t scale, const Matrix& x)>;

struct SampleOptions {
  bool record_tape = false;
  ScaleObserver on_scale_end;
  // Any coordinate above this magnitude aborts the run with Diverged.
  double divergence_threshold = 1e6;
  // Global index of the first row of `init`; row m draws from
  // derive_seed(seed, first_chain + m). Lets a batch be split across calls.
  std::uint64_t first_chain = 0;
};

struct SampleResult {
  SampleBatch batch;
  NoiseTape tape;  // empty unless SampleOptions::record_tape
};

/// x + alpha * score + sqrt(2 alpha) * z.
Vector langevin_step(const Vector& x, const Vector& score, double alpha, const Vector& z);

/// x + sigma_last^2 * score(x, sigma_last), row-wise.
Matrix denoise(const Matrix& x, const ScoreField& field, double sigma_last);
Vector denoise(const Vector& x, const ScoreField& field, double sigma_last);

/// Annealed Langevin dynamics over the whole schedule. Chain m draws its noise
/// from mt19937_64 seeded with derive_seed(seed, first_chain + m), so chains are
/// independent of how many run together. The denoising step uses the last (smallest) scale.
SampleResult anneal_sample(const ScoreField& field, const NoiseSchedule& schedule,
                           const LangevinConfig& config, const Matrix& init, std::uint64_t seed,
                           const SampleOptions& options = {});

/// Runs the same dynamics, taking the injected noise from `tape` instead of
/// a random stream.
SampleBatch replay(const ScoreField& field, const NoiseSchedule& schedule,
                   const LangevinConfig& config, const Matrix& init, const NoiseTape& tape,
                   const SampleOptions& options = {});

/// Entrywise cos(theta) * a + sin(theta) * b.
NoiseTape mix_tapes(const NoiseTape& a, const NoiseTape& b, double theta);

struct Interpolation {
  Matrix interior;              // K x D, k = 1..K
  Matrix endpoints;             // 2 x D, replayed from the unmixed tapes
  std::vector<double> angles;   // theta_k = k pi / (2 (K + 1))
};

/// Interpolates between the two single-chain runs recorded in tape1 and
/// tape2 (same init, schedule and config) by replaying mixed noise.
Interpolation interpolate(const ScoreField& field, const NoiseSchedule& schedule,
                          const LangevinConfig& config, const Vector& init,
                          const NoiseTape& tape1, const NoiseTape& tape2, std::size_t K);

enum class InitKind { uniform, gaussian };

/// M x D starting points: uniform on [0,1]^D or N(0, scale^2 I). Row m uses
/// its own stream derive_seed(seed, m).
Matrix make_init(InitKind kind, std::size_t M, std::int64_t D, std::uint64_t seed,
                 double scale = 1.0);

/// SampleBatch as a binary matrix whose sidecar carries seed, schedule_id,
/// epsilon, T and the denoise flag.
void save_sample_batch(const std::filesystem::path& file, const SampleBatch& batch);
SampleBatch load_sample_batch(const std::filesystem::path& file);

/// Tape entries stacked step-major (scale, step, chain) as an
/// (L*T*chains) x D binary matrix; the sidecar records L, T and chains.
void save_tape(const std::filesystem::path& file, const NoiseTape& tape,
               const std::string& extra_json = "{}");
NoiseTape load_tape(const std::filesystem::path& file);

}  // namespace scoretune
