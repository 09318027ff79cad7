#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "config.hpp"
#include "parallel.hpp"
#include "scoretune/data.hpp"
#include "scoretune/error.hpp"
#include "scoretune/net.hpp"
#include "scoretune/oracle.hpp"
#include "scoretune/random.hpp"
#include "scoretune/sampler.hpp"
#include "scoretune/schedule.hpp"
#include "scoretune/theory.hpp"
#include "verify.hpp"

namespace fs = std::filesystem;

namespace scoretune::cli {

namespace {

// Chains are sampled in fixed blocks so that --threads changes only the
// wall-clock time, never the output.
constexpr std::size_t kChainBlock = 64;

// Stream indices for seeds derived from the top-level seed.
enum SeedStream : std::uint64_t { kDataSeed = 1, kNetSeed, kTrainSeed, kSampleSeed, kInitSeed, kDistanceSeed };

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Run context: resolved config, output directory, manifest
// ---------------------------------------------------------------------------

class Context {
 public:
  Context(json source, fs::path out, int threads, std::ostream& log)
      : source_(std::move(source)), out_(std::move(out)), threads_(threads), log_(log) {}
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  Section root() { return Section(&source_, &resolved_, ""); }
  const json& source() const { return source_; }
  ordered_json& resolved() { return resolved_; }
  bool has_section(const std::string& key) const {
    return source_.contains(key) && !source_.at(key).is_null();
  }

  int threads() const { return threads_; }
  std::ostream& log() { return log_; }
  fs::path path(const std::string& name) const { return out_ / name; }

  /// Fails fast on misspelled keys once a command has read its whole config.
  void check_keys() const { reject_unknown_keys(source_, resolved_); }

  void prepare_output() { fs::create_directories(out_); }
  void wrote(const std::string& name) { files_.push_back(name); }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw FormatError("cannot write " + path(name).string());
    os << text;
    if (!os) throw FormatError("write failed: " + path(name).string());
    wrote(name);
  }
  void write_json(const std::string& name, const ordered_json& j) { write_text(name, j.dump(2) + "\n"); }
  void write_matrix(const std::string& name, const Matrix& m, const std::string& extra = "{}") {
    write_matrix_binary(path(name), m, extra);
    wrote(name);
    wrote(sidecar_path(fs::path(name)).string());
  }
  void write_csv(const std::string& name, const Matrix& m, const std::vector<std::string>& header) {
    write_csv_matrix(path(name), m, header);
    wrote(name);
  }

  /// Echoes the resolved config and lists every output with its hash.
  void finish(const std::string& command) {
    write_json("config.resolved.json", resolved_);
    std::sort(files_.begin(), files_.end());
    files_.erase(std::unique(files_.begin(), files_.end()), files_.end());
    ordered_json list = ordered_json::array();
    for (const auto& f : files_)
      list.push_back({{"file", f}, {"bytes", fs::file_size(path(f))}, {"fnv1a64", fnv1a_file(path(f))}});
    ordered_json manifest;
    manifest["command"] = command;
    manifest["seed"] = resolved_.value("seed", std::uint64_t{0});
    manifest["files"] = list;
    std::ofstream os(path("manifest.json"), std::ios::binary);
    os << manifest.dump(2) << "\n";
  }

 private:
  json source_;
  ordered_json resolved_ = ordered_json::object();
  fs::path out_;
  int threads_;
  std::ostream& log_;
  std::vector<std::string> files_;
};

template <class Fn>
auto with_context(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InfeasibleTarget& e) {
    throw InfeasibleTarget(where + ": " + e.what());
  } catch (const DivergentRegime& e) {
    throw DivergentRegime(where + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Config sections
// ---------------------------------------------------------------------------

Dataset load_data(Section s, std::uint64_t root_seed) {
  const std::string kind = s.choice("kind", "gaussian", {"gaussian", "mixture", "cifar10", "csv", "binary"});
  if (kind == "gaussian") {
    const std::int64_t D = s.integer("D", 2);
    if (D < 1) throw ConfigError("config: " + s.path("D") + ": must be at least 1");
    const auto mean = s.numbers("mean", std::vector<double>(static_cast<std::size_t>(D), 0.0));
    if (static_cast<std::int64_t>(mean.size()) != D)
      throw ConfigError("config: " + s.path("mean") + ": length must equal D");
    const double sigma = s.number("sigma", 1.0);
    const auto n = s.integer("n", 10000);
    const auto seed = s.seed("seed", derive_seed(root_seed, kDataSeed));
    return with_context("data", [&] {
      return gen_gaussian(Eigen::Map<const Vector>(mean.data(), D), sigma, static_cast<std::size_t>(n), seed);
    });
  }
  if (kind == "mixture") {
    const auto rows = s.rows("centers", {{-2.0, 0.0}, {2.0, 0.0}});
    Matrix centers(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) centers(i, j) = rows[i][j];
    const auto weights = s.numbers("weights", std::vector<double>(rows.size(), 1.0 / rows.size()));
    const double sigma = s.number("sigma", 0.5);
    const auto n = s.integer("n", 10000);
    const auto seed = s.seed("seed", derive_seed(root_seed, kDataSeed));
    return with_context("data", [&] {
      return gen_gaussian_mixture(centers, weights, sigma, static_cast<std::size_t>(n), seed);
    });
  }
  Dataset d;
  if (kind == "cifar10") {
    const auto dir = s.required_text("dir");
    const auto split = s.choice("split", "train", {"train", "test"});
    d = load_cifar10(dir, split == "train" ? CifarSplit::train : CifarSplit::test);
  } else {
    const auto file = s.required_text("path");
    d.x = kind == "csv" ? read_csv_matrix(file) : read_matrix_binary(file).matrix;
    d.name = file;
  }
  const auto limit = s.integer("limit", 0);
  if (limit < 0) throw ConfigError("config: " + s.path("limit") + ": must be non-negative");
  if (limit > 0 && static_cast<std::size_t>(limit) < d.N()) d.x.conservativeResize(limit, Eigen::NoChange);
  return d;
}

NoiseSchedule resolve_schedule(Section s, const Dataset* data, std::uint64_t root_seed, std::ostream& log) {
  if (s.has("file")) {
    const auto file = s.text("file", "");
    std::ifstream is(file);
    if (!is) throw FormatError("cannot read schedule file: " + file);
    std::stringstream ss;
    ss << is.rdbuf();
    return schedule_from_json(ss.str());
  }
  double sigma1 = 0.0;
  const bool from_data = s.number_or_word("sigma1", "from-data", {"from-data"}, sigma1).has_value();
  const double sigmaL = s.positive("sigmaL", 0.01);
  const double C = s.number("C", kDefaultTargetC);
  std::int64_t D = 0;
  if (data) {
    D = s.integer("D", data->D());
    if (D != data->D())
      throw ConfigError("config: " + s.path("D") + ": " + std::to_string(D) + " does not match the data (" +
                        std::to_string(data->D()) + ")");
  } else {
    if (!s.has("D")) throw ConfigError("config: " + s.path("D") + ": is required when no data section is given");
    D = s.integer("D", 0);
  }
  if (from_data) {
    if (!data) throw ConfigError("config: " + s.path("sigma1") + ": 'from-data' requires a data section");
    const auto subsample = s.integer("subsample", static_cast<std::int64_t>(kDefaultDistanceSubsample));
    if (subsample < 2) throw ConfigError("config: " + s.path("subsample") + ": must be at least 2");
    const auto seed = s.seed("subsample_seed", derive_seed(root_seed, kDistanceSeed));
    sigma1 = with_context("schedule.sigma1", [&] {
      return max_pairwise_distance(data->x, static_cast<std::size_t>(subsample), seed);
    });
    s.note("sigma1_from_data", sigma1);
    log << "sigma1 from data: max pairwise distance " << format_double(sigma1) << "\n";
  }
  double L = 0.0;
  const bool solve_L = s.number_or_word("L", "solve", {"solve"}, L).has_value();
  return with_context("schedule", [&] {
    if (solve_L) return build_schedule(sigma1, sigmaL, D, C);
    if (L < 2 || L != std::floor(L)) throw ConfigError("config: " + s.path("L") + ": must be an integer >= 2");
    return NoiseSchedule::geometric(sigma1, sigmaL, static_cast<std::size_t>(L), D, C);
  });
}

/// Sampler settings as requested; epsilon may still need solving per schedule.
struct LangevinSpec {
  int T = 5;
  std::optional<double> epsilon;  // nullopt: solve on the grid
  double grid_lo = 0.0, grid_hi = 0.0;  // 0: defaults relative to sigmaL
  std::size_t grid_count = 200;
  bool denoise = true;
};

LangevinSpec read_langevin(Section s) {
  LangevinSpec spec;
  const auto T = s.integer("T", 5);
  if (T < 0 || T > 1000000) throw ConfigError("config: " + s.path("T") + ": out of range");
  spec.T = static_cast<int>(T);
  double eps = 0.0;
  if (!s.number_or_word("epsilon", "solve", {"solve"}, eps)) {
    spec.epsilon = eps;
  } else {
    auto g = s.child("epsilon_grid");
    // Bounds are stored as multiples of sigmaL^2 so one grid serves any schedule.
    spec.grid_lo = g.positive("lo_over_sigmaL2", 1e-6);
    spec.grid_hi = g.positive("hi_over_sigmaL2", 0.5);
    const auto count = g.integer("count", 200);
    if (count < 1) throw ConfigError("config: " + g.path("count") + ": must be positive");
    spec.grid_count = static_cast<std::size_t>(count);
  }
  spec.denoise = s.flag("denoise", true);
  return spec;
}

LangevinConfig realize(const LangevinSpec& spec, const NoiseSchedule& schedule) {
  return with_context("sampler", [&] {
    LangevinConfig cfg;
    if (spec.epsilon) {
      cfg.epsilon = *spec.epsilon;
      cfg.T = spec.T;
    } else {
      const double s2 = schedule.sigmaL() * schedule.sigmaL();
      cfg = solve_epsilon(schedule, spec.T, log_spaced(spec.grid_lo * s2, spec.grid_hi * s2, spec.grid_count));
    }
    cfg.denoise = spec.denoise;
    cfg.validate();
    if (cfg.T > 0) (void)langevin_variance_ratio(schedule.gamma, cfg.epsilon, schedule.sigmaL(), cfg.T);
    return cfg;
  });
}

LangevinConfig resolve_langevin(Section s, const NoiseSchedule& schedule) {
  const auto spec = read_langevin(s);
  const auto cfg = realize(spec, schedule);
  if (!spec.epsilon) s.note("epsilon_solved", cfg.epsilon);
  return cfg;
}

Matrix resolve_init(Section s, std::size_t M, std::int64_t D, std::uint64_t root_seed) {
  const auto kind = s.choice("init", "uniform", {"uniform", "gaussian"});
  const double scale = s.positive("init_scale", 1.0);
  const auto seed = s.seed("init_seed", derive_seed(root_seed, kInitSeed));
  return make_init(kind == "uniform" ? InitKind::uniform : InitKind::gaussian, M, D, seed, scale);
}

/// The score field a sampling command runs on.
struct Field {
  std::unique_ptr<ScoreField> field;
  std::string description;
};

Field resolve_field(Section s, const Dataset* data) {
  const auto kind = s.choice("kind", "checkpoint", {"checkpoint", "empirical", "mixture"});
  Field f;
  if (kind == "checkpoint") {
    const auto path = s.required_text("path");
    const bool use_ema = s.flag("ema", true);
    auto ck = load_checkpoint(path);
    f.field = std::make_unique<MlpScoreNet>(use_ema ? ema_network(ck.net, ck.ema) : ck.net);
    f.description = "checkpoint " + path + (use_ema ? " (EMA)" : " (raw)");
  } else if (kind == "empirical") {
    if (!data) throw ConfigError("config: " + s.path("kind") + ": 'empirical' requires a data section");
    const double base = s.number("base_sigma", 0.0);
    f.field = with_context("field", [&] { return std::make_unique<GaussianMixtureOracle>(data->x, base); });
    f.description = "point-mass mixture over " + std::to_string(data->N()) + " data points";
  } else {
    const auto rows = s.rows("centers", {{-2.0, 0.0}, {2.0, 0.0}});
    Matrix centers(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) centers(i, j) = rows[i][j];
    const double base = s.number("sigma", 0.5);
    f.field = with_context("field", [&] { return std::make_unique<GaussianMixtureOracle>(centers, base); });
    f.description = "Gaussian mixture with " + std::to_string(rows.size()) + " components";
  }
  return f;
}

/// anneal_sample over fixed-size chain blocks run on `threads` workers.
SampleResult sample_chains(const ScoreField& field, const NoiseSchedule& schedule, const LangevinConfig& cfg,
                           const Matrix& init, std::uint64_t seed, bool record_tape, int threads) {
  const std::size_t M = static_cast<std::size_t>(init.rows());
  const std::size_t blocks = (M + kChainBlock - 1) / kChainBlock;
  std::vector<SampleResult> parts(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    SampleOptions opt;
    opt.record_tape = record_tape;
    opt.first_chain = b * kChainBlock;
    const auto rows = static_cast<Eigen::Index>(std::min(kChainBlock, M - b * kChainBlock));
    parts[b] = anneal_sample(field, schedule, cfg, init.middleRows(static_cast<Eigen::Index>(b * kChainBlock), rows),
                             seed, opt);
  });
  SampleResult out;
  out.batch = parts.empty() ? SampleBatch{} : parts.front().batch;
  out.batch.samples.resize(static_cast<Eigen::Index>(M), init.cols());
  if (record_tape) out.tape = NoiseTape(schedule.L(), static_cast<std::size_t>(cfg.T), init.cols(), M);
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto start = static_cast<Eigen::Index>(b * kChainBlock);
    const auto rows = parts[b].batch.samples.rows();
    out.batch.samples.middleRows(start, rows) = parts[b].batch.samples;
    if (record_tape)
      for (std::size_t k = 0; k < out.tape.steps.size(); ++k)
        out.tape.steps[k].middleRows(start, rows) = parts[b].tape.steps[k];
  }
  return out;
}

std::string schedule_table(const NoiseSchedule& schedule, double epsilon) {
  std::string s = "i,sigma,alpha\n";
  for (std::size_t i = 0; i < schedule.L(); ++i)
    s += std::to_string(i + 1) + "," + format_double(schedule.sigmas[i]) + "," +
         format_double(step_size(schedule, i, epsilon)) + "\n";
  return s;
}

ordered_json schedule_summary(const NoiseSchedule& s, const LangevinConfig& cfg) {
  ordered_json j;
  j["sigma1"] = s.sigma1();
  j["sigmaL"] = s.sigmaL();
  j["L"] = s.L();
  j["gamma"] = s.gamma;
  j["D"] = s.D;
  j["target_C"] = s.target_C;
  j["realized_C"] = s.L() > 1 ? overlap_C(s.gamma, s.D) : std::nan("");
  j["T"] = cfg.T;
  j["epsilon"] = cfg.epsilon;
  j["variance_ratio"] = cfg.T > 0 ? langevin_variance_ratio(s.gamma, cfg.epsilon, s.sigmaL(), cfg.T) : s.gamma * s.gamma;
  j["schedule_id"] = s.id();
  return j;
}

std::uint64_t root_seed(Context& ctx) { return ctx.root().seed("seed", 0); }

std::optional<Dataset> optional_data(Context& ctx, std::uint64_t seed) {
  if (!ctx.has_section("data")) return std::nullopt;
  return load_data(ctx.root().child("data"), seed);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_schedule(Context& ctx) {
  const auto seed = root_seed(ctx);
  const auto data = optional_data(ctx, seed);
  const auto schedule = resolve_schedule(ctx.root().child("schedule"), data ? &*data : nullptr, seed, ctx.log());
  const auto cfg = resolve_langevin(ctx.root().child("sampler"), schedule);

  ctx.prepare_output();
  ctx.write_text("schedule.json", schedule_to_json(schedule) + "\n");
  ctx.write_text("schedule.csv", schedule_table(schedule, cfg.epsilon));
  const auto summary = schedule_summary(schedule, cfg);
  ctx.write_json("summary.json", summary);
  ctx.log() << "schedule: L=" << schedule.L() << " gamma=" << format_double(schedule.gamma)
            << " sigma1=" << format_double(schedule.sigma1()) << " sigmaL=" << format_double(schedule.sigmaL())
            << " D=" << schedule.D << "\n"
            << "langevin: T=" << cfg.T << " epsilon=" << format_double(cfg.epsilon)
            << " variance ratio=" << format_double(summary["variance_ratio"].get<double>()) << "\n";
  return kOk;
}

int cmd_stats(Context& ctx) {
  const auto seed = root_seed(ctx);
  if (!ctx.has_section("data")) throw ConfigError("config: data: section is required");
  const auto data = load_data(ctx.root().child("data"), seed);
  auto s = ctx.root().child("stats");
  const auto subsample = s.integer("subsample", static_cast<std::int64_t>(kDefaultDistanceSubsample));
  if (subsample < 2) throw ConfigError("config: " + s.path("subsample") + ": must be at least 2");
  const auto sub_seed = s.seed("subsample_seed", derive_seed(seed, kDistanceSeed));
  ctx.check_keys();
  const auto st = with_context("stats", [&] { return distance_stats(data, static_cast<std::size_t>(subsample), sub_seed); });

  ordered_json j;
  j["N"] = data.N();
  j["D"] = data.D();
  j["points"] = st.points;
  j["pairs"] = st.pairs;
  j["max"] = st.max;
  j["median"] = st.median;
  j["mean"] = st.mean;
  ctx.prepare_output();
  ctx.write_json("stats.json", j);
  ctx.log() << "stats: N=" << data.N() << " D=" << data.D() << " max=" << format_double(st.max)
            << " median=" << format_double(st.median) << " mean=" << format_double(st.mean) << " over "
            << st.points << " points\n";
  return kOk;
}

int cmd_train(Context& ctx) {
  const auto seed = root_seed(ctx);
  if (!ctx.has_section("data")) throw ConfigError("config: data: section is required");
  const auto data = load_data(ctx.root().child("data"), seed);
  const auto schedule = resolve_schedule(ctx.root().child("schedule"), &data, seed, ctx.log());

  auto n = ctx.root().child("net");
  NetShape shape;
  shape.D = data.D();
  shape.hidden = n.integer("hidden", 128);
  shape.depth = static_cast<int>(n.integer("depth", 2));
  if (shape.hidden < 1 || shape.depth < 0) throw ConfigError("config: net: hidden must be >= 1 and depth >= 0");
  shape.activation = activation_from_string(n.choice("activation", "softplus", {"softplus", "tanh", "silu"}));
  const auto net_seed = n.seed("init_seed", derive_seed(seed, kNetSeed));

  auto t = ctx.root().child("train");
  TrainConfig tc;
  tc.iterations = static_cast<std::size_t>(std::max<std::int64_t>(0, t.integer("iterations", 5000)));
  tc.batch_size = static_cast<std::size_t>(std::max<std::int64_t>(1, t.integer("batch_size", 128)));
  tc.adam.lr = t.positive("lr", 1e-3);
  tc.adam.beta1 = t.number("beta1", 0.9);
  tc.adam.beta2 = t.number("beta2", 0.999);
  tc.adam.eps = t.positive("adam_eps", 1e-8);
  tc.ema_momentum = t.number("ema_momentum", 0.999);
  const auto train_seed = t.seed("seed", derive_seed(seed, kTrainSeed));

  ctx.check_keys();
  ctx.log() << "train: " << tc.iterations << " iterations, batch " << tc.batch_size << ", L=" << schedule.L()
            << ", " << data.N() << " points in D=" << data.D() << "\n";
  auto result = with_context("train", [&] {
    return train(MlpScoreNet(shape, net_seed), data.x, schedule, tc, train_seed);
  });

  ctx.prepare_output();
  Checkpoint ck{result.net, result.ema, tc.iterations, train_seed};
  save_checkpoint(ctx.path("checkpoint.bin"), ck);
  ctx.wrote("checkpoint.bin");
  ctx.write_text("schedule.json", schedule_to_json(schedule) + "\n");
  std::string losses = "iteration,loss\n";
  for (std::size_t i = 0; i < result.losses.size(); ++i)
    losses += std::to_string(i + 1) + "," + format_double(result.losses[i]) + "\n";
  ctx.write_text("losses.csv", losses);
  if (!result.losses.empty()) {
    const std::size_t tail = std::min<std::size_t>(100, result.losses.size());
    double mean = 0.0;
    for (std::size_t i = result.losses.size() - tail; i < result.losses.size(); ++i) mean += result.losses[i];
    ctx.log() << "final loss (mean of last " << tail << "): " << format_double(mean / tail) << "\n";
  }
  return kOk;
}

int cmd_sample(Context& ctx) {
  const auto seed = root_seed(ctx);
  const auto data = optional_data(ctx, seed);
  const Dataset* dp = data ? &*data : nullptr;
  const auto field = resolve_field(ctx.root().child("field"), dp);
  const auto schedule = resolve_schedule(ctx.root().child("schedule"), dp, seed, ctx.log());
  if (schedule.D != field.field->dims())
    throw ConfigError("config: schedule.D (" + std::to_string(schedule.D) + ") does not match the field (" +
                      std::to_string(field.field->dims()) + ")");
  auto s = ctx.root().child("sampler");
  const auto cfg = resolve_langevin(s, schedule);
  const auto chains = s.integer("chains", 100);
  if (chains < 1) throw ConfigError("config: " + s.path("chains") + ": must be positive");
  const bool record = s.flag("record_tape", false);
  const auto sample_seed = s.seed("seed", derive_seed(seed, kSampleSeed));
  const Matrix init = resolve_init(s, static_cast<std::size_t>(chains), schedule.D, seed);

  ctx.check_keys();
  ctx.log() << "sample: " << chains << " chains, L=" << schedule.L() << ", T=" << cfg.T
            << ", epsilon=" << format_double(cfg.epsilon) << " on " << field.description << "\n";
  const auto result = sample_chains(*field.field, schedule, cfg, init, sample_seed, record, ctx.threads());

  ctx.prepare_output();
  ctx.write_csv("samples.csv", result.batch.samples, coordinate_header(schedule.D));
  save_sample_batch(ctx.path("samples.bin"), result.batch);
  ctx.wrote("samples.bin");
  ctx.wrote(sidecar_path("samples.bin").string());
  if (record) {
    save_tape(ctx.path("tape.bin"), result.tape);
    ctx.wrote("tape.bin");
    ctx.wrote(sidecar_path("tape.bin").string());
  }
  return kOk;
}

int cmd_interpolate(Context& ctx) {
  const auto seed = root_seed(ctx);
  const auto data = optional_data(ctx, seed);
  const Dataset* dp = data ? &*data : nullptr;
  const auto field = resolve_field(ctx.root().child("field"), dp);
  const auto schedule = resolve_schedule(ctx.root().child("schedule"), dp, seed, ctx.log());
  if (schedule.D != field.field->dims())
    throw ConfigError("config: schedule.D does not match the field dimension");
  auto s = ctx.root().child("sampler");
  const auto cfg = resolve_langevin(s, schedule);
  const Vector init = resolve_init(s, 1, schedule.D, seed).row(0).transpose();

  auto ip = ctx.root().child("interpolate");
  const auto K = ip.integer("K", 8);
  if (K < 1) throw ConfigError("config: " + ip.path("K") + ": must be positive");
  const bool from_files = ip.has("tape1") || ip.has("tape2");
  std::string files[2];
  std::uint64_t seeds[2] = {0, 0};
  if (from_files) {
    files[0] = ip.required_text("tape1");
    files[1] = ip.required_text("tape2");
  } else {
    seeds[0] = ip.seed("seed1", derive_seed(seed, kSampleSeed));
    seeds[1] = ip.seed("seed2", derive_seed(seed, kSampleSeed + 100));
  }
  ctx.check_keys();

  NoiseTape tapes[2];
  for (int k = 0; k < 2; ++k) {
    if (from_files) {
      tapes[k] = load_tape(files[k]);
      if (tapes[k].chains != 1)
        throw ConfigError("config: interpolate.tape" + std::to_string(k + 1) + ": expected a single-chain tape");
    } else {
      SampleOptions opt;
      opt.record_tape = true;
      tapes[k] = anneal_sample(*field.field, schedule, cfg, Matrix(init.transpose()), seeds[k], opt).tape;
    }
  }
  const auto result = with_context("interpolate", [&] {
    return interpolate(*field.field, schedule, cfg, init, tapes[0], tapes[1], static_cast<std::size_t>(K));
  });

  ctx.prepare_output();
  std::vector<std::string> header{"k", "theta"};
  for (const auto& h : coordinate_header(schedule.D)) header.push_back(h);
  Matrix table(result.interior.rows(), result.interior.cols() + 2);
  for (Eigen::Index k = 0; k < result.interior.rows(); ++k) {
    table(k, 0) = static_cast<double>(k + 1);
    table(k, 1) = result.angles[static_cast<std::size_t>(k)];
    table.row(k).tail(result.interior.cols()) = result.interior.row(k);
  }
  ctx.write_csv("interpolation.csv", table, header);
  ctx.write_csv("endpoints.csv", result.endpoints, coordinate_header(schedule.D));
  if (!from_files) {
    for (int k = 0; k < 2; ++k) {
      const std::string name = "tape" + std::to_string(k + 1) + ".bin";
      save_tape(ctx.path(name), tapes[k]);
      ctx.wrote(name);
      ctx.wrote(sidecar_path(name).string());
    }
  }
  ctx.log() << "interpolate: " << K << " interior points between two runs\n";
  return kOk;
}

int cmd_fig2(Context& ctx) {
  const auto seed = root_seed(ctx);
  auto f = ctx.root().child("fig2");
  const auto dir = f.required_text("test_dir");
  const auto components = f.integer("components", 10000);
  const auto sigma1s = f.numbers("sigma1", {50.0, 1.0});
  const double sigmaL = f.positive("sigmaL", 0.01);
  const double C = f.number("C", kDefaultTargetC);
  const auto chains = f.integer("chains", 100);
  const auto baseline_subsample = f.integer("baseline_subsample", 10000);
  const auto sample_seed = f.seed("sample_seed", derive_seed(seed, kSampleSeed));
  const auto init_seed = f.seed("init_seed", derive_seed(seed, kInitSeed));
  const auto distance_seed = f.seed("distance_seed", derive_seed(seed, kDistanceSeed));
  const auto spec = read_langevin(f.child("sampler"));
  if (components < 1 || chains < 2 || baseline_subsample < 2)
    throw ConfigError("config: fig2: components >= 1, chains >= 2 and baseline_subsample >= 2 are required");

  ctx.check_keys();
  Dataset test = load_cifar10(dir, CifarSplit::test);
  if (static_cast<std::size_t>(components) < test.N()) test.x.conservativeResize(components, Eigen::NoChange);
  const GaussianMixtureOracle oracle(test.x, 0.0);
  const auto baseline = pairwise_distance_stats(test.x, static_cast<std::size_t>(baseline_subsample), distance_seed, false);
  const Matrix init = make_init(InitKind::uniform, static_cast<std::size_t>(chains), test.D(), init_seed);
  ctx.log() << "fig2: data average pairwise distance " << format_double(baseline.mean) << " over "
            << baseline.points << " images\n";

  ctx.prepare_output();
  std::string csv = "run,sigma1,L,gamma,T,epsilon,chains,avg_pairwise_distance\n";
  csv += "data,,,,,,," + format_double(baseline.mean) + "\n";
  ordered_json runs = ordered_json::array();
  for (double sigma1 : sigma1s) {
    const auto schedule = with_context("fig2.sigma1", [&] { return build_schedule(sigma1, sigmaL, test.D(), C); });
    const LangevinConfig cfg = realize(spec, schedule);
    ctx.log() << "fig2: sigma1=" << format_double(sigma1) << " L=" << schedule.L() << " epsilon="
              << format_double(cfg.epsilon) << " ...\n";
    const auto result = sample_chains(oracle, schedule, cfg, init, sample_seed, false, ctx.threads());
    const auto st = pairwise_distance_stats(result.batch.samples, result.batch.samples.rows(), 0, false);
    const std::string tag = "sigma1_" + format_double(sigma1);
    csv += tag + "," + format_double(sigma1) + "," + std::to_string(schedule.L()) + "," +
           format_double(schedule.gamma) + "," + std::to_string(cfg.T) + "," + format_double(cfg.epsilon) + "," +
           std::to_string(chains) + "," + format_double(st.mean) + "\n";
    runs.push_back({{"sigma1", sigma1},
                    {"L", schedule.L()},
                    {"gamma", schedule.gamma},
                    {"T", cfg.T},
                    {"epsilon", cfg.epsilon},
                    {"avg_pairwise_distance", st.mean}});
    save_sample_batch(ctx.path("samples_" + tag + ".bin"), result.batch);
    ctx.wrote("samples_" + tag + ".bin");
    ctx.wrote(sidecar_path("samples_" + tag + ".bin").string());
    ctx.log() << "fig2: sigma1=" << format_double(sigma1) << " average pairwise distance " << format_double(st.mean)
              << "\n";
  }
  ctx.write_text("fig2.csv", csv);
  ctx.write_json("fig2.json", {{"data_avg_pairwise_distance", baseline.mean}, {"runs", runs}});
  return kOk;
}

int cmd_verify(Context& ctx, const std::string& suite) {
  const auto seed = root_seed(ctx);
  auto v = ctx.root().child("verify");
  BatterySettings b;
  b.seed = v.seed("seed", seed);
  b.threads = ctx.threads();
  b.prop1_configs = static_cast<std::size_t>(v.integer("prop1_configs", 50));
  b.prop1_samples = static_cast<std::size_t>(v.integer("prop1_samples", 20000));
  b.prop2_ks_samples = static_cast<std::size_t>(v.integer("prop2_ks_samples", 10000));
  b.prop2_monotone_samples = static_cast<std::size_t>(v.integer("prop2_monotone_samples", 1000000));
  b.prop3_configs = static_cast<std::size_t>(v.integer("prop3_configs", 20));
  b.prop3_chains = static_cast<std::size_t>(v.integer("prop3_chains", 2000));

  ctx.check_keys();
  std::vector<Check> checks;
  auto add = [&](std::vector<Check> more) { checks.insert(checks.end(), more.begin(), more.end()); };
  if (suite == "prop1" || suite == "all") add(prop1_battery(b));
  if (suite == "prop2" || suite == "all") add(prop2_battery(b));
  if (suite == "prop3" || suite == "all") add(prop3_battery(b));

  ordered_json list = ordered_json::array();
  std::size_t failed = 0;
  for (const auto& c : checks) {
    list.push_back({{"suite", c.suite}, {"name", c.name}, {"values", c.values}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    if (!c.pass) {
      ++failed;
      ctx.log() << "FAIL " << c.suite << ": " << c.name << " " << c.values.dump() << "\n";
    }
  }
  ordered_json report;
  report["suite"] = suite;
  report["checks"] = list;
  report["passed"] = checks.size() - failed;
  report["failed"] = failed;
  report["pass"] = failed == 0;
  ctx.prepare_output();
  ctx.write_json("report.json", report);
  ctx.log() << "verify " << suite << ": " << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? kOk : kVerifyFailed;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidInput*>(&e) ||
      dynamic_cast<const InfeasibleTarget*>(&e) || dynamic_cast<const DivergentRegime*>(&e))
    return kConfigError;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kDataError;
  if (dynamic_cast<const Diverged*>(&e)) return kDiverged;
  return kFailure;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"schedule", "verify", "fig2", "train", "sample", "interpolate", "stats"};
  return names;
}

std::string fnv1a_file(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot read " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

int run(const Invocation& inv, std::ostream& log, std::ostream& err) {
  try {
    json source = inv.config_text ? parse_config_text(*inv.config_text, "<inline>") : load_config(inv.config_file.string());
    if (inv.seed) source["seed"] = *inv.seed;
    // The output location is not part of the experiment; keep it out of the echo.
    fs::path out = "scoretune_out";
    if (source.contains("out")) {
      if (!source["out"].is_string()) throw ConfigError("config: out: expected a string");
      out = source["out"].get<std::string>();
      source.erase("out");
    }
    if (inv.out) out = *inv.out;
    if (inv.threads < 1) throw ConfigError("--threads must be at least 1");

    Context ctx(std::move(source), out, inv.threads, log);
    int code = kOk;
    if (inv.command == "schedule") code = cmd_schedule(ctx);
    else if (inv.command == "stats") code = cmd_stats(ctx);
    else if (inv.command == "train") code = cmd_train(ctx);
    else if (inv.command == "sample") code = cmd_sample(ctx);
    else if (inv.command == "interpolate") code = cmd_interpolate(ctx);
    else if (inv.command == "fig2") code = cmd_fig2(ctx);
    else if (inv.command == "verify") {
      if (inv.suite != "prop1" && inv.suite != "prop2" && inv.suite != "prop3" && inv.suite != "all")
        throw ConfigError("--suite must be prop1, prop2, prop3 or all");
      code = cmd_verify(ctx, inv.suite);
    } else {
      throw ConfigError("unknown command '" + inv.command + "'");
    }
    ctx.check_keys();
    ctx.finish(inv.command);
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace scoretune::cli
