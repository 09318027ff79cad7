#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "commands.hpp"
#include "scoretune/data.hpp"
#include "scoretune/sampler.hpp"

using namespace scoretune;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("scoretune_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string log, err;
};

Outcome run_cmd(const std::string& command, const std::string& config, const fs::path& out, int threads = 1,
                const std::string& suite = "all") {
  cli::Invocation inv;
  inv.command = command;
  inv.config_text = config;
  inv.out = out;
  inv.threads = threads;
  inv.suite = suite;
  std::ostringstream log, err;
  const int code = cli::run(inv, log, err);
  return {code, log.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void check_same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    INFO(e.path().filename().string());
    REQUIRE(fs::exists(b / e.path().filename()));
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++files;
  }
  CHECK(files == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{})));
}

void check_manifest(const fs::path& dir) {
  const auto m = read_json(dir / "manifest.json");
  bool has_config = false;
  for (const auto& f : m.at("files")) {
    const fs::path file = dir / f.at("file").get<std::string>();
    REQUIRE(fs::exists(file));
    CHECK(f.at("bytes").get<std::uintmax_t>() == fs::file_size(file));
    CHECK(f.at("fnv1a64").get<std::string>() == cli::fnv1a_file(file));
    has_config = has_config || f.at("file") == "config.resolved.json";
  }
  CHECK(has_config);
}

const char* kCifarSettings = R"({"schedule": {"sigma1": 50, "sigmaL": 0.01, "D": 3072, "C": 0.5}, "sampler": {"T": 5}})";

}  // namespace

TEST_CASE("fnv1a of known inputs") {
  const auto dir = scratch("fnv");
  std::ofstream(dir / "empty").close();
  std::ofstream(dir / "a") << "a";
  CHECK(cli::fnv1a_file(dir / "empty") == "cbf29ce484222325");
  CHECK(cli::fnv1a_file(dir / "a") == "af63dc4c8601ec8c");
  fs::remove_all(dir);
}

TEST_CASE("schedule command on the CIFAR-10 hyperparameters") {
  const auto dir = scratch("cifar_settings");
  const auto r = run_cmd("schedule", kCifarSettings, dir / "a");
  REQUIRE(r.code == cli::kOk);
  const auto summary = read_json(dir / "a" / "summary.json");
  const auto L = summary.at("L").get<std::size_t>();
  CHECK(L >= 215);
  CHECK(L <= 240);
  const double eps = summary.at("epsilon").get<double>();
  CHECK(eps >= 6.2e-6 / 2);
  CHECK(eps <= 6.2e-6 * 2);

  // The table has one row per scale plus a header.
  const auto table = read_csv_matrix(dir / "a" / "schedule.csv");
  CHECK(table.rows() == static_cast<Eigen::Index>(L));
  CHECK(table(0, 1) == 50.0);
  CHECK(table(L - 1, 1) == 0.01);
  CHECK(table(L - 1, 2) == doctest::Approx(eps).epsilon(1e-15));

  check_manifest(dir / "a");
  const auto resolved = read_json(dir / "a" / "config.resolved.json");
  CHECK(resolved.at("sampler").at("epsilon") == "solve");
  CHECK(resolved.at("sampler").at("epsilon_solved").get<double>() == eps);

  // Same config twice, and the echoed config itself, give identical bytes.
  REQUIRE(run_cmd("schedule", kCifarSettings, dir / "b").code == cli::kOk);
  check_same_tree(dir / "a", dir / "b");
  REQUIRE(run_cmd("schedule", slurp(dir / "a" / "config.resolved.json"), dir / "c").code == cli::kOk);
  check_same_tree(dir / "a", dir / "c");
  fs::remove_all(dir);
}

TEST_CASE("schedule with sigma1 barely above sigmaL has two scales") {
  const auto dir = scratch("two");
  const auto r = run_cmd("schedule", R"({"schedule": {"sigma1": 0.0105, "sigmaL": 0.01, "D": 3072}})", dir);
  REQUIRE(r.code == cli::kOk);
  CHECK(read_json(dir / "summary.json").at("L") == 2);
  fs::remove_all(dir);
}

TEST_CASE("schedule from data") {
  const auto dir = scratch("fromdata");
  Matrix pts(3, 2);
  pts << 0, 0, 3, 4, 1, 1;
  write_csv_matrix(dir / "pts.csv", pts, coordinate_header(2));
  const std::string cfg = R"({"data": {"kind": "csv", "path": ")" + (dir / "pts.csv").string() +
                          R"("}, "schedule": {"sigmaL": 0.01, "L": 4}})";
  REQUIRE(run_cmd("schedule", cfg, dir / "out").code == cli::kOk);
  const auto resolved = read_json(dir / "out" / "config.resolved.json");
  CHECK(resolved.at("schedule").at("sigma1") == "from-data");
  CHECK(resolved.at("schedule").at("sigma1_from_data").get<double>() == 5.0);
  CHECK(read_json(dir / "out" / "summary.json").at("sigma1").get<double>() == 5.0);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  auto unknown = run_cmd("schedule", R"({"schedule": {"sigma1": 50, "D": 3072, "sigmal": 0.01}})", dir);
  CHECK(unknown.code == cli::kConfigError);
  CHECK(unknown.err.find("schedule.sigmal") != std::string::npos);

  CHECK(run_cmd("schedule", R"({"schedule": {"sigma1": 50, "D": 3}})", dir).code == cli::kConfigError);
  CHECK(run_cmd("schedule", R"({"schedule": {"sigma1": 50}})", dir).code == cli::kConfigError);
  CHECK(run_cmd("schedule", R"({"schedule": {"sigma1": 50, "D": 3072, "sigmaL": "x"}})", dir).code ==
        cli::kConfigError);
  CHECK(run_cmd("schedule", "{not json", dir).code == cli::kConfigError);
  // epsilon at sigmaL^2 is outside the contracting regime.
  auto divergent = run_cmd("schedule", R"({"schedule": {"sigma1": 50, "D": 3072}, "sampler": {"epsilon": 1e-4}})", dir);
  CHECK(divergent.code == cli::kConfigError);
  CHECK(divergent.err.find("sampler") != std::string::npos);

  auto missing = run_cmd("stats", R"({"data": {"kind": "cifar10", "dir": "/nonexistent/cifar"}})", dir);
  CHECK(missing.code == cli::kDataError);
  CHECK(missing.err.find("data_batch_1.bin") != std::string::npos);

  Matrix huge(3, 2);
  huge << 1, 2, 1e308, -1e308, 3, 4;
  write_csv_matrix(dir / "huge.csv", huge);
  const std::string diverge = R"({"data": {"kind": "csv", "path": ")" + (dir / "huge.csv").string() +
                              R"("}, "schedule": {"sigma1": 1, "sigmaL": 0.1, "L": 3}, "train": {"iterations": 20, "batch_size": 4}})";
  CHECK(run_cmd("train", diverge, dir / "t").code == cli::kDiverged);

  CHECK(run_cmd("nonsense", "{}", dir).code == cli::kConfigError);
  CHECK(run_cmd("verify", "{}", dir, 1, "prop9").code == cli::kConfigError);
  fs::remove_all(dir);
}

TEST_CASE("verify exit status follows the report") {
  const auto dir = scratch("verify");
  // A deliberately starved prop2 battery: whatever the outcome, status and report agree.
  const auto r = run_cmd("verify", R"({"verify": {"prop2_monotone_samples": 30}})", dir, 1, "prop2");
  const auto report = read_json(dir / "report.json");
  CHECK(r.code == (report.at("pass").get<bool>() ? cli::kOk : cli::kVerifyFailed));
  CHECK(report.at("checks").size() == 5);
  for (const auto& c : report.at("checks")) {
    CHECK(c.contains("name"));
    CHECK(c.contains("values"));
    CHECK(c.contains("tolerance"));
    CHECK(c.contains("pass"));
  }

  const auto ok = run_cmd("verify", R"({"verify": {"prop3_configs": 4, "prop3_chains": 500}})", dir / "p3", 2, "prop3");
  CHECK(ok.code == cli::kOk);
  CHECK(read_json(dir / "p3" / "report.json").at("failed") == 0);
  fs::remove_all(dir);
}

TEST_CASE("train, sample and interpolate on 2-D data") {
  const auto dir = scratch("pipeline");
  const std::string train_cfg = R"({"seed": 5,
    "data": {"kind": "mixture", "centers": [[-2, 0], [2, 0]], "sigma": 0.3, "n": 500},
    "schedule": {"sigma1": 4, "sigmaL": 0.1, "L": 5},
    "net": {"hidden": 16},
    "train": {"iterations": 200, "batch_size": 32, "lr": 1e-3}})";
  REQUIRE(run_cmd("train", train_cfg, dir / "train").code == cli::kOk);
  CHECK(fs::exists(dir / "train" / "checkpoint.bin"));
  CHECK(read_csv_matrix(dir / "train" / "losses.csv").rows() == 200);
  check_manifest(dir / "train");

  const std::string ck = (dir / "train" / "checkpoint.bin").string();
  const std::string sched = (dir / "train" / "schedule.json").string();
  const std::string sample_cfg = R"({"field": {"kind": "checkpoint", "path": ")" + ck +
                                 R"("}, "schedule": {"file": ")" + sched +
                                 R"("}, "sampler": {"T": 10, "epsilon": 1e-3, "chains": 70}})";
  REQUIRE(run_cmd("sample", sample_cfg, dir / "s1", 1).code == cli::kOk);
  std::vector<std::string> header;
  const Matrix samples = read_csv_matrix(dir / "s1" / "samples.csv", &header);
  CHECK(header == std::vector<std::string>{"x0", "x1"});
  CHECK(samples.rows() == 70);
  CHECK(samples.allFinite());
  CHECK(load_sample_batch(dir / "s1" / "samples.bin").samples == samples);
  check_manifest(dir / "s1");

  // More workers, same bytes.
  REQUIRE(run_cmd("sample", sample_cfg, dir / "s3", 3).code == cli::kOk);
  check_same_tree(dir / "s1", dir / "s3");

  // Two single-chain runs with recorded tapes, then interpolation between them.
  for (int k : {1, 2}) {
    const std::string cfg = R"({"field": {"kind": "checkpoint", "path": ")" + ck +
                            R"("}, "schedule": {"file": ")" + sched +
                            R"("}, "sampler": {"T": 10, "epsilon": 1e-3, "chains": 1, "record_tape": true, "seed": )" +
                            std::to_string(100 + k) + "}}";
    REQUIRE(run_cmd("sample", cfg, dir / ("run" + std::to_string(k))).code == cli::kOk);
  }
  const std::string interp_cfg = R"({"field": {"kind": "checkpoint", "path": ")" + ck +
                                 R"("}, "schedule": {"file": ")" + sched +
                                 R"("}, "sampler": {"T": 10, "epsilon": 1e-3}, "interpolate": {"K": 8, "tape1": ")" +
                                 (dir / "run1" / "tape.bin").string() + R"(", "tape2": ")" +
                                 (dir / "run2" / "tape.bin").string() + R"("}})";
  REQUIRE(run_cmd("interpolate", interp_cfg, dir / "interp").code == cli::kOk);
  std::vector<std::string> ih;
  const Matrix interior = read_csv_matrix(dir / "interp" / "interpolation.csv", &ih);
  CHECK(interior.rows() == 8);
  CHECK(ih == std::vector<std::string>{"k", "theta", "x0", "x1"});
  const Matrix ends = read_csv_matrix(dir / "interp" / "endpoints.csv");
  REQUIRE(ends.rows() == 2);
  // Both runs started from the same default init, so replaying their tapes reproduces them.
  for (int k : {0, 1}) {
    const Matrix run = read_csv_matrix(dir / ("run" + std::to_string(k + 1)) / "samples.csv");
    CHECK((ends.row(k) - run.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  fs::remove_all(dir);
}

TEST_CASE("sample on an exact oracle and stats") {
  const auto dir = scratch("oracle");
  const std::string cfg = R"({"field": {"kind": "mixture", "centers": [[0, 0, 0]], "sigma": 0},
    "schedule": {"sigma1": 1, "sigmaL": 0.01, "D": 3, "L": 6}, "sampler": {"T": 3, "epsilon": 1e-5, "chains": 5}})";
  REQUIRE(run_cmd("sample", cfg, dir / "s").code == cli::kOk);
  // A single point mass is recovered exactly by the final denoising step.
  CHECK(read_csv_matrix(dir / "s" / "samples.csv").cwiseAbs().maxCoeff() <= 1e-12);

  REQUIRE(run_cmd("stats", R"({"data": {"kind": "gaussian", "D": 4, "n": 300}, "stats": {"subsample": 100}})",
                  dir / "st")
              .code == cli::kOk);
  const auto st = read_json(dir / "st" / "stats.json");
  CHECK(st.at("N") == 300);
  CHECK(st.at("points") == 100);
  CHECK(st.at("pairs") == 4950);
  CHECK(st.at("max").get<double>() >= st.at("median").get<double>());
  fs::remove_all(dir);
}

TEST_CASE("command-line binary") {
  const char* exe = std::getenv("SCORETUNE_CLI");
  if (!exe) return;
  const auto dir = scratch("binary");
  std::ofstream(dir / "c.json") << kCifarSettings;
  const std::string base = std::string(exe) + " schedule --config " + (dir / "c.json").string() + " --out " +
                           (dir / "o").string() + " > " + (dir / "log").string() + " 2>&1";
  CHECK(std::system(base.c_str()) == 0);
  CHECK(fs::exists(dir / "o" / "schedule.json"));
  CHECK(slurp(dir / "log").find("L=219") != std::string::npos);

  const std::string bad = std::string(exe) + " verify --suite nope > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == cli::kConfigError);

  const std::string seeded = std::string(exe) + " schedule --config " + (dir / "c.json").string() +
                             " --seed 42 --out " + (dir / "s") .string() + " > /dev/null";
  CHECK(std::system(seeded.c_str()) == 0);
  CHECK(read_json(dir / "s" / "config.resolved.json").at("seed") == 42);
  fs::remove_all(dir);
}
