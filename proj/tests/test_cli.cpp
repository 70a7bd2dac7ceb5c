#include "dbp/config.hpp"
#include "dbp/io.hpp"
#include "dbp/noise.hpp"
#include "dbp/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace dbp;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dbp_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny() {
  return parse_config(
      "data.kind = stripe\n"
      "data.height = 4\n"
      "data.width = 4\n"
      "data.sigma = 0.3\n"
      "data.samples = 3\n"
      "clf.kind = bayes\n"
      "purify.t_star = 0.02\n"
      "purify.copies = 3\n"
      "attack.iters = 2\n"
      "attack.eps_inf = 0.5\n"
      "eval.k = 3\n"
      "flaws.trials = 2\n");
}

}  // namespace

TEST(ParseConfig, EmptyFileGivesDefaults) {
  EXPECT_EQ(dump_config(parse_config("")), dump_config(RunConfig{}));
  EXPECT_EQ(dump_config(parse_config("# only a comment\n\n   \n")), dump_config(RunConfig{}));
}

TEST(ParseConfig, TypedValues) {
  const RunConfig c = parse_config(
      "purify.t_star = 0.1\n"
      "purify.solver = ddpm  # trailing comment\n"
      "purify.stochastic = false\n"
      "attack.sigma_c = inf\n"
      "eval.protocol = mv\n"
      "flaws.grid = 1, 2, 5\n"
      "run.seed = 18446744073709551615\n");
  EXPECT_EQ(c.purify.t_star, 0.1);
  EXPECT_EQ(c.purify.solver, Solver::ddpm);
  EXPECT_FALSE(c.purify.stochastic);
  EXPECT_TRUE(std::isinf(c.attack.sigma_c));
  EXPECT_EQ(c.eval.mode, EvalConfig::Mode::mv);
  EXPECT_EQ(c.flaws.grid, (std::vector<double>{1, 2, 5}));
  EXPECT_EQ(c.seed, 18446744073709551615ull);
}

TEST(ParseConfig, ErrorsNameTheLine) {
  EXPECT_NE(error_of("purify.t_star = abc").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("purify.t_star = abc").find("purify.t_star"), std::string::npos);
  EXPECT_NE(error_of("\npurify.bogus = 1").find("line 2: unknown key 'purify.bogus'"), std::string::npos);
  EXPECT_NE(error_of("purify.copies = 2\npurify.copies = 3").find("line 2: duplicate key"), std::string::npos);
  EXPECT_NE(error_of("just words").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("seed = 3").find("no section"), std::string::npos);
  EXPECT_NE(error_of("purify.copies = 0").find("at least 1"), std::string::npos);
  EXPECT_NE(error_of("purify.copies = 2.5").find("integer"), std::string::npos);
  EXPECT_NE(error_of("purify.stochastic = maybe").find("true or false"), std::string::npos);
  EXPECT_NE(error_of("data.kind = torus").find("ring"), std::string::npos);
  EXPECT_NE(error_of("purify.t_star =").find("missing value"), std::string::npos);
}

TEST(ParseConfig, DumpRoundTrips) {
  RunConfig c = tiny();
  c.flaws.grid = {0.5, 0.25};
  const std::string d = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(d)), d);
}

TEST(TensorIo, RoundTripIsBitwise) {
  const Tensor t = normal_tensor(4, {2, 3, 5});
  const Tensor back = decode_tensor(encode_tensor(t));
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_TRUE(bitwise_equal(back, t));
  const std::string bytes = encode_tensor(Tensor::vector({1.5}));
  EXPECT_EQ(bytes.size(), 8u + 8u + 8u + 8u);
  EXPECT_EQ(bytes.substr(0, 8), "DBPTNSR1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);  // rank, little-endian
}

TEST(TensorIo, RejectsCorruptInput) {
  std::string bytes = encode_tensor(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(decode_tensor("nonsense"), IoError);
  EXPECT_THROW(decode_tensor(bytes.substr(0, bytes.size() - 1)), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_tensor(bytes), IoError);
  EXPECT_THROW(read_tensor("/nonexistent/dir/t.bin"), IoError);
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(ExitCodes, DistinctPerErrorKind) {
  std::set<int> codes;
  for (ErrorKind k : {ErrorKind::domain, ErrorKind::structural, ErrorKind::range, ErrorKind::shape, ErrorKind::config,
                      ErrorKind::replay_integrity, ErrorKind::numeric_divergence, ErrorKind::io}) {
    const int c = exit_code(k);
    EXPECT_NE(c, 0);
    EXPECT_NE(c, exit_check_failed);
    codes.insert(c);
  }
  EXPECT_EQ(codes.size(), 8u);
}

TEST(Run, MvWithTooFewCopiesIsAConfigError) {
  RunConfig c = tiny();
  c.eval.mode = EvalConfig::Mode::mv;
  c.eval.k = 5;
  c.out = (scratch("mvk") / "report.csv").string();
  std::ostringstream log, err;
  EXPECT_EQ(run_guarded("eval", c, {}, log, err), exit_config);
  EXPECT_NE(err.str().find("K = 5"), std::string::npos);
}

TEST(Run, UnknownSubcommand) {
  std::ostringstream log, err;
  EXPECT_EQ(run_guarded("train", tiny(), {}, log, err), exit_config);
}

TEST(Run, GradcheckPasses) {
  RunConfig c = tiny();
  c.out = scratch("gradcheck").string();
  std::ostringstream log, err;
  EXPECT_EQ(run_guarded("gradcheck", c, {}, log, err), exit_ok) << err.str();
  EXPECT_NE(log.str().find("max relative error"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "gradcheck.csv"));
}

TEST(Run, GradcheckFailsBelowTolerance) {
  RunConfig c = tiny();
  c.grad_tolerance = -1.0;
  c.out = scratch("gradcheck_fail").string();
  std::ostringstream log, err;
  EXPECT_EQ(run_guarded("gradcheck", c, {}, log, err), exit_check_failed);
}

TEST(Run, PurifyWritesTensors) {
  RunConfig c = tiny();
  c.out = scratch("purify").string();
  std::ostringstream log, err;
  ASSERT_EQ(run_guarded("purify", c, {}, log, err), exit_ok) << err.str();
  const Tensor purified = read_tensor((fs::path(c.out) / "purified.bin").string());
  EXPECT_EQ(purified.shape(), (Shape{3, 3, 4, 4}));
  const Tensor states = read_tensor((fs::path(c.out) / "states.bin").string());
  EXPECT_EQ(states.shape(), (Shape{3, 1, 21, 4, 4}));
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "manifest.txt"));
}

TEST(Run, ArtifactsDoNotDependOnJobs) {
  for (const std::string sub : {"purify", "attack", "eval", "flaws"}) {
    std::vector<fs::path> dirs;
    for (int jobs : {1, 3}) {
      RunConfig c = tiny();
      c.jobs = jobs;
      if (sub == "flaws") c.flaws.experiment = "surrogate";
      const fs::path dir = scratch(sub + std::to_string(jobs));
      c.out = dir.string();
      RunOptions opt;
      opt.dump_pgm = true;
      std::ostringstream log, err;
      ASSERT_EQ(run_guarded(sub, c, opt, log, err), exit_ok) << sub << ": " << err.str();
      dirs.push_back(dir);
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      const std::string name = entry.path().filename().string();
      if (name == "manifest.txt") continue;
      EXPECT_EQ(slurp(entry.path()), slurp(dirs[1] / name)) << sub << "/" << name;
      ++compared;
    }
    EXPECT_GT(compared, 0u) << sub;
  }
}

TEST(Run, CsvTargetWritesFileAndSideManifest) {
  RunConfig c = tiny();
  const fs::path dir = scratch("csvtarget");
  c.out = (dir / "curves.csv").string();
  c.flaws.experiment = "time";
  c.flaws.grid = {0.01, 0.02};
  std::ostringstream log, err;
  ASSERT_EQ(run_guarded("flaws", c, {}, log, err), exit_ok) << err.str();
  const std::string csv = slurp(dir / "curves.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x_value,g_d,g_e,g_d_mean,trials");
  EXPECT_TRUE(fs::exists(dir / "curves.manifest.txt"));
}
