#include "dbp/run.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion purification attack and evaluation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed, out, jobs, method, protocol, experiment;
  bool dump_pgm = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (section.key = value lines)");
    sub->add_option("--seed", seed, "master seed (u64)");
    sub->add_option("--out", out, "output directory, or report file for eval/flaws");
    sub->add_option("--jobs", jobs, "worker threads");
  };
  CLI::App* purify = app.add_subcommand("purify", "purify the dataset and store outputs and state logs");
  CLI::App* attack = app.add_subcommand("attack", "attack every sample and store adversarial examples");
  CLI::App* eval = app.add_subcommand("eval", "attack and score under an evaluation protocol");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "compare checkpointed gradients with the full-tape oracle");
  CLI::App* flaws = app.add_subcommand("flaws", "run a gradient-flaw experiment");
  for (CLI::App* s : {purify, attack, eval, gradcheck, flaws}) common(s);
  attack->add_option("--method", method, "pgd | lf");
  attack->add_option("--protocol", protocol, "sp | wor | mv");
  attack->add_flag("--dump-pgm", dump_pgm, "also write images as binary PGM");
  eval->add_option("--method", method, "pgd | lf");
  eval->add_option("--protocol", protocol, "sp | wor | mv");
  flaws->add_option("--experiment", experiment, "eot | time | guidance | surrogate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dbp::exit_usage;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  dbp::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = dbp::load_config(config_path);
    // Precedence: flag, then the environment (output dir only), then the config file.
    if (const char* env = std::getenv("DBP_OUT_DIR"); env && *env) cfg.out = env;
    if (!seed.empty()) dbp::set_config_key(cfg, "run.seed", seed);
    if (!out.empty()) cfg.out = out;
    if (!jobs.empty()) dbp::set_config_key(cfg, "run.jobs", jobs);
    if (!method.empty()) dbp::set_config_key(cfg, "attack.method", method);
    if (!protocol.empty()) dbp::set_config_key(cfg, "eval.protocol", protocol);
    if (!experiment.empty()) dbp::set_config_key(cfg, "flaws.experiment", experiment);
  } catch (const dbp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dbp::exit_code(e.kind());
  }

  dbp::RunOptions opt;
  opt.dump_pgm = dump_pgm;
  opt.timestamp = utc_timestamp();
  return dbp::run_guarded(name, cfg, opt, std::cout, std::cerr);
}
