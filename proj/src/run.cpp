#include "dbp/run.hpp"

#include "dbp/flawlab.hpp"
#include "dbp/io.hpp"
#include "dbp/noise.hpp"
#include "dbp/parallel.hpp"

#include <filesystem>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace dbp {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return exit_config;
    case ErrorKind::io:
      return exit_io;
    case ErrorKind::shape:
      return exit_shape;
    case ErrorKind::range:
      return exit_range;
    case ErrorKind::domain:
      return exit_domain;
    case ErrorKind::structural:
      return exit_structural;
    case ErrorKind::replay_integrity:
      return exit_replay;
    case ErrorKind::numeric_divergence:
      return exit_numeric;
  }
  return exit_internal;
}

namespace {

constexpr const char* kVersion = "0.1.0";

// Where results go. A *.csv target (eval, flaws) is the result file itself.
struct Target {
  fs::path dir;
  fs::path file;
  fs::path manifest;
};

Target resolve_target(const std::string& out, const char* default_file) {
  Target t;
  const fs::path p(out);
  if (default_file && p.extension() == ".csv") {
    t.file = p;
    t.dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    t.manifest = fs::path(p).replace_extension(".manifest.txt");
  } else {
    t.dir = p;
    if (default_file) t.file = p / default_file;
    t.manifest = p / "manifest.txt";
  }
  std::error_code ec;
  fs::create_directories(t.dir, ec);
  if (ec) throw IoError("cannot create output directory '" + t.dir.string() + "': " + ec.message());
  return t;
}

void write_manifest(const Target& t, const std::string& name, const RunConfig& cfg, const RunOptions& opt) {
  std::string m = "# dbp run manifest\n";
  m += "version = " + std::string(kVersion) + "\n";
  m += "subcommand = " + name + "\n";
  m += "seed = " + std::to_string(cfg.seed) + "\n";
  if (!opt.timestamp.empty()) m += "timestamp = " + opt.timestamp + "\n";
  m += "\n# effective config\n" + dump_config(cfg);
  write_file(t.manifest.string(), m);
}

std::string join_ints(const std::vector<int>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
  return s;
}

std::string bits(const std::vector<int>& preds, int y) {
  std::string s;
  for (int p : preds) s.push_back(p != y ? '1' : '0');
  return s;
}

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& ts) {
  Shape shape{ts.size()};
  shape.insert(shape.end(), ts.at(0).shape().begin(), ts.at(0).shape().end());
  Eigen::ArrayXd data(static_cast<Eigen::Index>(shape_size(shape)));
  Eigen::Index pos = 0;
  for (const Tensor& t : ts) {
    require_same_shape(ts[0], t, "stack");
    data.segment(pos, static_cast<Eigen::Index>(t.size())) = t.array();
    pos += static_cast<Eigen::Index>(t.size());
  }
  return Tensor(std::move(shape), std::move(data));
}

AttackConfig attack_config(const RunConfig& cfg) {
  AttackConfig ac = cfg.attack;
  ac.seed = cfg.seed;
  ac.early_stop = cfg.eval.early_stop;
  switch (cfg.eval.mode) {
    case EvalConfig::Mode::sp_final:
      ac.success = {SuccessRule::Kind::sp, 1};
      break;
    case EvalConfig::Mode::wor:
      ac.success = {SuccessRule::Kind::wor, 1};
      break;
    case EvalConfig::Mode::mv:
      cfg.eval.validate(cfg.purify.copies);
      ac.success = {SuccessRule::Kind::mv, cfg.eval.k};
      break;
  }
  ac.validate();
  return ac;
}

int run_purify(const RunConfig& cfg, const Experiment& e, const Target& t, std::ostream& log) {
  const auto& data = e.data;
  std::vector<Tensor> outs(data.size());
  std::vector<std::vector<int>> preds(data.size());
  std::optional<PurifyState> first;
  parallel_for(data.size(), cfg.jobs, [&](std::size_t j) {
    PurifyState st = e.purifier->forward(data[j].x, stream_key(cfg.seed, "run.purify", {j}));
    std::vector<Tensor> copies;
    for (int c = 0; c < cfg.purify.copies; ++c) copies.push_back(st.output(c));
    outs[j] = stack(copies);
    preds[j] = copy_predictions(st, *e.clf);
    if (j == 0) first = std::move(st);
  });

  std::vector<Tensor> inputs;
  for (const auto& s : data) inputs.push_back(s.x);
  write_tensor((t.dir / "inputs.bin").string(), stack(inputs));
  write_tensor((t.dir / "purified.bin").string(), stack(outs));
  // Full state log of sample 0: (copies, rounds, steps + 1, ...).
  std::vector<Tensor> per_copy;
  for (const auto& rounds : first->states) {
    std::vector<Tensor> per_round;
    for (const auto& log_r : rounds) per_round.push_back(stack(log_r));
    per_copy.push_back(stack(per_round));
  }
  write_tensor((t.dir / "states.bin").string(), stack(per_copy));

  std::string csv = "sample_id,label,copy,pred\n";
  std::size_t correct = 0, total = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    for (std::size_t c = 0; c < preds[j].size(); ++c) {
      csv += std::to_string(j) + "," + std::to_string(data[j].label) + "," + std::to_string(c) + "," +
             std::to_string(preds[j][c]) + "\n";
      correct += preds[j][c] == data[j].label ? 1 : 0;
      ++total;
    }
  }
  write_file((t.dir / "purify.csv").string(), csv);
  log << "purified " << data.size() << " samples x " << cfg.purify.copies << " copies, per-copy accuracy "
      << format_double(static_cast<double>(correct) / static_cast<double>(total)) << "\n";
  return exit_ok;
}

int run_attack_cmd(const RunConfig& cfg, const Experiment& e, const Target& t, const RunOptions& opt,
                   std::ostream& log) {
  const AttackConfig ac = attack_config(cfg);
  const Pipeline pl = e.pipeline(cfg, 1);
  const auto& data = e.data;
  std::vector<AttackResult> res(data.size());
  parallel_for(data.size(), cfg.jobs, [&](std::size_t j) { res[j] = run_attack(data[j].x, data[j].label, ac, pl, j); });

  std::string summary = "sample_id,label,success,iterations,distance,final_preds\n";
  std::size_t wins = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const AttackResult& r = res[j];
    const std::string id = std::to_string(j);
    write_tensor((t.dir / ("adv_" + id + ".bin")).string(), r.x_adv);
    std::string trace = "iteration,loss,distance,outcomes\n";
    for (const TraceRow& row : r.trace) {
      trace += std::to_string(row.iteration) + "," + format_double(row.loss) + "," + format_double(row.distance) +
               "," + bits(row.preds, data[j].label) + "\n";
    }
    write_file((t.dir / ("trace_" + id + ".csv")).string(), trace);
    summary += id + "," + std::to_string(data[j].label) + "," + (r.success ? "1" : "0") + "," +
               std::to_string(r.iterations) + "," + format_double(r.distance) + "," + join_ints(r.final_preds, ";") +
               "\n";
    wins += r.success ? 1 : 0;
    if (opt.dump_pgm && data[j].x.rank() == 2) {
      const double lo = std::min(data[j].x.array().minCoeff(), r.x_adv.array().minCoeff());
      const double hi = std::max(data[j].x.array().maxCoeff(), r.x_adv.array().maxCoeff());
      if (hi > lo) {
        write_pgm((t.dir / ("clean_" + id + ".pgm")).string(), data[j].x, lo, hi);
        write_pgm((t.dir / ("adv_" + id + ".pgm")).string(), r.x_adv, lo, hi);
      }
    }
  }
  write_file((t.dir / "summary.csv").string(), summary);
  log << "attack succeeded on " << wins << "/" << data.size() << " samples\n";
  return exit_ok;
}

int run_eval(const RunConfig& cfg, const Experiment& e, const Target& t, std::ostream& log) {
  AttackConfig ac = attack_config(cfg);
  const MetricsReport rep = evaluate_defense(e.data, ac, e.pipeline(cfg, 1), cfg.eval, cfg.jobs);
  std::string csv =
      "sample_id,label,clean_pred_rule,outcome_bits,mv_pred,iterations,success,distance,cl_acc,rob_acc,wor_rob,avg_rob,"
      "mv_rob\n";
  for (const SampleReport& s : rep.samples) {
    std::string b;
    for (int o : s.outcomes) b.push_back(o ? '1' : '0');
    csv += std::to_string(s.id) + "," + std::to_string(s.label) + "," + std::to_string(s.clean_pred) + "," + b + "," +
           std::to_string(s.mv_pred) + "," + std::to_string(s.iterations) + "," + (s.attack_success ? "1" : "0") +
           "," + format_double(s.distance) + ",,,,,\n";
  }
  csv += "summary,,,,,,,," + format_double(rep.clean_acc) + "," + format_double(rep.robust_acc) + "," +
         format_double(rep.wor_rob) + "," + format_double(rep.avg_rob) + "," + format_double(rep.mv_rob) + "\n";
  write_file(t.file.string(), csv);
  log << eval_mode_name(rep.mode) << ": Cl-Acc " << format_double(rep.clean_acc) << ", Rob-Acc "
      << format_double(rep.robust_acc) << "\n";
  return exit_ok;
}

int run_gradcheck(const RunConfig& cfg, const Experiment& e, const Target& t, std::ostream& log) {
  const LabeledSample& s = e.data.at(0);
  const LossFn loss = e.loss_for(cfg, s.label);
  const PurifyState st = e.purifier->forward(s.x, stream_key(cfg.seed, "run.gradcheck"));
  const auto n = static_cast<std::size_t>(cfg.purify.copies);
  std::vector<double> err(n);
  parallel_for(n, cfg.jobs, [&](std::size_t c) {
    const int ci = static_cast<int>(c);
    const Tensor ck = path_gradient(st, ci, *e.purifier, loss, GradMode{GradMode::Kind::full, 1}).result.total();
    const Tensor orc = path_gradient(st, ci, *e.purifier, loss, GradMode{GradMode::Kind::oracle, 1}).result.total();
    err[c] = l2_norm(ck - orc) / std::max(l2_norm(orc), 1e-300);
  });
  double worst = 0.0;
  std::string csv = "copy,rel_error\n";
  for (std::size_t c = 0; c < n; ++c) {
    worst = std::max(worst, err[c]);
    csv += std::to_string(c) + "," + format_double(err[c]) + "\n";
  }
  write_file((t.dir / "gradcheck.csv").string(), csv);
  const bool ok = worst <= cfg.grad_tolerance;
  log << "max relative error: " << format_double(worst) << "\n";
  log << "replay integrity: ok\n";
  log << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << format_double(cfg.grad_tolerance)
      << ")\n";
  return ok ? exit_ok : exit_check_failed;
}

std::vector<int> int_grid(const std::vector<double>& g) {
  std::vector<int> out;
  for (double v : g) {
    if (v != std::floor(v) || v < 1) throw ConfigError("flaws.grid entries must be positive integers here");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

int run_flaws(const RunConfig& cfg, const Experiment& e, const Target& t, std::ostream& log) {
  const LabeledSample& s = e.data.at(0);
  const FlawSetup setup{*e.purifier, e.loss_for(cfg, s.label), s.x};
  const std::string& x = cfg.flaws.experiment;
  std::vector<double> grid = cfg.flaws.grid;
  FlawReport rep;
  if (x == "eot") {
    if (grid.empty()) grid = {4, 16, 64};
    rep = eot_variance_experiment(setup, int_grid(grid), cfg.flaws.trials, cfg.seed, cfg.jobs);
  } else if (x == "time") {
    if (grid.empty()) grid = {0.02, 0.04, 0.06, 0.08, 0.1};
    rep = time_drift_experiment(setup, grid, cfg.flaws.delta, cfg.flaws.trials, cfg.seed, cfg.jobs);
  } else if (x == "guidance") {
    if (grid.empty()) grid = {0.006, 0.012, 0.018, 0.024, 0.03, 0.036};
    rep = guidance_omission_experiment(setup, grid, cfg.flaws.trials, cfg.seed, cfg.jobs);
  } else {
    if (grid.empty()) grid = {1, 2, 5, 10};
    rep = surrogate_mismatch_experiment(setup, int_grid(grid), cfg.flaws.trials, cfg.seed, cfg.jobs);
  }
  std::string csv = "x_value,g_d,g_e,g_d_mean,trials\n";
  for (const FlawPoint& p : rep.points) {
    csv += format_double(p.x_value) + "," + format_double(p.g_d) + "," + format_double(p.g_e) + "," +
           format_double(p.g_d_mean) + "," + std::to_string(p.trials) + "\n";
  }
  write_file(t.file.string(), csv);
  log << x << ": " << rep.points.size() << " grid points written to " << t.file.string() << "\n";
  return exit_ok;
}

}  // namespace

int run_subcommand(const std::string& name, const RunConfig& cfg, const RunOptions& opt, std::ostream& log) {
  const char* file = name == "eval" ? "report.csv" : name == "flaws" ? "curves.csv" : nullptr;
  if (name != "purify" && name != "attack" && name != "eval" && name != "gradcheck" && name != "flaws") {
    throw ConfigError("unknown subcommand '" + name + "'");
  }
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
  cfg.purify.validate();
  const auto e = build_experiment(cfg);
  const Target t = resolve_target(cfg.out, file);
  write_manifest(t, name, cfg, opt);
  if (name == "purify") return run_purify(cfg, *e, t, log);
  if (name == "attack") return run_attack_cmd(cfg, *e, t, opt, log);
  if (name == "eval") return run_eval(cfg, *e, t, log);
  if (name == "gradcheck") return run_gradcheck(cfg, *e, t, log);
  return run_flaws(cfg, *e, t, log);
}

int run_guarded(const std::string& name, const RunConfig& cfg, const RunOptions& opt, std::ostream& log,
                std::ostream& err) {
  try {
    return run_subcommand(name, cfg, opt, log);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return exit_internal;
  }
}

}  // namespace dbp
