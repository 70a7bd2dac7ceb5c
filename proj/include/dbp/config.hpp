#pragma once

#include "dbp/attacks.hpp"
#include "dbp/classifier.hpp"
#include "dbp/evaluation.hpp"
#include "dbp/perceptual.hpp"
#include "dbp/purifier.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dbp {

struct DataConfig {
  std::string kind = "ring";  // ring | stripe | gaussian | random
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t height = 8, width = 8;
  std::size_t dim = 8;  // gaussian, random
  double radius = 5.0;
  double sigma = 0.1;
  double arc_fraction = 0.7;
  double amplitude = 1.0;
  double spread = 1.0;
  std::size_t samples = 64;
  std::uint64_t seed = 11;
  std::string score = "mixture";  // mixture | mlp
  std::size_t hidden = 64;
};

struct ClassifierConfig {
  std::string kind = "centroid";  // centroid | bayes | bayes_linear
  double gain = 1.0;
  double lambda = 3.0;
  std::uint64_t seed = 7;
};

struct FlawConfig {
  std::string experiment = "eot";
  /// Empty means the experiment's default grid.
  std::vector<double> grid;
  int trials = 10;
  double delta = 0x1p-23;
};

struct RunConfig {
  double beta_min = 0.1, beta_max = 20.0;
  DataConfig data;
  PurifyConfig purify;
  GradMode grad;
  double surrogate_dt = 0.0;
  double grad_tolerance = 1e-8;
  ClassifierConfig clf;
  LossKind loss = LossKind::max_margin;
  AttackConfig attack;
  EvalConfig eval;
  FlawConfig flaws;
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 1;

  RunConfig();
};

/// `section.key = value` lines, `#` comments. Every error names its line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Every key in a fixed order, one `section.key = value` line each; parses back to the same config.
std::string dump_config(const RunConfig& cfg);
/// Applies one key as if it appeared on `line` of a config file.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value, int line = 0);

/// Everything a subcommand needs, built from a config.
struct Experiment {
  NoiseSchedule sched;
  GaussianMixture mix;
  std::shared_ptr<const ScoreModel> model;
  std::unique_ptr<Purifier> purifier;
  std::unique_ptr<Classifier> clf;
  std::vector<LabeledSample> data;
  PerceptualProxy perceptual;

  Pipeline pipeline(const RunConfig& cfg, int jobs) const;
  LossFn loss_for(const RunConfig& cfg, int y) const;
};

std::unique_ptr<Experiment> build_experiment(const RunConfig& cfg);

}  // namespace dbp
