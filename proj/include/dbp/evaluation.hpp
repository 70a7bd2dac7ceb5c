#pragma once

#include "dbp/attacks.hpp"
#include "dbp/protocol.hpp"
#include "dbp/score_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dbp {

struct EvalConfig {
  enum class Mode { sp_final, wor, mv };
  Mode mode = Mode::wor;
  /// sp-final: fresh purifications of the final adversarial example
  int replicas = 20;
  /// mv: votes per decision
  int k = 9;
  /// Stop attacking a sample once the mode's success rule holds.
  bool early_stop = true;

  void validate(int copies) const;
};

EvalConfig::Mode parse_eval_mode(const std::string& name);
std::string eval_mode_name(EvalConfig::Mode m);

struct SampleReport {
  std::size_t id = 0;
  int label = 0;
  /// Clean prediction under the mode's rule (copy 0, or the K-vote).
  int clean_pred = 0;
  /// Clean correctness under the mode's rule; sp-final averages its R replicas.
  double clean_score = 0.0;
  /// Row of the outcome matrix: 1 where a purified copy of the final example is misclassified.
  std::vector<int> outcomes;
  /// mv mode: vote over the first K final predictions.
  int mv_pred = 0;
  int iterations = 0;
  bool attack_success = false;
  /// L∞ (pgd) or perceptual (lf) distance of the returned example.
  double distance = 0.0;
  Tensor x_adv;
};

struct MetricsReport {
  EvalConfig::Mode mode = EvalConfig::Mode::wor;
  std::vector<SampleReport> samples;
  double clean_acc = 0.0;
  double wor_rob = 0.0;
  double avg_rob = 0.0;
  /// Only meaningful in mv mode.
  double mv_rob = 0.0;
  /// The mode's headline robustness (Wor.Rob, MV.Rob or Avg.Rob over replicas).
  double robust_acc = 0.0;
};

/// Attacks every sample and scores the result under one evaluation protocol.
/// Samples run in parallel over `jobs` workers with independent seeds; the
/// report is assembled in sample order.
MetricsReport evaluate_defense(const std::vector<LabeledSample>& data, const AttackConfig& attack, const Pipeline& pl,
                               const EvalConfig& ev, int jobs = 1);

}  // namespace dbp
