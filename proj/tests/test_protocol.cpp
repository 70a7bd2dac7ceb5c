#include "dbp/classifier.hpp"
#include "dbp/errors.hpp"
#include "dbp/evaluation.hpp"
#include "dbp/noise.hpp"
#include "dbp/protocol.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

using namespace dbp;

TEST(WorRob, Examples) {
  EXPECT_EQ(wor_rob(OutcomeMatrix({{0, 0}, {0, 0}})), 1.0);
  EXPECT_EQ(wor_rob(OutcomeMatrix({{1, 1}, {1, 1}})), 0.0);
  EXPECT_EQ(wor_rob(OutcomeMatrix({{0, 1, 0}, {0, 0, 0}})), 0.5);
}

TEST(AvgRob, Examples) {
  EXPECT_EQ(avg_rob(OutcomeMatrix({{0, 0}, {0, 0}})), 1.0);
  EXPECT_EQ(avg_rob(OutcomeMatrix({{1, 0}, {0, 0}})), 0.75);
  EXPECT_EQ(avg_rob(OutcomeMatrix({{1, 1}, {1, 1}})), 0.0);
}

TEST(MajorityVote, ModeAndTieBreak) {
  EXPECT_EQ(majority_vote({1, 1, 2}), 1);
  EXPECT_EQ(majority_vote({1, 2}), 1);
  EXPECT_EQ(majority_vote({2, 1}), 1);
  EXPECT_EQ(majority_vote({3, 3, 3}), 3);
  EXPECT_EQ(majority_vote({4, 0, 4, 0, 2}), 0);
  EXPECT_THROW(majority_vote({}), ShapeError);
}

TEST(MvRob, Examples) {
  EXPECT_EQ(mv_rob({0, 1}, {0, 1}), 1.0);
  EXPECT_EQ(mv_rob({0, 2}, {0, 1}), 0.5);
  EXPECT_EQ(mv_rob({1, 0}, {0, 1}), 0.0);
  EXPECT_THROW(mv_rob({0}, {0, 1}), ShapeError);
  EXPECT_THROW(mv_rob({}, {}), ShapeError);
}

TEST(OutcomeMatrix, Validation) {
  EXPECT_THROW(OutcomeMatrix({{0, 2}}), RangeError);
  EXPECT_THROW(OutcomeMatrix({{0, 1}, {0}}), ShapeError);
  EXPECT_THROW(OutcomeMatrix(std::vector<std::vector<int>>{}), ShapeError);
  EXPECT_THROW(OutcomeMatrix(0, 3), ShapeError);
  OutcomeMatrix a(2, 3);
  EXPECT_THROW(a.set(0, 0, -1), RangeError);
  a.set(1, 2, 1);
  EXPECT_EQ(a.at(1, 2), 1);
  EXPECT_EQ(wor_rob(a), 0.5);
}

namespace {

struct Random {
  std::vector<std::vector<int>> preds;
  std::vector<int> y;
};

Random random_case(std::mt19937_64& rng) {
  const int S = std::uniform_int_distribution<int>(1, 12)(rng);
  const int N = std::uniform_int_distribution<int>(1, 9)(rng);
  Random r;
  for (int j = 0; j < S; ++j) {
    r.y.push_back(std::uniform_int_distribution<int>(0, 2)(rng));
    std::vector<int> row;
    for (int i = 0; i < N; ++i) row.push_back(std::uniform_int_distribution<int>(0, 2)(rng));
    r.preds.push_back(row);
  }
  return r;
}

OutcomeMatrix outcomes(const Random& r) {
  std::vector<std::vector<int>> rows;
  for (std::size_t j = 0; j < r.y.size(); ++j) {
    std::vector<int> row;
    for (int p : r.preds[j]) row.push_back(p != r.y[j] ? 1 : 0);
    rows.push_back(row);
  }
  return OutcomeMatrix(rows);
}

}  // namespace

// Counts as integers and divides once, independently of the library's loops.
TEST(Protocol, MatchesBruteForceEvaluator) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Random r = random_case(rng);
    const OutcomeMatrix a = outcomes(r);
    const std::size_t S = r.y.size(), N = r.preds[0].size();
    std::size_t any = 0, total = 0, mv_wrong = 0;
    std::vector<int> mv;
    for (std::size_t j = 0; j < S; ++j) {
      bool failed = false;
      std::map<int, int> count;
      for (std::size_t i = 0; i < N; ++i) {
        failed = failed || r.preds[j][i] != r.y[j];
        total += r.preds[j][i] != r.y[j] ? 1 : 0;
        ++count[r.preds[j][i]];
      }
      any += failed ? 1 : 0;
      int best = -1, best_n = 0;
      for (int label = 0; label <= 2; ++label) {
        if (count[label] > best_n) best = label, best_n = count[label];
      }
      mv.push_back(best);
      mv_wrong += best != r.y[j] ? 1 : 0;
    }
    EXPECT_EQ(wor_rob(a), 1.0 - static_cast<double>(any) / S);
    EXPECT_EQ(avg_rob(a), 1.0 - static_cast<double>(total) / (N * S));
    std::vector<int> lib_mv;
    for (const auto& p : r.preds) lib_mv.push_back(majority_vote(p));
    EXPECT_EQ(lib_mv, mv);
    EXPECT_EQ(mv_rob(lib_mv, r.y), 1.0 - static_cast<double>(mv_wrong) / S);
  }
}

TEST(Protocol, WorstCaseIsTheSmallest) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const Random r = random_case(rng);
    const OutcomeMatrix a = outcomes(r);
    std::vector<int> mv;
    for (const auto& p : r.preds) mv.push_back(majority_vote(p));
    EXPECT_LE(wor_rob(a), std::min(mv_rob(mv, r.y), avg_rob(a)));
  }
}

TEST(Protocol, PermutationInvariant) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Random r = random_case(rng);
    const OutcomeMatrix a = outcomes(r);
    const double w = wor_rob(a), v = avg_rob(a);
    Random p = r;
    std::vector<std::size_t> order(r.y.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < order.size(); ++j) {
      p.y[j] = r.y[order[j]];
      p.preds[j] = r.preds[order[j]];
      std::shuffle(p.preds[j].begin(), p.preds[j].end(), rng);
    }
    EXPECT_DOUBLE_EQ(wor_rob(outcomes(p)), w);
    EXPECT_DOUBLE_EQ(avg_rob(outcomes(p)), v);
  }
}

namespace {

// Confident 3-class stripe toy: every purified copy agrees with the clean label.
struct Toy {
  NoiseSchedule sched{0.1, 20.0};
  GaussianMixture mix = stripe_mixture(3, 4, 4, 1.0, 0.3);
  std::shared_ptr<const ScoreModel> model = std::make_shared<MixtureScore>(mix, sched);
  BayesClassifier clf{mix};
  std::vector<LabeledSample> data = sample_mixture(mix, 6, 5);

  Purifier purifier(int copies) const {
    PurifyConfig cfg;
    cfg.t_star = 0.05;
    cfg.copies = copies;
    return Purifier(sched, model, cfg);
  }
};

AttackConfig small_attack(int iters, double eps) {
  AttackConfig ac;
  ac.iters = iters;
  ac.eps_inf = eps;
  ac.min_val = -5.0;
  ac.max_val = 5.0;
  ac.seed = 3;
  return ac;
}

}  // namespace

TEST(EvaluateDefense, UnattackedRobustnessEqualsCleanAccuracy) {
  const Toy toy;
  const Purifier p = toy.purifier(3);
  const Pipeline pl{p, toy.clf, LossKind::max_margin, GradMode{}, 1, nullptr};
  for (auto mode : {EvalConfig::Mode::wor, EvalConfig::Mode::mv, EvalConfig::Mode::sp_final}) {
    EvalConfig ev;
    ev.mode = mode;
    ev.k = 3;
    ev.replicas = 4;
    for (const AttackConfig& ac : {small_attack(0, 0.5), small_attack(4, 0.0)}) {
      const MetricsReport r = evaluate_defense(toy.data, ac, pl, ev);
      EXPECT_EQ(r.robust_acc, r.clean_acc) << eval_mode_name(mode);
      EXPECT_EQ(r.clean_acc, 1.0);
      for (const SampleReport& s : r.samples) EXPECT_LE(s.distance, 0.0);
    }
  }
}

TEST(EvaluateDefense, MvNeedsEnoughCopies) {
  const Toy toy;
  const Purifier p = toy.purifier(3);
  const Pipeline pl{p, toy.clf, LossKind::max_margin, GradMode{}, 1, nullptr};
  EvalConfig ev;
  ev.mode = EvalConfig::Mode::mv;
  ev.k = 5;
  EXPECT_THROW(evaluate_defense(toy.data, small_attack(1, 0.5), pl, ev), ConfigError);
  EXPECT_THROW(evaluate_defense({}, small_attack(1, 0.5), pl, EvalConfig{}), ConfigError);
  ev.k = 0;
  ev.mode = EvalConfig::Mode::wor;
  EXPECT_THROW(evaluate_defense(toy.data, small_attack(1, 0.5), pl, ev), ConfigError);
}

TEST(EvaluateDefense, WorNeverExceedsMvAndJobsDoNotMatter) {
  const Toy toy;
  const Purifier p = toy.purifier(5);
  const Pipeline pl{p, toy.clf, LossKind::max_margin, GradMode{}, 1, nullptr};
  EvalConfig ev;
  ev.mode = EvalConfig::Mode::wor;
  ev.k = 5;
  const AttackConfig ac = small_attack(4, 1.5);
  const MetricsReport a = evaluate_defense(toy.data, ac, pl, ev, 1);
  const MetricsReport b = evaluate_defense(toy.data, ac, pl, ev, 3);
  EXPECT_LE(a.wor_rob, a.mv_rob);
  EXPECT_LE(a.wor_rob, a.avg_rob);
  EXPECT_LT(a.wor_rob, 1.0);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t j = 0; j < a.samples.size(); ++j) {
    EXPECT_EQ(a.samples[j].outcomes, b.samples[j].outcomes);
    EXPECT_EQ(a.samples[j].iterations, b.samples[j].iterations);
    EXPECT_EQ(a.samples[j].distance, b.samples[j].distance);
  }
  EXPECT_EQ(a.wor_rob, b.wor_rob);
}

TEST(EvaluateDefense, SpFinalUsesReplicas) {
  const Toy toy;
  const Purifier p = toy.purifier(2);
  const Pipeline pl{p, toy.clf, LossKind::max_margin, GradMode{}, 1, nullptr};
  EvalConfig ev;
  ev.mode = EvalConfig::Mode::sp_final;
  ev.replicas = 7;
  const MetricsReport r = evaluate_defense(toy.data, small_attack(2, 1.5), pl, ev);
  for (const SampleReport& s : r.samples) EXPECT_EQ(s.outcomes.size(), 7u);
  EXPECT_EQ(r.robust_acc, r.avg_rob);
  ev.replicas = 1;
  const MetricsReport legacy = evaluate_defense(toy.data, small_attack(2, 1.5), pl, ev);
  for (const SampleReport& s : legacy.samples) EXPECT_EQ(s.outcomes.size(), 1u);
}

TEST(EvalMode, Names) {
  EXPECT_EQ(parse_eval_mode("sp"), EvalConfig::Mode::sp_final);
  EXPECT_EQ(parse_eval_mode("wor"), EvalConfig::Mode::wor);
  EXPECT_EQ(parse_eval_mode("mv"), EvalConfig::Mode::mv);
  EXPECT_THROW(parse_eval_mode("best"), ConfigError);
  EXPECT_EQ(eval_mode_name(EvalConfig::Mode::sp_final), "sp-final");
}
