#include "dbp/evaluation.hpp"

#include "dbp/errors.hpp"
#include "dbp/noise.hpp"
#include "dbp/parallel.hpp"

#include <algorithm>

namespace dbp {

void EvalConfig::validate(int copies) const {
  if (replicas < 1) throw ConfigError("eval.replicas must be at least 1");
  if (k < 1) throw ConfigError("eval.k must be at least 1");
  if (mode == Mode::mv && k > copies) {
    throw ConfigError("mv with K = " + std::to_string(k) + " needs at least K purified copies, have " +
                      std::to_string(copies));
  }
}

EvalConfig::Mode parse_eval_mode(const std::string& name) {
  if (name == "sp" || name == "sp-final" || name == "sp_final") return EvalConfig::Mode::sp_final;
  if (name == "wor") return EvalConfig::Mode::wor;
  if (name == "mv") return EvalConfig::Mode::mv;
  throw ConfigError("unknown protocol '" + name + "'");
}

std::string eval_mode_name(EvalConfig::Mode m) {
  switch (m) {
    case EvalConfig::Mode::sp_final:
      return "sp-final";
    case EvalConfig::Mode::wor:
      return "wor";
    case EvalConfig::Mode::mv:
      return "mv";
  }
  return "wor";
}

namespace {

std::vector<int> first_k(const std::vector<int>& v, int k) {
  return std::vector<int>(v.begin(), v.begin() + k);
}

}  // namespace

MetricsReport evaluate_defense(const std::vector<LabeledSample>& data, const AttackConfig& attack, const Pipeline& pl,
                               const EvalConfig& ev, int jobs) {
  if (data.empty()) throw ConfigError("evaluation needs at least one sample");
  const int copies = pl.purifier.config().copies;
  ev.validate(copies);

  AttackConfig ac = attack;
  switch (ev.mode) {
    case EvalConfig::Mode::sp_final:
      ac.success = {SuccessRule::Kind::sp, 1};
      break;
    case EvalConfig::Mode::wor:
      ac.success = {SuccessRule::Kind::wor, 1};
      break;
    case EvalConfig::Mode::mv:
      ac.success = {SuccessRule::Kind::mv, ev.k};
      break;
  }
  ac.early_stop = ev.early_stop;

  // sp-final judges the final example on R fresh purifications.
  std::optional<Purifier> replica;
  if (ev.mode == EvalConfig::Mode::sp_final) {
    PurifyConfig rc = pl.purifier.config();
    rc.copies = ev.replicas;
    replica.emplace(pl.purifier.schedule(), pl.purifier.model_ptr(), rc);
  }

  // Samples already run in parallel, so each attack keeps its EOT paths serial.
  Pipeline inner = pl;
  if (jobs > 1) inner.jobs = 1;

  MetricsReport rep;
  rep.mode = ev.mode;
  rep.samples.resize(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t j) {
    const LabeledSample& s = data[j];
    const AttackResult r = run_attack(s.x, s.label, ac, inner, j);
    SampleReport& out = rep.samples[j];
    out.id = j;
    out.label = s.label;
    out.iterations = r.iterations;
    out.attack_success = r.success;
    out.distance = r.distance;
    out.x_adv = r.x_adv;

    // Clean predictions come from the unattacked input under the iteration-0 randomness.
    std::vector<int> clean = r.trace.empty() || r.trace.front().iteration != 0
                                 ? copy_predictions(pl.purifier.forward(s.x, attack_iteration_seed(ac.seed, j, 0)),
                                                    pl.clf)
                                 : r.trace.front().preds;
    out.clean_pred = ev.mode == EvalConfig::Mode::mv ? majority_vote(first_k(clean, ev.k)) : clean[0];
    out.clean_score = out.clean_pred == s.label ? 1.0 : 0.0;

    std::vector<int> preds = r.final_preds;
    if (replica) {
      // Clean and final examples see the same R replica paths.
      const std::uint64_t key = stream_key(ac.seed, "eval.final", {j});
      preds = copy_predictions(replica->forward(r.x_adv, key), pl.clf);
      const std::vector<int> cp = copy_predictions(replica->forward(s.x, key), pl.clf);
      out.clean_pred = cp[0];
      out.clean_score = static_cast<double>(std::count(cp.begin(), cp.end(), s.label)) / static_cast<double>(cp.size());
    }
    out.outcomes.resize(preds.size());
    for (std::size_t c = 0; c < preds.size(); ++c) out.outcomes[c] = preds[c] != s.label ? 1 : 0;
    out.mv_pred = majority_vote(first_k(preds, std::min<int>(ev.k, static_cast<int>(preds.size()))));
  });

  std::vector<std::vector<int>> rows;
  std::vector<int> mv, truth;
  double clean_ok = 0.0;
  for (const SampleReport& s : rep.samples) {
    rows.push_back(s.outcomes);
    mv.push_back(s.mv_pred);
    truth.push_back(s.label);
    clean_ok += s.clean_score;
  }
  const OutcomeMatrix a(rows);
  rep.clean_acc = clean_ok / static_cast<double>(data.size());
  rep.wor_rob = wor_rob(a);
  rep.avg_rob = avg_rob(a);
  rep.mv_rob = mv_rob(mv, truth);
  switch (ev.mode) {
    case EvalConfig::Mode::sp_final:
      rep.robust_acc = rep.avg_rob;
      break;
    case EvalConfig::Mode::wor:
      rep.robust_acc = rep.wor_rob;
      break;
    case EvalConfig::Mode::mv:
      rep.robust_acc = rep.mv_rob;
      break;
  }
  return rep;
}

}  // namespace dbp
