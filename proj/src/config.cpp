#include "dbp/config.hpp"

#include "dbp/errors.hpp"
#include "dbp/io.hpp"
#include "dbp/noise.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace dbp {

RunConfig::RunConfig() {
  purify.copies = 9;
  attack.eps_inf = 0.3;
  attack.lr_delta = 0.02;
  attack.min_val = -10.0;
  attack.max_val = 10.0;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || std::isnan(out)) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

template <class I>
I to_integer(const std::string& v) {
  I out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (v == a) return v;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError("expected one of " + list + ", got '" + v + "'");
}

std::string grad_mode_name(GradMode m) {
  switch (m.kind) {
    case GradMode::Kind::full:
      return "full";
    case GradMode::Kind::surrogate:
      return "surrogate";
    case GradMode::Kind::bpda:
      return "bpda";
    case GradMode::Kind::oracle:
      return "oracle";
  }
  return "full";
}

struct Key {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Registry = std::vector<std::pair<std::string, Key>>;

template <class F>
Key dbl(F ref) {
  return {[ref](RunConfig& c, const std::string& v) { ref(c) = to_double(v); },
          [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <class I, class F>
Key integer(F ref, I min) {
  return {[ref, min](RunConfig& c, const std::string& v) {
            const I x = to_integer<I>(v);
            if (x < min) throw ConfigError("value must be at least " + std::to_string(min));
            ref(c) = x;
          },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <class F>
Key boolean(F ref) {
  return {[ref](RunConfig& c, const std::string& v) { ref(c) = to_bool(v); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <class F>
Key choice(F ref, std::initializer_list<const char*> allowed) {
  std::vector<const char*> a(allowed);
  return {[ref, a](RunConfig& c, const std::string& v) {
            for (const char* s : a) {
              if (v == s) {
                ref(c) = v;
                return;
              }
            }
            std::string list;
            for (const char* s : a) list += list.empty() ? s : std::string(", ") + s;
            throw ConfigError("expected one of " + list + ", got '" + v + "'");
          },
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const Registry& registry() {
  static const Registry r = [] {
    Registry k;
    k.emplace_back("schedule.beta_min", dbl(REF(beta_min)));
    k.emplace_back("schedule.beta_max", dbl(REF(beta_max)));

    k.emplace_back("data.kind", choice(REF(data.kind), {"ring", "stripe", "random"}));
    k.emplace_back("data.classes", integer<std::size_t>(REF(data.classes), 1));
    k.emplace_back("data.per_class", integer<std::size_t>(REF(data.per_class), 1));
    k.emplace_back("data.height", integer<std::size_t>(REF(data.height), 1));
    k.emplace_back("data.width", integer<std::size_t>(REF(data.width), 1));
    k.emplace_back("data.dim", integer<std::size_t>(REF(data.dim), 1));
    k.emplace_back("data.radius", dbl(REF(data.radius)));
    k.emplace_back("data.sigma", dbl(REF(data.sigma)));
    k.emplace_back("data.arc_fraction", dbl(REF(data.arc_fraction)));
    k.emplace_back("data.amplitude", dbl(REF(data.amplitude)));
    k.emplace_back("data.spread", dbl(REF(data.spread)));
    k.emplace_back("data.samples", integer<std::size_t>(REF(data.samples), 1));
    k.emplace_back("data.seed", integer<std::uint64_t>(REF(data.seed), 0));
    k.emplace_back("data.score", choice(REF(data.score), {"mixture", "mlp"}));
    k.emplace_back("data.hidden", integer<std::size_t>(REF(data.hidden), 1));

    k.emplace_back("purify.t_star", dbl(REF(purify.t_star)));
    k.emplace_back("purify.dt", dbl(REF(purify.dt)));
    k.emplace_back("purify.solver",
                   Key{[](RunConfig& c, const std::string& v) { c.purify.solver = parse_solver(v); },
                       [](const RunConfig& c) { return solver_name(c.purify.solver); }});
    k.emplace_back("purify.rounds", integer<int>(REF(purify.rounds), 1));
    k.emplace_back("purify.copies", integer<int>(REF(purify.copies), 1));
    k.emplace_back("purify.ddpm_final_noise", boolean(REF(purify.ddpm_final_noise)));
    k.emplace_back("purify.stochastic", boolean(REF(purify.stochastic)));

    k.emplace_back("guidance.kind",
                   Key{[](RunConfig& c, const std::string& v) {
                         c.purify.guidance.kind = one_of(v, {"none", "mse"}) == "mse" ? GuidanceSpec::Kind::mse
                                                                                       : GuidanceSpec::Kind::none;
                       },
                       [](const RunConfig& c) {
                         return std::string(c.purify.guidance.kind == GuidanceSpec::Kind::mse ? "mse" : "none");
                       }});
    k.emplace_back("guidance.scale", dbl(REF(purify.guidance.scale)));
    k.emplace_back("guidance.aux",
                   Key{[](RunConfig& c, const std::string& v) {
                         c.purify.guidance.aux = one_of(v, {"identity", "none"}) == "identity"
                                                     ? GuidanceSpec::Aux::identity
                                                     : GuidanceSpec::Aux::none;
                       },
                       [](const RunConfig& c) {
                         return std::string(c.purify.guidance.aux == GuidanceSpec::Aux::identity ? "identity" : "none");
                       }});

    k.emplace_back("grad.mode", Key{[](RunConfig& c, const std::string& v) { c.grad.kind = parse_grad_mode(v).kind; },
                                    [](const RunConfig& c) { return grad_mode_name(c.grad); }});
    k.emplace_back("grad.surrogate_dt", dbl(REF(surrogate_dt)));
    k.emplace_back("grad.tolerance", dbl(REF(grad_tolerance)));

    k.emplace_back("clf.kind", choice(REF(clf.kind), {"centroid", "bayes", "bayes_linear"}));
    k.emplace_back("clf.gain", dbl(REF(clf.gain)));
    k.emplace_back("clf.lambda", dbl(REF(clf.lambda)));
    k.emplace_back("clf.seed", integer<std::uint64_t>(REF(clf.seed), 0));

    k.emplace_back("loss.kind", Key{[](RunConfig& c, const std::string& v) { c.loss = parse_loss(v); },
                                    [](const RunConfig& c) {
                                      return std::string(c.loss == LossKind::max_margin ? "max_margin" : "prob_y");
                                    }});

    k.emplace_back("attack.method", Key{[](RunConfig& c, const std::string& v) { c.attack.kind = parse_attack_kind(v); },
                                        [](const RunConfig& c) {
                                          return std::string(c.attack.kind == AttackConfig::Kind::pgd ? "pgd" : "lf");
                                        }});
    k.emplace_back("attack.eps_inf", dbl(REF(attack.eps_inf)));
    k.emplace_back("attack.eta", dbl(REF(attack.eta)));
    k.emplace_back("attack.iters", integer<int>(REF(attack.iters), 0));
    k.emplace_back("attack.eot_steps", integer<int>(REF(attack.eot_steps), 1));
    k.emplace_back("attack.lr_delta", dbl(REF(attack.lr_delta)));
    k.emplace_back("attack.lr_filters", dbl(REF(attack.lr_filters)));
    k.emplace_back("attack.c", dbl(REF(attack.c)));
    k.emplace_back("attack.tau_p", dbl(REF(attack.tau_p)));
    k.emplace_back("attack.sigma_c", dbl(REF(attack.sigma_c)));
    k.emplace_back("attack.color_from_input", boolean(REF(attack.color_from_input)));
    k.emplace_back("attack.min_val", dbl(REF(attack.min_val)));
    k.emplace_back("attack.max_val", dbl(REF(attack.max_val)));
    k.emplace_back("attack.fresh_eval", boolean(REF(attack.fresh_eval)));

    k.emplace_back("eval.protocol", Key{[](RunConfig& c, const std::string& v) { c.eval.mode = parse_eval_mode(v); },
                                        [](const RunConfig& c) { return eval_mode_name(c.eval.mode); }});
    k.emplace_back("eval.replicas", integer<int>(REF(eval.replicas), 1));
    k.emplace_back("eval.k", integer<int>(REF(eval.k), 1));
    k.emplace_back("eval.early_stop", boolean(REF(eval.early_stop)));

    k.emplace_back("flaws.experiment", choice(REF(flaws.experiment), {"eot", "time", "guidance", "surrogate"}));
    k.emplace_back("flaws.grid", Key{[](RunConfig& c, const std::string& v) {
                                       std::vector<double> g;
                                       std::stringstream ss(v);
                                       std::string item;
                                       while (std::getline(ss, item, ',')) g.push_back(to_double(trim(item)));
                                       if (g.empty()) throw ConfigError("empty grid");
                                       c.flaws.grid = std::move(g);
                                     },
                                     [](const RunConfig& c) {
                                       std::string s;
                                       for (double x : c.flaws.grid) s += (s.empty() ? "" : ", ") + format_double(x);
                                       return s;
                                     }});
    k.emplace_back("flaws.trials", integer<int>(REF(flaws.trials), 1));
    k.emplace_back("flaws.delta", dbl(REF(flaws.delta)));

    k.emplace_back("run.seed", integer<std::uint64_t>(REF(seed), 0));
    k.emplace_back("run.out", Key{[](RunConfig& c, const std::string& v) { c.out = v; },
                                  [](const RunConfig& c) { return c.out; }});
    k.emplace_back("run.jobs", integer<int>(REF(jobs), 1));
    return k;
  }();
  return r;
}

#undef REF

const Key* find_key(const std::string& name) {
  for (const auto& [n, k] : registry()) {
    if (n == name) return &k;
  }
  return nullptr;
}

std::string at_line(int line, const std::string& msg) {
  return line > 0 ? "config line " + std::to_string(line) + ": " + msg : "config: " + msg;
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value, int line) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError(at_line(line, "unknown key '" + key + "'"));
  try {
    k->set(cfg, value);
  } catch (const Error& e) {
    throw ConfigError(at_line(line, key + ": " + e.what()));
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(at_line(line, "expected 'section.key = value'"));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.find('.') == std::string::npos) throw ConfigError(at_line(line, "key '" + key + "' has no section"));
    if (value.empty()) throw ConfigError(at_line(line, "missing value for '" + key + "'"));
    if (!seen.insert(key).second) throw ConfigError(at_line(line, "duplicate key '" + key + "'"));
    set_config_key(cfg, key, value, line);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, k] : registry()) {
    const std::string v = k.get(cfg);
    if (v.empty()) continue;  // an empty grid means the default
    out += name + " = " + v + "\n";
  }
  return out;
}

namespace {

GaussianMixture make_mixture(const DataConfig& d) {
  if (d.kind == "ring") return ring_mixture(d.classes, d.per_class, d.height, d.width, d.radius, d.sigma, d.arc_fraction);
  if (d.kind == "stripe") return stripe_mixture(d.classes, d.height, d.width, d.amplitude, d.sigma);
  return random_mixture(d.classes, d.dim, d.spread, d.sigma, d.seed);
}

}  // namespace

std::unique_ptr<Experiment> build_experiment(const RunConfig& cfg) {
  auto e = std::make_unique<Experiment>();
  e->sched = NoiseSchedule(cfg.beta_min, cfg.beta_max);
  e->mix = make_mixture(cfg.data);
  if (cfg.data.score == "mlp") {
    e->model = std::make_shared<MlpScore>(e->mix.shape(), cfg.data.hidden, stream_key(cfg.data.seed, "data.mlp"));
  } else {
    e->model = std::make_shared<MixtureScore>(e->mix, e->sched);
  }
  e->purifier = std::make_unique<Purifier>(e->sched, e->model, cfg.purify);
  if (cfg.clf.kind == "bayes") {
    e->clf = std::make_unique<BayesClassifier>(e->mix);
  } else if (cfg.clf.kind == "bayes_linear") {
    e->clf = std::make_unique<LinearClassifier>(bayes_linear(e->mix, cfg.clf.lambda, cfg.clf.seed));
  } else {
    e->clf = std::make_unique<LinearClassifier>(centroid_linear(e->mix, cfg.clf.gain, cfg.clf.lambda, cfg.clf.seed));
  }
  e->data = sample_mixture(e->mix, cfg.data.samples, cfg.data.seed);
  return e;
}

namespace {

GradMode resolve_grad(const RunConfig& cfg) {
  GradMode g = cfg.grad;
  if (g.kind == GradMode::Kind::surrogate) {
    const double r = std::abs(cfg.surrogate_dt) / cfg.purify.abs_dt();
    const double rr = std::round(r);
    if (!(rr >= 1.0) || std::abs(r - rr) > 1e-9 * rr) {
      throw ConfigError("grad.surrogate_dt must be a positive integer multiple of purify.dt");
    }
    g.ratio = static_cast<int>(rr);
  }
  return g;
}

}  // namespace

Pipeline Experiment::pipeline(const RunConfig& cfg, int jobs) const {
  return Pipeline{*purifier, *clf, cfg.loss, resolve_grad(cfg), jobs, &perceptual};
}

LossFn Experiment::loss_for(const RunConfig& cfg, int y) const {
  const Classifier* c = clf.get();
  const LossKind kind = cfg.loss;
  return [c, kind, y](const Var& x0) { return class_loss(kind, c->logits(x0), y); };
}

}  // namespace dbp
