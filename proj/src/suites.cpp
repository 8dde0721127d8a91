#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "bda/errors.hpp"
#include "bda/harness.hpp"
#include "bda/io.hpp"

namespace bda {
namespace fs = std::filesystem;

namespace {

AggregationSchedule counterexample_schedule() {
  AggregationSchedule s;
  s.mu = 0.1;
  s.s_u = 0.1;
  s.s_l = 0.1;
  s.alpha_rule = AlphaRule::scaled;
  s.alpha_param = 0.5;
  s.beta_rule = BetaRule::constant;
  s.beta_param = 1.0;
  return s;
}

Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

struct Job {
  std::string name;
  ProblemPtr problem;
  SolverConfig cfg;
};

}  // namespace

Json suite_counterexample(int n, int K, const std::vector<Method>& methods,
                          const fs::path& out) {
  if (n < 1 || K < 1) throw ContractViolation("counterexample suite: n, K >= 1");
  for (auto m : methods) {
    if (m != Method::bda && m != Method::rhg && m != Method::trhg) {
      throw ContractViolation("counterexample suite: methods must be bda, rhg "
                              "or trhg");
    }
  }
  const auto problem = make_counterexample(n);
  SolverConfig base;
  base.K = K;
  base.T_max = 1000;
  base.sched = counterexample_schedule();

  // One step size per method, estimated at the default start and shared by
  // the initialization sweep.
  std::vector<double> lambdas(methods.size());
  parallel_for(static_cast<int>(methods.size()), [&](int i) {
    SolverConfig c = base;
    c.method = methods[static_cast<std::size_t>(i)];
    lambdas[i] = estimate_step_size(*problem, c, Vector::Zero(n));
  });

  std::vector<Job> jobs;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    SolverConfig c = base;
    c.method = methods[j];
    c.lambda = lambdas[j];
    jobs.push_back({"method_" + to_string(methods[j]), problem, c});
  }
  constexpr int kInits = 10;
  for (int i = 0; i < kInits; ++i) {
    RngStream rng(1000 + static_cast<std::uint64_t>(i));
    const Vector x0 = rng.uniform_vector(n, -2.0, 2.0);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      SolverConfig c = base;
      c.method = methods[j];
      c.lambda = lambdas[j];
      c.x0 = x0;
      c.seed = static_cast<std::uint64_t>(i);
      jobs.push_back(
          {"init" + std::to_string(i) + "_" + to_string(methods[j]), problem, c});
    }
  }
  // Projection pair: y0 far outside Y = [-2, 2]^{2n}.
  CounterexampleOptions boxed;
  boxed.n = n;
  boxed.y_half_width = 2.0;
  const auto boxed_problem = make_counterexample(boxed);
  SolverConfig proj = base;
  proj.method = Method::bda;
  proj.y0 = Vector::Constant(2 * n, 10.0);
  proj.stop_tol = 1e-6;
  proj.T_max = 3000;
  proj.lambda = estimate_step_size(*boxed_problem, proj, Vector::Zero(n));
  jobs.push_back({"proj_on", boxed_problem, proj});
  jobs.push_back({"proj_off", problem, proj});
  for (auto rule : {AlphaRule::zero, AlphaRule::constant, AlphaRule::scaled}) {
    SolverConfig c = base;
    c.method = Method::bda;
    c.sched.alpha_rule = rule;
    jobs.push_back({"alpha_" + to_string(rule), problem, c});
  }

  std::vector<RunRecord> records(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), [&](int i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    records[i] = solve(*job.problem, job.cfg);
    emit_trace(records[i], out / (job.name + ".csv"));
  });

  Json runs = Json::object();
  auto final_err = [&](const std::string& name) -> std::optional<double> {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].name == name) return records[i].final_state.metrics.err_x;
    }
    return std::nullopt;
  };
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& r = records[i];
    const auto& fs_ = r.final_state;
    Json e;
    e["method"] = to_string(jobs[i].cfg.method);
    e["alpha_rule"] = to_string(jobs[i].cfg.sched.alpha_rule);
    e["status"] = to_string(r.status);
    e["message"] = r.message;
    e["iterations"] = r.iterations.size();
    e["lambda"] = r.lambda;
    e["err_x"] = optional_json(fs_.metrics.err_x);
    e["err_x_per_sqrt_n"] =
        fs_.metrics.err_x ? Json(*fs_.metrics.err_x / std::sqrt(double(n)))
                          : Json(nullptr);
    e["x_mean"] = fs_.x.size() ? Json(fs_.x.mean()) : Json(nullptr);
    e["f_gap"] = optional_json(fs_.metrics.f_gap);
    e["phi_gap"] = optional_json(fs_.metrics.phi_gap);
    e["wall_seconds"] = r.wall_seconds;
    runs[jobs[i].name] = e;
  }

  Json checks = Json::object();
  {
    const double inf = std::numeric_limits<double>::infinity();
    const double z = final_err("alpha_zero").value_or(-inf);
    const double c = final_err("alpha_constant").value_or(inf);
    const double s = final_err("alpha_scaled").value_or(inf);
    checks["alpha_zero_largest_error"] = z > c && z > s;
  }
  if (std::find(methods.begin(), methods.end(), Method::bda) != methods.end() &&
      std::find(methods.begin(), methods.end(), Method::rhg) != methods.end()) {
    bool all = true;
    for (int i = 0; i < kInits; ++i) {
      const auto b = final_err("init" + std::to_string(i) + "_bda");
      const auto r = final_err("init" + std::to_string(i) + "_rhg");
      all = all && b && r && *b <= 0.1 * *r;
    }
    checks["bda_beats_rhg_every_init"] = all;
  }
  {
    auto iters = [&](const std::string& name) -> std::optional<std::size_t> {
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].name == name && records[i].status == RunStatus::converged) {
          return records[i].iterations.size();
        }
      }
      return std::nullopt;
    };
    const auto on = iters("proj_on");
    const auto off = iters("proj_off");
    checks["projection_not_slower"] = on && (!off || *on <= *off);
  }

  Json summary;
  summary["n"] = n;
  summary["K"] = K;
  Json mlist = Json::array();
  for (auto m : methods) mlist.push_back(to_string(m));
  summary["methods"] = mlist;
  summary["runs"] = runs;
  summary["checks"] = checks;
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------- hyperclean

HypercleanSuiteConfig parse_hyperclean_config(const Json& j) {
  static const std::set<std::string> solver_keys = {
      "K", "T_max", "lambda", "mu", "su", "sl", "alpha_param",
      "truncate_at", "obda_eps"};
  static const std::set<std::string> data_keys = {
      "num_classes", "feature_dim", "n_train", "n_val", "n_test",
      "corruption_fraction", "class_separation", "ul_ridge", "seed"};
  if (!j.is_object()) throw ConfigError("hyperclean config must be an object");
  HypercleanSuiteConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!solver_keys.count(it.key()) && !data_keys.count(it.key())) {
        throw ConfigError("hyperclean config: unknown key '" + it.key() + "'");
      }
    }
    auto& d = c.data;
    auto num = [&](const char* key, auto& field) {
      if (j.contains(key) && !j.at(key).is_null()) {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      }
    };
    num("num_classes", d.num_classes);
    num("feature_dim", d.feature_dim);
    num("n_train", d.n_train);
    num("n_val", d.n_val);
    num("n_test", d.n_test);
    num("corruption_fraction", d.corruption_fraction);
    num("class_separation", d.class_separation);
    num("ul_ridge", d.ul_ridge);
    num("seed", d.seed);
    num("K", c.K);
    num("T_max", c.T_max);
    num("mu", c.mu);
    num("alpha_param", c.alpha_param);
    num("truncate_at", c.truncate_at);
    num("obda_eps", c.obda_eps);
    if (j.contains("lambda")) {
      c.lambda = j.at("lambda").is_null()
                     ? std::nullopt
                     : std::optional<double>(j.at("lambda").get<double>());
    }
    if (j.contains("su") && !j.at("su").is_null()) c.s_u = j.at("su").get<double>();
    if (j.contains("sl") && !j.at("sl").is_null()) c.s_l = j.at("sl").get<double>();
    d.validate();
    if (c.K < 1 || c.T_max < 1) throw ConfigError("hyperclean config: K, T_max >= 1");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperclean config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("hyperclean config: ") + e.what());
  }
  return c;
}

Json to_json(const HypercleanSuiteConfig& c) {
  const auto& d = c.data;
  Json j;
  j["num_classes"] = d.num_classes;
  j["feature_dim"] = d.feature_dim;
  j["n_train"] = d.n_train;
  j["n_val"] = d.n_val;
  j["n_test"] = d.n_test;
  j["corruption_fraction"] = d.corruption_fraction;
  j["class_separation"] = d.class_separation;
  j["ul_ridge"] = d.ul_ridge;
  j["seed"] = d.seed;
  j["K"] = c.K;
  j["T_max"] = c.T_max;
  j["lambda"] = optional_json(c.lambda);
  j["mu"] = c.mu;
  j["su"] = optional_json(c.s_u);
  j["sl"] = optional_json(c.s_l);
  j["alpha_param"] = c.alpha_param;
  j["truncate_at"] = c.truncate_at;
  j["obda_eps"] = c.obda_eps;
  return j;
}

CorruptionScores score_corruption_flags(const Vector& x,
                                        const std::vector<bool>& corrupted) {
  if (static_cast<std::size_t>(x.size()) != corrupted.size()) {
    throw ContractViolation("score_corruption_flags: size mismatch");
  }
  CorruptionScores s;
  int tp = 0, fp = 0, fn = 0, nc = 0, nk = 0;
  double sc = 0.0, sk = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double sg = sigmoid(x[i]);
    const bool flag = sg < 0.5;
    if (corrupted[static_cast<std::size_t>(i)]) {
      ++nc;
      sc += sg;
      flag ? ++tp : ++fn;
    } else {
      ++nk;
      sk += sg;
      if (flag) ++fp;
    }
  }
  s.precision = tp + fp > 0 ? double(tp) / (tp + fp) : (fn == 0 ? 1.0 : 0.0);
  s.recall = tp + fn > 0 ? double(tp) / (tp + fn) : (fp == 0 ? 1.0 : 0.0);
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  s.mean_sigma_corrupted = nc ? sc / nc : 0.0;
  s.mean_sigma_clean = nk ? sk / nk : 0.0;
  return s;
}

Json suite_hyperclean(const HypercleanSuiteConfig& cfg,
                      const std::vector<Method>& methods,
                      const fs::path& out) {
  const auto problem = make_hypercleaning(cfg.data);
  const auto& data = problem->data();
  write_dataset_csv(data, out / "dataset.csv");

  AggregationSchedule sched;
  sched.mu = cfg.mu;
  sched.s_u = cfg.s_u.value_or(0.9 / *problem->lipschitz_F());
  sched.s_l = cfg.s_l.value_or(0.9 / *problem->lipschitz_f());
  sched.alpha_rule = AlphaRule::scaled;
  sched.alpha_param = cfg.alpha_param;

  // Unweighted baseline: sigmoid(x_i) = 1 for every sample.
  const Vector x_all = Vector::Constant(problem->n(), 40.0);
  const auto baseline =
      run_inner(*problem, x_all, cfg.K, sched, InnerMode::plain);

  std::vector<RunRecord> records(methods.size());
  parallel_for(static_cast<int>(methods.size()), [&](int i) {
    SolverConfig s;
    s.method = methods[static_cast<std::size_t>(i)];
    s.K = cfg.K;
    s.T_max = cfg.T_max;
    s.lambda = cfg.lambda;
    s.sched = sched;
    s.truncate_at = std::min(cfg.truncate_at, cfg.K);
    s.obda_eps = cfg.obda_eps;
    s.seed = cfg.data.seed;
    records[i] = solve(*problem, s);
    emit_trace(records[i], out / (to_string(s.method) + ".csv"));
  });

  Json results = Json::object();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& r = records[i];
    Json e;
    e["status"] = to_string(r.status);
    e["message"] = r.message;
    e["iterations"] = r.iterations.size();
    e["lambda"] = r.lambda;
    e["time_seconds"] = r.wall_seconds;
    if (r.status != RunStatus::numerical_error) {
      const auto sc = score_corruption_flags(r.final_state.x, data.train.corrupted);
      e["val_accuracy"] = problem->accuracy(r.final_state.y, data.val);
      e["test_accuracy"] = data.test.size() > 0
                               ? Json(problem->accuracy(r.final_state.y, data.test))
                               : Json(nullptr);
      e["f1"] = sc.f1;
      e["precision"] = sc.precision;
      e["recall"] = sc.recall;
      e["mean_sigma_corrupted"] = sc.mean_sigma_corrupted;
      e["mean_sigma_clean"] = sc.mean_sigma_clean;
    }
    results[to_string(methods[i])] = e;
  }
  Json summary;
  summary["config"] = to_json(cfg);
  summary["s_u"] = sched.s_u;
  summary["s_l"] = sched.s_l;
  summary["baseline"] = Json{
      {"val_accuracy", problem->accuracy(baseline.y, data.val)},
      {"test_accuracy", data.test.size() > 0
                            ? Json(problem->accuracy(baseline.y, data.test))
                            : Json(nullptr)}};
  summary["methods"] = results;
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------- verify

namespace {

CheckReport stationarity_report() {
  const auto p = make_lls_quadratic(1, 3, 5);
  AggregationSchedule s;
  s.mu = 0.1;
  s.s_u = 0.5 / *p->lipschitz_F();
  s.s_l = 0.5 / *p->lipschitz_f();
  s.alpha_rule = AlphaRule::harmonic;
  std::vector<Vector> grid;
  for (int i = 0; i < 11; ++i) grid.push_back(Vector::Constant(1, -5.0 + i));
  const std::vector<int> ks = {10, 100, 1000};
  const auto errs = check_stationarity(*p, grid, s, ks);
  CheckReport rep;
  rep.check_name = "stationarity";
  rep.evaluated = static_cast<long>(errs.size());
  std::ostringstream loc;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    loc << (i ? " " : "") << "k=" << ks[i] << ":" << errs[i];
    if (i > 0 && !(errs[i] < errs[i - 1])) {
      rep.passed = false;
      rep.violations.push_back("not decreasing at k=" + std::to_string(ks[i]));
    }
  }
  rep.location = loc.str();
  rep.worst_margin = kTolerances.stationarity_target - errs.back();
  if (rep.worst_margin < 0.0) {
    rep.passed = false;
    rep.violations.push_back("final error above target");
  }
  return rep;
}

}  // namespace

std::vector<SuiteCheck> verify_suite(const std::string& name) {
  const bool all = name == "all";
  if (!all && name != "lemma1" && name != "rate" && name != "stationarity") {
    throw ConfigError("unknown verify suite '" + name + "'");
  }
  std::vector<SuiteCheck> out;
  auto add = [&](CheckReport rep, const std::string& label,
                 const std::string& expected) {
    rep.check_name = label;
    out.push_back(SuiteCheck{std::move(rep), expected});
  };

  if (all || name == "lemma1") {
    {
      const auto p = make_lls_quadratic(3, 4, 1);
      AggregationSchedule s;
      s.mu = 0.3;
      s.s_u = 0.5 / *p->lipschitz_F();
      s.s_l = 0.5 / *p->lipschitz_f();
      s.alpha_rule = AlphaRule::harmonic;
      const Vector x = Vector::Ones(3);
      const auto tr = run_inner(*p, x, 50, s, InnerMode::bda);
      add(check_descent_inequality(*p, x, tr.trace, s, 100, 1),
          "descent_lls_quadratic", "pass");
      add(check_nonexpansive(tr.trace, {*p->ll_solution(x)}),
          "nonexpansive_lls_quadratic", "pass");
      AggregationSchedule bad = s;
      bad.s_l = 2.0 / *p->lipschitz_f();
      const auto trb = run_inner(*p, x, 50, bad, InnerMode::bda);
      add(check_descent_inequality(*p, x, trb.trace, bad, 100, 1),
          "descent_negative_control", "hypothesis-breach");
    }
    {
      CounterexampleOptions o;
      o.n = 2;
      o.x_half_width = 1.0;
      o.y_half_width = 2.0;
      const auto p = make_counterexample(o);
      AggregationSchedule s;
      s.mu = 0.5;
      s.s_u = 0.5 / *p->lipschitz_F();
      s.s_l = 0.5;
      s.alpha_rule = AlphaRule::harmonic;
      const Vector x = Vector::Constant(2, 0.7);
      const auto tr = run_inner(*p, x, 50, s, InnerMode::bda);
      add(check_descent_inequality(*p, x, tr.trace, s, 100, 2),
          "descent_counterexample", "pass");
      // S(x) = {(x, z)}: several z choices.
      std::vector<Vector> ybars;
      RngStream rng(9);
      for (int i = 0; i < 5; ++i) {
        Vector w = *p->ll_solution(x);
        if (i > 0) w.tail(2) = rng.uniform_vector(2, -2.0, 2.0);
        ybars.push_back(w);
      }
      add(check_nonexpansive(tr.trace, ybars), "nonexpansive_counterexample",
          "pass");
    }
    {
      const auto p = make_remark1();
      AggregationSchedule s;
      s.mu = 0.2;
      s.s_u = 0.5;
      s.s_l = 0.5;
      s.alpha_rule = AlphaRule::harmonic;
      const Vector x = Vector::Constant(1, 0.8);
      const auto tr = run_inner(*p, x, 50, s, InnerMode::bda);
      std::vector<Vector> ybars;
      for (double t : {-3.0, 0.0, 0.8, 5.0}) ybars.push_back(Vector{{0.8, t}});
      add(check_nonexpansive(tr.trace, ybars), "nonexpansive_remark1", "pass");
    }
  }
  if (all || name == "rate") {
    CounterexampleOptions o;
    o.n = 5;
    o.x_half_width = 1.0;
    o.y_half_width = 2.0;
    const auto p = make_counterexample(o);
    AggregationSchedule s;
    s.mu = 0.5;
    s.s_u = 1e-3;
    s.s_l = 0.5;
    s.alpha_rule = AlphaRule::harmonic;
    s.beta_param = 1.0;
    const Vector x = Vector::Constant(5, 0.5);
    const auto c = compute_rate_constants(*p, s, x, 20000, 3);
    add(check_rate_bound(*p, x, s, 500, c), "rate_bound", "pass");
    auto corrupted = c;
    corrupted.C2 *= 1e-6;
    corrupted.C3 *= 1e-6;
    add(check_rate_bound(*p, x, s, 500, corrupted), "rate_negative_control",
        "fail");
  }
  if (all || name == "stationarity") {
    add(stationarity_report(), "stationarity", "pass");
  }
  return out;
}

}  // namespace bda
