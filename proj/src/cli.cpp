#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bda/errors.hpp"
#include "bda/harness.hpp"
#include "bda/io.hpp"

namespace bda {
namespace fs = std::filesystem;

namespace {

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  for (const auto& item : split(csv, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(parse_method(item));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

Json load_json(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Reference gradient of the method's objective at x.
Vector reference_gradient(const BilevelProblem& p, const Vector& x,
                          const SolverConfig& cfg) {
  if (cfg.method == Method::ihg) {
    auto g = p.value_function_gradient(x);
    if (!g) {
      throw CapabilityError("gradcheck: ihg needs an analytic value-function "
                            "gradient on '" + p.name() + "'");
    }
    return *g;
  }
  const int K = cfg.effective_K();
  const InnerMode mode = (cfg.method == Method::bda || cfg.method == Method::obda)
                             ? InnerMode::bda
                             : InnerMode::plain;
  const ScalarMap phi = [&](const Vector& xx) {
    const auto r = run_inner(p, xx, K, cfg.sched, mode, cfg.y0);
    return p.F(xx, r.y);
  };
  const double eps = kTolerances.fd_step_scale * std::max(1.0, x.norm());
  return fd_gradient(phi, x, eps);
}

int cmd_gradcheck(const std::string& problem_name, const std::string& method,
                  int K) {
  ProblemSpec spec;
  spec.name = problem_name;
  const auto p = make_problem(spec, 0);
  SolverConfig cfg;
  try {
    cfg.method = parse_method(method);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  cfg.K = K;
  // Full truncation window so the result is an exact gradient of phi_K.
  cfg.truncate_at = K;
  if (auto L = p->lipschitz_F()) cfg.sched.s_u = 0.5 / *L;
  if (auto L = p->lipschitz_f()) cfg.sched.s_l = 0.5 / *L;
  cfg.sched.alpha_rule = AlphaRule::harmonic;
  cfg.validate();
  check_capabilities(*p, cfg);
  if (cfg.method == Method::obda) cfg.y0 = default_initial_point(*p);

  Vector x(p->n());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 0.3 + 0.05 * double(i % 5);
  x = project_box(x, p->region_x());

  HypergradResult hg;
  if (cfg.method == Method::ihg) {
    const auto y_star = p->ll_solution(x);
    if (!y_star) {
      throw CapabilityError("gradcheck: ihg needs an analytic lower-level "
                            "solution on '" + p->name() + "'");
    }
    hg = hypergrad_implicit(*p, x, *y_star, cfg.cg_tol, cfg.cg_max_iter);
  } else {
    hg = method_hypergradient(*p, x, cfg);
  }
  const Vector ref = reference_gradient(*p, x, cfg);
  const double denom = std::max(ref.norm(), 1e-12);
  const double rel = (hg.gradient - ref).norm() / denom;
  std::printf("problem=%s method=%s K=%d max_rel_err=%s\n", p->name().c_str(),
              to_string(cfg.method).c_str(), cfg.effective_K(),
              format_real(rel).c_str());
  return rel <= kTolerances.fd_relative ? 0 : 1;
}

int cmd_run(const fs::path& config, const fs::path& out) {
  const auto cfg = load_experiment_config(config);
  const auto result = run_experiment(cfg, out);
  int code = 0;
  for (const auto& r : result.records) {
    std::printf("method=%s status=%s iterations=%zu phiK=%s\n",
                to_string(r.config.method).c_str(),
                to_string(r.status).c_str(), r.iterations.size(),
                format_real(r.final_state.phiK).c_str());
    if (r.status == RunStatus::numerical_error) {
      std::fprintf(stderr, "error: numerical: %s\n", r.message.c_str());
      code = 4;
    }
  }
  return code;
}

int report_checks(const Json& checks) {
  int code = 0;
  for (auto it = checks.begin(); it != checks.end(); ++it) {
    const bool ok = it.value().get<bool>();
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", it.key().c_str());
    if (!ok) code = 1;
  }
  return code;
}

int cmd_counterexample(int n, int K, const std::string& methods,
                       const fs::path& out) {
  const auto summary = suite_counterexample(n, K, parse_method_list(methods), out);
  return report_checks(summary.at("checks"));
}

int cmd_hyperclean(const fs::path& config, const std::string& methods,
                   const fs::path& out) {
  const auto cfg = parse_hyperclean_config(load_json(config));
  const auto list = parse_method_list(methods);
  const auto summary = suite_hyperclean(cfg, list, out);
  int code = 0;
  for (auto it = summary.at("methods").begin(); it != summary.at("methods").end();
       ++it) {
    const auto& e = it.value();
    if (e.contains("val_accuracy")) {
      char test_acc[32] = "NA";
      if (!e.at("test_accuracy").is_null()) {
        std::snprintf(test_acc, sizeof test_acc, "%.4f",
                      e.at("test_accuracy").get<double>());
      }
      std::printf("method=%s val_acc=%.4f test_acc=%s f1=%.4f time_s=%.3f\n",
                  it.key().c_str(), e.at("val_accuracy").get<double>(), test_acc,
                  e.at("f1").get<double>(), e.at("time_seconds").get<double>());
    } else {
      std::fprintf(stderr, "error: numerical: %s: %s\n", it.key().c_str(),
                   e.at("message").get<std::string>().c_str());
      code = 4;
    }
  }
  return code;
}

int cmd_verify(const std::string& suite, const fs::path& out) {
  const auto checks = verify_suite(suite);
  fs::create_directories(out);
  Json summary = Json::array();
  int code = 0;
  for (const auto& c : checks) {
    const Json j = Json::parse(c.report.to_json());
    write_file_atomic(out / (c.report.check_name + ".json"), j.dump(2) + "\n");
    summary.push_back(Json{{"check", c.report.check_name},
                           {"status", c.report.status()},
                           {"expected", c.expected},
                           {"ok", c.ok()},
                           {"worst_margin", c.report.worst_margin}});
    std::printf("%s %s status=%s expected=%s worst_margin=%s\n",
                c.ok() ? "PASS" : "FAIL", c.report.check_name.c_str(),
                c.report.status().c_str(), c.expected.c_str(),
                format_real(c.report.worst_margin).c_str());
    if (!c.ok()) code = 1;
  }
  write_file_atomic(out / "verify_summary.json", summary.dump(2) + "\n");
  return code;
}

int fail(const char* kind, const std::string& what, int code) {
  std::string line = what;
  for (auto& ch : line) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::fprintf(stderr, "error: %s: %s\n", kind, line.c_str());
  return code;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Bi-level descent aggregation toolkit"};
  app.require_subcommand(1);

  std::string config, out = "out", problem, method, methods = "bda,rhg", suite;
  int K = 20, n = 50;

  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("--config", config)->required();
  run->add_option("--out", out);

  auto* grad = app.add_subcommand("gradcheck",
                                  "Compare a hypergradient with finite differences");
  grad->add_option("--problem", problem)->required();
  grad->add_option("--method", method)->required();
  grad->add_option("--K", K);

  auto* ce = app.add_subcommand("counterexample", "Counterexample comparison suite");
  ce->add_option("--n", n);
  ce->add_option("--K", K);
  ce->add_option("--methods", methods);
  ce->add_option("--out", out);

  auto* hc = app.add_subcommand("hyperclean", "Data hyper-cleaning suite");
  hc->add_option("--config", config)->required();
  hc->add_option("--methods", methods);
  hc->add_option("--out", out);

  auto* ver = app.add_subcommand("verify", "Numerical property checks");
  ver->add_option("--suite", suite)->required();
  ver->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*grad) return cmd_gradcheck(problem, method, K);
    if (*ce) {
      if (n < 1 || K < 1) throw ConfigError("--n and --K must be >= 1");
      return cmd_counterexample(n, K, methods, out);
    }
    if (*hc) return cmd_hyperclean(config, methods, out);
    if (*ver) return cmd_verify(suite, out);
  } catch (const NumericalError& e) {
    return fail(e.kind(), e.what(), 4);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 3);
  }
  return fail("usage", "no subcommand", 2);
}

}  // namespace bda
