#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bda/hyperclean.hpp"
#include "bda/outer.hpp"
#include "bda/problems.hpp"
#include "bda/verify.hpp"

namespace bda {

using Json = nlohmann::ordered_json;

struct ProblemSpec {
  std::string name = "counterexample";
  Json params = Json::object();
};

// Builds a named problem. `seed` is used by randomly generated instances
// unless the parameters carry their own.
ProblemPtr make_problem(const ProblemSpec& spec, std::uint64_t seed);
std::vector<std::string> problem_names();

enum class Verbosity { summary, full };

struct ExperimentConfig {
  ProblemSpec problem;
  SolverConfig solver;
  Verbosity verbosity = Verbosity::summary;
  std::vector<std::uint64_t> seeds;  // repeat runs; empty means {solver.seed}
};

// Parses the documented keys {problem, method, K, lambda, mu, su, sl,
// alpha_rule, beta_rule, T_max, stop_tol, seed} plus optional extras.
// Throws ConfigError on unknown keys or bad values.
ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Fully resolved config, defaults expanded; parses back to the same config.
Json to_json(const ExperimentConfig& cfg);

struct TraceRow {
  int t = 0;
  double phiK = 0.0;
  double grad_norm = 0.0;
  std::optional<double> err_x, err_y, f_gap, phi_gap, wall_ms;
};

std::string trace_csv(const RunRecord& record);
void emit_trace(const RunRecord& record, const std::filesystem::path& path);
std::vector<TraceRow> parse_trace_csv(const std::string& text);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

struct InnerTraceRow {
  int t = 0;
  int k = 0;
  double f_val = 0.0;
  double F_val = 0.0;
  bool proj_active = false;
};
void emit_inner_trace(const RunRecord& record,
                      const std::filesystem::path& path);
std::vector<InnerTraceRow> read_inner_trace(const std::filesystem::path& path);

Json run_summary(const RunRecord& record, const ExperimentConfig& cfg);

// Worker count for sweeps: BDA_THREADS if set (>= 1), else hardware threads.
int thread_cap();
// Runs task(i) for i in [0, count) on up to thread_cap() workers; results
// are indexed, so output is independent of scheduling. The first exception
// is rethrown after all workers stop.
void parallel_for(int count, const std::function<void(int)>& task);

struct RunOutput {
  std::vector<RunRecord> records;  // one per seed
};
// Runs every seed of the experiment and writes trace.csv, summary.json (and
// inner.csv when verbosity is full) under `out` (per-seed subdirectories
// when several seeds are given).
RunOutput run_experiment(const ExperimentConfig& cfg,
                         const std::filesystem::path& out);

// Counterexample comparisons: per-method runs, a 10-initialization sweep,
// a with/without projection pair and an alpha-rule sweep. Returns the
// summary also written to out/summary.json.
Json suite_counterexample(int n, int K, const std::vector<Method>& methods,
                          const std::filesystem::path& out);

struct HypercleanSuiteConfig {
  HypercleanConfig data;
  int K = 50;
  int T_max = 50;
  std::optional<double> lambda = 1.0;
  double mu = 0.1;
  std::optional<double> s_u;  // default 0.9 / L_F
  std::optional<double> s_l;  // default 0.9 / L_f
  double alpha_param = 0.5;
  int truncate_at = 10;
  double obda_eps = 1e-4;
};
HypercleanSuiteConfig parse_hyperclean_config(const Json& j);
Json to_json(const HypercleanSuiteConfig& cfg);

struct CorruptionScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_sigma_corrupted = 0.0;
  double mean_sigma_clean = 0.0;
};
// Flags sample i as corrupted when sigmoid(x_i) < 0.5.
CorruptionScores score_corruption_flags(const Vector& x,
                                        const std::vector<bool>& corrupted);

Json suite_hyperclean(const HypercleanSuiteConfig& cfg,
                      const std::vector<Method>& methods,
                      const std::filesystem::path& out);

// A verification check together with its expected outcome (negative
// controls are expected to fail or to flag a hypothesis breach).
struct SuiteCheck {
  CheckReport report;
  std::string expected = "pass";
  bool ok() const { return report.status() == expected; }
};
// Standard check configurations: "lemma1" (descent inequality and
// nonexpansiveness), "rate", "stationarity" or "all".
std::vector<SuiteCheck> verify_suite(const std::string& name);

// Exit codes: 0 ok, 1 check failed, 2 unknown subcommand or usage,
// 3 bad config, 4 numerical failure.
int cli_main(int argc, char** argv);

}  // namespace bda
