#include "bda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bda/errors.hpp"
#include "bda/io.hpp"

namespace bda {
namespace fs = std::filesystem;

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

Vector to_vector(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json from_vector(const Vector& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

HypercleanConfig hyperclean_data_config(const Json& p, std::uint64_t seed) {
  reject_unknown(p,
                 {"num_classes", "feature_dim", "n_train", "n_val", "n_test",
                  "corruption_fraction", "class_separation", "ul_ridge",
                  "seed"},
                 "hyperclean parameters");
  HypercleanConfig c;
  c.num_classes = get_or(p, "num_classes", c.num_classes);
  c.feature_dim = get_or(p, "feature_dim", c.feature_dim);
  c.n_train = get_or(p, "n_train", c.n_train);
  c.n_val = get_or(p, "n_val", c.n_val);
  c.n_test = get_or(p, "n_test", c.n_test);
  c.corruption_fraction = get_or(p, "corruption_fraction", c.corruption_fraction);
  c.class_separation = get_or(p, "class_separation", c.class_separation);
  c.ul_ridge = get_or(p, "ul_ridge", c.ul_ridge);
  c.seed = get_or<std::uint64_t>(p, "seed", seed);
  return c;
}

}  // namespace

std::vector<std::string> problem_names() {
  return {"counterexample", "remark1", "lls_quadratic", "hyperclean"};
}

ProblemPtr make_problem(const ProblemSpec& spec, std::uint64_t seed) {
  const Json& p = spec.params;
  try {
    if (spec.name == "counterexample") {
      reject_unknown(p, {"n", "x_half_width", "y_half_width"},
                     "counterexample parameters");
      CounterexampleOptions o;
      o.n = get_or(p, "n", 1);
      o.x_half_width = get_or(p, "x_half_width", o.x_half_width);
      if (p.contains("y_half_width") && !p.at("y_half_width").is_null()) {
        o.y_half_width = p.at("y_half_width").get<double>();
      }
      return make_counterexample(o);
    }
    if (spec.name == "remark1") {
      reject_unknown(p, {"ll_ridge"}, "remark1 parameters");
      return make_remark1(get_or(p, "ll_ridge", 0.0));
    }
    if (spec.name == "lls_quadratic") {
      reject_unknown(p, {"n", "m", "seed"}, "lls_quadratic parameters");
      return make_lls_quadratic(get_or(p, "n", 2), get_or(p, "m", 3),
                                get_or<std::uint64_t>(p, "seed", seed));
    }
    if (spec.name == "hyperclean") {
      return make_hypercleaning(hyperclean_data_config(p, seed));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(spec.name + " parameters: " + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(spec.name + " parameters: " + e.what());
  }
  throw ConfigError("unknown problem '" + spec.name + "'");
}

ExperimentConfig parse_experiment_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(
      j,
      {"problem", "problem_params", "method", "K", "truncate_at", "lambda",
       "mu", "su", "sl", "alpha_rule", "alpha_param", "beta_rule",
       "beta_param", "c_beta", "beta_floor", "T_max", "stop_tol", "seed",
       "seeds", "x0", "y0", "obda_eps", "obda_warm_start", "cg_tol",
       "cg_max_iter", "verbosity", "record_timing"},
      "config");
  ExperimentConfig cfg;
  try {
    if (!j.contains("problem")) throw ConfigError("config: 'problem' missing");
    const Json& pj = j.at("problem");
    if (pj.is_string()) {
      cfg.problem.name = pj.get<std::string>();
      cfg.problem.params = get_or(j, "problem_params", Json::object());
    } else if (pj.is_object()) {
      if (j.contains("problem_params")) {
        throw ConfigError("config: give parameters inside 'problem' or in "
                          "'problem_params', not both");
      }
      cfg.problem.name = pj.at("name").get<std::string>();
      cfg.problem.params = pj;
      cfg.problem.params.erase("name");
    } else {
      throw ConfigError("config: 'problem' must be a name or an object");
    }
    const auto names = problem_names();
    if (std::find(names.begin(), names.end(), cfg.problem.name) == names.end()) {
      throw ConfigError("config: unknown problem '" + cfg.problem.name + "'");
    }

    auto& s = cfg.solver;
    s.method = parse_method(get_or<std::string>(j, "method", "bda"));
    s.K = get_or(j, "K", s.K);
    if (j.contains("truncate_at") && !j.at("truncate_at").is_null()) {
      s.truncate_at = j.at("truncate_at").get<int>();
    }
    if (j.contains("lambda") && !j.at("lambda").is_null()) {
      s.lambda = j.at("lambda").get<double>();
    }
    s.sched.mu = get_or(j, "mu", s.sched.mu);
    s.sched.s_u = get_or(j, "su", s.sched.s_u);
    s.sched.s_l = get_or(j, "sl", s.sched.s_l);
    s.sched.alpha_rule =
        parse_alpha_rule(get_or<std::string>(j, "alpha_rule", "scaled"));
    s.sched.alpha_param = get_or(j, "alpha_param", s.sched.alpha_param);
    s.sched.beta_rule =
        parse_beta_rule(get_or<std::string>(j, "beta_rule", "constant"));
    s.sched.beta_param = get_or(j, "beta_param", s.sched.beta_param);
    s.sched.c_beta = get_or(j, "c_beta", s.sched.c_beta);
    s.sched.beta_floor = get_or(j, "beta_floor", s.sched.beta_floor);
    s.T_max = get_or(j, "T_max", s.T_max);
    s.stop_tol = get_or(j, "stop_tol", s.stop_tol);
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    s.obda_eps = get_or(j, "obda_eps", s.obda_eps);
    s.obda_warm_start = get_or(j, "obda_warm_start", s.obda_warm_start);
    s.cg_tol = get_or(j, "cg_tol", s.cg_tol);
    s.cg_max_iter = get_or(j, "cg_max_iter", s.cg_max_iter);
    s.record_timing = get_or(j, "record_timing", false);
    if (j.contains("x0") && !j.at("x0").is_null()) s.x0 = to_vector(j.at("x0"));
    if (j.contains("y0") && !j.at("y0").is_null()) s.y0 = to_vector(j.at("y0"));
    if (j.contains("seeds") && !j.at("seeds").is_null()) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    const auto verbosity = get_or<std::string>(j, "verbosity", "summary");
    if (verbosity == "summary") {
      cfg.verbosity = Verbosity::summary;
    } else if (verbosity == "full") {
      cfg.verbosity = Verbosity::full;
    } else {
      throw ConfigError("config: verbosity must be 'summary' or 'full'");
    }
    s.record_inner = cfg.verbosity == Verbosity::full;
    s.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

Json to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.solver;
  Json problem = Json{{"name", cfg.problem.name}};
  for (auto it = cfg.problem.params.begin(); it != cfg.problem.params.end();
       ++it) {
    problem[it.key()] = it.value();
  }
  Json j;
  j["problem"] = problem;
  j["method"] = to_string(s.method);
  j["K"] = s.K;
  j["truncate_at"] = s.truncate_at ? Json(*s.truncate_at) : Json(nullptr);
  j["lambda"] = optional_json(s.lambda);
  j["mu"] = s.sched.mu;
  j["su"] = s.sched.s_u;
  j["sl"] = s.sched.s_l;
  j["alpha_rule"] = to_string(s.sched.alpha_rule);
  j["alpha_param"] = s.sched.alpha_param;
  j["beta_rule"] = to_string(s.sched.beta_rule);
  j["beta_param"] = s.sched.beta_param;
  j["c_beta"] = s.sched.c_beta;
  j["beta_floor"] = s.sched.beta_floor;
  j["T_max"] = s.T_max;
  j["stop_tol"] = s.stop_tol;
  j["seed"] = s.seed;
  j["seeds"] = cfg.seeds;
  j["x0"] = s.x0 ? from_vector(*s.x0) : Json(nullptr);
  j["y0"] = s.y0 ? from_vector(*s.y0) : Json(nullptr);
  j["obda_eps"] = s.obda_eps;
  j["obda_warm_start"] = s.obda_warm_start;
  j["cg_tol"] = s.cg_tol;
  j["cg_max_iter"] = s.cg_max_iter;
  j["verbosity"] = cfg.verbosity == Verbosity::full ? "full" : "summary";
  j["record_timing"] = s.record_timing;
  return j;
}

// ---------------------------------------------------------------- traces

namespace {

std::string cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw IoError("bad numeric cell '" + s + "'");
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

constexpr const char* kTraceHeader =
    "t,phiK,grad_norm,err_x,err_y,f_gap,phi_gap,wall_ms";
constexpr const char* kInnerHeader = "t,k,f_val,F_val,proj_active";

}  // namespace

std::string trace_csv(const RunRecord& record) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : record.iterations) {
    out += std::to_string(r.t) + "," + format_real(r.phiK) + "," +
           format_real(r.grad_norm) + "," + cell(r.metrics.err_x) + "," +
           cell(r.metrics.err_y) + "," + cell(r.metrics.f_gap) + "," +
           cell(r.metrics.phi_gap) + "," + cell(r.wall_ms) + "\n";
  }
  return out;
}

void emit_trace(const RunRecord& record, const fs::path& path) {
  for (const auto& r : record.iterations) {
    require_finite(r.phiK, "emit_trace phiK");
    require_finite(r.grad_norm, "emit_trace grad_norm");
  }
  write_file_atomic(path, trace_csv(record));
}

std::vector<TraceRow> parse_trace_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kTraceHeader) {
    throw IoError("trace: missing or unexpected header");
  }
  std::vector<TraceRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i], ',');
    if (c.size() != 8) {
      throw IoError("trace: line " + std::to_string(i + 1) +
                    " does not have 8 columns");
    }
    try {
      TraceRow r;
      r.t = std::stoi(c[0]);
      r.phiK = *parse_cell(c[1]);
      r.grad_norm = *parse_cell(c[2]);
      r.err_x = parse_cell(c[3]);
      r.err_y = parse_cell(c[4]);
      r.f_gap = parse_cell(c[5]);
      r.phi_gap = parse_cell(c[6]);
      r.wall_ms = parse_cell(c[7]);
      rows.push_back(r);
    } catch (const std::logic_error& e) {
      throw IoError("trace: line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<TraceRow> read_trace(const fs::path& path) {
  return parse_trace_csv(read_file(path));
}

void emit_inner_trace(const RunRecord& record, const fs::path& path) {
  std::string out = std::string(kInnerHeader) + "\n";
  for (const auto& r : record.iterations) {
    for (const auto& in : r.inner) {
      out += std::to_string(r.t) + "," + std::to_string(in.k) + "," +
             format_real(in.f_value) + "," + format_real(in.F_value) + "," +
             (in.projection_active ? "1" : "0") + "\n";
    }
  }
  write_file_atomic(path, out);
}

std::vector<InnerTraceRow> read_inner_trace(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  if (lines.empty() || lines[0] != kInnerHeader) {
    throw IoError(path.string() + ": missing or unexpected header");
  }
  std::vector<InnerTraceRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i], ',');
    if (c.size() != 5) throw IoError(path.string() + ": bad column count");
    try {
      rows.push_back(InnerTraceRow{std::stoi(c[0]), std::stoi(c[1]),
                                   std::stod(c[2]), std::stod(c[3]),
                                   c[4] == "1"});
    } catch (const std::logic_error& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

Json run_summary(const RunRecord& record, const ExperimentConfig& cfg) {
  const auto& f = record.final_state;
  Json fin;
  fin["t"] = f.t;
  fin["x"] = f.x.size() ? from_vector(f.x) : Json(nullptr);
  fin["phiK"] = f.phiK;
  fin["grad_norm"] = f.grad_norm;
  fin["err_x"] = optional_json(f.metrics.err_x);
  fin["err_y"] = optional_json(f.metrics.err_y);
  fin["f_gap"] = optional_json(f.metrics.f_gap);
  fin["phi_gap"] = optional_json(f.metrics.phi_gap);
  Json j;
  j["config"] = to_json(cfg);
  j["problem"] = record.problem;
  j["status"] = to_string(record.status);
  j["message"] = record.message;
  j["lambda"] = record.lambda;
  j["lambda_estimated"] = record.lambda_estimated;
  j["iterations"] = record.iterations.size();
  j["final"] = fin;
  j["wall_seconds"] =
      cfg.solver.record_timing ? Json(record.wall_seconds) : Json(nullptr);
  return j;
}

// ---------------------------------------------------------------- threads

int thread_cap() {
  if (const char* env = std::getenv("BDA_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("BDA_THREADS must be a positive integer, got '") +
                      env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int count, const std::function<void(int)>& task) {
  const int workers = std::min(count, thread_cap());
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        {
          std::lock_guard<std::mutex> lock(m);
          if (first) return;
        }
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------- runs

RunOutput run_experiment(const ExperimentConfig& cfg, const fs::path& out) {
  const std::vector<std::uint64_t> seeds =
      cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.solver.seed}
                        : cfg.seeds;
  RunOutput result;
  result.records.resize(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), [&](int i) {
    ExperimentConfig one = cfg;
    one.solver.seed = seeds[static_cast<std::size_t>(i)];
    one.seeds.clear();
    const auto problem = make_problem(one.problem, one.solver.seed);
    auto check_dim = [&](const std::optional<Vector>& v, Eigen::Index dim,
                         const char* what) {
      if (v && v->size() != dim) {
        throw ConfigError(std::string("config: ") + what + " has length " +
                          std::to_string(v->size()) + ", expected " +
                          std::to_string(dim));
      }
    };
    check_dim(one.solver.x0, problem->n(), "x0");
    check_dim(one.solver.y0, problem->m(), "y0");
    auto record = solve(*problem, one.solver);
    const fs::path dir =
        seeds.size() == 1 ? out : out / ("seed_" + std::to_string(seeds[i]));
    emit_trace(record, dir / "trace.csv");
    if (one.verbosity == Verbosity::full) {
      emit_inner_trace(record, dir / "inner.csv");
    }
    write_file_atomic(dir / "summary.json",
                      run_summary(record, one).dump(2) + "\n");
    result.records[static_cast<std::size_t>(i)] = std::move(record);
  });
  return result;
}

}  // namespace bda
