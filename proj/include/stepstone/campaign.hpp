#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "stepstone/env.hpp"
#include "stepstone/mcts.hpp"
#include "stepstone/nn/models.hpp"
#include "stepstone/robot.hpp"

namespace stepstone {

class CampaignConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Ablation {
  bool dynamic_pruning = true;
  bool target_adjustment = true;

  std::string name() const { return std::string(dynamic_pruning ? "dyn" : "kin") + (target_adjustment ? "+adj" : ""); }

  static Ablation parse(const std::string& s) {
    Ablation a;
    if (s.rfind("dyn", 0) == 0) {
      a.dynamic_pruning = true;
    } else if (s.rfind("kin", 0) == 0) {
      a.dynamic_pruning = false;
    } else {
      throw CampaignConfigError("unknown ablation '" + s + "' (expected kin, kin+adj, dyn or dyn+adj)");
    }
    const std::string rest = s.substr(3);
    if (rest != "" && rest != "+adj") throw CampaignConfigError("unknown ablation '" + s + "'");
    a.target_adjustment = rest == "+adj";
    return a;
  }
};

inline std::vector<HeuristicWeights> default_weight_grid() {
  std::vector<HeuristicWeights> grid;
  for (double a : {0.0, 0.2, 0.4, 0.6}) {
    for (double b : {0.0, 0.2, 0.4, 0.6}) grid.push_back({a, b});
  }
  return grid;
}

struct CampaignConfig {
  std::vector<double> sizes{0.07, 0.079, 0.088, 0.097};
  int n_envs = 100;
  Gait gait = Gait::jump;
  std::vector<Ablation> ablations{{false, true}, {true, true}};
  std::vector<HeuristicWeights> weights{{0.0, 0.0}};
  std::uint64_t seed = 0;
  EnvConfig env;          // side is overridden per size
  SearchConfig search;    // seed, gait, weights and ablation flags are overridden per run
  RobotConfig robot;
  std::string classifier_path;
  std::string transition_path;
  bool timing = true;     // false writes NA for time columns, making reports reproducible byte for byte
  int threads = 0;        // 0: hardware concurrency, capped by STEPSTONE_THREADS

  void validate() const {
    if (n_envs < 1) throw CampaignConfigError("n_envs must be at least 1");
    if (sizes.empty() || ablations.empty() || weights.empty()) throw CampaignConfigError("sizes, ablations and weights must be non-empty");
    for (double s : sizes) {
      if (!(s > 0.0)) throw CampaignConfigError("stone sizes must be positive");
    }
    for (const auto& w : weights) w.validate();
  }
};

inline CampaignConfig campaign_config_from_json(const nlohmann::json& j) {
  try {
    CampaignConfig c;
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<double>>();
    c.n_envs = j.value("n_envs", c.n_envs);
    if (j.contains("gait")) c.gait = gait_from_string(j.at("gait").get<std::string>());
    if (j.contains("ablations")) {
      c.ablations.clear();
      for (const auto& a : j.at("ablations")) c.ablations.push_back(Ablation::parse(a.get<std::string>()));
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      if (w.is_string() && w.get<std::string>() == "grid") {
        c.weights = default_weight_grid();
      } else {
        c.weights.clear();
        for (const auto& p : w) c.weights.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
    }
    c.seed = j.value("seed", c.seed);
    c.search.max_iterations = j.value("max_iterations", c.search.max_iterations);
    c.search.n_sim = j.value("n_sim", c.search.n_sim);
    c.search.branching_cap = j.value("branching_cap", c.search.branching_cap);
    c.search.t_feasible = j.value("t_feasible", c.search.t_feasible);
    c.search.ucb_c = j.value("ucb_c", c.search.ucb_c);
    if (j.contains("env")) {
      const auto& e = j.at("env");
      c.env.n_removed = e.value("n_removed", c.env.n_removed);
      c.env.spacing_x = e.value("spacing_x", c.env.spacing_x);
      c.env.spacing_y = e.value("spacing_y", c.env.spacing_y);
      c.env.cols = e.value("cols", c.env.cols);
      c.env.rows = e.value("rows", c.env.rows);
    }
    if (j.contains("robot")) c.robot = robot_config_from_json(j.at("robot"));
    if (j.contains("models")) {
      c.classifier_path = j.at("models").value("classifier", std::string());
      c.transition_path = j.at("models").value("transition", std::string());
    }
    c.timing = j.value("timing", c.timing);
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CampaignConfigError(std::string("bad campaign config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CampaignConfigError(std::string("bad campaign config: ") + e.what());
  }
}

struct RunRecord {
  int size_index = 0;
  int env_index = 0;
  std::uint64_t env_seed = 0;
  bool ok = true;  // false when the run threw
  std::string error;
  PlanResult result;
};

struct CellReport {
  double size = 0.0;
  Ablation ablation;
  HeuristicWeights weights;
  int n_runs = 0;
  int n_errors = 0;
  double success_rate = 0.0;
  double oracle_calls = 0.0;
  double time_s = 0.0;
  double rollout_time_s = 0.0;
  double iterations = 0.0;
  double contact_error_cm = std::numeric_limits<double>::quiet_NaN();  // successful runs only
  std::vector<RunRecord> runs;
};

struct CampaignReport {
  std::vector<CellReport> cells;
  bool timing = true;
};

namespace detail {

inline int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("STEPSTONE_THREADS")) {
    const int c = std::atoi(cap);
    if (c > 0) n = std::min(n, c);
  }
  return std::max(1, n);
}

/// Runs job(i) for i in [0, n) on a small pool; results must go to
/// preallocated slots so the output does not depend on scheduling.
template <class Job>
void parallel_for(std::size_t n, int threads, Job&& job) {
  const int workers = std::min<int>(threads, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline CellReport aggregate(CellReport cell) {
  double err_sum = 0.0;
  int n_success = 0;
  cell.n_runs = static_cast<int>(cell.runs.size());
  for (const auto& r : cell.runs) {
    if (!r.ok) {
      ++cell.n_errors;
      continue;
    }
    cell.oracle_calls += r.result.oracle_calls;
    cell.time_s += r.result.wall_time_s;
    cell.rollout_time_s += r.result.rollout_time_s;
    cell.iterations += r.result.iterations;
    if (r.result.success) {
      ++n_success;
      err_sum += r.result.mean_contact_error_m;
    }
  }
  const double n = static_cast<double>(cell.n_runs);
  const double n_ok = static_cast<double>(cell.n_runs - cell.n_errors);
  cell.success_rate = n > 0 ? n_success / n : 0.0;
  if (n_ok > 0) {
    cell.oracle_calls /= n_ok;
    cell.time_s /= n_ok;
    cell.rollout_time_s /= n_ok;
    cell.iterations /= n_ok;
  }
  if (n_success > 0) cell.contact_error_cm = 100.0 * err_sum / n_success;
  return cell;
}

}  // namespace detail

inline std::uint64_t campaign_env_seed(std::uint64_t seed, int size_index, int env_index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(size_index), static_cast<std::uint64_t>(env_index), 0});
}

inline std::uint64_t campaign_search_seed(std::uint64_t seed, int size_index, int env_index) {
  return derive_seed(seed, {static_cast<std::uint64_t>(size_index), static_cast<std::uint64_t>(env_index), 1});
}

/// Runs every (size, ablation, weights, environment) combination. The same
/// environments and search seeds are reused across ablations and weights.
inline CampaignReport run_campaign(const CampaignConfig& config, PlannerModels models) {
  config.validate();
  struct Job {
    std::size_t cell;
    int size_index;
    int env_index;
  };
  std::vector<CellReport> cells;
  std::vector<Job> jobs;
  for (std::size_t si = 0; si < config.sizes.size(); ++si) {
    for (const auto& ab : config.ablations) {
      for (const auto& w : config.weights) {
        CellReport cell;
        cell.size = config.sizes[si];
        cell.ablation = ab;
        cell.weights = w;
        cell.runs.resize(static_cast<std::size_t>(config.n_envs));
        cells.push_back(std::move(cell));
        for (int e = 0; e < config.n_envs; ++e) jobs.push_back({cells.size() - 1, static_cast<int>(si), e});
      }
    }
  }

  // Environments are shared read-only across cells.
  std::vector<std::vector<std::optional<Environment>>> envs(config.sizes.size());
  std::vector<std::vector<std::string>> env_errors(config.sizes.size());
  for (std::size_t si = 0; si < config.sizes.size(); ++si) {
    envs[si].resize(static_cast<std::size_t>(config.n_envs));
    env_errors[si].resize(static_cast<std::size_t>(config.n_envs));
    EnvConfig ec = config.env;
    ec.side = config.sizes[si];
    for (int e = 0; e < config.n_envs; ++e) {
      try {
        envs[si][static_cast<std::size_t>(e)] = generate_environment(campaign_env_seed(config.seed, static_cast<int>(si), e), ec);
      } catch (const std::exception& ex) {
        env_errors[si][static_cast<std::size_t>(e)] = ex.what();
      }
    }
  }

  detail::parallel_for(jobs.size(), detail::worker_count(config.threads), [&](std::size_t i) {
    const Job& job = jobs[i];
    CellReport& cell = cells[job.cell];
    RunRecord& rec = cell.runs[static_cast<std::size_t>(job.env_index)];
    rec.size_index = job.size_index;
    rec.env_index = job.env_index;
    rec.env_seed = campaign_env_seed(config.seed, job.size_index, job.env_index);
    const auto& env = envs[static_cast<std::size_t>(job.size_index)][static_cast<std::size_t>(job.env_index)];
    if (!env) {
      rec.ok = false;
      rec.error = env_errors[static_cast<std::size_t>(job.size_index)][static_cast<std::size_t>(job.env_index)];
      return;
    }
    SearchConfig sc = config.search;
    sc.seed = campaign_search_seed(config.seed, job.size_index, job.env_index);
    sc.gait = GaitSpec::of(config.gait);
    sc.weights = cell.weights;
    sc.dynamic_pruning = cell.ablation.dynamic_pruning;
    sc.target_adjustment = cell.ablation.target_adjustment;
    sc.record_trace = false;
    try {
      rec.result = plan(*env, config.robot, models, sc);
    } catch (const std::exception& ex) {
      rec.ok = false;
      rec.error = ex.what();
    }
  });

  CampaignReport report;
  report.timing = config.timing;
  for (auto& c : cells) report.cells.push_back(detail::aggregate(std::move(c)));
  return report;
}

inline std::string campaign_csv(const CampaignReport& report) {
  std::ostringstream out;
  out << "size,ablation,alpha,beta,success_rate,oracle_calls,time_s,iterations,contact_error_cm,rollout_time_s,n_runs,n_errors\n";
  char buf[64];
  auto fmt = [&](double v, const char* f) {
    if (!std::isfinite(v)) return std::string("NA");
    std::snprintf(buf, sizeof buf, f, v);
    return std::string(buf);
  };
  for (const auto& c : report.cells) {
    out << fmt(c.size, "%.4f") << ',' << c.ablation.name() << ',' << fmt(c.weights.alpha, "%.3f") << ','
        << fmt(c.weights.beta, "%.3f") << ',' << fmt(c.success_rate, "%.4f") << ',' << fmt(c.oracle_calls, "%.4f") << ','
        << (report.timing ? fmt(c.time_s, "%.6f") : "NA") << ',' << fmt(c.iterations, "%.2f") << ','
        << fmt(c.contact_error_cm, "%.4f") << ',' << (report.timing ? fmt(c.rollout_time_s, "%.6f") : "NA") << ','
        << c.n_runs << ',' << c.n_errors << '\n';
  }
  return out.str();
}

inline nlohmann::json to_json(const CampaignReport& report) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : c.runs) {
      nlohmann::json jr = {{"env_index", r.env_index}, {"env_seed", r.env_seed}, {"ok", r.ok}};
      if (!r.ok) {
        jr["error"] = r.error;
      } else {
        jr["success"] = r.result.success;
        jr["oracle_calls"] = r.result.oracle_calls;
        jr["iterations"] = r.result.iterations;
        jr["mean_contact_error_m"] = num(r.result.mean_contact_error_m);
        jr["executed_contact_error_m"] = num(r.result.executed_contact_error_m);
        if (report.timing) jr["wall_time_s"] = r.result.wall_time_s;
      }
      runs.push_back(std::move(jr));
    }
    nlohmann::json jc = {{"size", c.size},
                         {"ablation", c.ablation.name()},
                         {"alpha", c.weights.alpha},
                         {"beta", c.weights.beta},
                         {"success_rate", c.success_rate},
                         {"oracle_calls", c.oracle_calls},
                         {"iterations", c.iterations},
                         {"contact_error_cm", num(c.contact_error_cm)},
                         {"n_runs", c.n_runs},
                         {"n_errors", c.n_errors},
                         {"runs", runs}};
    if (report.timing) {
      jc["time_s"] = c.time_s;
      jc["rollout_time_s"] = c.rollout_time_s;
    }
    cells.push_back(std::move(jc));
  }
  return {{"cells", cells}};
}

}  // namespace stepstone
