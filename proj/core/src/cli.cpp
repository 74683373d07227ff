#include "ergcbf/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ergcbf/governor.hpp"
#include "ergcbf/tuning.hpp"

namespace ergcbf::cli {
namespace {

using nlohmann::json;
using scenario::PlantKind;
using scenario::ScenarioConfig;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::optional<ScenarioConfig> load_checked(const CommonOptions& options, std::ostream& err) {
  ScenarioConfig cfg;
  try {
    cfg = scenario::load(options.config_path);
  } catch (const std::exception& e) {
    err << "invalid config: " << e.what() << "\n";
    return std::nullopt;
  }
  if (options.rate_hz) cfg.rate_hz = *options.rate_hz;
  if (options.seed) cfg.seed = *options.seed;
  auto problems = scenario::check(cfg);
  if (!problems.empty()) {
    err << "invalid config '" << options.config_path << "':\n";
    for (const auto& p : problems) err << "  - " << p << "\n";
    return std::nullopt;
  }
  return cfg;
}

std::string sanitize_label(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
  }
  return s;
}

int run_acc_fixture(const ScenarioConfig& cfg, const std::string& out_dir) {
  Eigen::VectorXd x0(2);
  x0 << cfg.acc.initial_gap_m, cfg.acc.initial_speed_mps;
  const auto lie = plants::acc_lie_check(cfg.acc.v0_mps, cfg.acc.d_delta_m, x0);

  // coasting rollout of the fixture, input zero
  const double dt = 1.0 / cfg.rate_hz;
  const int n = static_cast<int>(std::lround(cfg.horizon_s * cfg.rate_hz));
  std::ofstream csv(out_dir + "/trajectory.csv");
  csv << "# ergcbf trajectory v1 (acc fixture)\n";
  csv << "t,d,v_e,b\n";
  Eigen::VectorXd x = x0;
  for (int k = 0; k <= n; ++k) {
    csv << fmt(k * dt) << "," << fmt(x[0]) << "," << fmt(x[1]) << ","
        << fmt(x[0] - cfg.acc.d_delta_m) << "\n";
    if (k == n) break;
    x = plants::rk4_step(
        [&](const Eigen::VectorXd& s) { return plants::acc_drift(s, cfg.acc.v0_mps); }, x, dt);
  }

  const bool degree_two = std::abs(lie.first_order_input_coeff) <= 1e-9 &&
                          std::abs(lie.second_order_input_coeff + 1.0) <= 1e-9;
  json j;
  j["fixture"] = "acc";
  j["lie1_input_coefficient"] = lie.first_order_input_coeff;
  j["lie2_input_coefficient"] = lie.second_order_input_coeff;
  j["relative_degree_two_confirmed"] = degree_two;
  j["exit_code"] = degree_two ? kExitSuccess : kExitHardFailure;
  std::ofstream(out_dir + "/metrics.json") << j.dump(2) << "\n";

  std::cout << "acc fixture: first-derivative input coefficient "
            << fmt(lie.first_order_input_coeff) << ", second "
            << fmt(lie.second_order_input_coeff) << "\n";
  return degree_two ? kExitSuccess : kExitHardFailure;
}

struct TargetVisit {
  std::string name;
  bool reached = false;
  double time = -1.0;
};

std::vector<TargetVisit> visits(const stl::Signal& sig, const stl::Formula& formula) {
  std::vector<TargetVisit> out;
  for (const auto& [name, pred] : sim::ordered_targets(formula)) {
    TargetVisit v;
    v.name = name;
    for (size_t k = 0; k < sig.samples.size(); ++k) {
      if (pred.eval(sig.samples[k]) > 0.0) {
        v.reached = true;
        v.time = sig.time_at(k);
        break;
      }
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::string resolve_out_dir(const std::string& requested) {
  std::string dir = requested;
  if (dir.empty()) {
    const char* env = std::getenv("ERGCBF_OUT");
    dir = env != nullptr && *env != '\0' ? env : ".";
  }
  std::filesystem::create_directories(dir);
  return dir;
}

void write_trajectory_csv(const sim::TrajectoryLog& log, const ScenarioConfig& config,
                          const std::string& path) {
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write " + path);
  csv << "# ergcbf trajectory v1\n";
  if (!log.barrier_labels.empty()) {
    csv << "# barriers:";
    for (size_t i = 0; i < log.barrier_labels.size(); ++i) {
      csv << (i ? ", " : " ") << "b" << i << "=" << sanitize_label(log.barrier_labels[i]);
    }
    csv << "\n";
  }

  const int dim = config.dimension();
  csv << "t";
  if (config.plant == PlantKind::quadrotor) {
    for (const char* n : {"x0", "x1", "x2", "v0", "v1", "v2"}) csv << "," << n;
    for (int i = 0; i < 9; ++i) csv << ",r" << i / 3 << i % 3;
    for (const char* n : {"w0", "w1", "w2"}) csv << "," << n;
  } else {
    for (const char* n : {"x0", "x1", "v0", "v1"}) csv << "," << n;
  }
  for (int i = 0; i < dim; ++i) csv << ",y" << i;
  for (int i = 0; i < dim; ++i) csv << ",g" << i;
  csv << ",dsm,energy";
  for (int i = 0; i < dim; ++i) csv << ",ug" << i;
  if (config.plant == PlantKind::quadrotor) {
    csv << ",f,m0,m1,m2";
  } else {
    csv << ",ua0,ua1";
  }
  csv << ",b_stl,d_g,d_y";
  for (size_t i = 0; i < log.barrier_labels.size(); ++i) csv << ",b" << i;
  csv << ",qp_status,qp_active,slack\n";

  for (const auto& rec : log.steps) {
    csv << fmt(rec.t);
    for (int i = 0; i < rec.x.size(); ++i) csv << "," << fmt(rec.x[i]);
    for (int i = 0; i < rec.y.size(); ++i) csv << "," << fmt(rec.y[i]);
    for (int i = 0; i < rec.g.size(); ++i) csv << "," << fmt(rec.g[i]);
    csv << "," << fmt(rec.dsm) << "," << fmt(rec.energy);
    for (int i = 0; i < rec.u_g.size(); ++i) csv << "," << fmt(rec.u_g[i]);
    for (int i = 0; i < rec.u_plant.size(); ++i) csv << "," << fmt(rec.u_plant[i]);
    csv << "," << fmt(rec.b_stl) << "," << fmt(rec.d_g) << "," << fmt(rec.d_y);
    for (double b : rec.barrier_values) csv << "," << fmt(b);
    csv << "," << rec.qp_status << ",";
    for (size_t i = 0; i < rec.qp_active.size(); ++i) {
      if (i) csv << ";";
      csv << rec.qp_active[i];
    }
    csv << "," << fmt(rec.slack) << "\n";
  }
}

void write_metrics_json(const sim::RunMetrics& metrics, int exit_code, const std::string& path) {
  json j;
  j["t_g_s"] = opt_json(metrics.t_g);
  j["t_a_s"] = opt_json(metrics.t_a);
  j["t_g_reach_s"] = opt_json(metrics.t_g_reach);
  j["t_a_reach_s"] = opt_json(metrics.t_a_reach);
  j["min_dsm"] = metrics.min_dsm;
  j["mean_dsm"] = metrics.mean_dsm;
  j["min_governor_clearance_m"] = metrics.min_governor_clearance;
  j["min_output_clearance_m"] = metrics.min_output_clearance;
  j["robustness_g"] = opt_json(metrics.robustness_g);
  j["robustness_y"] = opt_json(metrics.robustness_y);
  j["tracking_loss"] = metrics.tracking_loss;
  j["incomplete_task"] = metrics.incomplete_task;
  j["qp_relaxed_steps"] = metrics.relaxed_steps;
  j["max_slack"] = metrics.max_slack;
  j["max_rotation_drift"] = metrics.max_rotation_drift;
  j["task_satisfied"] = metrics.task_satisfied;
  j["exit_code"] = exit_code;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_run(const CommonOptions& options) {
  auto cfg = load_checked(options, std::cerr);
  if (!cfg) return kExitInvalidConfig;
  const std::string out_dir = resolve_out_dir(options.out_dir);

  if (cfg->plant == PlantKind::acc) return run_acc_fixture(*cfg, out_dir);

  sim::RunResult res;
  try {
    res = sim::run_closed_loop(*cfg);
  } catch (const std::exception& e) {
    std::cerr << "hard failure: " << e.what() << "\n";
    return kExitHardFailure;
  }

  const bool safe =
      res.metrics.min_dsm >= -1e-6 && res.metrics.min_output_clearance >= -1e-6;
  int code = kExitHardFailure;
  if (safe) code = res.metrics.task_satisfied ? kExitSuccess : kExitSafeIncomplete;

  write_trajectory_csv(res.log, *cfg, out_dir + "/trajectory.csv");
  write_metrics_json(res.metrics, code, out_dir + "/metrics.json");

  std::cout << "run '" << cfg->name << "': "
            << (safe ? (res.metrics.task_satisfied ? "task satisfied" : "safe but incomplete")
                     : "safety violated")
            << ", min DSM " << fmt(res.metrics.min_dsm) << ", robustness(y) "
            << (res.metrics.robustness_y ? fmt(*res.metrics.robustness_y) : "n/a") << "\n";
  return code;
}

int cmd_compare(const CommonOptions& options) {
  auto cfg = load_checked(options, std::cerr);
  if (!cfg) return kExitInvalidConfig;
  if (cfg->plant != PlantKind::double_integrator) {
    std::cerr << "invalid config: compare needs a double_integrator scenario\n";
    return kExitInvalidConfig;
  }
  const std::string out_dir = resolve_out_dir(options.out_dir);

  sim::RunResult erg;
  try {
    erg = sim::run_closed_loop(*cfg);
  } catch (const std::exception& e) {
    std::cerr << "hard failure (reference-governor run): " << e.what() << "\n";
    return kExitHardFailure;
  }
  write_trajectory_csv(erg.log, *cfg, out_dir + "/compare_erg.csv");

  const stl::Formula formula = cfg->parsed_formula();
  auto erg_visits = visits(erg.log.output_signal(), formula);

  json verdict;
  verdict["scenario"] = cfg->name;
  json erg_json;
  for (const auto& v : erg_visits) {
    erg_json[v.name] = json{{"reached", v.reached}, {"time_s", v.time}};
  }
  verdict["erg_cbf"] = erg_json;
  verdict["erg_min_dsm"] = erg.metrics.min_dsm;

  std::cout << "=== comparison on '" << cfg->name << "' ===\n";
  std::cout << "erg-cbf:";
  for (const auto& v : erg_visits) {
    std::cout << " " << v.name << (v.reached ? " reached@" + fmt(v.time) : " not-reached");
  }
  std::cout << "\n";

  json hocbf_json = json::array();
  for (double kappa : {0.3, 1.0, 3.0}) {
    sim::HocbfRun run;
    try {
      run = sim::run_hocbf_baseline(*cfg, kappa, kappa);
    } catch (const std::exception& e) {
      std::cerr << "hard failure (hocbf run): " << e.what() << "\n";
      return kExitHardFailure;
    }
    std::ostringstream name;
    name << out_dir << "/compare_hocbf_k" << kappa << ".csv";
    write_trajectory_csv(run.log, *cfg, name.str());

    json entry;
    entry["kappa"] = kappa;
    for (size_t i = 0; i < run.target_names.size(); ++i) {
      entry[run.target_names[i]] =
          json{{"reached", static_cast<bool>(run.reached[i])}, {"time_s", run.reach_times[i]}};
    }
    entry["infeasible_steps"] = run.infeasible_steps;
    hocbf_json.push_back(entry);

    std::cout << "hocbf k1=k2=" << kappa << ":";
    for (size_t i = 0; i < run.target_names.size(); ++i) {
      std::cout << " " << run.target_names[i]
                << (run.reached[i] ? " reached@" + fmt(run.reach_times[i]) : " not-reached");
    }
    std::cout << "\n";
  }
  verdict["hocbf"] = hocbf_json;
  std::ofstream(out_dir + "/compare_verdict.json") << verdict.dump(2) << "\n";
  return kExitSuccess;
}

int cmd_tune(const TuneCliOptions& options) {
  auto cfg = load_checked(options.common, std::cerr);
  if (!cfg) return kExitInvalidConfig;
  const std::string out_dir = resolve_out_dir(options.common.out_dir);

  if (options.grad_oracle && cfg->plant == PlantKind::double_integrator) {
    sim::RunResult nominal = sim::run_closed_loop(*cfg);
    const double t_stop = nominal.metrics.t_a_reach.value_or(cfg->horizon_s);
    Eigen::VectorXd x0(4);
    x0.head(2) = cfg->initial_position;
    x0.tail(2) = cfg->initial_velocity;
    auto gs = nominal.log.governor_signal();
    auto sens = tuning::sensitivity_gradient(gs, x0, cfg->di_gains, t_stop);
    auto fd = tuning::finite_diff_gradient_frozen(gs, x0, cfg->di_gains, t_stop, 1e-4);
    double rel = (sens - fd).norm() / std::max(1e-12, fd.norm());
    std::cout << "gradient oracle (frozen governor): sensitivity [" << fmt(sens[0]) << ", "
              << fmt(sens[1]) << "], finite differences [" << fmt(fd[0]) << ", " << fmt(fd[1])
              << "], relative difference " << fmt(rel) << "\n";
  }

  tuning::TuneOptions topts;
  topts.iterations = options.iterations;
  topts.alpha = options.alpha;
  tuning::TuningRun run;
  try {
    run = tuning::tune(*cfg, topts);
  } catch (const std::exception& e) {
    std::cerr << "hard failure: " << e.what() << "\n";
    return kExitHardFailure;
  }

  std::ofstream csv(out_dir + "/tuning.csv");
  csv << "# ergcbf tuning v1\n";
  csv << "iteration,theta0,theta1,loss,t_g,t_a,completion_gap,mean_dsm,min_dsm\n";
  for (size_t i = 0; i < run.history.size(); ++i) {
    const auto& e = run.history[i];
    csv << i << "," << fmt(e.theta[0]) << "," << fmt(e.theta[1]) << "," << fmt(e.loss) << ","
        << fmt(e.t_g.value_or(-1.0)) << "," << fmt(e.t_a.value_or(-1.0)) << ","
        << fmt(e.completion_gap) << "," << fmt(e.mean_dsm) << "," << fmt(e.min_dsm) << "\n";
  }

  json j;
  j["iterations"] = options.iterations;
  j["initial_loss"] = run.initial().loss;
  j["final_loss"] = run.final_entry().loss;
  j["initial_mean_dsm"] = run.initial().mean_dsm;
  j["final_mean_dsm"] = run.final_entry().mean_dsm;
  j["final_theta"] = {run.final_entry().theta[0], run.final_entry().theta[1]};
  j["stalled"] = run.stalled;
  std::ofstream(out_dir + "/tuning_summary.json") << j.dump(2) << "\n";

  std::cout << "tuning: loss " << fmt(run.initial().loss) << " -> " << fmt(run.final_entry().loss)
            << ", gains [" << fmt(run.final_entry().theta[0]) << ", "
            << fmt(run.final_entry().theta[1]) << "]"
            << (run.stalled ? " (stalled)" : "") << "\n";

  if (run.stalled) return kExitTuneStalled;
  if (options.iterations == 0) {
    std::cout << "no-op: zero iterations requested\n";
    return kExitSuccess;
  }
  return run.final_entry().loss < run.initial().loss ? kExitSuccess : kExitSafeIncomplete;
}

int cmd_validate(const std::string& config_path) {
  ScenarioConfig cfg;
  try {
    cfg = scenario::load(config_path);
  } catch (const std::exception& e) {
    std::cout << "FAIL load: " << e.what() << "\n";
    return kExitInvalidConfig;
  }

  bool ok = true;
  auto report = [&](bool good, const std::string& what) {
    std::cout << (good ? "ok" : "FAIL") << ": " << what << "\n";
    ok = ok && good;
  };

  auto problems = scenario::check(cfg);
  for (const auto& p : problems) report(false, p);
  if (problems.empty()) report(true, "scenario structure");
  if (!problems.empty()) return kExitInvalidConfig;

  if (cfg.plant == PlantKind::acc) {
    report(true, "acc fixture has no governor loop to validate");
    return ok ? kExitSuccess : kExitInvalidConfig;
  }

  try {
    const auto cert = sim::tracking_certificate(cfg);
    report(true, "closed loop Hurwitz, Lyapunov certificate computed (l=" + fmt(cert.l) + ")");

    const world::Environment env = cfg.effective_environment();
    Eigen::VectorXd x0(2 * cfg.dimension());
    x0.head(cfg.dimension()) = cfg.initial_position;
    x0.tail(cfg.dimension()) = cfg.initial_velocity;
    const double delta0 = governor::dsm(x0, cfg.initial_governor, cert.P, cert.l, env);
    report(delta0 > 0.0, "initial safety margin Delta(x0, g0) = " + fmt(delta0));

    if (cfg.has_task()) {
      try {
        auto barrier =
            stl::compile_barrier(cfg.parsed_formula(), cfg.initial_governor, cfg.barrier.options());
        report(true, "task barrier feasible at start, b(g0,0) = " +
                         fmt(barrier.value(cfg.initial_governor, 0.0)));
      } catch (const std::exception& e) {
        report(false, e.what());
      }
    }
  } catch (const std::exception& e) {
    report(false, e.what());
  }
  return ok ? kExitSuccess : kExitInvalidConfig;
}

}  // namespace ergcbf::cli
