#pragma once

#include <limits>
#include <optional>
#include <string>

#include "ergcbf/governor.hpp"
#include "ergcbf/plants.hpp"
#include "ergcbf/stl.hpp"
#include "ergcbf/world.hpp"

namespace ergcbf::scenario {

enum class PlantKind { double_integrator, quadrotor, acc };

std::string to_string(PlantKind k);
PlantKind plant_from_string(const std::string& s);

struct AccFixture {
  double v0_mps = 14.0;       // lead vehicle speed
  double d_delta_m = 10.0;    // required headway
  double initial_gap_m = 50.0;
  double initial_speed_mps = 20.0;
};

struct BarrierSettings {
  double t_star_fraction = 0.5;
  double smoothing = 1.0;
  double fallback_margin = 1.0;
  double interior_margin = 0.25;

  stl::BarrierOptions options() const {
    return {t_star_fraction, smoothing, fallback_margin, interior_margin};
  }
};

struct GovernorSettings {
  double h_weight = 1.0;
  double q_dist = -0.01;
  double alpha_obs = 1.0;
  double alpha_stl = 1.0;
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
  double delta_floor = 0.0;
  double speed_limit = std::numeric_limits<double>::infinity();
  double static_margin = 0.0;

  governor::GovernorConfig config(int dim) const;
};

struct ScenarioConfig {
  std::string name;
  std::string notes;
  PlantKind plant = PlantKind::double_integrator;
  double rate_hz = 100.0;
  double horizon_s = 80.0;
  long seed = 1;

  world::Environment environment;
  stl::RegionTable regions;
  std::string stl_formula;  // empty = no task

  Eigen::VectorXd initial_position;
  Eigen::VectorXd initial_velocity;
  Eigen::VectorXd initial_governor;

  plants::DoubleIntegratorGains di_gains;
  plants::QuadrotorParams quad;
  bool inflate_by_arm = true;  // quadrotor only

  GovernorSettings governor;
  BarrierSettings barrier;
  AccFixture acc;

  int dimension() const { return environment.dimension; }
  bool has_task() const { return !stl_formula.empty(); }
  stl::Formula parsed_formula() const;  // throws without a task
  // obstacle set the pipeline actually uses (inflated for the quadrotor)
  world::Environment effective_environment() const;
};

ScenarioConfig parse(const std::string& json_text);
ScenarioConfig load(const std::string& path);
std::string serialize(const ScenarioConfig& config);
void save(const ScenarioConfig& config, const std::string& path);

// full structural validation; returns human-readable problems, empty = valid
std::vector<std::string> check(const ScenarioConfig& config);

}  // namespace ergcbf::scenario
