#include "ergcbf/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ergcbf/linalg.hpp"

namespace ergcbf::scenario {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
  return v;
}

json ball_to_json(const world::Ball& b) {
  return json{{"center_m", vec_to_json(b.center)}, {"radius_m", b.radius}};
}

world::Ball ball_from_json(const json& j) {
  world::Ball b;
  b.center = vec_from_json(j.at("center_m"));
  b.radius = j.at("radius_m").get<double>();
  return b;
}

json predicate_to_json(const stl::Predicate& p) {
  json j;
  switch (p.kind) {
    case stl::PredicateKind::reach:
      j["kind"] = "reach";
      j["center_m"] = vec_to_json(p.center);
      j["radius_m"] = p.radius;
      break;
    case stl::PredicateKind::stay:
      j["kind"] = "stay";
      j["center_m"] = vec_to_json(p.center);
      j["radius_m"] = p.radius;
      break;
    case stl::PredicateKind::halfspace:
      j["kind"] = "halfspace";
      j["normal"] = vec_to_json(p.normal);
      j["offset_m"] = p.offset;
      break;
  }
  return j;
}

stl::Predicate predicate_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "reach") {
    return stl::make_reach(vec_from_json(j.at("center_m")), j.at("radius_m").get<double>());
  }
  if (kind == "stay") {
    return stl::make_stay(vec_from_json(j.at("center_m")), j.at("radius_m").get<double>());
  }
  if (kind == "halfspace") {
    return stl::make_halfspace(vec_from_json(j.at("normal")), j.at("offset_m").get<double>());
  }
  throw std::invalid_argument("scenario: unknown predicate kind '" + kind + "'");
}

}  // namespace

std::string to_string(PlantKind k) {
  switch (k) {
    case PlantKind::double_integrator: return "double_integrator";
    case PlantKind::quadrotor: return "quadrotor";
    case PlantKind::acc: return "acc";
  }
  return "unknown";
}

PlantKind plant_from_string(const std::string& s) {
  if (s == "double_integrator") return PlantKind::double_integrator;
  if (s == "quadrotor") return PlantKind::quadrotor;
  if (s == "acc") return PlantKind::acc;
  throw std::invalid_argument("scenario: unknown plant '" + s + "'");
}

governor::GovernorConfig GovernorSettings::config(int dim) const {
  governor::GovernorConfig cfg;
  cfg.H = h_weight * Eigen::MatrixXd::Identity(dim, dim);
  cfg.q_dist = q_dist;
  cfg.alpha_obs = alpha_obs;
  cfg.alpha_stl = alpha_stl;
  cfg.u_lower = u_min.size() == dim ? u_min : Eigen::VectorXd::Constant(dim, -1.0);
  cfg.u_upper = u_max.size() == dim ? u_max : Eigen::VectorXd::Constant(dim, 1.0);
  cfg.delta_floor = delta_floor;
  cfg.speed_limit = speed_limit;
  cfg.static_margin = static_margin;
  return cfg;
}

stl::Formula ScenarioConfig::parsed_formula() const {
  if (!has_task()) throw std::logic_error("scenario has no STL task");
  return stl::parse_stl(stl_formula, regions);
}

world::Environment ScenarioConfig::effective_environment() const {
  if (plant == PlantKind::quadrotor && inflate_by_arm) {
    return world::inflate(environment, quad.arm_length);
  }
  return environment;
}

ScenarioConfig parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: JSON parse error: ") + e.what());
  }

  ScenarioConfig c;
  c.name = j.value("name", "");
  c.notes = j.value("notes", "");
  c.plant = plant_from_string(j.value("plant", "double_integrator"));
  c.rate_hz = j.value("rate_hz", 100.0);
  c.horizon_s = j.value("horizon_s", 80.0);
  c.seed = j.value("seed", 1L);

  if (j.contains("environment")) {
    const json& je = j["environment"];
    c.environment.dimension = je.value("dimension", 2);
    if (je.contains("arena")) c.environment.arena = ball_from_json(je["arena"]);
    if (je.contains("obstacles")) {
      for (const auto& jo : je["obstacles"]) c.environment.obstacles.push_back(ball_from_json(jo));
    }
  }

  if (j.contains("regions")) {
    for (const auto& [name, jp] : j["regions"].items()) {
      c.regions[name] = predicate_from_json(jp);
    }
  }
  c.stl_formula = j.value("stl_formula", "");

  const int dim = c.environment.dimension;
  c.initial_position = Eigen::VectorXd::Zero(dim);
  c.initial_velocity = Eigen::VectorXd::Zero(dim);
  c.initial_governor = Eigen::VectorXd::Zero(dim);
  if (j.contains("initial")) {
    const json& ji = j["initial"];
    if (ji.contains("position_m")) c.initial_position = vec_from_json(ji["position_m"]);
    if (ji.contains("velocity_mps")) c.initial_velocity = vec_from_json(ji["velocity_mps"]);
    if (ji.contains("governor_m")) c.initial_governor = vec_from_json(ji["governor_m"]);
  }

  if (j.contains("gains")) {
    c.di_gains.kp = j["gains"].value("kp", -6.0);
    c.di_gains.kd = j["gains"].value("kd", -4.0);
  }

  if (j.contains("quadrotor")) {
    const json& jq = j["quadrotor"];
    c.quad.mass = jq.value("mass_kg", 1.0);
    if (jq.contains("inertia_kgm2")) {
      Eigen::VectorXd d = vec_from_json(jq["inertia_kgm2"]);
      c.quad.inertia = Eigen::Vector3d(d[0], d[1], d[2]).asDiagonal();
    }
    c.quad.gravity = jq.value("gravity_mps2", 9.81);
    c.quad.k_x = jq.value("k_x", 8.0);
    c.quad.k_v = jq.value("k_v", 4.0);
    c.quad.k_R = jq.value("k_R", 2.0);
    c.quad.k_Omega = jq.value("k_Omega", 0.4);
    c.quad.arm_length = jq.value("arm_length_m", 0.2);
    c.inflate_by_arm = jq.value("inflate_by_arm", true);
  }

  if (j.contains("governor")) {
    const json& jg = j["governor"];
    c.governor.h_weight = jg.value("h_weight", 1.0);
    c.governor.q_dist = jg.value("q_dist", -0.01);
    c.governor.alpha_obs = jg.value("alpha_obs", 1.0);
    c.governor.alpha_stl = jg.value("alpha_stl", 1.0);
    if (jg.contains("u_min")) c.governor.u_min = vec_from_json(jg["u_min"]);
    if (jg.contains("u_max")) c.governor.u_max = vec_from_json(jg["u_max"]);
    c.governor.delta_floor = jg.value("delta_floor", 0.0);
    c.governor.speed_limit = jg.value("speed_limit_mps",
                                      std::numeric_limits<double>::infinity());
    c.governor.static_margin = jg.value("static_margin_m", 0.0);
  }
  if (c.governor.u_min.size() == 0) c.governor.u_min = Eigen::VectorXd::Constant(dim, -1.0);
  if (c.governor.u_max.size() == 0) c.governor.u_max = Eigen::VectorXd::Constant(dim, 1.0);

  if (j.contains("barrier")) {
    const json& jb = j["barrier"];
    c.barrier.t_star_fraction = jb.value("t_star_fraction", 0.5);
    c.barrier.smoothing = jb.value("smoothing", 1.0);
    c.barrier.fallback_margin = jb.value("fallback_margin", 1.0);
    c.barrier.interior_margin = jb.value("interior_margin_m", 0.25);
  }

  if (j.contains("acc")) {
    const json& ja = j["acc"];
    c.acc.v0_mps = ja.value("v0_mps", 14.0);
    c.acc.d_delta_m = ja.value("d_delta_m", 10.0);
    c.acc.initial_gap_m = ja.value("initial_gap_m", 50.0);
    c.acc.initial_speed_mps = ja.value("initial_speed_mps", 20.0);
  }
  return c;
}

std::string serialize(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["notes"] = c.notes;
  j["plant"] = to_string(c.plant);
  j["rate_hz"] = c.rate_hz;
  j["horizon_s"] = c.horizon_s;
  j["seed"] = c.seed;

  json je;
  je["dimension"] = c.environment.dimension;
  if (c.environment.arena) je["arena"] = ball_to_json(*c.environment.arena);
  json jo = json::array();
  for (const auto& ob : c.environment.obstacles) jo.push_back(ball_to_json(ob));
  je["obstacles"] = jo;
  j["environment"] = je;

  json jr;
  for (const auto& [name, pred] : c.regions) jr[name] = predicate_to_json(pred);
  j["regions"] = jr;
  j["stl_formula"] = c.stl_formula;

  j["initial"] = json{{"position_m", vec_to_json(c.initial_position)},
                      {"velocity_mps", vec_to_json(c.initial_velocity)},
                      {"governor_m", vec_to_json(c.initial_governor)}};
  j["gains"] = json{{"kp", c.di_gains.kp}, {"kd", c.di_gains.kd}};

  if (c.plant == PlantKind::quadrotor) {
    j["quadrotor"] = json{{"mass_kg", c.quad.mass},
                          {"inertia_kgm2", vec_to_json(c.quad.inertia.diagonal())},
                          {"gravity_mps2", c.quad.gravity},
                          {"k_x", c.quad.k_x},
                          {"k_v", c.quad.k_v},
                          {"k_R", c.quad.k_R},
                          {"k_Omega", c.quad.k_Omega},
                          {"arm_length_m", c.quad.arm_length},
                          {"inflate_by_arm", c.inflate_by_arm}};
  }
  j["governor"] = json{{"h_weight", c.governor.h_weight},
                       {"q_dist", c.governor.q_dist},
                       {"alpha_obs", c.governor.alpha_obs},
                       {"alpha_stl", c.governor.alpha_stl},
                       {"u_min", vec_to_json(c.governor.u_min)},
                       {"u_max", vec_to_json(c.governor.u_max)},
                       {"delta_floor", c.governor.delta_floor}};
  if (std::isfinite(c.governor.speed_limit)) {
    j["governor"]["speed_limit_mps"] = c.governor.speed_limit;
  }
  j["governor"]["static_margin_m"] = c.governor.static_margin;
  j["barrier"] = json{{"t_star_fraction", c.barrier.t_star_fraction},
                      {"smoothing", c.barrier.smoothing},
                      {"fallback_margin", c.barrier.fallback_margin},
                      {"interior_margin_m", c.barrier.interior_margin}};
  if (c.plant == PlantKind::acc) {
    j["acc"] = json{{"v0_mps", c.acc.v0_mps},
                    {"d_delta_m", c.acc.d_delta_m},
                    {"initial_gap_m", c.acc.initial_gap_m},
                    {"initial_speed_mps", c.acc.initial_speed_mps}};
  }
  return j.dump(2) + "\n";
}

ScenarioConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("scenario: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void save(const ScenarioConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("scenario: cannot write '" + path + "'");
  out << serialize(config);
}

std::vector<std::string> check(const ScenarioConfig& c) {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& msg) { problems.push_back(msg); };

  if (c.rate_hz <= 0.0) complain("rate_hz must be > 0");
  if (c.horizon_s <= 0.0) complain("horizon_s must be > 0");
  try {
    world::validate(c.environment);
  } catch (const std::exception& e) {
    complain(e.what());
  }
  const int dim = c.environment.dimension;
  if (c.initial_position.size() != dim) complain("initial position dimension mismatch");
  if (c.initial_velocity.size() != dim) complain("initial velocity dimension mismatch");
  if (c.initial_governor.size() != dim) complain("initial governor dimension mismatch");

  if (c.plant == PlantKind::double_integrator && dim != 2) {
    complain("double_integrator requires a 2-d environment");
  }
  if (c.plant == PlantKind::quadrotor && dim != 3) {
    complain("quadrotor requires a 3-d environment");
  }

  if (c.has_task()) {
    try {
      stl::Formula f = c.parsed_formula();
      if (f.horizon() > c.horizon_s + 1e-9) {
        complain("horizon_s shorter than the formula horizon (" + std::to_string(f.horizon()) + " s)");
      }
    } catch (const std::exception& e) {
      complain(e.what());
    }
  }

  try {
    governor::validate(c.governor.config(dim), dim);
  } catch (const std::exception& e) {
    complain(e.what());
  }
  if (c.barrier.smoothing <= 0.0) complain("barrier smoothing must be > 0");
  if (c.barrier.t_star_fraction < 0.0 || c.barrier.t_star_fraction > 1.0) {
    complain("t_star_fraction must lie in [0, 1]");
  }

  if (c.plant == PlantKind::double_integrator) {
    try {
      plants::check_di_gains(c.di_gains);
    } catch (const std::exception& e) {
      complain(e.what());
    }
  }
  if (c.plant == PlantKind::quadrotor) {
    if (c.quad.mass <= 0.0) complain("quadrotor mass must be > 0");
    if (c.quad.k_x <= 0.0 || c.quad.k_v <= 0.0 || c.quad.k_R <= 0.0 || c.quad.k_Omega <= 0.0) {
      complain("quadrotor gains must be positive");
    }
    if (!linalg::is_hurwitz(plants::quad_hover_closed_loop(c.quad))) {
      complain("quadrotor hover closed loop is not Hurwitz");
    }
    if (c.inflate_by_arm) {
      try {
        world::inflate(c.environment, c.quad.arm_length);
      } catch (const std::exception& e) {
        complain(e.what());
      }
    }
  }
  return problems;
}

}  // namespace ergcbf::scenario
