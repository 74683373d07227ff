#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace ergcbf::world {

using Eigen::VectorXd;

struct Ball {
  VectorXd center;
  double radius = 0.0;
};

// Circular/spherical obstacles plus an optional containment arena.
struct Environment {
  int dimension = 2;
  std::vector<Ball> obstacles;
  std::optional<Ball> arena;
};

void validate(const Environment& env);

// Per-term signed clearances: ||g - o_i|| - r_i per obstacle, then
// r_A - ||g - c_A|| for the arena. Negative inside an obstacle or
// outside the arena.
std::vector<double> clearances(const VectorXd& g, const Environment& env);

// min over all clearance terms
double distance_to_unsafe(const VectorXd& g, const Environment& env);

// Gradient of the active minimum term; ties resolved toward the lowest
// obstacle index (arena last). Throws when g sits exactly on the active
// center.
VectorXd unsafe_gradient(const VectorXd& g, const Environment& env);

// Grow every obstacle by margin and shrink the arena by it.
Environment inflate(const Environment& env, double margin);

}  // namespace ergcbf::world
