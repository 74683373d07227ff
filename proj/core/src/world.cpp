#include "ergcbf/world.hpp"

#include <cmath>
#include <stdexcept>

namespace ergcbf::world {

void validate(const Environment& env) {
  if (env.dimension != 2 && env.dimension != 3) {
    throw std::invalid_argument("world: dimension must be 2 or 3");
  }
  for (const auto& ob : env.obstacles) {
    if (ob.radius <= 0.0) throw std::invalid_argument("world: obstacle radius must be > 0");
    if (ob.center.size() != env.dimension) {
      throw std::invalid_argument("world: obstacle center dimension mismatch");
    }
  }
  if (env.arena) {
    if (env.arena->radius <= 0.0) throw std::invalid_argument("world: arena radius must be > 0");
    if (env.arena->center.size() != env.dimension) {
      throw std::invalid_argument("world: arena center dimension mismatch");
    }
    for (const auto& ob : env.obstacles) {
      if ((ob.center - env.arena->center).norm() > env.arena->radius) {
        throw std::invalid_argument("world: obstacle center outside arena");
      }
    }
  }
}

std::vector<double> clearances(const VectorXd& g, const Environment& env) {
  std::vector<double> out;
  out.reserve(env.obstacles.size() + 1);
  for (const auto& ob : env.obstacles) {
    out.push_back((g - ob.center).norm() - ob.radius);
  }
  if (env.arena) {
    out.push_back(env.arena->radius - (g - env.arena->center).norm());
  }
  return out;
}

double distance_to_unsafe(const VectorXd& g, const Environment& env) {
  double d = std::numeric_limits<double>::infinity();
  for (double c : clearances(g, env)) d = std::min(d, c);
  return d;
}

VectorXd unsafe_gradient(const VectorXd& g, const Environment& env) {
  const auto terms = clearances(g, env);
  if (terms.empty()) {
    throw std::invalid_argument("unsafe_gradient: environment has no terms");
  }
  size_t active = 0;
  for (size_t i = 1; i < terms.size(); ++i) {
    if (terms[i] < terms[active]) active = i;  // strict: ties keep lowest index
  }
  const bool arena_active = env.arena && active == terms.size() - 1;
  const VectorXd& center = arena_active ? env.arena->center : env.obstacles[active].center;
  VectorXd diff = g - center;
  double n = diff.norm();
  if (n < 1e-14) {
    throw std::runtime_error("unsafe_gradient: evaluation at the active center is degenerate");
  }
  return arena_active ? VectorXd(-diff / n) : VectorXd(diff / n);
}

Environment inflate(const Environment& env, double margin) {
  if (margin < 0.0) throw std::invalid_argument("inflate: margin must be >= 0");
  Environment out = env;
  for (auto& ob : out.obstacles) ob.radius += margin;
  if (out.arena) {
    out.arena->radius -= margin;
    if (out.arena->radius <= 0.0) {
      throw std::invalid_argument("inflate: margin collapses the arena");
    }
  }
  return out;
}

}  // namespace ergcbf::world
