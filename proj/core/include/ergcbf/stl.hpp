#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ergcbf::stl {

using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// predicates and formulas

enum class PredicateKind { reach, stay, halfspace };

struct Predicate {
  PredicateKind kind = PredicateKind::reach;
  VectorXd center;          // reach / stay
  double radius = 0.0;
  VectorXd normal;          // halfspace, unit norm
  double offset = 0.0;

  double eval(const VectorXd& y) const;       // reach/stay: r - ||y-o||, halfspace: n.y - c
  VectorXd gradient(const VectorXd& y) const; // throws at a reach/stay center
  // sup_y h(y): radius for discs, +inf for halfspaces
  double sup_value() const;
};

Predicate make_reach(const VectorXd& center, double radius);
Predicate make_stay(const VectorXd& center, double radius);
Predicate make_halfspace(const VectorXd& normal, double offset);

enum class NodeKind { predicate, neg_predicate, conjunction, eventually, always, until };

// AST of the STL fragment; negation applies to predicates only and temporal
// operators nest only predicate-level (psi-class) children.
struct Formula {
  NodeKind kind = NodeKind::predicate;
  Predicate pred;
  std::string pred_name;
  double a = 0.0;
  double b = 0.0;
  std::vector<Formula> children;  // conjunction: n, eventually/always: 1, until: {left, right}

  static Formula predicate(Predicate p, std::string name);
  static Formula negation(Predicate p, std::string name);
  static Formula conjunction(std::vector<Formula> parts);
  static Formula eventually(double a, double b, Formula child);
  static Formula always(double a, double b, Formula child);
  static Formula until(double a, double b, Formula left, Formula right);

  // seconds of future signal needed to evaluate the formula at a time point
  double horizon() const;
  std::string text() const;
};

using RegionTable = std::map<std::string, Predicate>;

// Concrete syntax: F[a,b] phi | G[a,b] phi | phi U[a,b] phi | phi & phi |
// !p | p | (phi). Rejects text outside the fragment (negated temporal
// operators, temporal nesting) with the character position.
Formula parse_stl(const std::string& text, const RegionTable& regions);

// ---------------------------------------------------------------------------
// quantitative monitor

struct Signal {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<VectorXd> samples;

  double t_end() const { return t0 + dt * (samples.empty() ? 0 : samples.size() - 1); }
  double time_at(size_t i) const { return t0 + dt * static_cast<double>(i); }
};

double robustness(const Signal& signal, const Formula& formula, double t);

// Earliest sample time at which the prefix already determines satisfaction:
// every eventually witnessed, every always window elapsed without violation.
std::optional<double> completion_time(const Signal& signal, const Formula& formula);

// Completion of the reach-style components only (eventually/until witnesses,
// ignoring always windows); 0 when the formula has none.
std::optional<double> reach_completion_time(const Signal& signal, const Formula& formula);

// ---------------------------------------------------------------------------
// barrier compilation

// -(1/k) ln sum exp(-k v_i); under-approximates min within (1/k) ln n
double smooth_min(const std::vector<double>& values, double smoothing);

struct BarrierOptions {
  double t_star_fraction = 0.5;  // t* = a + fraction * (b - a) per eventually/until
  double smoothing = 1.0;
  // initial offset when a predicate has no finite sup (halfspaces, negations)
  double fallback_margin = 1.0;
  // disc radii shrink by min(this, r/2) in compiled barriers so satisfaction
  // is certified with interior margin, not at the boundary
  double interior_margin = 0.0;
};

struct BarrierLiteral {
  Predicate pred;
  std::string name;
  bool negated = false;

  double eval(const VectorXd& g) const;
  VectorXd gradient(const VectorXd& g) const;
};

// One temporal unit: b(g,t) = h_psi(g) + gamma0 * max(0, 1 - t/t_decay),
// active on [window_start, window_end].
struct AtomicBarrier {
  std::string label;
  std::vector<BarrierLiteral> literals;  // psi-conjunction, smooth-min when > 1
  double smoothing = 1.0;
  double gamma0 = 0.0;
  double t_decay = 0.0;                  // offset hits 0 here; <= 0 means no offset
  double window_start = 0.0;
  double window_end = 0.0;               // +inf for untimed predicates

  bool active(double t) const;
  double spatial(const VectorXd& g) const;          // h_psi(g)
  VectorXd spatial_gradient(const VectorXd& g) const;
  double offset(double t) const;                    // gamma(t)
  double offset_rate(double t) const;               // d gamma / dt
  double value(const VectorXd& g, double t) const;  // h_psi + gamma
};

// Smooth conjunction (log-sum-exp) of the atomic barriers active at t.
class TimeVaryingBarrier {
 public:
  TimeVaryingBarrier() = default;
  TimeVaryingBarrier(std::vector<AtomicBarrier> parts, double smoothing);

  // +inf / zero gradient when no component is active at t
  double value(const VectorXd& g, double t) const;
  VectorXd spatial_gradient(const VectorXd& g, double t) const;
  double time_derivative(const VectorXd& g, double t) const;

  bool any_active(double t) const;
  std::pair<double, double> active_window() const;
  const std::vector<AtomicBarrier>& components() const { return parts_; }
  double smoothing() const { return smoothing_; }

 private:
  std::vector<AtomicBarrier> parts_;
  double smoothing_ = 1.0;
  int dim_ = 0;
};

// Compiles the formula into a time-varying barrier anchored at the initial
// reference g0. Throws when some sub-formula starts infeasible
// (b(g0, 0) <= 0), naming it.
TimeVaryingBarrier compile_barrier(const Formula& formula, const VectorXd& g0,
                                   const BarrierOptions& options = {});

}  // namespace ergcbf::stl
