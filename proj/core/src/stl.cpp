#include "ergcbf/stl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace ergcbf::stl {
namespace {

const double kInf = std::numeric_limits<double>::infinity();

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

bool is_psi(const Formula& f) {
  switch (f.kind) {
    case NodeKind::predicate:
    case NodeKind::neg_predicate:
      return true;
    case NodeKind::conjunction:
      return std::all_of(f.children.begin(), f.children.end(),
                         [](const Formula& c) { return is_psi(c); });
    default:
      return false;
  }
}

void check_interval(double a, double b) {
  if (!(0.0 <= a && a <= b)) {
    throw std::invalid_argument("stl: interval must satisfy 0 <= a <= b, got [" +
                                fmt_num(a) + "," + fmt_num(b) + "]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// predicates

double Predicate::eval(const VectorXd& y) const {
  if (kind == PredicateKind::halfspace) return normal.dot(y) - offset;
  return radius - (y - center).norm();
}

VectorXd Predicate::gradient(const VectorXd& y) const {
  if (kind == PredicateKind::halfspace) return normal;
  VectorXd diff = y - center;
  double n = diff.norm();
  // cone peak: zero is a valid subgradient at the center
  if (n < 1e-14) return VectorXd::Zero(y.size());
  return -diff / n;
}

double Predicate::sup_value() const {
  return kind == PredicateKind::halfspace ? kInf : radius;
}

Predicate make_reach(const VectorXd& center, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("reach predicate needs radius > 0");
  Predicate p;
  p.kind = PredicateKind::reach;
  p.center = center;
  p.radius = radius;
  return p;
}

Predicate make_stay(const VectorXd& center, double radius) {
  Predicate p = make_reach(center, radius);
  p.kind = PredicateKind::stay;
  return p;
}

Predicate make_halfspace(const VectorXd& normal, double offset) {
  double n = normal.norm();
  if (n < 1e-14) throw std::invalid_argument("halfspace predicate needs a nonzero normal");
  Predicate p;
  p.kind = PredicateKind::halfspace;
  p.normal = normal / n;
  p.offset = offset / n;
  return p;
}

// ---------------------------------------------------------------------------
// formula construction

Formula Formula::predicate(Predicate p, std::string name) {
  Formula f;
  f.kind = NodeKind::predicate;
  f.pred = std::move(p);
  f.pred_name = std::move(name);
  return f;
}

Formula Formula::negation(Predicate p, std::string name) {
  Formula f = predicate(std::move(p), std::move(name));
  f.kind = NodeKind::neg_predicate;
  return f;
}

Formula Formula::conjunction(std::vector<Formula> parts) {
  if (parts.empty()) throw std::invalid_argument("stl: empty conjunction");
  if (parts.size() == 1) return parts.front();
  Formula f;
  f.kind = NodeKind::conjunction;
  f.children = std::move(parts);
  return f;
}

Formula Formula::eventually(double a, double b, Formula child) {
  check_interval(a, b);
  if (!is_psi(child)) {
    throw std::invalid_argument("stl: eventually accepts only predicate-level operands");
  }
  Formula f;
  f.kind = NodeKind::eventually;
  f.a = a;
  f.b = b;
  f.children.push_back(std::move(child));
  return f;
}

Formula Formula::always(double a, double b, Formula child) {
  Formula f = eventually(a, b, std::move(child));
  f.kind = NodeKind::always;
  return f;
}

Formula Formula::until(double a, double b, Formula left, Formula right) {
  check_interval(a, b);
  if (!is_psi(left) || !is_psi(right)) {
    throw std::invalid_argument("stl: until accepts only predicate-level operands");
  }
  Formula f;
  f.kind = NodeKind::until;
  f.a = a;
  f.b = b;
  f.children.push_back(std::move(left));
  f.children.push_back(std::move(right));
  return f;
}

double Formula::horizon() const {
  switch (kind) {
    case NodeKind::predicate:
    case NodeKind::neg_predicate:
      return 0.0;
    case NodeKind::conjunction: {
      double h = 0.0;
      for (const auto& c : children) h = std::max(h, c.horizon());
      return h;
    }
    case NodeKind::eventually:
    case NodeKind::always:
      return b + children[0].horizon();
    case NodeKind::until:
      return b + std::max(children[0].horizon(), children[1].horizon());
  }
  return 0.0;
}

std::string Formula::text() const {
  auto wrap = [](const Formula& f) {
    std::string s = f.text();
    return f.kind == NodeKind::conjunction || f.kind == NodeKind::until ? "(" + s + ")" : s;
  };
  switch (kind) {
    case NodeKind::predicate:
      return pred_name;
    case NodeKind::neg_predicate:
      return "!" + pred_name;
    case NodeKind::conjunction: {
      std::string s;
      for (size_t i = 0; i < children.size(); ++i) {
        if (i) s += " & ";
        s += wrap(children[i]);
      }
      return s;
    }
    case NodeKind::eventually:
      return "F[" + fmt_num(a) + "," + fmt_num(b) + "] " + wrap(children[0]);
    case NodeKind::always:
      return "G[" + fmt_num(a) + "," + fmt_num(b) + "] " + wrap(children[0]);
    case NodeKind::until:
      return wrap(children[0]) + " U[" + fmt_num(a) + "," + fmt_num(b) + "] " + wrap(children[1]);
  }
  return "";
}

// ---------------------------------------------------------------------------
// parser

namespace {

struct Lexer {
  const std::string& text;
  size_t pos = 0;

  explicit Lexer(const std::string& s) : text(s) {}

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  bool accept(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c, const char* what) {
    if (!accept(c)) fail(std::string("expected '") + c + "' " + what);
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("stl parse error at position " + std::to_string(pos) + ": " + msg);
  }
  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
      ++pos;
    }
    if (start == pos) fail("expected an identifier");
    return text.substr(start, pos - start);
  }
  double number() {
    skip_ws();
    size_t start = pos;
    const char* begin = text.c_str() + pos;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos = start + static_cast<size_t>(end - begin);
    return v;
  }
  // true when the upcoming token is `name` immediately followed by '['
  bool peek_op(const char* name) {
    skip_ws();
    size_t n = std::strlen(name);
    if (text.compare(pos, n, name) != 0) return false;
    size_t after = pos + n;
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    return after < text.size() && text[after] == '[';
  }
};

struct Parser {
  Lexer lex;
  const RegionTable& regions;

  Parser(const std::string& s, const RegionTable& r) : lex(s), regions(r) {}

  std::pair<double, double> interval() {
    lex.expect('[', "after temporal operator");
    double a = lex.number();
    lex.expect(',', "between interval bounds");
    double b = lex.number();
    lex.expect(']', "after interval");
    if (a < 0.0 || a > b) lex.fail("interval must satisfy 0 <= a <= b");
    return {a, b};
  }

  Formula resolve(const std::string& name) {
    auto it = regions.find(name);
    if (it == regions.end()) lex.fail("unknown region name '" + name + "'");
    return Formula::predicate(it->second, name);
  }

  Formula atom() {
    if (lex.accept('(')) {
      Formula f = conj();
      lex.expect(')', "to close group");
      return f;
    }
    return resolve(lex.ident());
  }

  Formula unary() {
    if (lex.peek_op("F")) {
      lex.ident();
      auto [a, b] = interval();
      Formula child = unary();
      if (!is_psi(child)) lex.fail("eventually over a temporal formula is outside the fragment");
      return Formula::eventually(a, b, std::move(child));
    }
    if (lex.peek_op("G")) {
      lex.ident();
      auto [a, b] = interval();
      Formula child = unary();
      if (!is_psi(child)) lex.fail("always over a temporal formula is outside the fragment");
      return Formula::always(a, b, std::move(child));
    }
    if (lex.accept('!')) {
      Formula f = atom();
      if (f.kind != NodeKind::predicate) {
        lex.fail("negation applies only to predicates in this fragment");
      }
      return Formula::negation(f.pred, f.pred_name);
    }
    return atom();
  }

  Formula until_expr() {
    Formula left = unary();
    if (lex.peek_op("U")) {
      lex.ident();
      auto [a, b] = interval();
      Formula right = unary();
      if (!is_psi(left) || !is_psi(right)) {
        lex.fail("until operands must be predicate-level in this fragment");
      }
      return Formula::until(a, b, std::move(left), std::move(right));
    }
    return left;
  }

  Formula conj() {
    std::vector<Formula> parts;
    parts.push_back(until_expr());
    while (lex.accept('&')) parts.push_back(until_expr());
    return Formula::conjunction(std::move(parts));
  }

  Formula run() {
    Formula f = conj();
    if (!lex.eof()) lex.fail("trailing input");
    return f;
  }
};

}  // namespace

Formula parse_stl(const std::string& text, const RegionTable& regions) {
  Parser p(text, regions);
  return p.run();
}

// ---------------------------------------------------------------------------
// monitor

namespace {

struct Grid {
  const Signal& sig;

  size_t nearest(double t) const {
    double x = (t - sig.t0) / sig.dt;
    long i = std::lround(x);
    i = std::max(0L, std::min<long>(i, static_cast<long>(sig.samples.size()) - 1));
    return static_cast<size_t>(i);
  }
  // inclusive sample range covering [lo, hi]
  std::pair<size_t, size_t> window(double lo, double hi) const {
    double eps = 1e-9 * std::max(1.0, sig.dt);
    long first = static_cast<long>(std::ceil((lo - sig.t0) / sig.dt - eps));
    long last = static_cast<long>(std::floor((hi - sig.t0) / sig.dt + eps));
    long n = static_cast<long>(sig.samples.size());
    first = std::max(0L, first);
    last = std::min(last, n - 1);
    if (first > last) first = last = static_cast<long>(nearest(0.5 * (lo + hi)));
    return {static_cast<size_t>(first), static_cast<size_t>(last)};
  }
};

double rob(const Grid& g, const Formula& f, double t) {
  switch (f.kind) {
    case NodeKind::predicate:
      return f.pred.eval(g.sig.samples[g.nearest(t)]);
    case NodeKind::neg_predicate:
      return -f.pred.eval(g.sig.samples[g.nearest(t)]);
    case NodeKind::conjunction: {
      double v = kInf;
      for (const auto& c : f.children) v = std::min(v, rob(g, c, t));
      return v;
    }
    case NodeKind::eventually: {
      auto [i0, i1] = g.window(t + f.a, t + f.b);
      double v = -kInf;
      for (size_t i = i0; i <= i1; ++i) v = std::max(v, rob(g, f.children[0], g.sig.time_at(i)));
      return v;
    }
    case NodeKind::always: {
      auto [i0, i1] = g.window(t + f.a, t + f.b);
      double v = kInf;
      for (size_t i = i0; i <= i1; ++i) v = std::min(v, rob(g, f.children[0], g.sig.time_at(i)));
      return v;
    }
    case NodeKind::until: {
      auto [i0, i1] = g.window(t + f.a, t + f.b);
      double best = -kInf;
      for (size_t i = i0; i <= i1; ++i) {
        double right = rob(g, f.children[1], g.sig.time_at(i));
        double left = kInf;
        auto [j0, j1] = g.window(t, g.sig.time_at(i));
        for (size_t j = j0; j <= j1; ++j) {
          left = std::min(left, rob(g, f.children[0], g.sig.time_at(j)));
        }
        best = std::max(best, std::min(right, left));
      }
      return best;
    }
  }
  return 0.0;
}

void require_coverage(const Signal& signal, const Formula& formula, double t) {
  if (signal.samples.empty() || signal.dt <= 0.0) {
    throw std::runtime_error("stl monitor: empty or unsampled signal");
  }
  if (t < signal.t0 - 0.5 * signal.dt ||
      t + formula.horizon() > signal.t_end() + 0.5 * signal.dt) {
    throw std::runtime_error("stl monitor: signal does not cover the formula horizon");
  }
}

std::optional<double> completion(const Grid& g, const Formula& f) {
  const Signal& sig = g.sig;
  switch (f.kind) {
    case NodeKind::predicate:
    case NodeKind::neg_predicate:
      if (rob(g, f, sig.t0) > 0.0) return sig.t0;
      return std::nullopt;
    case NodeKind::conjunction: {
      double worst = sig.t0;
      for (const auto& c : f.children) {
        auto ct = completion(g, c);
        if (!ct) return std::nullopt;
        worst = std::max(worst, *ct);
      }
      return worst;
    }
    case NodeKind::eventually: {
      auto [i0, i1] = g.window(sig.t0 + f.a, sig.t0 + f.b);
      for (size_t i = i0; i <= i1; ++i) {
        if (rob(g, f.children[0], sig.time_at(i)) > 0.0) return sig.time_at(i);
      }
      return std::nullopt;
    }
    case NodeKind::always: {
      auto [i0, i1] = g.window(sig.t0 + f.a, sig.t0 + f.b);
      for (size_t i = i0; i <= i1; ++i) {
        if (rob(g, f.children[0], sig.time_at(i)) <= 0.0) return std::nullopt;
      }
      return sig.t0 + f.b;
    }
    case NodeKind::until: {
      auto [i0, i1] = g.window(sig.t0 + f.a, sig.t0 + f.b);
      for (size_t i = i0; i <= i1; ++i) {
        if (rob(g, f.children[1], sig.time_at(i)) <= 0.0) continue;
        bool held = true;
        for (size_t j = 0; j <= i && held; ++j) {
          held = rob(g, f.children[0], sig.time_at(j)) > 0.0;
        }
        if (held) return sig.time_at(i);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// max completion over eventually/until nodes only; nullopt if any fails,
// t0 when there are none
std::optional<double> reach_completion(const Grid& g, const Formula& f, bool* found) {
  switch (f.kind) {
    case NodeKind::conjunction: {
      double worst = g.sig.t0;
      for (const auto& c : f.children) {
        auto ct = reach_completion(g, c, found);
        if (!ct) return std::nullopt;
        worst = std::max(worst, *ct);
      }
      return worst;
    }
    case NodeKind::eventually:
    case NodeKind::until:
      *found = true;
      return completion(g, f);
    default:
      return g.sig.t0;
  }
}

}  // namespace

double robustness(const Signal& signal, const Formula& formula, double t) {
  require_coverage(signal, formula, t);
  Grid g{signal};
  return rob(g, formula, t);
}

std::optional<double> completion_time(const Signal& signal, const Formula& formula) {
  require_coverage(signal, formula, signal.t0);
  Grid g{signal};
  return completion(g, formula);
}

std::optional<double> reach_completion_time(const Signal& signal, const Formula& formula) {
  require_coverage(signal, formula, signal.t0);
  Grid g{signal};
  bool found = false;
  auto v = reach_completion(g, formula, &found);
  if (!v) return std::nullopt;
  return found ? *v : signal.t0;
}

// ---------------------------------------------------------------------------
// barriers

double smooth_min(const std::vector<double>& values, double smoothing) {
  if (values.empty()) return kInf;
  if (smoothing <= 0.0) throw std::invalid_argument("smooth_min: smoothing must be > 0");
  double m = *std::min_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(-smoothing * (v - m));
  return m - std::log(sum) / smoothing;
}

double BarrierLiteral::eval(const VectorXd& g) const {
  double v = pred.eval(g);
  return negated ? -v : v;
}

VectorXd BarrierLiteral::gradient(const VectorXd& g) const {
  VectorXd v = pred.gradient(g);
  return negated ? VectorXd(-v) : v;
}

bool AtomicBarrier::active(double t) const {
  return t >= window_start - 1e-9 && t <= window_end + 1e-9;
}

double AtomicBarrier::spatial(const VectorXd& g) const {
  if (literals.size() == 1) return literals[0].eval(g);
  std::vector<double> vals;
  vals.reserve(literals.size());
  for (const auto& lit : literals) vals.push_back(lit.eval(g));
  return smooth_min(vals, smoothing);
}

VectorXd AtomicBarrier::spatial_gradient(const VectorXd& g) const {
  if (literals.size() == 1) return literals[0].gradient(g);
  std::vector<double> vals(literals.size());
  for (size_t i = 0; i < literals.size(); ++i) vals[i] = literals[i].eval(g);
  double m = *std::min_element(vals.begin(), vals.end());
  double sum = 0.0;
  for (double v : vals) sum += std::exp(-smoothing * (v - m));
  VectorXd grad = VectorXd::Zero(g.size());
  for (size_t i = 0; i < literals.size(); ++i) {
    double w = std::exp(-smoothing * (vals[i] - m)) / sum;
    grad += w * literals[i].gradient(g);
  }
  return grad;
}

double AtomicBarrier::offset(double t) const {
  if (t_decay <= 0.0 || gamma0 == 0.0) return 0.0;
  return gamma0 * std::max(0.0, 1.0 - t / t_decay);
}

double AtomicBarrier::offset_rate(double t) const {
  if (t_decay <= 0.0 || gamma0 == 0.0 || t >= t_decay) return 0.0;
  return -gamma0 / t_decay;
}

double AtomicBarrier::value(const VectorXd& g, double t) const {
  return spatial(g) + offset(t);
}

TimeVaryingBarrier::TimeVaryingBarrier(std::vector<AtomicBarrier> parts, double smoothing)
    : parts_(std::move(parts)), smoothing_(smoothing) {
  if (!parts_.empty() && !parts_[0].literals.empty()) {
    dim_ = static_cast<int>(parts_[0].literals[0].pred.kind == PredicateKind::halfspace
                                ? parts_[0].literals[0].pred.normal.size()
                                : parts_[0].literals[0].pred.center.size());
  }
}

double TimeVaryingBarrier::value(const VectorXd& g, double t) const {
  std::vector<double> vals;
  for (const auto& p : parts_) {
    if (p.active(t)) vals.push_back(p.value(g, t));
  }
  return smooth_min(vals, smoothing_);
}

VectorXd TimeVaryingBarrier::spatial_gradient(const VectorXd& g, double t) const {
  std::vector<const AtomicBarrier*> act;
  std::vector<double> vals;
  for (const auto& p : parts_) {
    if (p.active(t)) {
      act.push_back(&p);
      vals.push_back(p.value(g, t));
    }
  }
  if (act.empty()) return VectorXd::Zero(g.size());
  double m = *std::min_element(vals.begin(), vals.end());
  double sum = 0.0;
  for (double v : vals) sum += std::exp(-smoothing_ * (v - m));
  VectorXd grad = VectorXd::Zero(g.size());
  for (size_t i = 0; i < act.size(); ++i) {
    double w = std::exp(-smoothing_ * (vals[i] - m)) / sum;
    grad += w * act[i]->spatial_gradient(g);
  }
  return grad;
}

double TimeVaryingBarrier::time_derivative(const VectorXd& g, double t) const {
  std::vector<const AtomicBarrier*> act;
  std::vector<double> vals;
  for (const auto& p : parts_) {
    if (p.active(t)) {
      act.push_back(&p);
      vals.push_back(p.value(g, t));
    }
  }
  if (act.empty()) return 0.0;
  double m = *std::min_element(vals.begin(), vals.end());
  double sum = 0.0;
  for (double v : vals) sum += std::exp(-smoothing_ * (v - m));
  double rate = 0.0;
  for (size_t i = 0; i < act.size(); ++i) {
    double w = std::exp(-smoothing_ * (vals[i] - m)) / sum;
    rate += w * act[i]->offset_rate(t);
  }
  return rate;
}

bool TimeVaryingBarrier::any_active(double t) const {
  return std::any_of(parts_.begin(), parts_.end(),
                     [t](const AtomicBarrier& p) { return p.active(t); });
}

std::pair<double, double> TimeVaryingBarrier::active_window() const {
  double lo = kInf, hi = -kInf;
  for (const auto& p : parts_) {
    lo = std::min(lo, p.window_start);
    hi = std::max(hi, p.window_end);
  }
  return {lo, hi};
}

namespace {

std::vector<BarrierLiteral> flatten_psi(const Formula& f, double interior_margin) {
  switch (f.kind) {
    case NodeKind::predicate:
    case NodeKind::neg_predicate: {
      Predicate pred = f.pred;
      if (pred.kind != PredicateKind::halfspace && interior_margin > 0.0) {
        pred.radius -= std::min(interior_margin, 0.5 * pred.radius);
      }
      return {BarrierLiteral{pred, f.pred_name, f.kind == NodeKind::neg_predicate}};
    }
    case NodeKind::conjunction: {
      std::vector<BarrierLiteral> out;
      for (const auto& c : f.children) {
        auto part = flatten_psi(c, interior_margin);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    default:
      throw std::invalid_argument("stl: temporal operator nested where a predicate is required");
  }
}

// gamma0 choice: lift the barrier to the predicate's peak value at t = 0 so
// b(g0, 0) > 0 regardless of how far g0 starts, falling back to a fixed
// margin when the peak is unbounded.
double initial_offset(const std::vector<BarrierLiteral>& lits, double h0, double margin) {
  double cap = kInf;
  for (const auto& lit : lits) {
    double s = lit.negated ? kInf : lit.pred.sup_value();
    cap = std::min(cap, s);
  }
  if (!std::isfinite(cap)) cap = h0 + margin;
  return std::max(cap - h0, 0.0);
}

void collect(const Formula& f, const VectorXd& g0, const BarrierOptions& opt,
             std::vector<AtomicBarrier>* out) {
  switch (f.kind) {
    case NodeKind::conjunction:
      for (const auto& c : f.children) collect(c, g0, opt, out);
      return;
    case NodeKind::predicate:
    case NodeKind::neg_predicate: {
      AtomicBarrier ab;
      ab.label = f.text();
      ab.literals = flatten_psi(f, opt.interior_margin);
      ab.smoothing = opt.smoothing;
      ab.window_start = 0.0;
      ab.window_end = kInf;
      out->push_back(std::move(ab));
      return;
    }
    case NodeKind::eventually: {
      AtomicBarrier ab;
      ab.label = f.text();
      ab.literals = flatten_psi(f.children[0], opt.interior_margin);
      ab.smoothing = opt.smoothing;
      double t_star = f.a + opt.t_star_fraction * (f.b - f.a);
      ab.t_decay = t_star;
      ab.gamma0 = t_star > 0.0 ? initial_offset(ab.literals, ab.spatial(g0), opt.fallback_margin)
                               : 0.0;
      ab.window_start = 0.0;
      ab.window_end = t_star;
      out->push_back(std::move(ab));
      return;
    }
    case NodeKind::always: {
      AtomicBarrier ab;
      ab.label = f.text();
      ab.literals = flatten_psi(f.children[0], opt.interior_margin);
      ab.smoothing = opt.smoothing;
      ab.t_decay = f.a;  // slack gone once the window opens
      ab.gamma0 = f.a > 0.0 ? initial_offset(ab.literals, ab.spatial(g0), opt.fallback_margin)
                            : 0.0;
      ab.window_start = 0.0;
      ab.window_end = f.b;
      out->push_back(std::move(ab));
      return;
    }
    case NodeKind::until: {
      double t_star = f.a + opt.t_star_fraction * (f.b - f.a);
      AtomicBarrier hold;  // left operand must hold until the handoff
      hold.label = f.text() + " (hold)";
      hold.literals = flatten_psi(f.children[0], opt.interior_margin);
      hold.smoothing = opt.smoothing;
      hold.window_start = 0.0;
      hold.window_end = t_star;
      out->push_back(std::move(hold));

      AtomicBarrier reach;
      reach.label = f.text() + " (reach)";
      reach.literals = flatten_psi(f.children[1], opt.interior_margin);
      reach.smoothing = opt.smoothing;
      reach.t_decay = t_star;
      reach.gamma0 = t_star > 0.0
                         ? initial_offset(reach.literals, reach.spatial(g0), opt.fallback_margin)
                         : 0.0;
      reach.window_start = 0.0;
      reach.window_end = t_star;
      out->push_back(std::move(reach));
      return;
    }
  }
}

}  // namespace

namespace {

// Deadline-ordered tasks are served one after another, so a later task's
// offset must also cover the trip back from every earlier target, not just
// the gap seen from g0.
void widen_offsets_for_sequencing(std::vector<AtomicBarrier>* parts, const VectorXd& g0,
                                  const BarrierOptions& opt) {
  struct Anchor {
    double deadline;
    VectorXd point;
  };
  std::vector<Anchor> anchors;
  for (const auto& p : *parts) {
    if (p.t_decay <= 0.0) continue;
    for (const auto& lit : p.literals) {
      if (!lit.negated && lit.pred.kind != PredicateKind::halfspace) {
        anchors.push_back({p.t_decay, lit.pred.center});
      }
    }
  }
  for (auto& p : *parts) {
    if (p.t_decay <= 0.0 || p.gamma0 <= 0.0) continue;
    double floor_h = p.spatial(g0);
    for (const auto& a : anchors) {
      if (a.deadline < p.t_decay - 1e-12) floor_h = std::min(floor_h, p.spatial(a.point));
    }
    double cap = kInf;
    for (const auto& lit : p.literals) {
      cap = std::min(cap, lit.negated ? kInf : lit.pred.sup_value());
    }
    if (!std::isfinite(cap)) cap = floor_h + opt.fallback_margin;
    p.gamma0 = std::max(p.gamma0, std::max(cap - floor_h, 0.0));
  }
}

}  // namespace

TimeVaryingBarrier compile_barrier(const Formula& formula, const VectorXd& g0,
                                   const BarrierOptions& options) {
  std::vector<AtomicBarrier> parts;
  collect(formula, g0, options, &parts);
  widen_offsets_for_sequencing(&parts, g0, options);
  for (const auto& p : parts) {
    if (p.value(g0, 0.0) <= 0.0) {
      throw std::runtime_error("compile_barrier: sub-formula '" + p.label +
                               "' is infeasible at the initial reference (b(g0,0) <= 0)");
    }
  }
  return TimeVaryingBarrier(std::move(parts), options.smoothing);
}

}  // namespace ergcbf::stl
