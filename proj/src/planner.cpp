#include "stiffprint/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace stiffprint {

void PlanProblem::validate() const {
  params.validate();
  weights.validate();
  if (horizon_end < 1) throw DomainError("plan: horizon_end must be >= 1");
  if (stage < 1 || stage > horizon_end) throw DomainError("plan: stage must lie in [1, N]");
  if (prefix_mean.size() != stage - 1) throw DomainError("plan: prefix length must be stage - 1");
  if (!(u_min < u_max)) throw ConfigError("plan: u_min must be below u_max");
  if (!(u_min + params.gamma > 0.0)) throw ConfigError("plan: u_min + gamma must be positive");
  if (!(target_compliance > 0.0)) throw ConfigError("plan: target compliance must be positive");
}

namespace {

// Coefficients c_{N,k} for the planned layers k = n..N.
Eigen::VectorXd tail_coefficients(const PlanProblem& p) {
  return coeff_vector(p.horizon_end).tail(p.horizon());
}

double prefix_term(const PlanProblem& p) {
  return coeff_vector(p.horizon_end).head(p.stage - 1).dot(p.prefix_mean);
}

// In-place solve of a symmetric positive definite tridiagonal system.
void solve_tridiagonal(Eigen::VectorXd diag, const Eigen::VectorXd& off, Eigen::VectorXd& rhs) {
  const Eigen::Index m = diag.size();
  Eigen::VectorXd l(m > 1 ? m - 1 : 0);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    if (!(diag(i) > 0.0)) throw NumericalError("planner: Newton system is not positive definite");
    l(i) = off(i) / diag(i);
    diag(i + 1) -= l(i) * off(i);
  }
  if (!(diag(m - 1) > 0.0)) throw NumericalError("planner: Newton system is not positive definite");
  for (Eigen::Index i = 1; i < m; ++i) rhs(i) -= l(i - 1) * rhs(i - 1);
  rhs.array() /= diag.array();
  for (Eigen::Index i = m - 2; i >= 0; --i) rhs(i) -= l(i) * rhs(i + 1);
}

// Slack of every inequality at u: [upper - u_1, u_1 - u_2, ..., u_m - u_min, C* - f(u)].
struct Slacks {
  Eigen::VectorXd linear;  // m + 1 entries
  double compliance = 0.0;
  bool strictly_feasible = false;
};

class BarrierProblem {
 public:
  explicit BarrierProblem(const PlanProblem& p)
      : p_(p), c_(tail_coefficients(p)), prefix_(prefix_term(p)), upper_(p.upper_width()) {}

  Eigen::Index size() const { return c_.size(); }
  int inequality_count() const { return static_cast<int>(c_.size()) + 2; }

  double compliance(const Eigen::VectorXd& u) const {
    return p_.params.alpha * (prefix_ + (c_.array() / (u.array() + p_.params.gamma)).sum());
  }

  Slacks slacks(const Eigen::VectorXd& u) const {
    const Eigen::Index m = size();
    Slacks s;
    s.linear.resize(m + 1);
    s.linear(0) = upper_ - u(0);
    for (Eigen::Index j = 0; j + 1 < m; ++j) s.linear(j + 1) = u(j) - u(j + 1);
    s.linear(m) = u(m - 1) - p_.u_min;
    s.strictly_feasible = (s.linear.array() > 0.0).all();
    if (s.strictly_feasible) {
      s.compliance = p_.target_compliance - compliance(u);
      s.strictly_feasible = s.compliance > 0.0;
    }
    return s;
  }

  // t * cost(u) - sum log(slacks); +inf outside the strict interior.
  double merit(const Eigen::VectorXd& u, double t) const {
    const Slacks s = slacks(u);
    if (!s.strictly_feasible) return std::numeric_limits<double>::infinity();
    return t * cost(p_, u).value - s.linear.array().log().sum() - std::log(s.compliance);
  }

  // Newton direction for the centering problem at parameter t; returns the
  // squared Newton decrement through `decrement2`.
  Eigen::VectorXd newton_direction(const Eigen::VectorXd& u, double t, double& decrement2,
                                   Eigen::VectorXd& gradient) const {
    const Eigen::Index m = size();
    const CostEvaluation ce = cost(p_, u);
    const Slacks s = slacks(u);

    gradient = t * ce.gradient;
    Eigen::VectorXd diag = t * ce.hessian_diagonal;
    Eigen::VectorXd off = t * ce.hessian_offdiagonal;

    // Linear constraints: -log(a^T u + b) has gradient -a/g and Hessian a a^T / g^2.
    const Eigen::ArrayXd inv = s.linear.array().inverse();
    const Eigen::ArrayXd inv2 = inv.square();
    gradient(0) += inv(0);
    diag(0) += inv2(0);
    for (Eigen::Index j = 0; j + 1 < m; ++j) {
      const Eigen::Index q = j + 1;
      gradient(j) -= inv(q);
      gradient(j + 1) += inv(q);
      diag(j) += inv2(q);
      diag(j + 1) += inv2(q);
      off(j) -= inv2(q);
    }
    gradient(m - 1) -= inv(m);
    diag(m - 1) += inv2(m);

    // Compliance constraint: -log(C* - f) has gradient grad f / g and Hessian
    // hess f / g + grad f grad f^T / g^2, with hess f diagonal.
    const Eigen::ArrayXd d = u.array() + p_.params.gamma;
    const Eigen::ArrayXd df = -p_.params.alpha * c_.array() / d.square();
    const Eigen::ArrayXd d2f = 2.0 * p_.params.alpha * c_.array() / d.cube();
    const double gc = s.compliance;
    gradient += (df / gc).matrix();
    diag += (d2f / gc).matrix();
    const Eigen::VectorXd v = (df / gc).matrix();

    // (T + v v^T) x = -g via Sherman-Morrison.
    Eigen::VectorXd tg = -gradient;
    solve_tridiagonal(diag, off, tg);
    Eigen::VectorXd tv = v;
    solve_tridiagonal(diag, off, tv);
    const Eigen::VectorXd step = tg - tv * (v.dot(tg) / (1.0 + v.dot(tv)));
    decrement2 = -gradient.dot(step);
    return step;
  }

 private:
  const PlanProblem& p_;
  Eigen::VectorXd c_;
  double prefix_;
  double upper_;
};

Plan make_plan(const PlanProblem& p, const Eigen::VectorXd& u) {
  Plan plan;
  plan.widths = u;
  plan.achieved_cost = cost(p, u).value;
  plan.predicted_final_compliance = predicted_final_compliance(p, u);
  plan.stats.compliance_slack = p.target_compliance - plan.predicted_final_compliance;
  double slack = p.upper_width() - u(0);
  for (Eigen::Index j = 0; j + 1 < u.size(); ++j) slack = std::min(slack, u(j) - u(j + 1));
  slack = std::min(slack, u(u.size() - 1) - p.u_min);
  plan.stats.min_monotone_slack = slack;
  return plan;
}

}  // namespace

CostEvaluation cost(const PlanProblem& p, const Eigen::VectorXd& u) {
  const Eigen::Index m = p.horizon();
  if (u.size() != m) throw DomainError("cost: plan length must equal N - n + 1");
  const Eigen::VectorXd c = tail_coefficients(p);
  const double gamma = p.params.gamma;
  if (((u.array() + gamma) <= 0.0).any()) throw SingularWidthError("cost: u + gamma must be positive");

  CostEvaluation ce;
  ce.gradient = Eigen::VectorXd::Zero(m);
  ce.hessian_diagonal = Eigen::VectorXd::Zero(m);
  ce.hessian_offdiagonal = Eigen::VectorXd::Zero(m > 1 ? m - 1 : 0);
  const PlanWeights& w = p.weights;

  ce.material = u.sum();
  ce.gradient.array() += w.material;

  // Differences (u_n - u_{n-1}), (u_{k+1} - u_k), and the terminal (u_N - u_min).
  double l2 = 0.0;
  double prev = p.prev_width;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double diff = u(j) - prev;
    l2 += diff * diff;
    ce.gradient(j) += 2.0 * w.smooth * diff;
    if (j > 0) ce.gradient(j - 1) -= 2.0 * w.smooth * diff;
    prev = u(j);
  }
  const double tail = u(m - 1) - p.u_min;
  l2 += tail * tail;
  ce.gradient(m - 1) += 2.0 * w.smooth * tail;
  ce.smooth = l2;
  ce.hessian_diagonal.array() += 4.0 * w.smooth;
  ce.hessian_offdiagonal.array() -= 2.0 * w.smooth;

  const double scale = p.params.alpha * p.params.alpha * p.params.sigma_p * p.params.sigma_p;
  double l3 = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double d = u(j) + gamma;
    const double c2 = c(j) * c(j);
    const double d2 = d * d;
    l3 += c2 / (d2 * d2);
    ce.gradient(j) += w.variance * scale * (-4.0 * c2 / (d2 * d2 * d));
    ce.hessian_diagonal(j) += w.variance * scale * (20.0 * c2 / (d2 * d2 * d2));
  }
  ce.variance = scale * l3;

  ce.value = w.material * ce.material + w.smooth * ce.smooth + w.variance * ce.variance;
  return ce;
}

double predicted_final_compliance(const PlanProblem& p, const Eigen::VectorXd& u) {
  return final_compliance_split(p.prefix_mean, u, p.params, p.horizon_end);
}

FeasibilityReport check_feasibility(const PlanProblem& p) {
  p.validate();
  FeasibilityReport report;
  const double upper = p.upper_width();
  if (upper < p.u_min) {
    report.reason = "previous width is below u_min; no nonincreasing plan exists";
    report.stiffest_compliance = std::numeric_limits<double>::infinity();
    report.margin = -std::numeric_limits<double>::infinity();
    return report;
  }
  const Eigen::VectorXd stiffest = Eigen::VectorXd::Constant(p.horizon(), upper);
  report.stiffest_compliance = predicted_final_compliance(p, stiffest);
  report.margin = p.target_compliance - report.stiffest_compliance;
  report.feasible = report.margin >= 0.0;
  if (!report.feasible) report.reason = "target compliance is below the stiffest reachable compliance";
  return report;
}

Eigen::VectorXd feasible_start(const PlanProblem& p) {
  const FeasibilityReport report = check_feasibility(p);
  if (!report.feasible) throw InfeasibleError("planner: " + report.reason, report.margin);

  const Eigen::Index m = p.horizon();
  const double upper = p.upper_width();
  const double span = upper - p.u_min;
  const double delta = std::min(1e-3 * (p.u_max - p.u_min), span / 4.0);
  Eigen::VectorXd linear(m);
  if (m == 1) {
    linear(0) = 0.5 * (upper + p.u_min);
  } else {
    linear = Eigen::VectorXd::LinSpaced(m, upper - delta, p.u_min + delta);
  }
  if (predicted_final_compliance(p, linear) < p.target_compliance) return linear;

  // Blend toward a near-stiffest strictly decreasing plan.
  const double eps = 1e-6 * span;
  Eigen::VectorXd stiff(m);
  for (Eigen::Index j = 0; j < m; ++j)
    stiff(j) = upper - eps * static_cast<double>(j + 1) / static_cast<double>(m + 1);
  const double stiff_compliance = predicted_final_compliance(p, stiff);
  if (!(stiff_compliance < p.target_compliance))
    throw InfeasibleError("planner: feasible set has no strict interior", report.margin);

  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Eigen::VectorXd blend = (1.0 - mid) * linear + mid * stiff;
    if (predicted_final_compliance(p, blend) < p.target_compliance)
      hi = mid;
    else
      lo = mid;
  }
  // Step past the boundary so the compliance constraint has real slack.
  const double lambda = hi + 0.5 * (1.0 - hi);
  return (1.0 - lambda) * linear + lambda * stiff;
}

PlanWeights normalized_weights(const PlanProblem& p) {
  PlanProblem unit = p;
  unit.weights = PlanWeights{};
  const CostEvaluation ce = cost(unit, feasible_start(p));
  auto scaled = [](double raw, double term) { return term > 0.0 ? raw / term : raw; };
  return {scaled(p.weights.material, ce.material), scaled(p.weights.smooth, ce.smooth),
          scaled(p.weights.variance, ce.variance)};
}

Plan solve(const PlanProblem& p, const SolverOptions& options) {
  p.validate();
  const FeasibilityReport report = check_feasibility(p);
  if (!report.feasible) throw InfeasibleError("planner: " + report.reason, report.margin);

  const double upper = p.upper_width();
  const double span = upper - p.u_min;
  // Degenerate feasible sets: a single point, or the constraint binds at the stiffest plan.
  if (span <= 1e-12 * std::max(1.0, std::abs(upper)) || report.margin <= 1e-12 * p.target_compliance) {
    Plan plan = make_plan(p, Eigen::VectorXd::Constant(p.horizon(), upper));
    return plan;
  }

  const BarrierProblem barrier(p);
  const int inequalities = barrier.inequality_count();
  Eigen::VectorXd u = feasible_start(p);
  double t = options.t_initial;
  SolverStats stats;

  for (;;) {
    ++stats.outer_iterations;
    // Centering: damped Newton on t * cost - sum log(slack).
    for (int inner = 0;; ++inner) {
      if (inner >= options.max_newton_per_centering || stats.newton_iterations >= options.max_newton_total) {
        Plan best = make_plan(p, u);
        best.stats.outer_iterations = stats.outer_iterations;
        best.stats.newton_iterations = stats.newton_iterations;
        best.stats.barrier_t = t;
        best.stats.duality_gap = inequalities / t;
        throw MaxIterationsError("planner: Newton iteration limit reached", std::move(best));
      }
      double decrement2 = 0.0;
      Eigen::VectorXd gradient;
      const Eigen::VectorXd step = barrier.newton_direction(u, t, decrement2, gradient);
      if (!(decrement2 >= 0.0) || !std::isfinite(decrement2))
        throw NumericalError("planner: invalid Newton decrement");
      if (0.5 * decrement2 <= options.newton_tolerance) break;
      ++stats.newton_iterations;

      const double merit0 = barrier.merit(u, t);
      const double slope = gradient.dot(step);
      double s = 1.0;
      bool accepted = false;
      double merit1 = merit0;
      while (s > 1e-16) {
        const Eigen::VectorXd trial = u + s * step;
        merit1 = barrier.merit(trial, t);
        if (merit1 <= merit0 + options.armijo * s * slope) {
          u = trial;
          accepted = true;
          break;
        }
        s *= options.backtrack;
      }
      // No representable decrease left: the merit function is flat to rounding.
      if (!accepted) break;
      const double moved = s * step.cwiseAbs().maxCoeff();
      if (moved <= 1e-13 * (1.0 + u.cwiseAbs().maxCoeff()) &&
          merit0 - merit1 <= 1e-13 * (1.0 + std::abs(merit0)))
        break;
    }
    if (inequalities / t < options.gap_tolerance) break;
    t *= options.t_factor;
  }

  Plan plan = make_plan(p, u);
  stats.barrier_t = t;
  stats.duality_gap = inequalities / t;
  stats.compliance_slack = plan.stats.compliance_slack;
  stats.min_monotone_slack = plan.stats.min_monotone_slack;
  plan.stats = stats;
  return plan;
}

double grid_resolution_bound(const PlanProblem& p, int grid_points) {
  if (grid_points < 2) throw DomainError("grid_resolution_bound: need at least two grid points");
  const double m = p.horizon();
  const double step = (p.upper_width() - p.u_min) / (grid_points - 1);
  const double range = std::max(p.prev_width, p.u_max) - p.u_min;
  // Rounding up raises L1 by at most m*step, moves each of the m+1 squared
  // differences by at most 2*range*step + step^2, and can only lower L3.
  return p.weights.material * m * step + p.weights.smooth * (m + 1.0) * (2.0 * range * step + step * step);
}

Plan brute_force_solve(const PlanProblem& p, int grid_points) {
  p.validate();
  const int m = p.horizon();
  if (m > 5) throw DomainError("brute_force_solve: horizon too large for enumeration");
  if (grid_points < 2) throw DomainError("brute_force_solve: need at least two grid points");
  const double upper = p.upper_width();
  if (upper < p.u_min) throw InfeasibleError("brute_force_solve: previous width is below u_min");

  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(grid_points, p.u_min, upper);
  const Eigen::VectorXd c = tail_coefficients(p);
  const double alpha = p.params.alpha;
  const double var_scale = alpha * alpha * p.params.sigma_p * p.params.sigma_p;
  const double budget = p.target_compliance / alpha - prefix_term(p);

  // Per-position tables: flexibility term and weighted variance term.
  std::vector<double> flex(static_cast<size_t>(m * grid_points));
  std::vector<double> var(static_cast<size_t>(m * grid_points));
  for (int j = 0; j < m; ++j) {
    for (int g = 0; g < grid_points; ++g) {
      const double d = grid(g) + p.params.gamma;
      flex[static_cast<size_t>(j * grid_points + g)] = c(j) / d;
      var[static_cast<size_t>(j * grid_points + g)] = p.weights.variance * var_scale * c(j) * c(j) / (d * d * d * d);
    }
  }

  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<size_t>(m));
  std::vector<int> best_idx;

  // Depth-first enumeration of nonincreasing index sequences.
  auto recurse = [&](auto&& self, int j, int max_index, double flex_sum, double partial_cost, double prev) -> void {
    for (int g = max_index; g >= 0; --g) {
      const double v = grid(g);
      const double diff = v - prev;
      const double f = flex_sum + flex[static_cast<size_t>(j * grid_points + g)];
      const double pc = partial_cost + p.weights.material * v + p.weights.smooth * diff * diff +
                        var[static_cast<size_t>(j * grid_points + g)];
      idx[static_cast<size_t>(j)] = g;
      if (j + 1 == m) {
        if (f > budget * (1.0 + 1e-12)) continue;
        const double tail = v - p.u_min;
        const double total = pc + p.weights.smooth * tail * tail;
        if (total < best_cost) {
          best_cost = total;
          best_idx = idx;
        }
      } else {
        self(self, j + 1, g, f, pc, v);
      }
    }
  };
  recurse(recurse, 0, grid_points - 1, 0.0, 0.0, p.prev_width);

  if (best_idx.empty()) {
    const FeasibilityReport report = check_feasibility(p);
    throw InfeasibleError("brute_force_solve: no grid plan meets the target compliance", report.margin);
  }
  Eigen::VectorXd u(m);
  for (int j = 0; j < m; ++j) u(j) = grid(best_idx[static_cast<size_t>(j)]);
  return make_plan(p, u);
}

}  // namespace stiffprint
