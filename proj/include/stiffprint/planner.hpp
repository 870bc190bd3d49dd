#pragma once

// Finite-horizon width planner. At stage n it chooses all remaining widths
// u_n..u_N by solving the convex program
//
//   minimize    w1 L1 + w2 L2 + w3 L3
//   subject to  min(u_prev, u_max) >= u_n >= u_{n+1} >= ... >= u_N >= u_min
//               alpha (sum_{k<n} c_{N,k} mu_k + sum_{k>=n} c_{N,k}/(u_k+gamma)) <= C*
//
// with L1 the material used, L2 a smoothness penalty anchored at the previous
// width and pulled toward u_min at the tip, and L3 the first-order variance of
// the final compliance. Solved with a primal log-barrier method whose Newton
// systems are tridiagonal plus one rank-one term.

#include <Eigen/Dense>

#include <string>

#include "stiffprint/beam.hpp"
#include "stiffprint/errors.hpp"

namespace stiffprint {

struct PlanWeights {
  double material = 1.0;
  double smooth = 1.0;
  double variance = 1.0;

  void validate() const {
    if (!(material > 0.0) || !(smooth > 0.0) || !(variance > 0.0))
      throw ConfigError("weights: all plan weights must be strictly positive");
  }
};

struct PlanProblem {
  int stage = 1;                   // n, first layer being planned
  int horizon_end = 1;             // N
  Eigen::VectorXd prefix_mean;     // mu_1..mu_{n-1}
  double prev_width = 0.0;         // u_{n-1}, the last applied width [mm]
  ModelParams params;              // believed parameters
  double u_min = 5.0;
  double u_max = 20.0;
  double target_compliance = 0.12;  // C* [mm/g]
  PlanWeights weights;

  int horizon() const { return horizon_end - stage + 1; }
  /// Largest admissible width for u_n.
  double upper_width() const { return prev_width < u_max ? prev_width : u_max; }
  void validate() const;
};

struct SolverOptions {
  double t_initial = 1.0;
  double t_factor = 10.0;
  double gap_tolerance = 1e-8;   // stop once (#inequalities) / t falls below this
  double armijo = 0.01;
  double backtrack = 0.5;
  double newton_tolerance = 1e-10;  // half squared Newton decrement
  int max_newton_per_centering = 200;
  int max_newton_total = 5000;
};

struct SolverStats {
  int outer_iterations = 0;
  int newton_iterations = 0;
  double barrier_t = 0.0;
  double duality_gap = 0.0;        // certified bound on cost suboptimality
  double compliance_slack = 0.0;   // C* - predicted final compliance
  double min_monotone_slack = 0.0;
};

struct Plan {
  Eigen::VectorXd widths;  // u_n..u_N
  double achieved_cost = 0.0;
  double predicted_final_compliance = 0.0;
  SolverStats stats;
};

/// Raised when the solver exhausts its iteration budget; carries the best iterate.
class MaxIterationsError : public NumericalError {
 public:
  MaxIterationsError(const std::string& what, Plan best) : NumericalError(what), best_(std::move(best)) {}
  const Plan& best() const { return best_; }

 private:
  Plan best_;
};

/// Cost value with exact gradient and tridiagonal Hessian.
struct CostEvaluation {
  double value = 0.0;
  double material = 0.0;  // L1
  double smooth = 0.0;    // L2
  double variance = 0.0;  // L3
  Eigen::VectorXd gradient;
  Eigen::VectorXd hessian_diagonal;
  Eigen::VectorXd hessian_offdiagonal;  // (i, i+1) entries
};

CostEvaluation cost(const PlanProblem& problem, const Eigen::VectorXd& u);

/// Predicted final compliance of plan `u` under `problem`'s prefix estimate.
double predicted_final_compliance(const PlanProblem& problem, const Eigen::VectorXd& u);

struct FeasibilityReport {
  bool feasible = false;
  double stiffest_compliance = 0.0;  // predicted compliance with every width at upper_width()
  double margin = 0.0;               // C* - stiffest_compliance (negative when infeasible)
  std::string reason;
};

FeasibilityReport check_feasibility(const PlanProblem& problem);

/// Strictly feasible starting plan for the barrier method.
Eigen::VectorXd feasible_start(const PlanProblem& problem);

/// Divides each raw weight by the value of its term at feasible_start(), so the
/// three terms start at comparable magnitude. Terms that vanish keep their raw weight.
PlanWeights normalized_weights(const PlanProblem& problem);

Plan solve(const PlanProblem& problem, const SolverOptions& options = {});

/// Exhaustive search over nonincreasing plans on a uniform grid of
/// `grid_points` widths spanning [u_min, upper_width()]. Horizon <= 5.
Plan brute_force_solve(const PlanProblem& problem, int grid_points);

/// Bound on how far the best grid plan's cost can exceed the continuous optimum
/// (rounding the optimum up to the grid keeps it feasible).
double grid_resolution_bound(const PlanProblem& problem, int grid_points);

}  // namespace stiffprint
