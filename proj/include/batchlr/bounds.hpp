#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "batchlr/schedules.hpp"

namespace batchlr {

/// Problem-side constants entering the bias/variance inequalities.
struct ProblemConstants {
  double L_bar = 0.0;
  double f0_gap = 0.0;  // f(theta0) - lower bound of the mean of per-sample minima
  double sigma2 = 0.0;
  std::optional<double> theta0_dist2;  // ||theta0 - theta*||^2, convex problems only
  double eta_max = 0.0;
};

/// min/max of K_m and E_m. Computed from a plan, or supplied for an enclosing
/// horizon of plans (any extrema that enclose the plan's keep the bounds valid).
struct Extrema {
  std::size_t k_min = 0;
  std::size_t k_max = 0;
  int e_min = 0;
  int e_max = 0;
};

Extrema plan_extrema(const BlockStructure& s);
/// Smallest enclosing box of two extrema.
Extrema merge(const Extrema& a, const Extrema& b);

struct ExactSums {
  double sum_eta = 0.0;
  double sum_eta2_over_b = 0.0;
  double B = 0.0;  // 1 / sum eta
  double V = 0.0;  // (sum eta^2 / b) / (sum eta)
};

/// One compensated pass over the plan; throws DegeneratePlanError when sum eta == 0.
ExactSums exact_sums(const SchedulerPlan& plan);
double exact_B(const SchedulerPlan& plan);
double exact_V(const SchedulerPlan& plan);

/// Closed-form upper bounds on B_T and V_T for the plan's regime.
/// `horizon` replaces the plan-local K/E extrema when given.
double bound_B(const SchedulerPlan& plan, const std::optional<Extrema>& horizon = std::nullopt);
double bound_V(const SchedulerPlan& plan, const std::optional<Extrema>& horizon = std::nullopt);

/// Nonconvex bound on min_t E||grad f(theta_t)||^2.
double nonconvex_rhs(const ProblemConstants& c, double B, double V);
/// Convex bound on min_t E[f(theta_t) - f*]; needs theta0_dist2.
double convex_rhs(const ProblemConstants& c, double B, double V);

/// Factor multiplying L sigma^2 / ((2 - L eta) b) in the large-T limit of the
/// constant-batch bound: eta, 3 eta / 4 or (p + 1) eta / (2p + 1).
double limsup_factor(LrFamily family, double eta, double p);
double limsup_asymptote(LrFamily family, double eta, double p, const ProblemConstants& c,
                        double b);

struct BoundReport {
  CaseTag case_tag = CaseTag::CaseI;
  std::size_t total_steps = 0;
  double B_exact = 0.0;
  double V_exact = 0.0;
  std::optional<double> B_bound;
  std::optional<double> V_bound;
  double nonconvex_rhs_exact = 0.0;
  std::optional<double> nonconvex_rhs_bound;
  std::optional<double> convex_rhs_exact;
  std::optional<double> convex_rhs_bound;
  std::optional<double> limsup_asymptote;
  /// Why the closed forms are missing, when they are.
  std::string bound_note;

  bool dominated_B() const;
  bool dominated_V() const;
  bool dominated_rhs() const;
  /// True when every available closed form dominates its exact counterpart.
  bool all_dominated() const;
};

/// Relative rounding allowance used by the domination flags.
inline constexpr double kDominationRelTol = 1e-12;

BoundReport bound_report(const SchedulerPlan& plan, const ProblemConstants& c,
                         const std::optional<Extrema>& horizon = std::nullopt);

}  // namespace batchlr
