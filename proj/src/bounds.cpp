#include "batchlr/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "batchlr/errors.hpp"
#include "batchlr/summation.hpp"

namespace batchlr {

namespace {

bool leq_rel(double lhs, double rhs) {
  return lhs <= rhs + kDominationRelTol * std::fabs(rhs);
}

struct DecayShape {
  double eta_max;
  double eta_min;
  double p;
};

// Case I/II bias rows: lower bounds on sum eta over T steps, inverted.
double decay_B(LrFamily family, const DecayShape& d, double T) {
  switch (family) {
    case LrFamily::Constant:
      return 1.0 / (d.eta_max * T);
    case LrFamily::Diminishing:
      return 1.0 / (2.0 * d.eta_max * (std::sqrt(T + 1.0) - 1.0));
    case LrFamily::Cosine:
      return 2.0 / ((d.eta_min + d.eta_max) * T);
    case LrFamily::PolynomialDecay:
      return (d.p + 1.0) / ((d.p * d.eta_min + d.eta_max) * T);
    default:
      throw UnsupportedScheduleError("no bias bound for this decaying family");
  }
}

// Case II variance rows with C = sum_m K_m E_m / b_m bounded above.
double growth_batch_V(LrFamily family, const DecayShape& d, double T, double C) {
  const double eta = d.eta_max;
  switch (family) {
    case LrFamily::Constant:
      return eta * C / T;
    case LrFamily::Diminishing:
      return eta * C / (2.0 * (std::sqrt(T + 1.0) - 1.0));
    case LrFamily::Cosine:
      return 2.0 * eta * eta * C / ((d.eta_min + d.eta_max) * T);
    case LrFamily::PolynomialDecay:
      return (d.p + 1.0) * eta * eta * C / ((d.eta_max + d.p * d.eta_min) * T);
    default:
      throw UnsupportedScheduleError("no variance bound for this decaying family");
  }
}

double constant_batch_V(LrFamily family, const DecayShape& d, double b, double T, double E) {
  const double lo = d.eta_min;
  const double hi = d.eta_max;
  switch (family) {
    case LrFamily::Constant:
      return hi / b;
    case LrFamily::Diminishing:
      return hi * (1.0 + std::log(T)) / (2.0 * b * (std::sqrt(T + 1.0) - 1.0));
    case LrFamily::Cosine:
      return (3.0 * lo * lo + 2.0 * lo * hi + 3.0 * hi * hi) / (4.0 * (lo + hi) * b) +
             (hi - lo) / (b * E);
    case LrFamily::PolynomialDecay: {
      const double p = d.p;
      const double den = p * lo + hi;
      return (2.0 * p * p * lo * lo + 2.0 * p * lo * hi + (p + 1.0) * hi * hi) /
                 ((2.0 * p + 1.0) * den * b) +
             (p + 1.0) * (hi * hi - lo * lo) / (den * b * T);
    }
    default:
      throw UnsupportedScheduleError("no variance bound for this decaying family");
  }
}

void require_uncapped(const SchedulerPlan& plan) {
  if (plan.structure.empty()) throw StateError("block structure has not been built");
  if (plan.structure.capped) {
    throw ConstraintError("batch sizes were capped at n; closed forms assume uncapped growth");
  }
}

Extrema effective_extrema(const SchedulerPlan& plan, const std::optional<Extrema>& horizon) {
  const Extrema local = plan_extrema(plan.structure);
  return horizon ? merge(local, *horizon) : local;
}

// Upper bound on sum_m K_m E_m / b_m for a growing batch schedule.
double batch_series_bound(const SchedulerPlan& plan, const Extrema& x) {
  const BsSchedule& bs = plan.bs;
  const double ke_max = static_cast<double>(x.k_max) * x.e_max;
  if (bs.family == BsFamily::ExponentialGrowth) {
    return bs.delta * ke_max / ((bs.delta - 1.0) * bs.b0);
  }
  if (bs.c < 2.0) {
    throw ConstraintError("polynomial batch bound is only implemented for exponent c >= 2");
  }
  const double u = std::min(bs.a, bs.b0);
  return 3.0 * ke_max / std::pow(u, bs.c);
}

DecayShape shape_of(const LrSchedule& lr) { return {lr.eta_max, lr.eta_min, lr.p}; }

double gamma_hat(const SchedulerPlan& plan) {
  const double g = plan.lr.gamma * plan.lr.gamma / plan.bs.delta;
  if (g >= 1.0) {
    throw ConstraintError("gamma^2 / delta = " + std::to_string(g) + " must be below 1");
  }
  return g;
}

int warmup_blocks(const SchedulerPlan& plan) {
  const int mw = plan.lr.warmup_increases;
  if (mw >= plan.structure.increases) {
    throw ConstraintError("warm-up must end before the last block");
  }
  return mw;
}

void check_case_iii_pair(const SchedulerPlan& plan) {
  const bool exp_pair = plan.lr.family == LrFamily::ExponentialGrowth &&
                        plan.bs.family == BsFamily::ExponentialGrowth;
  const bool poly_pair = plan.lr.family == LrFamily::PolynomialGrowth &&
                         plan.bs.family == BsFamily::PolynomialGrowth;
  if (!exp_pair && !poly_pair) {
    throw UnsupportedScheduleError(
        "joint growth bounds need both schedules exponential or both polynomial");
  }
}

void check_case_iv_pair(const SchedulerPlan& plan) {
  if (plan.bs.family != BsFamily::ExponentialGrowth) {
    throw UnsupportedScheduleError("warm-up bounds need an exponentially growing batch size");
  }
}

double warmup_decay_steps(const SchedulerPlan& plan, int mw) {
  const BlockStructure& s = plan.structure;
  return static_cast<double>(s.total_steps - s.block_ends[static_cast<std::size_t>(mw)]);
}

double require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string(what) + " is not finite");
  return x;
}

}  // namespace

Extrema plan_extrema(const BlockStructure& s) {
  if (s.empty()) throw StateError("block structure has not been built");
  Extrema x;
  x.k_min = *std::min_element(s.steps_per_epoch.begin(), s.steps_per_epoch.end());
  x.k_max = *std::max_element(s.steps_per_epoch.begin(), s.steps_per_epoch.end());
  x.e_min = *std::min_element(s.epochs_per_block.begin(), s.epochs_per_block.end());
  x.e_max = *std::max_element(s.epochs_per_block.begin(), s.epochs_per_block.end());
  return x;
}

Extrema merge(const Extrema& a, const Extrema& b) {
  return {std::min(a.k_min, b.k_min), std::max(a.k_max, b.k_max), std::min(a.e_min, b.e_min),
          std::max(a.e_max, b.e_max)};
}

ExactSums exact_sums(const SchedulerPlan& plan) {
  if (plan.structure.empty()) throw StateError("block structure has not been built");
  CompensatedSum eta_sum;
  CompensatedSum noise_sum;
  for (std::size_t t = 0; t < plan.structure.total_steps; ++t) {
    const double eta = lr_at(plan, t);
    eta_sum += eta;
    noise_sum += eta * eta / static_cast<double>(bs_at(plan, t));
  }
  ExactSums out;
  out.sum_eta = eta_sum.value();
  out.sum_eta2_over_b = noise_sum.value();
  if (out.sum_eta == 0.0) throw DegeneratePlanError("learning rates sum to zero");
  out.B = 1.0 / out.sum_eta;
  out.V = out.sum_eta2_over_b / out.sum_eta;
  return out;
}

double exact_B(const SchedulerPlan& plan) { return exact_sums(plan).B; }
double exact_V(const SchedulerPlan& plan) { return exact_sums(plan).V; }

double bound_B(const SchedulerPlan& plan, const std::optional<Extrema>& horizon) {
  require_uncapped(plan);
  const double T = static_cast<double>(plan.structure.total_steps);
  const LrSchedule& lr = plan.lr;
  switch (plan.case_tag) {
    case CaseTag::CaseI:
    case CaseTag::CaseII:
      return require_finite(decay_B(lr.family, shape_of(lr), T), "bias bound");
    case CaseTag::CaseIII: {
      check_case_iii_pair(plan);
      const Extrema x = effective_extrema(plan, horizon);
      const double ke_min = static_cast<double>(x.k_min) * x.e_min;
      const double M = plan.structure.increases;
      if (lr.family == LrFamily::ExponentialGrowth) {
        return plan.bs.delta / (lr.eta0 * ke_min * std::pow(lr.gamma, M));
      }
      if (M < 1) throw ConstraintError("polynomial growth bounds need at least one increase");
      const double lo = std::min(lr.a2, lr.eta0);
      return (1.0 + lr.c2) / (std::pow(lo, lr.c2) * ke_min * std::pow(M, 1.0 + lr.c2));
    }
    case CaseTag::CaseIV: {
      check_case_iv_pair(plan);
      const int mw = warmup_blocks(plan);
      const Extrema x = effective_extrema(plan, horizon);
      const double ke_min = static_cast<double>(x.k_min) * x.e_min;
      const double warm = plan.bs.delta / (lr.eta0 * ke_min * std::pow(lr.gamma, mw));
      const double rest = warmup_decay_steps(plan, mw);
      const double peak = lr.warmup_peak();
      const double decay = lr.family == LrFamily::WarmupConstant
                               ? 1.0 / (peak * rest)
                               : 2.0 / ((lr.eta_min + peak) * rest);
      return warm + decay;
    }
    case CaseTag::Control:
      break;
  }
  throw UnsupportedScheduleError("decaying batch sizes have no convergence bound");
}

double bound_V(const SchedulerPlan& plan, const std::optional<Extrema>& horizon) {
  require_uncapped(plan);
  const BlockStructure& s = plan.structure;
  const double T = static_cast<double>(s.total_steps);
  const LrSchedule& lr = plan.lr;
  switch (plan.case_tag) {
    case CaseTag::CaseI:
      return require_finite(constant_batch_V(lr.family, shape_of(lr), plan.bs.b0, T,
                                             s.total_epochs()),
                            "variance bound");
    case CaseTag::CaseII: {
      const double C = batch_series_bound(plan, effective_extrema(plan, horizon));
      return require_finite(growth_batch_V(lr.family, shape_of(lr), T, C), "variance bound");
    }
    case CaseTag::CaseIII: {
      check_case_iii_pair(plan);
      const Extrema x = effective_extrema(plan, horizon);
      const double ke_min = static_cast<double>(x.k_min) * x.e_min;
      const double ke_max = static_cast<double>(x.k_max) * x.e_max;
      const double M = s.increases;
      if (lr.family == LrFamily::ExponentialGrowth) {
        const double g = gamma_hat(plan);
        return ke_max * lr.eta0 * plan.bs.delta /
               (ke_min * plan.bs.b0 * (1.0 - g) * std::pow(lr.gamma, M));
      }
      if (plan.bs.c - 2.0 * lr.c2 < 2.0) {
        throw ConstraintError("joint polynomial variance bound needs c1 - 2 c2 >= 2");
      }
      if (M < 1) throw ConstraintError("polynomial growth bounds need at least one increase");
      const double lo = std::min(lr.a2, lr.eta0);
      const double hi = std::max(lr.a2, lr.eta0);
      const double b_lo = std::min(plan.bs.a, plan.bs.b0);
      return 2.0 * ke_max * (1.0 + lr.c2) * std::pow(hi, 2.0 * lr.c2) /
             (ke_min * std::pow(lo, lr.c2) * std::pow(b_lo, plan.bs.c) *
              std::pow(M, 1.0 + lr.c2));
    }
    case CaseTag::CaseIV: {
      check_case_iv_pair(plan);
      const int mw = warmup_blocks(plan);
      const double g = gamma_hat(plan);
      const Extrema x = effective_extrema(plan, horizon);
      const double ke_min = static_cast<double>(x.k_min) * x.e_min;
      const double ke_max = static_cast<double>(x.k_max) * x.e_max;
      const double delta = plan.bs.delta;
      const double b0 = plan.bs.b0;
      const double warm =
          ke_max * lr.eta0 * delta / (ke_min * b0 * (1.0 - g) * std::pow(lr.gamma, mw));
      const double rest = warmup_decay_steps(plan, mw);
      const double peak = lr.warmup_peak();
      const double decay =
          lr.family == LrFamily::WarmupConstant
              ? delta * peak * ke_max / ((delta - 1.0) * b0 * rest)
              : 2.0 * delta * peak * peak * ke_max /
                    ((delta - 1.0) * (lr.eta_min + peak) * b0 * rest);
      return warm + decay;
    }
    case CaseTag::Control:
      break;
  }
  throw UnsupportedScheduleError("decaying batch sizes have no convergence bound");
}

namespace {

double stability_margin(const ProblemConstants& c) {
  const double margin = 2.0 - c.L_bar * c.eta_max;
  if (!(margin > 0.0)) {
    throw ConstraintError("L_bar * eta_max = " + std::to_string(c.L_bar * c.eta_max) +
                          " must be below 2");
  }
  return margin;
}

}  // namespace

double nonconvex_rhs(const ProblemConstants& c, double B, double V) {
  const double margin = stability_margin(c);
  return 2.0 * c.f0_gap / margin * B + c.L_bar * c.sigma2 / margin * V;
}

double convex_rhs(const ProblemConstants& c, double B, double V) {
  const double margin = stability_margin(c);
  if (!c.theta0_dist2) throw ArgumentError("convex bound needs ||theta0 - theta*||^2");
  const double bias = *c.theta0_dist2 / 2.0 + c.eta_max * c.f0_gap / margin;
  const double noise = c.sigma2 / 2.0 * (1.0 + c.L_bar * c.eta_max / margin);
  return bias * B + noise * V;
}

double limsup_factor(LrFamily family, double eta, double p) {
  switch (family) {
    case LrFamily::Constant:
      return eta;
    case LrFamily::Cosine:
      return 0.75 * eta;
    case LrFamily::PolynomialDecay:
      if (!(p > 0.0)) throw ArgumentError("polynomial exponent p must be positive");
      return (p + 1.0) * eta / (2.0 * p + 1.0);
    default:
      throw UnsupportedScheduleError("no large-T limit for learning-rate family '" +
                                     std::string(to_string(family)) + "'");
  }
}

double limsup_asymptote(LrFamily family, double eta, double p, const ProblemConstants& c,
                        double b) {
  ProblemConstants at_eta = c;
  at_eta.eta_max = eta;
  const double margin = stability_margin(at_eta);
  if (!(b >= 1.0)) throw ArgumentError("batch size must be at least 1");
  return c.L_bar * c.sigma2 / (margin * b) * limsup_factor(family, eta, p);
}

bool BoundReport::dominated_B() const { return !B_bound || leq_rel(B_exact, *B_bound); }
bool BoundReport::dominated_V() const { return !V_bound || leq_rel(V_exact, *V_bound); }
bool BoundReport::dominated_rhs() const {
  bool ok = !nonconvex_rhs_bound || leq_rel(nonconvex_rhs_exact, *nonconvex_rhs_bound);
  if (convex_rhs_exact && convex_rhs_bound) ok = ok && leq_rel(*convex_rhs_exact, *convex_rhs_bound);
  return ok;
}
bool BoundReport::all_dominated() const { return dominated_B() && dominated_V() && dominated_rhs(); }

BoundReport bound_report(const SchedulerPlan& plan, const ProblemConstants& c,
                         const std::optional<Extrema>& horizon) {
  BoundReport r;
  r.case_tag = plan.case_tag;
  r.total_steps = plan.structure.total_steps;
  const ExactSums sums = exact_sums(plan);
  r.B_exact = sums.B;
  r.V_exact = sums.V;
  r.nonconvex_rhs_exact = nonconvex_rhs(c, sums.B, sums.V);
  if (c.theta0_dist2) r.convex_rhs_exact = convex_rhs(c, sums.B, sums.V);
  try {
    r.B_bound = bound_B(plan, horizon);
    r.V_bound = bound_V(plan, horizon);
    r.nonconvex_rhs_bound = nonconvex_rhs(c, *r.B_bound, *r.V_bound);
    if (c.theta0_dist2) r.convex_rhs_bound = convex_rhs(c, *r.B_bound, *r.V_bound);
  } catch (const UnsupportedScheduleError& e) {
    r.B_bound.reset();
    r.V_bound.reset();
    r.bound_note = e.what();
  } catch (const ConstraintError& e) {
    r.B_bound.reset();
    r.V_bound.reset();
    r.bound_note = e.what();
  }
  const LrFamily f = plan.lr.family;
  if (plan.case_tag == CaseTag::CaseI &&
      (f == LrFamily::Constant || f == LrFamily::Cosine || f == LrFamily::PolynomialDecay)) {
    r.limsup_asymptote = limsup_asymptote(f, plan.lr.eta_max, plan.lr.p, c, plan.bs.b0);
  }
  return r;
}

}  // namespace batchlr
