#include "batchlr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "batchlr/bounds.hpp"
#include "batchlr/errors.hpp"
#include "batchlr/summation.hpp"

namespace batchlr {

std::string_view to_string(Measure m) {
  return m == Measure::GradNorm2 ? "grad_norm2" : "subopt";
}

std::optional<Measure> parse_measure(std::string_view name) {
  if (name == "grad_norm2") return Measure::GradNorm2;
  if (name == "subopt") return Measure::Suboptimality;
  return std::nullopt;
}

namespace {

double measure_of(const TraceRecord& r, Measure m) {
  return m == Measure::GradNorm2 ? r.grad_norm2 : r.subopt;
}

}  // namespace

std::vector<StepEstimate> aggregate(const std::vector<Trace>& traces, Measure measure) {
  if (traces.empty()) throw ArgumentError("nothing to aggregate");
  const std::size_t steps = traces.front().records.size();
  for (const auto& tr : traces) {
    if (tr.records.size() != steps) throw ArgumentError("traces have different lengths");
  }
  const double k = static_cast<double>(traces.size());
  std::vector<StepEstimate> out(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = traces.front().records[s].t;
    // Shifting by the first value keeps the mean exact when all seeds agree.
    const double shift = measure_of(traces.front().records[s], measure);
    CompensatedSum sum;
    for (const auto& tr : traces) {
      const TraceRecord& r = tr.records[s];
      if (r.t != t) throw ArgumentError("traces are recorded at different steps");
      const double v = measure_of(r, measure);
      if (std::isnan(v)) throw ArgumentError("measure is undefined for this problem");
      sum += v - shift;
    }
    const double offset = sum.value() / k;
    const double mean = shift + offset;
    double se = 0.0;
    if (traces.size() > 1) {
      CompensatedSum dev;
      for (const auto& tr : traces) {
        const double diff = (measure_of(tr.records[s], measure) - shift) - offset;
        dev += diff * diff;
      }
      se = std::sqrt(dev.value() / (k - 1.0) / k);
    }
    out[s] = {t, mean, se};
  }
  return out;
}

RateFit rate_fit(std::span<const double> x, std::span<const double> y, RateAxis axis) {
  if (x.size() != y.size()) throw ArgumentError("x and y differ in length");
  if (x.size() < 4) throw ArgumentError("a rate fit needs at least 4 points");
  const std::size_t n = x.size();
  std::vector<double> u(n);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > 0.0)) throw ArgumentError("rate fit needs positive estimates");
    if (axis == RateAxis::LogLog && !(x[i] > 0.0)) {
      throw ArgumentError("log-log fit needs positive abscissae");
    }
    u[i] = axis == RateAxis::LogLog ? std::log(x[i]) : x[i];
    v[i] = std::log(y[i]);
  }
  double mu = 0.0;
  double mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double suu = 0.0;
  double suv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    suu += (u[i] - mu) * (u[i] - mu);
    suv += (u[i] - mu) * (v[i] - mv);
  }
  if (suu == 0.0) throw ArgumentError("rate fit needs distinct abscissae");
  RateFit fit;
  fit.points = n;
  fit.slope = suv / suu;
  fit.intercept = mv - fit.slope * mu;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = v[i] - (fit.intercept + fit.slope * u[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<RunOutcome> execute_runs(const std::vector<RunConfig>& runs, std::size_t jobs) {
  std::vector<RunOutcome> out(runs.size());
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    try {
      out[i].trace = sgd_run(runs[i]);
    } catch (const DivergedError& e) {
      out[i].diverged_at = e.last_finite_step();
      out[i].error = e.what();
    }
  });
  return out;
}

VerdictReport judge(const Experiment& experiment, const std::vector<RunOutcome>& outcomes) {
  if (experiment.runs.empty()) throw ArgumentError("experiment has no runs");
  if (outcomes.size() != experiment.runs.size()) {
    throw ArgumentError("one outcome per run is required");
  }
  const RunConfig& first = experiment.runs.front();
  for (const auto& r : experiment.runs) {
    if (r.plan != first.plan || r.problem != first.problem || r.theta0 != first.theta0) {
      throw ArgumentError("runs of one experiment must share plan, problem and theta0");
    }
  }
  const SchedulerPlan& plan = *first.plan;
  const Problem& problem = *first.problem;

  VerdictReport v;
  v.name = experiment.name;
  v.case_tag = std::string(to_string(plan.case_tag));
  v.measure = std::string(to_string(experiment.measure));
  v.slack_se = experiment.slack_se;

  const std::vector<double> theta0 =
      first.theta0.empty() ? std::vector<double>(problem.dim(), 0.0) : first.theta0;
  const ProblemConstants consts = constants_for(problem, theta0, plan_eta_max(plan));
  const BoundReport bounds = bound_report(plan, consts);
  if (experiment.measure == Measure::GradNorm2) {
    v.rhs_exact = bounds.nonconvex_rhs_exact;
    v.rhs_bound = bounds.nonconvex_rhs_bound;
  } else {
    if (!bounds.convex_rhs_exact) {
      throw ArgumentError("suboptimality needs a problem with a certified minimizer");
    }
    v.rhs_exact = *bounds.convex_rhs_exact;
    v.rhs_bound = bounds.convex_rhs_bound;
  }
  if (!v.rhs_bound && !bounds.bound_note.empty()) {
    v.warnings.push_back("no closed-form bound: " + bounds.bound_note);
  }
  if (plan.case_tag == CaseTag::Control) {
    v.warnings.push_back("decaying batch size: the bound grows with T, so the verdict carries no convergence evidence");
  }

  std::vector<Trace> traces;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].trace) {
      traces.push_back(*outcomes[i].trace);
    } else {
      v.warnings.push_back("run " + std::to_string(i) + " diverged: " + outcomes[i].error);
    }
  }
  v.seeds = traces.size();
  if (traces.empty()) {
    v.pass = false;
    return v;
  }

  v.steps = aggregate(traces, experiment.measure);
  const auto it = std::min_element(v.steps.begin(), v.steps.end(),
                                   [](const StepEstimate& a, const StepEstimate& b) {
                                     return a.mean < b.mean;
                                   });
  v.min_t = it->t;
  v.min_mean = it->mean;
  v.min_se = it->standard_error;
  v.initial_mean = v.steps.front().mean;

  CompensatedSum minima;
  for (const auto& tr : traces) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& r : tr.records) lo = std::min(lo, measure_of(r, experiment.measure));
    minima += lo;
  }
  v.mean_of_run_minima = minima.value() / static_cast<double>(traces.size());

  const double allowance = experiment.slack_se * v.min_se;
  v.pass_exact = v.min_mean <= v.rhs_exact + allowance;
  v.vacuous_exact = v.rhs_exact >= v.initial_mean;
  if (v.rhs_bound) {
    v.pass_bound = v.min_mean <= *v.rhs_bound + allowance;
    v.vacuous_bound = *v.rhs_bound >= v.initial_mean;
  }
  if (v.vacuous_exact) {
    v.warnings.push_back("vacuous: the right-hand side is at least the t = 0 mean");
  }
  v.pass = v.pass_exact && v.pass_bound.value_or(true) && traces.size() == outcomes.size();
  return v;
}

VerdictReport verify(const Experiment& experiment, std::size_t jobs) {
  return judge(experiment, execute_runs(experiment.runs, jobs));
}

}  // namespace batchlr
