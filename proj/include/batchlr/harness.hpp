#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batchlr/engine.hpp"

namespace batchlr {

enum class Measure { GradNorm2, Suboptimality };

std::string_view to_string(Measure m);
std::optional<Measure> parse_measure(std::string_view name);

struct StepEstimate {
  std::size_t t = 0;
  double mean = 0.0;
  double standard_error = 0.0;

  bool operator==(const StepEstimate&) const = default;
};

/// Per recorded step: seed mean and standard error (sd / sqrt(k), 0 for one trace).
/// Throws ArgumentError for an empty list or traces recorded at different steps.
std::vector<StepEstimate> aggregate(const std::vector<Trace>& traces, Measure measure);

enum class RateAxis { LogLog, LogLinear };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // root-mean-square residual of the fit
  std::size_t points = 0;

  bool operator==(const RateFit&) const = default;
};

/// Least-squares fit of log(y) against log(x) or x. Needs at least 4 points.
RateFit rate_fit(std::span<const double> x, std::span<const double> y, RateAxis axis);

/// Runs `count` independent tasks on up to `jobs` threads. Results land by index,
/// so the outcome does not depend on scheduling. The first exception by index is
/// rethrown after all tasks finish.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& task);

struct RunOutcome {
  std::optional<Trace> trace;
  std::optional<std::size_t> diverged_at;
  std::string error;
};

/// sgd_run over every config. Divergence is recorded per run; other errors propagate.
std::vector<RunOutcome> execute_runs(const std::vector<RunConfig>& runs, std::size_t jobs);

struct Experiment {
  std::string name;
  std::vector<RunConfig> runs;
  Measure measure = Measure::GradNorm2;
  double slack_se = 2.0;
};

struct VerdictReport {
  std::string name;
  std::string case_tag;
  std::string measure;
  std::size_t seeds = 0;
  std::vector<StepEstimate> steps;
  std::size_t min_t = 0;
  double min_mean = 0.0;
  double min_se = 0.0;
  double initial_mean = 0.0;
  /// Mean over runs of each run's own minimum; informational only.
  double mean_of_run_minima = 0.0;
  double rhs_exact = 0.0;
  std::optional<double> rhs_bound;
  bool pass_exact = false;
  std::optional<bool> pass_bound;
  bool vacuous_exact = false;
  std::optional<bool> vacuous_bound;
  double slack_se = 2.0;
  bool pass = false;
  std::vector<std::string> warnings;
  std::optional<RateFit> rate_fit;

  bool operator==(const VerdictReport&) const = default;
};

/// Compares min_t of the seed-mean measure with the matching right-hand side:
/// the nonconvex bound for GradNorm2, the convex bound for Suboptimality.
/// pass <=> min_mean <= rhs + slack_se * SE at the minimizing step, for every
/// available flavor, and no run diverged.
VerdictReport judge(const Experiment& experiment, const std::vector<RunOutcome>& outcomes);
VerdictReport verify(const Experiment& experiment, std::size_t jobs = 1);

}  // namespace batchlr
