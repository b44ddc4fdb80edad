#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "batchlr/problems.hpp"
#include "batchlr/rng.hpp"
#include "batchlr/schedules.hpp"

namespace batchlr {

struct RunConfig {
  std::shared_ptr<const SchedulerPlan> plan;
  std::shared_ptr<const Problem> problem;
  /// Empty means the zero vector.
  std::vector<double> theta0;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
};

struct TraceRecord {
  std::size_t t = 0;
  double eta = 0.0;
  std::size_t b = 0;
  double grad_norm2 = 0.0;
  double loss = 0.0;
  /// f(theta_t) - f*, NaN when the problem has no certified f*.
  double subopt = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct Trace {
  std::vector<TraceRecord> records;
  std::vector<double> final_theta;
  std::uint64_t seed = 0;

  bool operator==(const Trace&) const = default;
};

/// Iterates with norm above this are treated as diverged.
inline constexpr double kDivergenceNorm = 1e12;

/// Mean of b per-sample gradients at indices drawn uniformly with replacement.
std::vector<double> minibatch_gradient(const Problem& problem, std::span<const double> theta,
                                       std::size_t b, Rng& rng);

/// Mini-batch SGD over the whole plan. Records t = 0 and every record_every-th step.
/// Throws ConstraintError for a plan that validate_plan rejects and DivergedError
/// when an iterate leaves the finite region.
Trace sgd_run(const RunConfig& config);

struct BatchMoments {
  std::vector<double> mean;
  double variance = 0.0;  // E||g_B - grad f||^2 over all ordered batches
  std::size_t batches = 0;
};

inline constexpr std::size_t kEnumerationLimit = 1'000'000;

/// Exhaustive moments over all n^b ordered with-replacement batches.
BatchMoments enumerate_batch_moments(const Problem& problem, std::span<const double> theta,
                                     std::size_t b, std::size_t limit = kEnumerationLimit);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
};

/// Monte-Carlo estimate of E||g_B - grad f||^2; needs draws >= 1000.
McEstimate mc_variance(const Problem& problem, std::span<const double> theta, std::size_t b,
                       std::size_t draws, Rng& rng);

}  // namespace batchlr
