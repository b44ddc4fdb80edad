#include "batchlr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "batchlr/errors.hpp"
#include "batchlr/summation.hpp"

namespace batchlr {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Running mean m_k = m_{k-1} + (g_k - m_{k-1}) / k. Unlike sum-then-divide it
// returns g exactly when every sampled gradient equals g, so zero-variance
// problems give seed-independent trajectories.
void fill_minibatch(const Problem& problem, std::span<const double> theta, std::size_t b,
                    Rng& rng, std::span<double> out, std::span<double> scratch) {
  const std::size_t n = problem.n();
  for (std::size_t k = 0; k < b; ++k) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    problem.accumulate_sample_gradient(theta, rng.uniform_index(n), scratch);
    if (k == 0) {
      std::copy(scratch.begin(), scratch.end(), out.begin());
      continue;
    }
    const double count = static_cast<double>(k + 1);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += (scratch[j] - out[j]) / count;
  }
}

}  // namespace

std::vector<double> minibatch_gradient(const Problem& problem, std::span<const double> theta,
                                       std::size_t b, Rng& rng) {
  if (b < 1) throw ArgumentError("batch size must be at least 1");
  if (theta.size() != problem.dim()) throw ArgumentError("theta dimension mismatch");
  std::vector<double> g(problem.dim());
  std::vector<double> scratch(problem.dim());
  fill_minibatch(problem, theta, b, rng, g, scratch);
  return g;
}

Trace sgd_run(const RunConfig& config) {
  if (!config.plan || !config.problem) throw StateError("run needs a plan and a problem");
  const SchedulerPlan& plan = *config.plan;
  const Problem& problem = *config.problem;
  if (plan.structure.empty()) throw StateError("block structure has not been built");
  if (plan.structure.n != problem.n()) {
    throw ArgumentError("plan was built for n = " + std::to_string(plan.structure.n) +
                        " but the problem has n = " + std::to_string(problem.n()));
  }
  if (config.record_every < 1) throw ArgumentError("record_every must be at least 1");
  const ValidationReport report = validate_plan(plan);
  if (!report.accepted) throw ConstraintError("plan rejected by validation");

  const std::size_t d = problem.dim();
  std::vector<double> theta = config.theta0.empty() ? std::vector<double>(d, 0.0) : config.theta0;
  if (theta.size() != d) throw ArgumentError("theta0 dimension mismatch");
  for (double v : theta) {
    if (!std::isfinite(v)) throw NumericError("theta0 must be finite");
  }

  const auto& f_star = problem.certificate().f_star;
  Rng rng(config.seed);
  Trace trace;
  trace.seed = config.seed;
  const std::size_t T = plan.structure.total_steps;
  trace.records.reserve(T / config.record_every + 1);
  std::vector<double> grad(d);
  std::vector<double> full(d);

  for (std::size_t t = 0; t < T; ++t) {
    const double eta = lr_at(plan, t);
    const std::size_t b = bs_at(plan, t);
    if (t % config.record_every == 0) {
      problem.full_gradient_into(theta, full);
      TraceRecord r;
      r.t = t;
      r.eta = eta;
      r.b = b;
      r.grad_norm2 = norm2(full);
      r.loss = problem.loss(theta);
      r.subopt = f_star ? r.loss - *f_star : std::numeric_limits<double>::quiet_NaN();
      trace.records.push_back(r);
    }
    fill_minibatch(problem, theta, b, rng, grad, full);
    for (std::size_t j = 0; j < d; ++j) theta[j] -= eta * grad[j];
    const double size = norm2(theta);
    if (!std::isfinite(size) || size > kDivergenceNorm * kDivergenceNorm) {
      throw DivergedError("iterate diverged after step " + std::to_string(t), t);
    }
  }
  trace.final_theta = std::move(theta);
  return trace;
}

BatchMoments enumerate_batch_moments(const Problem& problem, std::span<const double> theta,
                                     std::size_t b, std::size_t limit) {
  if (b < 1) throw ArgumentError("batch size must be at least 1");
  const std::size_t n = problem.n();
  const std::size_t d = problem.dim();
  std::size_t total = 1;
  for (std::size_t k = 0; k < b; ++k) {
    if (total > limit / n) {
      throw FeasibilityError("n^b exceeds the enumeration limit of " + std::to_string(limit));
    }
    total *= n;
  }
  if (total > limit) {
    throw FeasibilityError("n^b exceeds the enumeration limit of " + std::to_string(limit));
  }

  const std::vector<double> full = problem.full_gradient(theta);
  std::vector<std::vector<double>> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = problem.sample_gradient(theta, i).value;

  std::vector<CompensatedSum> mean_sum(d);
  CompensatedSum var_sum;
  std::vector<std::size_t> idx(b, 0);
  std::vector<double> g(d);
  for (std::size_t count = 0; count < total; ++count) {
    // Same running mean as the sampler, so both see identical batch gradients.
    std::copy(samples[idx[0]].begin(), samples[idx[0]].end(), g.begin());
    for (std::size_t k = 1; k < b; ++k) {
      const double c = static_cast<double>(k + 1);
      for (std::size_t j = 0; j < d; ++j) g[j] += (samples[idx[k]][j] - g[j]) / c;
    }
    double dev = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean_sum[j] += g[j];
      const double diff = g[j] - full[j];
      dev += diff * diff;
    }
    var_sum += dev;
    // Odometer over ordered index tuples.
    for (std::size_t k = 0; k < b; ++k) {
      if (++idx[k] < n) break;
      idx[k] = 0;
    }
  }

  BatchMoments out;
  out.batches = total;
  out.mean.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.mean[j] = mean_sum[j].value() / static_cast<double>(total);
  out.variance = var_sum.value() / static_cast<double>(total);
  return out;
}

McEstimate mc_variance(const Problem& problem, std::span<const double> theta, std::size_t b,
                       std::size_t draws, Rng& rng) {
  if (draws < 1000) throw ArgumentError("Monte-Carlo variance needs at least 1000 draws");
  if (b < 1) throw ArgumentError("batch size must be at least 1");
  const std::vector<double> full = problem.full_gradient(theta);
  std::vector<double> g(problem.dim());
  std::vector<double> scratch(problem.dim());
  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (std::size_t k = 0; k < draws; ++k) {
    fill_minibatch(problem, theta, b, rng, g, scratch);
    double dev = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double diff = g[j] - full[j];
      dev += diff * diff;
    }
    sum += dev;
    sum_sq += dev * dev;
  }
  const double m = static_cast<double>(draws);
  McEstimate out;
  out.draws = draws;
  out.estimate = sum.value() / m;
  const double var = std::max(0.0, (sum_sq.value() - m * out.estimate * out.estimate) / (m - 1.0));
  out.standard_error = std::sqrt(var / m);
  return out;
}

}  // namespace batchlr
