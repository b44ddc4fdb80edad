#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "batchlr/engine.hpp"
#include "batchlr/errors.hpp"
#include "batchlr/harness.hpp"

using namespace batchlr;

namespace {

Problem four_centers() { return Problem::quadratic(1.0, {{-1.0}, {0.0}, {1.0}, {2.0}}); }

double rel_err(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

std::shared_ptr<const Problem> shared(Problem p) { return std::make_shared<const Problem>(std::move(p)); }

std::shared_ptr<const SchedulerPlan> shared_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                                                 std::vector<int> epochs) {
  return std::make_shared<const SchedulerPlan>(make_plan(lr, bs, n, epochs));
}

std::vector<Trace> run_seeds(const RunConfig& base, std::size_t seeds) {
  std::vector<RunConfig> runs(seeds, base);
  for (std::size_t s = 0; s < seeds; ++s) runs[s].seed = derive_seed(base.seed, s);
  std::vector<Trace> traces;
  for (auto& o : execute_runs(runs, 4)) traces.push_back(*o.trace);
  return traces;
}

ProblemSpec quad_spec() {
  ProblemSpec s;
  s.n = 64;
  s.d = 10;
  s.seed = 3;
  return s;
}

}  // namespace

TEST(Enumeration, FourCentersPairs) {
  const Problem p = four_centers();
  for (double theta : {-2.0, 0.0, 0.5, 3.25}) {
    const std::vector<double> th{theta};
    const BatchMoments m = enumerate_batch_moments(p, th, 2);
    EXPECT_EQ(m.batches, 16u);
    EXPECT_NEAR(m.mean[0], theta - 0.5, 1e-15);
    EXPECT_NEAR(m.variance, 0.625, 1e-15);
  }
  const std::vector<double> th{0.0};
  EXPECT_NEAR(enumerate_batch_moments(p, th, 1).variance, 1.25, 1e-15);
}

TEST(Enumeration, EqualCentersHaveNoVariance) {
  const Problem p = Problem::quadratic(1.0, {{1.0, -1.0}, {1.0, -1.0}, {1.0, -1.0}});
  const std::vector<double> th{0.2, 0.7};
  for (std::size_t b : {1u, 2u, 3u}) EXPECT_EQ(enumerate_batch_moments(p, th, b).variance, 0.0);
}

TEST(Enumeration, UnbiasedWithBoundedVarianceOnGrid) {
  Rng rng(17);
  for (std::size_t n = 1; n <= 8; ++n) {
    ProblemSpec q;
    q.n = n;
    q.d = 3;
    q.seed = 100 + n;
    ProblemSpec s = q;
    s.kind = ProblemKind::SineQuadratic;
    s.amp = 0.4;
    ProblemSpec l = q;
    l.kind = ProblemKind::Logistic;
    for (const auto& spec : {q, s, l}) {
      const Problem p = Problem::generate(spec);
      const Certificate& c = p.certificate();
      for (std::size_t b = 1; b <= 3; ++b) {
        for (int k = 0; k < 10; ++k) {
          std::vector<double> th(p.dim());
          for (double& v : th) v = 2.0 * rng.normal();
          const BatchMoments m = enumerate_batch_moments(p, th, b);
          const auto full = p.full_gradient(th);
          for (std::size_t j = 0; j < p.dim(); ++j) {
            EXPECT_LE(std::fabs(m.mean[j] - full[j]), 1e-12 * std::max(std::fabs(full[j]), 1.0));
          }
          const double cap = c.sigma2 / static_cast<double>(b);
          EXPECT_LE(m.variance, cap + 1e-12);
          if (spec.kind == ProblemKind::EqualCurvatureQuadratic && cap > 0.0) {
            EXPECT_LE(rel_err(m.variance, cap), 1e-12) << "n=" << n << " b=" << b;
          }
        }
      }
    }
  }
}

TEST(Enumeration, TooLarge) {
  ProblemSpec spec;
  spec.n = 8;
  spec.d = 1;
  const Problem p = Problem::generate(spec);
  const std::vector<double> th{0.0};
  EXPECT_THROW(enumerate_batch_moments(p, th, 7), FeasibilityError);
  EXPECT_NO_THROW(enumerate_batch_moments(p, th, 6));
}

TEST(MonteCarlo, MatchesEnumeration) {
  const Problem p = four_centers();
  const std::vector<double> th{1.3};
  Rng rng(5);
  const McEstimate mc = mc_variance(p, th, 2, 20000, rng);
  EXPECT_EQ(mc.draws, 20000u);
  EXPECT_LE(std::fabs(mc.estimate - 0.625), 3.0 * mc.standard_error);
}

TEST(MonteCarlo, ZeroVarianceIsExactlyZero) {
  const Problem p = Problem::quadratic(1.0, {{2.0, 1.0}, {2.0, 1.0}});
  const std::vector<double> th{0.5, -0.5};
  Rng rng(9);
  const McEstimate mc = mc_variance(p, th, 3, 1000, rng);
  EXPECT_EQ(mc.estimate, 0.0);
  EXPECT_EQ(mc.standard_error, 0.0);
}

TEST(MonteCarlo, DoublingBatchHalvesVariance) {
  const Problem p = Problem::generate(quad_spec());
  const std::vector<double> th(10, 0.3);
  Rng rng(21);
  const McEstimate small = mc_variance(p, th, 4, 20000, rng);
  const McEstimate large = mc_variance(p, th, 8, 20000, rng);
  const double se = std::hypot(small.standard_error / 2.0, large.standard_error);
  EXPECT_LE(std::fabs(small.estimate / 2.0 - large.estimate), 3.0 * se);
}

TEST(MonteCarlo, NeedsEnoughDraws) {
  const Problem p = four_centers();
  const std::vector<double> th{0.0};
  Rng rng(1);
  EXPECT_THROW(mc_variance(p, th, 2, 999, rng), ArgumentError);
}

TEST(MinibatchGradient, EqualsFullGradientWithoutVariance) {
  const Problem p = Problem::quadratic(1.5, {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  const std::vector<double> th{-1.0, 0.25};
  Rng rng(2);
  const auto full = p.full_gradient(th);
  for (std::size_t b : {1u, 2u, 3u, 5u}) {
    for (int k = 0; k < 20; ++k) EXPECT_EQ(minibatch_gradient(p, th, b, rng), full);
  }
}

TEST(SgdRun, SingleSampleNewtonStep) {
  RunConfig cfg;
  cfg.problem = shared(Problem::quadratic(1.0, {{3.0, -1.0}}));
  cfg.plan = shared_plan(LrSchedule::constant(1.0), BsSchedule::constant(1), 1, {3});
  const Trace tr = sgd_run(cfg);
  ASSERT_EQ(tr.records.size(), 3u);
  EXPECT_EQ(tr.records[0].grad_norm2, 10.0);
  EXPECT_EQ(tr.records[1].grad_norm2, 0.0);
  EXPECT_EQ(tr.final_theta, (std::vector<double>{3.0, -1.0}));
  EXPECT_EQ(tr.records[1].subopt, 0.0);
}

TEST(SgdRun, RecordsEveryKthStep) {
  RunConfig cfg;
  cfg.problem = shared(four_centers());
  cfg.plan = shared_plan(LrSchedule::constant(0.1), BsSchedule::constant(2), 4, {10});
  cfg.record_every = 7;
  const Trace tr = sgd_run(cfg);
  std::vector<std::size_t> ts;
  for (const auto& r : tr.records) ts.push_back(r.t);
  EXPECT_EQ(ts, (std::vector<std::size_t>{0, 7, 14}));
  EXPECT_EQ(tr.records[1].b, 2u);
  EXPECT_DOUBLE_EQ(tr.records[1].eta, 0.1);
}

TEST(SgdRun, LogisticHasNoSuboptimality) {
  ProblemSpec spec;
  spec.kind = ProblemKind::Logistic;
  spec.n = 16;
  spec.d = 3;
  RunConfig cfg;
  cfg.problem = shared(Problem::generate(spec));
  cfg.plan = shared_plan(LrSchedule::constant(0.1), BsSchedule::constant(4), 16, {2});
  const Trace tr = sgd_run(cfg);
  EXPECT_TRUE(std::isnan(tr.records[0].subopt));
  EXPECT_DOUBLE_EQ(tr.records[0].loss, std::log(2.0));
}

TEST(SgdRun, DeterministicPerSeed) {
  RunConfig cfg;
  cfg.problem = shared(Problem::generate(quad_spec()));
  cfg.plan = shared_plan(LrSchedule::cosine(0.0, 0.2), BsSchedule::exponential_growth(2, 2.0), 64,
                         {2, 2, 2});
  cfg.seed = 77;
  const Trace a = sgd_run(cfg);
  const Trace b = sgd_run(cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 78;
  const Trace c = sgd_run(cfg);
  EXPECT_NE(a.final_theta, c.final_theta);
}

TEST(SgdRun, DivergenceIsReported) {
  RunConfig cfg;
  cfg.problem = shared(four_centers());
  cfg.plan = shared_plan(LrSchedule::constant(3.0), BsSchedule::constant(1), 4, {100});
  try {
    sgd_run(cfg);
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    EXPECT_GT(e.last_finite_step(), 10u);
    EXPECT_LT(e.last_finite_step(), 400u);
  }
}

TEST(SgdRun, RejectsBadInputs) {
  RunConfig cfg;
  cfg.problem = shared(four_centers());
  cfg.plan = shared_plan(LrSchedule::constant(0.1), BsSchedule::constant(1), 4, {1});
  cfg.theta0 = {1.0, 2.0};
  EXPECT_THROW(sgd_run(cfg), ArgumentError);
  cfg.theta0.clear();
  cfg.record_every = 0;
  EXPECT_THROW(sgd_run(cfg), ArgumentError);
  cfg.record_every = 1;
  auto bad = std::make_shared<SchedulerPlan>(
      assemble_plan(LrSchedule::exponential_growth(0.1, 1.5), BsSchedule::exponential_growth(1, 2.0), 4,
                    std::vector<int>{1, 1}));
  cfg.plan = bad;
  EXPECT_THROW(sgd_run(cfg), ConstraintError);
  EXPECT_THROW(make_plan(LrSchedule::constant(0.0), BsSchedule::constant(1), 4, std::vector<int>{1}), Error);
}

TEST(NoiseFloor, RisesWithRateFallsWithBatch) {
  const auto problem = shared(Problem::generate(quad_spec()));
  const std::vector<double> etas{0.05, 0.1, 0.2};
  const std::vector<std::size_t> batches{2, 4, 8};
  std::vector<std::vector<StepEstimate>> plateau(3, std::vector<StepEstimate>(3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const std::size_t k = 64 / batches[j];
      RunConfig cfg;
      cfg.problem = problem;
      cfg.plan = shared_plan(LrSchedule::constant(etas[i]), BsSchedule::constant(batches[j]), 64,
                             {static_cast<int>(2000 / k)});
      cfg.seed = 500;
      const auto traces = run_seeds(cfg, 100);
      // Plateau per seed: mean over the last 10% of steps; then mean and SE across seeds.
      std::vector<double> per_seed;
      for (const auto& tr : traces) {
        const std::size_t from = tr.records.size() - tr.records.size() / 10;
        double s = 0.0;
        for (std::size_t r = from; r < tr.records.size(); ++r) s += tr.records[r].grad_norm2;
        per_seed.push_back(s / static_cast<double>(tr.records.size() - from));
      }
      double mean = 0.0;
      for (double v : per_seed) mean += v;
      mean /= static_cast<double>(per_seed.size());
      double var = 0.0;
      for (double v : per_seed) var += (v - mean) * (v - mean);
      var /= static_cast<double>(per_seed.size() - 1);
      plateau[i][j] = {0, mean, std::sqrt(var / static_cast<double>(per_seed.size()))};
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i + 1 < 3) EXPECT_LT(plateau[i][j].mean, plateau[i + 1][j].mean) << i << "," << j;
      if (j + 1 < 3) EXPECT_GT(plateau[i][j].mean, plateau[i][j + 1].mean) << i << "," << j;
    }
  }
}

TEST(GrowingBatch, BlockEndGradientDoesNotIncrease) {
  ProblemSpec spec = quad_spec();
  spec.offset = 1.0;
  const auto problem = shared(Problem::generate(spec));
  for (const auto& lr : {LrSchedule::constant(0.1), LrSchedule::exponential_growth(0.05, 1.4)}) {
    RunConfig cfg;
    cfg.problem = problem;
    cfg.plan = shared_plan(lr, BsSchedule::exponential_growth(1, 2.0), 64, std::vector<int>(6, 4));
    cfg.seed = 900;
    const auto est = aggregate(run_seeds(cfg, 100), Measure::GradNorm2);
    const auto& ends = cfg.plan->structure.block_ends;
    for (std::size_t m = 0; m + 1 < ends.size(); ++m) {
      const StepEstimate& a = est[ends[m] - 1];
      const StepEstimate& b = est[ends[m + 1] - 1];
      ASSERT_EQ(a.t, ends[m] - 1);
      EXPECT_LE(b.mean, a.mean + 2.0 * std::hypot(a.standard_error, b.standard_error))
          << to_string(lr.family) << " block " << m;
    }
  }
}
