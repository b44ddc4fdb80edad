// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "batchlr/bounds.hpp"
#include "batchlr/config.hpp"
#include "batchlr/engine.hpp"
#include "batchlr/errors.hpp"
#include "batchlr/harness.hpp"
#include "batchlr/problems.hpp"
#include "batchlr/report_io.hpp"
#include "batchlr/schedules.hpp"
#include "batchlr/summation.hpp"

namespace fs = std::filesystem;
using namespace batchlr;

namespace {

constexpr std::size_t kSeeds = 100;
constexpr std::uint64_t kMaster = 20240607;
const std::size_t kJobs = std::max(1u, std::thread::hardware_concurrency());

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

std::shared_ptr<const SchedulerPlan> shared_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                                                 const std::vector<int>& epochs) {
  return std::make_shared<const SchedulerPlan>(make_plan(lr, bs, n, epochs));
}

std::vector<RunConfig> seeded_runs(const std::shared_ptr<const SchedulerPlan>& plan,
                                   const std::shared_ptr<const Problem>& problem, std::uint64_t master) {
  std::vector<RunConfig> runs;
  for (std::size_t s = 0; s < kSeeds; ++s) runs.push_back({plan, problem, {}, derive_seed(master, s), 1});
  return runs;
}

std::vector<Trace> traces_of(const std::vector<RunConfig>& runs) {
  std::vector<Trace> out;
  for (auto& o : execute_runs(runs, kJobs)) {
    if (!o.trace) throw NumericError("run diverged: " + o.error);
    out.push_back(std::move(*o.trace));
  }
  return out;
}

double min_mean(const std::vector<Trace>& traces) {
  double lo = INFINITY;
  for (const auto& s : aggregate(traces, Measure::GradNorm2)) lo = std::min(lo, s.mean);
  return lo;
}

std::shared_ptr<const Problem> quadratic(std::size_t n, double spread, double offset, std::uint64_t seed) {
  ProblemSpec spec;
  spec.n = n;
  spec.d = 10;
  spec.spread = spread;
  spec.offset = offset;
  spec.seed = seed;
  return std::make_shared<const Problem>(Problem::generate(spec));
}

// 1. Cosine step schedule sums: with eta_min = 0 and eta_max = 2 the rate is 1 + cos(floor(t/K) pi / E).
Outcome cosine_identities() {
  double worst = 0.0;
  for (int K = 1; K <= 20; ++K) {
    for (int E = 2; E <= 50; ++E) {
      const auto plan = make_plan(LrSchedule::cosine(0.0, 2.0), BsSchedule::constant(1),
                                  static_cast<std::size_t>(K), std::vector<int>{E});
      CompensatedSum c;
      CompensatedSum c2;
      for (std::size_t t = 0; t < plan.structure.total_steps; ++t) {
        const double v = lr_at(plan, t) - 1.0;
        c += v;
        c2 += v * v;
      }
      const double KE = static_cast<double>(K) * E;
      worst = std::max({worst, std::fabs(c.value() - K) / KE, std::fabs(c2.value() - KE / 2.0) / KE});
    }
  }
  return {worst <= 1e-9, "worst error / KE = " + fmt(worst)};
}

// 2. Exhaustive mini-batch moments on four centers.
Outcome enumeration() {
  const Problem p = Problem::quadratic(1.0, {{-1.0}, {0.0}, {1.0}, {2.0}});
  const double sigma2 = certify_constants(p).sigma2;
  Rng rng(kMaster);
  double mean_err = 0.0;
  double var_err = 0.0;
  for (std::size_t b = 1; b <= 3; ++b) {
    for (int k = 0; k < 10; ++k) {
      const std::vector<double> th{3.0 * rng.normal()};
      const BatchMoments m = enumerate_batch_moments(p, th, b);
      const double g = p.full_gradient(th)[0];
      mean_err = std::max(mean_err, std::fabs(m.mean[0] - g) / std::max(std::fabs(g), 1e-300));
      const double cap = sigma2 / static_cast<double>(b);
      var_err = std::max(var_err, std::fabs(m.variance - cap) / cap);
    }
  }
  const bool ok = sigma2 == 1.25 && mean_err <= 1e-12 && var_err <= 1e-12;
  return {ok, "sigma2 = " + fmt(sigma2) + ", mean rel err " + fmt(mean_err) + ", variance rel err " + fmt(var_err)};
}

// 3. Closed forms dominate the exact sums on a grid per regime.
struct Row {
  std::string name;
  std::size_t points = 0;
  std::size_t violations = 0;
  // Plans whose batch formula overflows n are skipped: the closed forms assume uncapped growth.
  void check(const LrSchedule& lr, const BsSchedule& bs, std::size_t n, const std::vector<int>& epochs) {
    if (assemble_plan(lr, bs, n, epochs).structure.capped) return;
    const SchedulerPlan plan = make_plan(lr, bs, n, epochs);
    const ExactSums e = exact_sums(plan);
    ++points;
    const double tol = 1e-12;
    if (e.B > bound_B(plan) * (1.0 + tol) || e.V > bound_V(plan) * (1.0 + tol)) ++violations;
  }
};

std::vector<std::vector<int>> epoch_patterns(int blocks) {
  std::vector<int> mixed;
  for (int m = 0; m < blocks; ++m) mixed.push_back(1 + (m * 2) % 5);
  return {std::vector<int>(blocks, 1), std::vector<int>(blocks, 3), mixed};
}

std::vector<LrSchedule> decaying(double eta) {
  return {LrSchedule::constant(eta), LrSchedule::diminishing(eta), LrSchedule::cosine(0.0, eta),
          LrSchedule::cosine(0.25 * eta, eta), LrSchedule::polynomial_decay(0.0, eta, 0.5),
          LrSchedule::polynomial_decay(0.1 * eta, eta, 2.0)};
}

Outcome domination_grid() {
  Row t1{"constant batch"}, t2{"exponential batch"}, t2p{"polynomial batch"}, t3{"joint exponential"},
      t3p{"joint polynomial"}, t4{"warm-up"};
  for (std::size_t n : {10u, 33u, 64u, 100u}) {
    for (std::size_t b : {1u, 4u, 7u}) {
      for (int E : {1, 3, 8}) {
        for (double eta : {0.02, 0.5}) {
          for (const auto& lr : decaying(eta)) t1.check(lr, BsSchedule::constant(b), n, std::vector<int>{E});
        }
      }
    }
  }
  for (std::size_t n : {20u, 64u, 150u}) {
    for (std::size_t b0 : {1u, 2u}) {
      for (double delta : {2.0, 3.0}) {
        for (int blocks = 2; blocks <= 5; ++blocks) {
          for (const auto& epochs : epoch_patterns(blocks)) {
            for (const auto& lr : decaying(0.1)) {
              t2.check(lr, BsSchedule::exponential_growth(b0, delta), n, epochs);
            }
            for (double gamma : {1.1, 1.3, 1.4}) {
              if (gamma * gamma >= delta) continue;
              t3.check(LrSchedule::exponential_growth(0.05, gamma),
                                 BsSchedule::exponential_growth(b0, delta), n, epochs);
              for (int mw = 0; mw + 1 < blocks && mw <= 2; ++mw) {
                t4.check(LrSchedule::warmup_constant(0.05, gamma, mw),
                                   BsSchedule::exponential_growth(b0, delta), n, epochs);
                t4.check(LrSchedule::warmup_cosine(0.05, gamma, mw, 0.0),
                                   BsSchedule::exponential_growth(b0, delta), n, epochs);
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t n : {50u, 300u}) {
    for (double a : {1.0, 2.0}) {
      for (double b0 : {1.0, 2.0}) {
        for (double c : {2.0, 3.0}) {
          for (int blocks = 2; blocks <= 4; ++blocks) {
            for (const auto& epochs : epoch_patterns(blocks)) {
              for (const auto& lr : decaying(0.1)) {
                t2p.check(lr, BsSchedule::polynomial_growth(a, b0, c), n, epochs);
              }
              for (double c2 : {0.25, 0.5}) {
                if (c - 2.0 * c2 < 2.0) continue;
                for (double a2 : {0.02, 0.1}) {
                  for (double eta0 : {0.05, 0.2}) {
                    t3p.check(LrSchedule::polynomial_growth(eta0, a2, c2), BsSchedule::polynomial_growth(a, b0, c),
                              n, epochs);
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  bool ok = true;
  std::string detail;
  for (const Row* r : {&t1, &t2, &t2p, &t3, &t3p, &t4}) {
    ok = ok && r->points >= 200 && r->violations == 0;
    detail += (detail.empty() ? "" : "; ") + r->name + " " + std::to_string(r->violations) + "/" +
              std::to_string(r->points);
  }
  return {ok, "violations/points: " + detail};
}

// 4. Seed-mean minimum of ||grad||^2 against the nonconvex bound in every regime.
Outcome nonconvex_bound() {
  const auto problem = quadratic(64, 1.0, 2.0, 7);
  struct Case {
    const char* name;
    std::shared_ptr<const SchedulerPlan> plan;
  };
  const std::vector<Case> cases = {
      {"i", shared_plan(LrSchedule::constant(0.1), BsSchedule::constant(16), 64, {500})},
      {"ii", shared_plan(LrSchedule::constant(0.1), BsSchedule::exponential_growth(1, 2.0), 64,
                         std::vector<int>(7, 10))},
      {"iii", shared_plan(LrSchedule::exponential_growth(0.1, 1.4), BsSchedule::exponential_growth(1, 2.0), 64,
                          std::vector<int>(7, 10))},
      {"iv", shared_plan(LrSchedule::warmup_cosine(0.1, 1.4, 3, 0.0), BsSchedule::exponential_growth(1, 2.0), 64,
                         std::vector<int>(7, 10))},
  };
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    Experiment e{c.name, seeded_runs(c.plan, problem, kMaster), Measure::GradNorm2, 2.0};
    const VerdictReport v = verify(e, kJobs);
    ok = ok && v.pass && v.rhs_bound.has_value();
    detail += std::string(detail.empty() ? "" : "; ") + c.name + ": " + fmt(v.min_mean) + " <= " +
              fmt(v.rhs_exact) + " (bound " + (v.rhs_bound ? fmt(*v.rhs_bound) : "none") + ")" +
              (v.vacuous_exact ? " vacuous" : "");
  }
  return {ok, detail};
}

// 5. Seed-mean minimum of f - f* against the convex bound.
Outcome convex_bound() {
  const auto problem = quadratic(64, 1.0, 2.0, 7);
  const auto plan = shared_plan(LrSchedule::constant(0.1), BsSchedule::exponential_growth(1, 2.0), 64,
                                std::vector<int>(7, 10));
  Experiment e{"convex", seeded_runs(plan, problem, kMaster), Measure::Suboptimality, 2.0};
  const VerdictReport v = verify(e, kJobs);
  return {v.pass && v.rhs_bound.has_value(), fmt(v.min_mean) + " <= " + fmt(v.rhs_exact) + " (bound " +
                                                 (v.rhs_bound ? fmt(*v.rhs_bound) : "none") + ")" +
                                                 (v.vacuous_exact ? " vacuous" : "")};
}

// 6. Large-T factor ordering, and the cosine plateau sits at or below the constant one.
Outcome asymptote_ordering() {
  bool factors = true;
  for (int k = 1; k <= 100; ++k) {
    const double eta = 0.01 * k;
    factors = factors && limsup_factor(LrFamily::Cosine, eta, 1.0) < limsup_factor(LrFamily::Constant, eta, 1.0);
    for (double p : {0.5, 1.0, 2.0, 5.0}) factors = factors && limsup_factor(LrFamily::PolynomialDecay, eta, p) < eta;
  }
  const auto problem = quadratic(64, 1.0, 0.0, 7);
  auto plateau = [&](const LrSchedule& lr) {
    const auto plan = shared_plan(lr, BsSchedule::constant(16), 64, {500});
    std::vector<double> per_seed;
    for (const auto& tr : traces_of(seeded_runs(plan, problem, kMaster + 6))) {
      const std::size_t from = tr.records.size() - tr.records.size() / 10;
      CompensatedSum s;
      for (std::size_t i = from; i < tr.records.size(); ++i) s += tr.records[i].grad_norm2;
      per_seed.push_back(s.value() / static_cast<double>(tr.records.size() - from));
    }
    double mean = 0.0;
    for (double v : per_seed) mean += v;
    mean /= static_cast<double>(per_seed.size());
    double var = 0.0;
    for (double v : per_seed) var += (v - mean) * (v - mean);
    var /= static_cast<double>(per_seed.size() - 1);
    return std::pair{mean, std::sqrt(var / static_cast<double>(per_seed.size()))};
  };
  const auto [cos_mean, cos_se] = plateau(LrSchedule::cosine(0.0, 0.1));
  const auto [const_mean, const_se] = plateau(LrSchedule::constant(0.1));
  const bool empirical = cos_mean <= const_mean + 2.0 * std::hypot(cos_se, const_se);
  return {factors && empirical, std::string("factors ") + (factors ? "ordered" : "NOT ordered") +
                                    "; plateau cosine " + fmt(cos_mean) + " vs constant " + fmt(const_mean)};
}

// 7. Growing the rate with the batch beats a constant rate, and decays geometrically in M.
Outcome rate_separation() {
  const auto problem = quadratic(1024, 0.316, 3.16, 7);
  std::vector<double> ms;
  std::vector<double> grown;
  bool ordered = true;
  std::string detail;
  for (int M = 4; M <= 10; ++M) {
    const std::vector<int> epochs(static_cast<std::size_t>(M) + 1, 1);
    const auto bs = BsSchedule::exponential_growth(1, 2.0);
    const double ii = min_mean(traces_of(seeded_runs(shared_plan(LrSchedule::constant(0.002), bs, 1024, epochs),
                                                     problem, kMaster + 7)));
    const double iii = min_mean(traces_of(seeded_runs(
        shared_plan(LrSchedule::exponential_growth(0.002, 1.4), bs, 1024, epochs), problem, kMaster + 7)));
    if (M >= 6) ordered = ordered && iii <= ii;
    ms.push_back(M);
    grown.push_back(std::sqrt(iii));
    detail += (detail.empty() ? "M=" : ", ") + std::to_string(M) + ": " + fmt(iii) + " vs " + fmt(ii);
  }
  const RateFit fit = rate_fit(ms, grown, RateAxis::LogLinear);
  const double need = std::log(1.4) / 4.0;
  const bool ok = ordered && fit.slope < 0.0 && -fit.slope >= need;
  return {ok, "slope " + fmt(fit.slope) + " (need <= " + fmt(-need) + "); " + detail};
}

// 8. Growing batch with constant rate: min ||grad|| decays like T^(-1/2).
Outcome growing_batch_rate() {
  const auto problem = quadratic(512, 1.0, 1.0, 7);
  std::vector<double> ts;
  std::vector<double> est;
  for (int E : {1, 2, 4, 8}) {
    const auto plan = shared_plan(LrSchedule::constant(0.05), BsSchedule::exponential_growth(1, 2.0), 512,
                                  std::vector<int>(10, E));
    ts.push_back(static_cast<double>(plan->structure.total_steps));
    est.push_back(std::sqrt(min_mean(traces_of(seeded_runs(plan, problem, kMaster + 8)))));
  }
  const RateFit fit = rate_fit(ts, est, RateAxis::LogLog);
  return {fit.slope >= -0.75 && fit.slope <= -0.25,
          "log-log slope " + fmt(fit.slope) + " over T = " + fmt(ts.front()) + ".." + fmt(ts.back())};
}

// 9. A shrinking batch makes the variance term grow with T.
Outcome control_growth() {
  bool ok = true;
  std::string detail;
  for (int T : {100, 1000, 10000}) {
    auto v = [](int steps) {
      return exact_V(make_plan(LrSchedule::constant(0.1), BsSchedule::decaying_control(64), 64,
                               std::vector<int>{steps}));
    };
    const double a = v(T);
    const double b = v(2 * T);
    ok = ok && b > a;
    detail += (detail.empty() ? "" : ", ") + std::string("V(") + std::to_string(T) + ") " + fmt(a) + " -> " + fmt(b);
  }
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 10. Sweeps do not depend on the thread count, and a trace replays bit for bit.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("batchlr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const std::string cfg = std::string(BATCHLR_CONFIG_DIR) + "/sweep_pairs.json";
  const std::string cli = BATCHLR_CLI;
  const int a = shell(cli + " sweep --config " + cfg + " --jobs 1 --traces --out " + (dir / "j1").string() + " > /dev/null");
  const int b = shell(cli + " sweep --config " + cfg + " --jobs 8 --traces --out " + (dir / "j8").string() + " > /dev/null");
  const std::string agg1 = slurp(dir / "j1" / "aggregate.csv");
  const std::string agg8 = slurp(dir / "j8" / "aggregate.csv");
  const bool same = a == 0 && b == 0 && !agg1.empty() && agg1 == agg8;

  // Rebuild run 3 of the second variant in-process and compare with the CSV the CLI wrote.
  const ExperimentConfig c = load_config(cfg);
  const auto problem = std::make_shared<const Problem>(Problem::generate(c.problem));
  const auto plan = std::make_shared<const SchedulerPlan>(build_plan(c, c.sweep.at(1)));
  const RunConfig rc{plan, problem, c.theta0, derive_seed(*c.seed, 3), c.record_every};
  const Trace first = sgd_run(rc);
  const Trace second = sgd_run(rc);
  std::ostringstream os;
  write_trace_csv(os, first);
  const bool replay = first == second && os.str() == slurp(dir / "j8" / "traces" / (c.sweep[1].name + "_run3.csv"));
  fs::remove_all(dir);
  return {same && replay, std::string("aggregate.csv ") + (same ? "identical" : "DIFFERS") + " across --jobs 1/8 (" +
                              std::to_string(agg1.size()) + " bytes); replay " + (replay ? "exact" : "MISMATCH")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"cosine step-sum identities", 1, cosine_identities},
      {"mini-batch moments by enumeration", 1, enumeration},
      {"closed forms dominate exact sums", 30, domination_grid},
      {"nonconvex bound holds in every regime", 120, nonconvex_bound},
      {"convex bound holds", 60, convex_bound},
      {"noise-floor ordering", 120, asymptote_ordering},
      {"growing rate separates from constant rate", 180, rate_separation},
      {"growing batch rate in T", 180, growing_batch_rate},
      {"shrinking batch variance grows", 1, control_growth},
      {"sweep and replay determinism", 60, determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < criteria[k].budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %2zu %s [%.2f s of %.0f s]: %s%s\n", pass ? "PASS" : "FAIL", k + 1, criteria[k].name, secs,
                criteria[k].budget_s, o.detail.c_str(), in_time ? "" : " (over time budget)");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
