// batchlr: schedules, bounds and Monte-Carlo verification from a JSON config.
//
// Exit codes: 0 every verdict passed, 1 some verdict failed, 2 usage or config error.

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "batchlr/bounds.hpp"
#include "batchlr/config.hpp"
#include "batchlr/engine.hpp"
#include "batchlr/errors.hpp"
#include "batchlr/harness.hpp"
#include "batchlr/problems.hpp"
#include "batchlr/report_io.hpp"
#include "batchlr/rng.hpp"
#include "batchlr/schedules.hpp"

namespace fs = std::filesystem;
using namespace batchlr;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::string out;
  std::string format;
  std::size_t jobs = 1;
  bool traces = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t master_seed(const Options& opt, const ExperimentConfig& cfg) {
  if (opt.seed) return *opt.seed;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("SCHED_BOUND_SEED"); env && *env) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || *end != '\0' || env[0] == '-') {
      throw UsageError(std::string("SCHED_BOUND_SEED is not a nonnegative integer: ") + env);
    }
    return v;
  }
  return 0;
}

// Writes `body` to out/name when --out is given, otherwise to stdout.
void emit(const Options& opt, const std::string& name, const std::string& body,
          std::vector<std::string>& files) {
  if (opt.out.empty()) {
    std::cout << body;
    return;
  }
  std::ofstream f(fs::path(opt.out) / name, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + (fs::path(opt.out) / name).string());
  f << body;
  files.push_back(name);
}

void prepare_out(const Options& opt) {
  if (!opt.out.empty()) fs::create_directories(opt.out);
}

void finish_out(const Options& opt, const std::vector<std::string>& files,
                const std::string& command, const ExperimentConfig& cfg) {
  if (opt.out.empty()) return;
  write_manifest(opt.out, files, {{"command", command}, {"config", opt.config}, {"name", cfg.name}});
}

struct Loaded {
  ExperimentConfig cfg;
  std::shared_ptr<const Problem> problem;
};

Loaded load(const Options& opt) {
  Loaded l;
  l.cfg = load_config(opt.config);
  l.problem = std::make_shared<const Problem>(Problem::generate(l.cfg.problem));
  return l;
}

std::string text_or(const Options& opt, const std::string& fallback) {
  if (opt.format.empty()) return fallback;
  return opt.format;
}

int cmd_schedule(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  const SchedulerPlan plan = build_plan(l.cfg, l.cfg.plan);
  std::vector<std::string> files;
  if (text_or(opt, "csv") == "json") {
    nlohmann::json j = schedule_json(plan);
    j["validation"] = to_json(validate_plan(plan));
    emit(opt, "schedule.json", j.dump(2) + "\n", files);
  } else {
    std::ostringstream os;
    write_schedule_csv(os, plan);
    emit(opt, "schedule.csv", os.str(), files);
  }
  finish_out(opt, files, "schedule", l.cfg);
  return kExitPass;
}

int cmd_bounds(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  const SchedulerPlan plan = build_plan(l.cfg, l.cfg.plan);
  const ProblemConstants consts = constants_for(*l.problem, l.cfg.theta0, plan_eta_max(plan));
  const BoundReport report = bound_report(plan, consts);
  std::vector<std::string> files;
  const std::string fmt = text_or(opt, "table");
  if (fmt == "json") {
    nlohmann::json j = to_json(report);
    j["constants"] = to_json(consts);
    emit(opt, "bounds.json", j.dump(2) + "\n", files);
  } else if (fmt == "csv") {
    std::ostringstream os;
    write_bound_csv(os, report);
    emit(opt, "bounds.csv", os.str(), files);
  } else {
    emit(opt, "bounds.txt", render_bound_table(report), files);
  }
  finish_out(opt, files, "bounds", l.cfg);
  return report.all_dominated() ? kExitPass : kExitFail;
}

int cmd_run(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  auto plan = std::make_shared<const SchedulerPlan>(build_plan(l.cfg, l.cfg.plan));
  const std::uint64_t master = master_seed(opt, l.cfg);
  RunConfig rc{plan, l.problem, l.cfg.theta0, derive_seed(master, 0), l.cfg.record_every};
  std::vector<std::string> files;
  int code = kExitPass;
  Trace trace;
  try {
    trace = sgd_run(rc);
  } catch (const DivergedError& e) {
    std::cerr << "diverged: " << e.what() << " (last finite step " << e.last_finite_step()
              << ")\n";
    code = kExitFail;
  }
  if (code == kExitPass) {
    const std::string stem =
        "trace_" + std::string(to_string(plan->case_tag)) + "_seed" + std::to_string(master);
    if (text_or(opt, "csv") == "json") {
      emit(opt, stem + ".json", to_json(trace).dump(2) + "\n", files);
    } else {
      std::ostringstream os;
      write_trace_csv(os, trace);
      emit(opt, stem + ".csv", os.str(), files);
    }
  }
  finish_out(opt, files, "run", l.cfg);
  return code;
}

std::vector<RunConfig> seed_runs(const std::shared_ptr<const SchedulerPlan>& plan,
                                 const Loaded& l, std::uint64_t master, std::size_t seeds) {
  std::vector<RunConfig> runs;
  runs.reserve(seeds);
  for (std::size_t i = 0; i < seeds; ++i) {
    runs.push_back({plan, l.problem, l.cfg.theta0, derive_seed(master, i), l.cfg.record_every});
  }
  return runs;
}

int cmd_verify(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  auto plan = std::make_shared<const SchedulerPlan>(build_plan(l.cfg, l.cfg.plan));
  Experiment e;
  e.name = l.cfg.name;
  e.measure = l.cfg.measure;
  e.slack_se = l.cfg.slack_se;
  e.runs = seed_runs(plan, l, master_seed(opt, l.cfg), opt.seeds.value_or(l.cfg.seeds));
  const VerdictReport v = verify(e, opt.jobs);
  std::vector<std::string> files;
  if (text_or(opt, "table") == "json") {
    std::cout << to_json(v).dump(2) << '\n';
  } else {
    std::cout << render_verdict_table(v);
  }
  if (!opt.out.empty()) {
    std::ofstream f(fs::path(opt.out) / "verdict.json");
    f << to_json(v).dump(2) << '\n';
    files.push_back("verdict.json");
  }
  finish_out(opt, files, "verify", l.cfg);
  return v.pass ? kExitPass : kExitFail;
}

int cmd_sweep(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  const std::vector<PlanSpec> variants =
      l.cfg.sweep.empty() ? std::vector<PlanSpec>{l.cfg.plan} : l.cfg.sweep;
  const std::uint64_t master = master_seed(opt, l.cfg);
  const std::size_t seeds = opt.seeds.value_or(l.cfg.seeds);

  std::vector<std::shared_ptr<const SchedulerPlan>> plans;
  std::vector<RunConfig> runs;
  for (const auto& spec : variants) {
    plans.push_back(std::make_shared<const SchedulerPlan>(build_plan(l.cfg, spec)));
    // Same seed list for every variant, so variants are paired run by run.
    for (auto& rc : seed_runs(plans.back(), l, master, seeds)) runs.push_back(std::move(rc));
  }

  std::vector<RunOutcome> outcomes(runs.size());
  const bool write_traces = opt.traces && !opt.out.empty();
  if (write_traces) fs::create_directories(fs::path(opt.out) / "traces");
  parallel_for(runs.size(), opt.jobs, [&](std::size_t i) {
    try {
      outcomes[i].trace = sgd_run(runs[i]);
    } catch (const DivergedError& e) {
      outcomes[i].diverged_at = e.last_finite_step();
      outcomes[i].error = e.what();
    }
    if (write_traces && outcomes[i].trace) {
      const std::string name =
          variants[i / seeds].name + "_run" + std::to_string(i % seeds) + ".csv";
      std::ofstream f(fs::path(opt.out) / "traces" / name, std::ios::binary);
      write_trace_csv(f, *outcomes[i].trace);
    }
  });

  std::ostringstream agg;
  std::ostringstream summary;
  agg << "variant,case,t,mean,standard_error\n";
  summary << "variant,case,T,seeds,min_t,min_mean,min_se,rhs_exact,rhs_bound,vacuous,pass\n";
  nlohmann::json verdicts = nlohmann::json::array();
  bool all_pass = true;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    Experiment e;
    e.name = variants[k].name;
    e.measure = l.cfg.measure;
    e.slack_se = l.cfg.slack_se;
    e.runs.assign(runs.begin() + static_cast<std::ptrdiff_t>(k * seeds),
                  runs.begin() + static_cast<std::ptrdiff_t>((k + 1) * seeds));
    const std::vector<RunOutcome> mine(outcomes.begin() + static_cast<std::ptrdiff_t>(k * seeds),
                                       outcomes.begin() + static_cast<std::ptrdiff_t>((k + 1) * seeds));
    const VerdictReport v = judge(e, mine);
    all_pass = all_pass && v.pass;
    for (const auto& s : v.steps) {
      agg << v.name << ',' << v.case_tag << ',' << s.t << ',' << format_double(s.mean) << ','
          << format_double(s.standard_error) << '\n';
    }
    summary << v.name << ',' << v.case_tag << ',' << plans[k]->structure.total_steps << ','
            << v.seeds << ',' << v.min_t << ',' << format_double(v.min_mean) << ','
            << format_double(v.min_se) << ',' << format_double(v.rhs_exact) << ','
            << (v.rhs_bound ? format_double(*v.rhs_bound) : "") << ','
            << (v.vacuous_exact ? "yes" : "no") << ',' << (v.pass ? "pass" : "fail") << '\n';
    verdicts.push_back(to_json(v));
  }

  std::vector<std::string> files;
  if (opt.out.empty()) {
    std::cout << (text_or(opt, "csv") == "json" ? verdicts.dump(2) + "\n" : summary.str());
  } else {
    emit(opt, "aggregate.csv", agg.str(), files);
    emit(opt, "summary.csv", summary.str(), files);
    emit(opt, "verdicts.json", verdicts.dump(2) + "\n", files);
    if (write_traces) {
      for (std::size_t i = 0; i < runs.size(); ++i) {
        if (outcomes[i].trace) {
          files.push_back("traces/" + variants[i / seeds].name + "_run" +
                          std::to_string(i % seeds) + ".csv");
        }
      }
    }
    std::cout << summary.str();
  }
  finish_out(opt, files, "sweep", l.cfg);
  return all_pass ? kExitPass : kExitFail;
}

int cmd_enumerate(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  const Problem& p = *l.problem;
  const double sigma2 = p.certificate().sigma2;
  const std::vector<double> full = p.full_gradient(l.cfg.theta0);
  double full_norm = 0.0;
  for (double g : full) full_norm += g * g;
  full_norm = std::sqrt(full_norm);

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "b,batches,mean_rel_error,variance,sigma2_over_b,pass\n";
  bool all_pass = true;
  for (std::size_t b : l.cfg.enumerate.batch_sizes) {
    const BatchMoments m = enumerate_batch_moments(p, l.cfg.theta0, b, l.cfg.enumerate.limit);
    double err = 0.0;
    for (std::size_t j = 0; j < full.size(); ++j) err += (m.mean[j] - full[j]) * (m.mean[j] - full[j]);
    const double rel = std::sqrt(err) / std::max(full_norm, 1e-300);
    const double cap = sigma2 / static_cast<double>(b);
    const bool ok = rel <= 1e-12 && m.variance <= cap * (1.0 + 1e-12) + 1e-300;
    all_pass = all_pass && ok;
    csv << b << ',' << m.batches << ',' << format_double(rel) << ',' << format_double(m.variance)
        << ',' << format_double(cap) << ',' << (ok ? "pass" : "fail") << '\n';
    rows.push_back({{"b", b},
                    {"batches", m.batches},
                    {"mean_rel_error", rel},
                    {"variance", m.variance},
                    {"sigma2_over_b", cap},
                    {"pass", ok}});
  }
  std::vector<std::string> files;
  if (text_or(opt, "csv") == "json") {
    emit(opt, "enumerate.json", rows.dump(2) + "\n", files);
  } else {
    emit(opt, "enumerate.csv", csv.str(), files);
  }
  finish_out(opt, files, "enumerate", l.cfg);
  return all_pass ? kExitPass : kExitFail;
}

int cmd_constants(const Options& opt) {
  prepare_out(opt);
  const Loaded l = load(opt);
  const SchedulerPlan plan = build_plan(l.cfg, l.cfg.plan);
  nlohmann::json j;
  j["problem"] = {{"kind", to_string(l.cfg.problem.kind)},
                  {"n", l.problem->n()},
                  {"d", l.problem->dim()}};
  j["certificate"] = to_json(l.problem->certificate());
  j["constants"] = to_json(constants_for(*l.problem, l.cfg.theta0, plan_eta_max(plan)));
  std::vector<std::string> files;
  if (text_or(opt, "json") == "csv") {
    const auto& c = j["constants"];
    std::ostringstream os;
    os << "L_bar,f0_gap,sigma2,sigma2_flag,theta0_dist2,eta_max\n";
    os << format_double(c["L_bar"].get<double>()) << ','
       << format_double(c["f0_gap"].get<double>()) << ','
       << format_double(c["sigma2"].get<double>()) << ','
       << j["certificate"]["sigma2_flag"].get<std::string>() << ','
       << (c["theta0_dist2"].is_null() ? "" : format_double(c["theta0_dist2"].get<double>()))
       << ',' << format_double(c["eta_max"].get<double>()) << '\n';
    emit(opt, "constants.csv", os.str(), files);
  } else {
    emit(opt, "constants.json", j.dump(2) + "\n", files);
  }
  finish_out(opt, files, "constants", l.cfg);
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mini-batch SGD under batch-size and learning-rate schedules"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const std::vector<Command> commands = {
      {"schedule", "Dump the eta_t, b_t table of the plan", cmd_schedule},
      {"bounds", "Exact sums and closed-form bounds", cmd_bounds},
      {"run", "One seeded run, written as a trace", cmd_run},
      {"verify", "Monte-Carlo check of the bound for the plan", cmd_verify},
      {"sweep", "Paired runs over plan variants and seeds", cmd_sweep},
      {"enumerate", "Exact mini-batch moments by enumeration", cmd_enumerate},
      {"constants", "Certified problem constants", cmd_constants},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", opt.seed, "Master seed (default: config, then SCHED_BOUND_SEED)");
    sub->add_option("--seeds", opt.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--format", opt.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
    if (std::string(c.name) == "sweep") {
      sub->add_flag("--traces", opt.traces, "Also write one trace CSV per run under --out");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    try {
      return commands[k].fn(opt);
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const batchlr::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  return kExitUsage;
}
