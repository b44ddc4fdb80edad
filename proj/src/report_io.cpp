#include "batchlr/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "batchlr/errors.hpp"

namespace batchlr {

namespace {

using json = nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::optional<bool> opt_bool(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<bool>();
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string pretty(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

std::string pretty(const std::optional<double>& v) { return v ? pretty(*v) : "-"; }

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "t,eta,b,grad_norm2,loss,subopt\n";
  for (const auto& r : trace.records) {
    os << r.t << ',' << format_double(r.eta) << ',' << r.b << ',' << format_double(r.grad_norm2)
       << ',' << format_double(r.loss) << ',' << format_double(r.subopt) << '\n';
  }
}

json to_json(const Trace& trace) {
  json rec = json::array();
  for (const auto& r : trace.records) {
    rec.push_back({{"t", r.t},
                   {"eta", r.eta},
                   {"b", r.b},
                   {"grad_norm2", r.grad_norm2},
                   {"loss", r.loss},
                   {"subopt", std::isnan(r.subopt) ? json(nullptr) : json(r.subopt)}});
  }
  return {{"seed", trace.seed}, {"final_theta", trace.final_theta}, {"records", rec}};
}

void write_schedule_csv(std::ostream& os, const SchedulerPlan& plan) {
  os << "t,block,epoch,eta,b\n";
  const BlockStructure& s = plan.structure;
  for (std::size_t t = 0; t < s.total_steps; ++t) {
    os << t << ',' << s.block_of(t) << ',' << s.epoch_of(t) << ',' << format_double(lr_at(plan, t))
       << ',' << bs_at(plan, t) << '\n';
  }
}

json schedule_json(const SchedulerPlan& plan) {
  const BlockStructure& s = plan.structure;
  json rows = json::array();
  for (std::size_t t = 0; t < s.total_steps; ++t) {
    rows.push_back({{"t", t},
                    {"block", s.block_of(t)},
                    {"epoch", s.epoch_of(t)},
                    {"eta", lr_at(plan, t)},
                    {"b", bs_at(plan, t)}});
  }
  return {{"case", to_string(plan.case_tag)},
          {"lr_family", to_string(plan.lr.family)},
          {"bs_family", to_string(plan.bs.family)},
          {"n", s.n},
          {"T", s.total_steps},
          {"M", s.increases},
          {"epochs_per_block", s.epochs_per_block},
          {"batch_per_block", s.batch_per_block},
          {"steps_per_epoch", s.steps_per_epoch},
          {"block_ends", s.block_ends},
          {"capped", s.capped},
          {"steps", rows}};
}

json to_json(const ValidationReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"case", to_string(report.case_tag)},
          {"accepted", report.accepted},
          {"non_convergent", report.non_convergent},
          {"checks", checks}};
}

json to_json(const Certificate& cert) {
  json j = {{"L_bar", cert.L_bar},
            {"L_max", cert.L_max},
            {"sigma2", cert.sigma2},
            {"sigma2_flag", cert.sigma2_exact ? "exact" : "upper-bound"},
            {"f_lower", cert.f_lower},
            {"f_star", opt(cert.f_star)}};
  j["theta_star"] = cert.theta_star ? json(*cert.theta_star) : json(nullptr);
  return j;
}

json to_json(const ProblemConstants& c) {
  return {{"L_bar", c.L_bar},
          {"f0_gap", c.f0_gap},
          {"sigma2", c.sigma2},
          {"theta0_dist2", opt(c.theta0_dist2)},
          {"eta_max", c.eta_max}};
}

json to_json(const BoundReport& r) {
  return {{"case", to_string(r.case_tag)},
          {"T", r.total_steps},
          {"B_exact", r.B_exact},
          {"V_exact", r.V_exact},
          {"B_bound", opt(r.B_bound)},
          {"V_bound", opt(r.V_bound)},
          {"nonconvex_rhs_exact", r.nonconvex_rhs_exact},
          {"nonconvex_rhs_bound", opt(r.nonconvex_rhs_bound)},
          {"convex_rhs_exact", opt(r.convex_rhs_exact)},
          {"convex_rhs_bound", opt(r.convex_rhs_bound)},
          {"limsup_asymptote", opt(r.limsup_asymptote)},
          {"dominated",
           {{"B", r.dominated_B()}, {"V", r.dominated_V()}, {"rhs", r.dominated_rhs()}}},
          {"bound_note", r.bound_note}};
}

void write_bound_csv(std::ostream& os, const BoundReport& r) {
  os << "case,T,B_exact,B_bound,V_exact,V_bound,nonconvex_rhs_exact,nonconvex_rhs_bound,"
        "convex_rhs_exact,convex_rhs_bound,limsup_asymptote,dominated\n";
  os << to_string(r.case_tag) << ',' << r.total_steps << ',' << format_double(r.B_exact) << ','
     << cell(r.B_bound) << ',' << format_double(r.V_exact) << ',' << cell(r.V_bound) << ','
     << format_double(r.nonconvex_rhs_exact) << ',' << cell(r.nonconvex_rhs_bound) << ','
     << cell(r.convex_rhs_exact) << ',' << cell(r.convex_rhs_bound) << ','
     << cell(r.limsup_asymptote) << ',' << (r.all_dominated() ? "pass" : "fail") << '\n';
}

std::string render_bound_table(const BoundReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& name, double exact, const std::optional<double>& bound,
                 std::optional<bool> ok) {
    os << std::left << std::setw(12) << name << std::right << std::setw(16) << pretty(exact)
       << std::setw(16) << pretty(bound) << "  "
       << (ok ? (*ok ? "pass" : "FAIL") : "-") << '\n';
  };
  os << "case " << to_string(r.case_tag) << ", T = " << r.total_steps << '\n';
  os << std::left << std::setw(12) << "quantity" << std::right << std::setw(16) << "exact"
     << std::setw(16) << "bound" << "  dominated\n";
  auto flag = [](bool has, bool v) { return has ? std::optional<bool>(v) : std::nullopt; };
  row("B_T", r.B_exact, r.B_bound, flag(r.B_bound.has_value(), r.dominated_B()));
  row("V_T", r.V_exact, r.V_bound, flag(r.V_bound.has_value(), r.dominated_V()));
  row("nonconvex_rhs", r.nonconvex_rhs_exact, r.nonconvex_rhs_bound,
      flag(r.nonconvex_rhs_bound.has_value(), r.dominated_rhs()));
  if (r.convex_rhs_exact) {
    row("convex_rhs", *r.convex_rhs_exact, r.convex_rhs_bound,
        flag(r.convex_rhs_bound.has_value(), r.dominated_rhs()));
  }
  if (r.limsup_asymptote) os << "large-T limit of the bound: " << pretty(*r.limsup_asymptote) << '\n';
  if (!r.bound_note.empty()) os << "note: " << r.bound_note << '\n';
  return os.str();
}

json to_json(const VerdictReport& v) {
  json steps = json::array();
  for (const auto& s : v.steps) {
    steps.push_back({{"t", s.t}, {"mean", s.mean}, {"standard_error", s.standard_error}});
  }
  json fit = nullptr;
  if (v.rate_fit) {
    fit = {{"slope", v.rate_fit->slope},
           {"intercept", v.rate_fit->intercept},
           {"residual", v.rate_fit->residual},
           {"points", v.rate_fit->points}};
  }
  return {{"name", v.name},
          {"case", v.case_tag},
          {"measure", v.measure},
          {"seeds", v.seeds},
          {"min_t", v.min_t},
          {"min_mean", v.min_mean},
          {"min_se", v.min_se},
          {"initial_mean", v.initial_mean},
          {"mean_of_run_minima", v.mean_of_run_minima},
          {"rhs_exact", v.rhs_exact},
          {"rhs_bound", opt(v.rhs_bound)},
          {"pass_exact", v.pass_exact},
          {"pass_bound", opt(v.pass_bound)},
          {"vacuous_exact", v.vacuous_exact},
          {"vacuous_bound", opt(v.vacuous_bound)},
          {"slack_se", v.slack_se},
          {"pass", v.pass},
          {"warnings", v.warnings},
          {"rate_fit", fit},
          {"steps", steps}};
}

VerdictReport verdict_from_json(const json& j) {
  try {
    VerdictReport v;
    v.name = j.at("name").get<std::string>();
    v.case_tag = j.at("case").get<std::string>();
    v.measure = j.at("measure").get<std::string>();
    v.seeds = j.at("seeds").get<std::size_t>();
    v.min_t = j.at("min_t").get<std::size_t>();
    v.min_mean = j.at("min_mean").get<double>();
    v.min_se = j.at("min_se").get<double>();
    v.initial_mean = j.at("initial_mean").get<double>();
    v.mean_of_run_minima = j.at("mean_of_run_minima").get<double>();
    v.rhs_exact = j.at("rhs_exact").get<double>();
    v.rhs_bound = opt_double(j, "rhs_bound");
    v.pass_exact = j.at("pass_exact").get<bool>();
    v.pass_bound = opt_bool(j, "pass_bound");
    v.vacuous_exact = j.at("vacuous_exact").get<bool>();
    v.vacuous_bound = opt_bool(j, "vacuous_bound");
    v.slack_se = j.at("slack_se").get<double>();
    v.pass = j.at("pass").get<bool>();
    v.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (const auto& f = j.at("rate_fit"); !f.is_null()) {
      v.rate_fit = RateFit{f.at("slope").get<double>(), f.at("intercept").get<double>(),
                           f.at("residual").get<double>(), f.at("points").get<std::size_t>()};
    }
    for (const auto& s : j.at("steps")) {
      v.steps.push_back({s.at("t").get<std::size_t>(), s.at("mean").get<double>(),
                         s.at("standard_error").get<double>()});
    }
    return v;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed verdict report: ") + e.what());
  }
}

std::string render_verdict_table(const VerdictReport& v) {
  std::ostringstream os;
  os << v.name << " (case " << v.case_tag << ", " << v.measure << ", " << v.seeds << " seeds)\n";
  os << "  min_t mean   " << pretty(v.min_mean) << " at t = " << v.min_t << " (SE "
     << pretty(v.min_se) << ")\n";
  os << "  rhs exact    " << pretty(v.rhs_exact) << "  " << (v.pass_exact ? "pass" : "FAIL")
     << (v.vacuous_exact ? " (vacuous)" : "") << '\n';
  os << "  rhs bound    " << pretty(v.rhs_bound) << "  "
     << (v.pass_bound ? (*v.pass_bound ? "pass" : "FAIL") : "-")
     << (v.vacuous_bound.value_or(false) ? " (vacuous)" : "") << '\n';
  for (const auto& w : v.warnings) os << "  warning: " << w << '\n';
  os << "  verdict      " << (v.pass ? "PASS" : "FAIL") << '\n';
  return os.str();
}

void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files,
                    const json& extra) {
  json m = extra;
  m["files"] = files;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

}  // namespace batchlr
