#include "batchlr/schedules.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "batchlr/errors.hpp"

namespace batchlr {

namespace {

constexpr std::array<std::pair<LrFamily, std::string_view>, 8> kLrNames{{
    {LrFamily::Constant, "constant"},
    {LrFamily::Diminishing, "diminishing"},
    {LrFamily::Cosine, "cosine"},
    {LrFamily::PolynomialDecay, "polynomial_decay"},
    {LrFamily::ExponentialGrowth, "exponential_growth"},
    {LrFamily::PolynomialGrowth, "polynomial_growth"},
    {LrFamily::WarmupConstant, "warmup_constant"},
    {LrFamily::WarmupCosine, "warmup_cosine"},
}};

constexpr std::array<std::pair<BsFamily, std::string_view>, 4> kBsNames{{
    {BsFamily::Constant, "constant"},
    {BsFamily::PolynomialGrowth, "polynomial_growth"},
    {BsFamily::ExponentialGrowth, "exponential_growth"},
    {BsFamily::DecayingControl, "decaying_control"},
}};

constexpr std::array<std::pair<CaseTag, std::string_view>, 5> kCaseNames{{
    {CaseTag::CaseI, "i"},
    {CaseTag::CaseII, "ii"},
    {CaseTag::CaseIII, "iii"},
    {CaseTag::CaseIV, "iv"},
    {CaseTag::Control, "control"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table,
                         Enum value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
std::optional<Enum> parse_name(const std::array<std::pair<Enum, std::string_view>, N>& table,
                               std::string_view name) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  return std::nullopt;
}

bool is_integral(double x) { return std::isfinite(x) && x == std::floor(x); }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ArgumentError(message);
}

void check_lr_fields(const LrSchedule& lr) {
  switch (lr.family) {
    case LrFamily::Constant:
    case LrFamily::Diminishing:
      require(lr.eta_max > 0.0, "learning rate eta_max must be positive");
      break;
    case LrFamily::PolynomialDecay:
      require(lr.p > 0.0, "polynomial decay exponent p must be positive");
      [[fallthrough]];
    case LrFamily::Cosine:
      require(lr.eta_max > 0.0, "learning rate eta_max must be positive");
      require(lr.eta_min >= 0.0 && lr.eta_min <= lr.eta_max,
              "eta_min must satisfy 0 <= eta_min <= eta_max");
      break;
    case LrFamily::ExponentialGrowth:
      require(lr.eta0 > 0.0, "eta0 must be positive");
      require(lr.gamma > 1.0, "growth factor gamma must exceed 1");
      break;
    case LrFamily::PolynomialGrowth:
      require(lr.eta0 > 0.0, "eta0 must be positive");
      require(lr.a2 > 0.0, "polynomial growth slope a2 must be positive");
      require(lr.c2 > 0.0, "polynomial growth exponent c2 must be positive");
      break;
    case LrFamily::WarmupCosine:
      require(lr.eta_min >= 0.0 && lr.eta_min <= lr.warmup_peak(),
              "eta_min must satisfy 0 <= eta_min <= gamma^Mw * eta0");
      [[fallthrough]];
    case LrFamily::WarmupConstant:
      require(lr.eta0 > 0.0, "eta0 must be positive");
      require(lr.gamma > 1.0, "growth factor gamma must exceed 1");
      require(lr.warmup_increases >= 0, "warm-up increase count must be nonnegative");
      break;
  }
}

void check_bs_fields(const BsSchedule& bs, std::size_t n) {
  require(bs.b0 >= 1.0, "initial batch size b0 must be at least 1");
  switch (bs.family) {
    case BsFamily::Constant:
    case BsFamily::DecayingControl:
      require(is_integral(bs.b0), "batch size b0 must be an integer");
      break;
    case BsFamily::ExponentialGrowth:
      require(is_integral(bs.b0), "batch size b0 must be an integer");
      require(bs.delta > 1.0, "batch growth factor delta must exceed 1");
      break;
    case BsFamily::PolynomialGrowth:
      require(bs.a > 0.0, "polynomial batch slope a must be positive");
      require(bs.c > 1.0, "polynomial batch exponent c must exceed 1");
      break;
  }
  require(n >= 1, "sample count n must be at least 1");
}

// Rate of block-constant families at block m.
double block_rate(const LrSchedule& lr, std::size_t m) {
  const double md = static_cast<double>(m);
  switch (lr.family) {
    case LrFamily::ExponentialGrowth:
      return std::pow(lr.gamma, md) * lr.eta0;
    case LrFamily::PolynomialGrowth:
      return std::pow(lr.a2 * md + lr.eta0, lr.c2);
    case LrFamily::WarmupConstant:
    case LrFamily::WarmupCosine: {
      const auto mw = static_cast<std::size_t>(lr.warmup_increases);
      return std::pow(lr.gamma, static_cast<double>(std::min(m, mw))) * lr.eta0;
    }
    default:
      return lr.eta_max;
  }
}

double cosine_value(double eta_min, double eta_max, double epoch, double span) {
  return eta_min +
         0.5 * (eta_max - eta_min) * (1.0 + std::cos(epoch * std::numbers::pi / span));
}

}  // namespace

std::string_view to_string(LrFamily family) { return name_of(kLrNames, family); }
std::string_view to_string(BsFamily family) { return name_of(kBsNames, family); }
std::string_view to_string(CaseTag tag) { return name_of(kCaseNames, tag); }
std::optional<LrFamily> parse_lr_family(std::string_view name) {
  return parse_name(kLrNames, name);
}
std::optional<BsFamily> parse_bs_family(std::string_view name) {
  return parse_name(kBsNames, name);
}
std::optional<CaseTag> parse_case_tag(std::string_view name) {
  return parse_name(kCaseNames, name);
}

LrSchedule LrSchedule::constant(double eta) {
  LrSchedule s;
  s.family = LrFamily::Constant;
  s.eta_max = eta;
  s.eta_min = eta;
  return s;
}

LrSchedule LrSchedule::diminishing(double eta_max) {
  LrSchedule s;
  s.family = LrFamily::Diminishing;
  s.eta_max = eta_max;
  return s;
}

LrSchedule LrSchedule::cosine(double eta_min, double eta_max) {
  LrSchedule s;
  s.family = LrFamily::Cosine;
  s.eta_min = eta_min;
  s.eta_max = eta_max;
  return s;
}

LrSchedule LrSchedule::polynomial_decay(double eta_min, double eta_max, double p) {
  LrSchedule s;
  s.family = LrFamily::PolynomialDecay;
  s.eta_min = eta_min;
  s.eta_max = eta_max;
  s.p = p;
  return s;
}

LrSchedule LrSchedule::exponential_growth(double eta0, double gamma) {
  LrSchedule s;
  s.family = LrFamily::ExponentialGrowth;
  s.eta0 = eta0;
  s.gamma = gamma;
  return s;
}

LrSchedule LrSchedule::polynomial_growth(double eta0, double a2, double c2) {
  LrSchedule s;
  s.family = LrFamily::PolynomialGrowth;
  s.eta0 = eta0;
  s.a2 = a2;
  s.c2 = c2;
  return s;
}

LrSchedule LrSchedule::warmup_constant(double eta0, double gamma, int warmup_increases) {
  LrSchedule s;
  s.family = LrFamily::WarmupConstant;
  s.eta0 = eta0;
  s.gamma = gamma;
  s.warmup_increases = warmup_increases;
  s.eta_max = s.warmup_peak();
  return s;
}

LrSchedule LrSchedule::warmup_cosine(double eta0, double gamma, int warmup_increases,
                                     double eta_min) {
  LrSchedule s = warmup_constant(eta0, gamma, warmup_increases);
  s.family = LrFamily::WarmupCosine;
  s.eta_min = eta_min;
  return s;
}

bool LrSchedule::is_decaying() const {
  return family == LrFamily::Constant || family == LrFamily::Diminishing ||
         family == LrFamily::Cosine || family == LrFamily::PolynomialDecay;
}

bool LrSchedule::is_growth() const {
  return family == LrFamily::ExponentialGrowth || family == LrFamily::PolynomialGrowth;
}

bool LrSchedule::is_warmup() const {
  return family == LrFamily::WarmupConstant || family == LrFamily::WarmupCosine;
}

double LrSchedule::warmup_peak() const {
  return std::pow(gamma, static_cast<double>(warmup_increases)) * eta0;
}

BsSchedule BsSchedule::constant(std::size_t b) {
  BsSchedule s;
  s.family = BsFamily::Constant;
  s.b0 = static_cast<double>(b);
  return s;
}

BsSchedule BsSchedule::polynomial_growth(double a, double b0, double c) {
  BsSchedule s;
  s.family = BsFamily::PolynomialGrowth;
  s.a = a;
  s.b0 = b0;
  s.c = c;
  return s;
}

BsSchedule BsSchedule::exponential_growth(std::size_t b0, double delta) {
  BsSchedule s;
  s.family = BsFamily::ExponentialGrowth;
  s.b0 = static_cast<double>(b0);
  s.delta = delta;
  return s;
}

BsSchedule BsSchedule::decaying_control(std::size_t b) {
  BsSchedule s;
  s.family = BsFamily::DecayingControl;
  s.b0 = static_cast<double>(b);
  return s;
}

bool BsSchedule::is_growth() const {
  return family == BsFamily::PolynomialGrowth || family == BsFamily::ExponentialGrowth;
}

double BsSchedule::block_value(int m) const {
  const double md = static_cast<double>(m);
  switch (family) {
    case BsFamily::PolynomialGrowth:
      return std::pow(a * md + b0, c);
    case BsFamily::ExponentialGrowth:
      return std::pow(delta, md) * b0;
    case BsFamily::Constant:
    case BsFamily::DecayingControl:
      break;
  }
  return b0;
}

std::size_t BlockStructure::block_of(std::size_t t) const {
  if (empty()) throw StateError("block structure has not been built");
  if (t >= total_steps) {
    throw RangeError("step " + std::to_string(t) + " outside [0, " +
                     std::to_string(total_steps) + ")");
  }
  const auto it = std::upper_bound(block_ends.begin(), block_ends.end(), t);
  return static_cast<std::size_t>(it - block_ends.begin());
}

int BlockStructure::epoch_of(std::size_t t) const {
  const std::size_t m = block_of(t);
  const std::size_t within = t - block_start(m);
  return epochs_before[m] + static_cast<int>(within / steps_per_epoch[m]);
}

int BlockStructure::total_epochs() const {
  if (epochs_per_block.empty()) return 0;
  return epochs_before.back() + epochs_per_block.back();
}

BlockStructure build_structure(std::size_t n, const BsSchedule& bs,
                               std::span<const int> epochs_per_block) {
  if (n == 0) throw ArgumentError("sample count n must be at least 1");
  if (epochs_per_block.empty()) throw ArgumentError("epochs_per_block must not be empty");

  BlockStructure s;
  s.n = n;
  s.epochs_per_block.assign(epochs_per_block.begin(), epochs_per_block.end());
  std::size_t cumulative = 0;
  int epochs = 0;
  for (std::size_t m = 0; m < s.epochs_per_block.size(); ++m) {
    const int e = s.epochs_per_block[m];
    if (e < 1) throw ArgumentError("every block needs at least one epoch");
    const double raw = bs.block_value(static_cast<int>(m));
    if (!std::isfinite(raw)) throw NumericError("batch size formula overflowed");
    double rounded = std::max(1.0, std::round(raw));
    if (rounded > static_cast<double>(n)) {
      rounded = static_cast<double>(n);
      s.capped = true;
    }
    const auto b = static_cast<std::size_t>(rounded);
    const std::size_t k = (n + b - 1) / b;
    s.batch_per_block.push_back(b);
    s.steps_per_epoch.push_back(k);
    s.epochs_before.push_back(epochs);
    cumulative += k * static_cast<std::size_t>(e);
    epochs += e;
    s.block_ends.push_back(cumulative);
  }
  s.total_steps = cumulative;
  s.increases = static_cast<int>(s.epochs_per_block.size()) - 1;
  return s;
}

std::optional<CaseTag> classify(const LrSchedule& lr, const BsSchedule& bs) {
  if (bs.family == BsFamily::DecayingControl) return CaseTag::Control;
  if (bs.family == BsFamily::Constant) {
    if (lr.is_decaying()) return CaseTag::CaseI;
    return std::nullopt;
  }
  if (lr.is_decaying()) return CaseTag::CaseII;
  if (lr.is_growth()) return CaseTag::CaseIII;
  return CaseTag::CaseIV;
}

SchedulerPlan assemble_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                            std::span<const int> epochs_per_block) {
  check_lr_fields(lr);
  check_bs_fields(bs, n);
  const auto tag = classify(lr, bs);
  if (!tag) {
    throw UnsupportedScheduleError(std::string("learning-rate family '") +
                                   std::string(to_string(lr.family)) +
                                   "' is not paired with a constant batch size in any regime");
  }
  SchedulerPlan plan;
  plan.lr = lr;
  if (lr.is_warmup()) plan.lr.eta_max = lr.warmup_peak();
  plan.bs = bs;
  plan.structure = build_structure(n, bs, epochs_per_block);
  plan.case_tag = *tag;
  return plan;
}

SchedulerPlan make_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                        std::span<const int> epochs_per_block) {
  SchedulerPlan plan = assemble_plan(lr, bs, n, epochs_per_block);
  const ValidationReport report = validate_plan(plan);
  if (!report.accepted) {
    std::string failed;
    for (const auto& c : report.checks) {
      if (!c.passed) failed += (failed.empty() ? "" : "; ") + c.name + ": " + c.detail;
    }
    throw ConstraintError("plan rejected: " + failed);
  }
  return plan;
}

double lr_at(const SchedulerPlan& plan, std::size_t t) {
  const BlockStructure& s = plan.structure;
  const std::size_t m = s.block_of(t);  // range and state checks
  const LrSchedule& lr = plan.lr;
  switch (lr.family) {
    case LrFamily::Constant:
      return lr.eta_max;
    case LrFamily::Diminishing:
      return lr.eta_max / std::sqrt(static_cast<double>(t) + 1.0);
    case LrFamily::Cosine:
      return cosine_value(lr.eta_min, lr.eta_max, s.epoch_of(t), s.total_epochs());
    case LrFamily::PolynomialDecay: {
      const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(s.total_steps);
      return (lr.eta_max - lr.eta_min) * std::pow(frac, lr.p) + lr.eta_min;
    }
    case LrFamily::ExponentialGrowth:
    case LrFamily::PolynomialGrowth:
    case LrFamily::WarmupConstant:
      return block_rate(lr, m);
    case LrFamily::WarmupCosine: {
      const auto mw = static_cast<std::size_t>(lr.warmup_increases);
      if (m <= mw) return block_rate(lr, m);
      if (mw + 1 >= s.block_count()) return block_rate(lr, m);
      const int warm_epochs = s.epochs_before[mw + 1];
      const int span = s.total_epochs() - warm_epochs;
      return cosine_value(lr.eta_min, lr.warmup_peak(), s.epoch_of(t) - warm_epochs, span);
    }
  }
  return lr.eta_max;
}

std::size_t bs_at(const SchedulerPlan& plan, std::size_t t) {
  const BlockStructure& s = plan.structure;
  const std::size_t m = s.block_of(t);
  if (plan.bs.family == BsFamily::DecayingControl) {
    const auto b = static_cast<std::size_t>(plan.bs.b0);
    const std::size_t div = t + 1;
    const std::size_t v = (b + div - 1) / div;
    return std::clamp<std::size_t>(v, 1, s.n);
  }
  return s.batch_per_block[m];
}

double plan_eta_max(const SchedulerPlan& plan) {
  const std::size_t last = plan.structure.total_steps - 1;
  double hi = std::max(lr_at(plan, 0), lr_at(plan, last));
  if (plan.lr.is_warmup()) hi = std::max(hi, plan.lr.warmup_peak());
  return hi;
}

double plan_eta_min(const SchedulerPlan& plan) {
  const std::size_t last = plan.structure.total_steps - 1;
  return std::min(lr_at(plan, 0), lr_at(plan, last));
}

const ValidationCheck* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool ValidationReport::passed(std::string_view name) const {
  const ValidationCheck* c = find(name);
  return c == nullptr || c->passed;
}

ValidationReport validate_plan(const SchedulerPlan& plan) {
  ValidationReport report;
  report.case_tag = plan.case_tag;
  auto add = [&](std::string name, bool ok, std::string detail) {
    report.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  const BlockStructure& s = plan.structure;
  if (s.empty()) {
    add("structure_built", false, "block structure has not been built");
    report.accepted = false;
    return report;
  }
  add("structure_built", true, "T = " + std::to_string(s.total_steps));

  const auto tag = classify(plan.lr, plan.bs);
  add("case_recognized", tag && *tag == plan.case_tag,
      tag ? std::string("pairing implies case ") + std::string(to_string(*tag))
          : "pairing fits no regime");

  // Scan every step: positivity and monotonicity of both schedules.
  const std::size_t T = s.total_steps;
  std::size_t warm_end = 0;
  if (plan.lr.is_warmup()) {
    const auto mw = static_cast<std::size_t>(std::max(plan.lr.warmup_increases, 0));
    warm_end = mw < s.block_count() ? s.block_ends[mw] : T;
  }
  bool positive = true;
  bool lr_ok = true;
  bool bs_ok = true;
  std::size_t lr_violation = 0;
  double prev_lr = 0.0;
  std::size_t prev_b = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const double eta = lr_at(plan, t);
    const std::size_t b = bs_at(plan, t);
    if (!(eta > 0.0) || !std::isfinite(eta)) positive = false;
    if (t > 0) {
      bool step_ok = true;
      if (plan.lr.is_decaying()) {
        step_ok = eta <= prev_lr;
      } else if (plan.lr.is_growth()) {
        step_ok = eta >= prev_lr;
      } else if (t < warm_end) {
        step_ok = eta >= prev_lr;
      } else if (t > warm_end) {
        step_ok = eta <= prev_lr;
      }
      if (!step_ok && lr_ok) {
        lr_ok = false;
        lr_violation = t;
      }
      if (plan.bs.family == BsFamily::DecayingControl) {
        if (b > prev_b) bs_ok = false;
      } else if (b < prev_b) {
        bs_ok = false;
      }
    }
    prev_lr = eta;
    prev_b = b;
  }
  add("positive_rates", positive, positive ? "all eta_t > 0" : "some eta_t <= 0");
  add("lr_monotone", lr_ok,
      lr_ok ? "learning rate follows its family's monotonicity"
            : "monotonicity broken at t = " + std::to_string(lr_violation));
  add("bs_monotone", bs_ok,
      bs_ok ? "batch size follows its family's monotonicity" : "batch size order broken");
  add("batch_within_n", !s.capped,
      s.capped ? "batch formula exceeds n = " + std::to_string(s.n) + " and was capped"
               : "all batch sizes <= n");

  const bool exp_joint = plan.bs.family == BsFamily::ExponentialGrowth &&
                         (plan.lr.family == LrFamily::ExponentialGrowth || plan.lr.is_warmup());
  if (exp_joint) {
    const double g2 = plan.lr.gamma * plan.lr.gamma;
    add("gamma_squared_below_delta", g2 < plan.bs.delta,
        "gamma^2 = " + fmt(g2) + ", delta = " + fmt(plan.bs.delta));
  }
  if (plan.lr.family == LrFamily::PolynomialGrowth &&
      plan.bs.family == BsFamily::PolynomialGrowth) {
    const double gap = plan.bs.c - 2.0 * plan.lr.c2;
    add("poly_exponent_gap", gap > 1.0, "c1 - 2 c2 = " + fmt(gap));
  }
  if (plan.lr.is_warmup()) {
    const bool ok = plan.lr.warmup_increases < s.increases;
    add("warmup_before_end", ok,
        "Mw = " + std::to_string(plan.lr.warmup_increases) +
            ", M = " + std::to_string(s.increases));
  }

  const bool strict = plan.case_tag == CaseTag::CaseIII || plan.case_tag == CaseTag::CaseIV;
  for (const auto& c : report.checks) {
    if (c.passed) continue;
    if (strict || c.name != "batch_within_n") report.accepted = false;
  }
  report.non_convergent = plan.case_tag == CaseTag::Control;
  return report;
}

}  // namespace batchlr
