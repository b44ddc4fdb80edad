#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace batchlr {

enum class LrFamily {
  Constant,
  Diminishing,
  Cosine,
  PolynomialDecay,
  ExponentialGrowth,
  PolynomialGrowth,
  WarmupConstant,
  WarmupCosine,
};

enum class BsFamily {
  Constant,
  PolynomialGrowth,
  ExponentialGrowth,
  DecayingControl,
};

/// Joint regime of a (batch size, learning rate) pair.
///   CaseI    constant batch, decaying rate
///   CaseII   growing batch, decaying rate
///   CaseIII  growing batch, growing rate
///   CaseIV   growing batch, warm-up then decaying rate
///   Control  decaying batch; intentionally non-convergent
enum class CaseTag { CaseI, CaseII, CaseIII, CaseIV, Control };

std::string_view to_string(LrFamily family);
std::string_view to_string(BsFamily family);
std::string_view to_string(CaseTag tag);
std::optional<LrFamily> parse_lr_family(std::string_view name);
std::optional<BsFamily> parse_bs_family(std::string_view name);
std::optional<CaseTag> parse_case_tag(std::string_view name);

/// Learning-rate rule. Only the fields relevant to `family` are read.
struct LrSchedule {
  LrFamily family = LrFamily::Constant;
  double eta_max = 0.0;
  double eta_min = 0.0;
  double eta0 = 0.0;        // initial rate of growth / warm-up families
  double p = 1.0;           // polynomial-decay exponent
  double gamma = 1.0;       // per-block growth factor
  double a2 = 0.0;          // polynomial-growth slope
  double c2 = 0.0;          // polynomial-growth exponent
  int warmup_increases = 0; // number of warm-up blocks after block 0

  static LrSchedule constant(double eta);
  static LrSchedule diminishing(double eta_max);
  static LrSchedule cosine(double eta_min, double eta_max);
  static LrSchedule polynomial_decay(double eta_min, double eta_max, double p);
  static LrSchedule exponential_growth(double eta0, double gamma);
  static LrSchedule polynomial_growth(double eta0, double a2, double c2);
  static LrSchedule warmup_constant(double eta0, double gamma, int warmup_increases);
  static LrSchedule warmup_cosine(double eta0, double gamma, int warmup_increases,
                                  double eta_min);

  bool is_decaying() const;
  bool is_growth() const;
  bool is_warmup() const;
  /// Rate reached at the end of warm-up, gamma^Mw * eta0.
  double warmup_peak() const;
};

/// Batch-size rule. For PolynomialGrowth `b0` is the base of (a*m + b0)^c.
struct BsSchedule {
  BsFamily family = BsFamily::Constant;
  double b0 = 1.0;
  double a = 0.0;
  double c = 1.0;
  double delta = 1.0;

  static BsSchedule constant(std::size_t b);
  static BsSchedule polynomial_growth(double a, double b0, double c);
  static BsSchedule exponential_growth(std::size_t b0, double delta);
  static BsSchedule decaying_control(std::size_t b);

  bool is_growth() const;
  /// Real-valued batch of block m before rounding and capping.
  double block_value(int m) const;
};

/// Epoch/block layout: block m runs E_m epochs of K_m = ceil(n / b_m) steps.
struct BlockStructure {
  std::size_t n = 0;
  std::vector<int> epochs_per_block;
  std::vector<std::size_t> batch_per_block;
  std::vector<std::size_t> steps_per_epoch;
  /// Cumulative step counts; block m covers [block_ends[m-1], block_ends[m]).
  std::vector<std::size_t> block_ends;
  /// Cumulative epochs before block m.
  std::vector<int> epochs_before;
  std::size_t total_steps = 0;
  /// Number of batch increases, i.e. blocks - 1.
  int increases = 0;
  /// True when some block's formula value exceeded n and was clipped.
  bool capped = false;

  bool empty() const { return total_steps == 0; }
  std::size_t block_count() const { return epochs_per_block.size(); }
  std::size_t block_start(std::size_t m) const { return m == 0 ? 0 : block_ends[m - 1]; }
  std::size_t block_of(std::size_t t) const;
  /// Global epoch index of step t (epochs counted across all blocks).
  int epoch_of(std::size_t t) const;
  int total_epochs() const;
};

BlockStructure build_structure(std::size_t n, const BsSchedule& bs,
                               std::span<const int> epochs_per_block);

struct SchedulerPlan {
  LrSchedule lr;
  BsSchedule bs;
  BlockStructure structure;
  CaseTag case_tag = CaseTag::CaseI;
};

/// Case implied by the pairing, or nullopt when the pairing fits no regime.
std::optional<CaseTag> classify(const LrSchedule& lr, const BsSchedule& bs);

/// Checks per-field ranges, builds the structure and derives the case tag.
/// Does not check relational invariants; see validate_plan.
SchedulerPlan assemble_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                            std::span<const int> epochs_per_block);

/// assemble_plan followed by validate_plan; throws ConstraintError when rejected.
SchedulerPlan make_plan(const LrSchedule& lr, const BsSchedule& bs, std::size_t n,
                        std::span<const int> epochs_per_block);

double lr_at(const SchedulerPlan& plan, std::size_t t);
std::size_t bs_at(const SchedulerPlan& plan, std::size_t t);

/// Largest and smallest rate the plan emits over [0, T).
double plan_eta_max(const SchedulerPlan& plan);
double plan_eta_min(const SchedulerPlan& plan);

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ValidationReport {
  CaseTag case_tag = CaseTag::CaseI;
  std::vector<ValidationCheck> checks;
  bool accepted = true;
  /// Control plans are accepted but flagged as non-convergent by construction.
  bool non_convergent = false;

  const ValidationCheck* find(std::string_view name) const;
  bool passed(std::string_view name) const;
};

ValidationReport validate_plan(const SchedulerPlan& plan);

}  // namespace batchlr
