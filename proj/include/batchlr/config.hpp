#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "batchlr/engine.hpp"
#include "batchlr/harness.hpp"
#include "batchlr/problems.hpp"
#include "batchlr/schedules.hpp"

namespace batchlr {

inline constexpr int kConfigVersion = 1;

struct PlanSpec {
  std::string name;
  /// Where the plan sits in its document, for error messages.
  std::string pointer;
  std::size_t line = 0;
  LrSchedule lr;
  BsSchedule bs;
  std::vector<int> epochs_per_block;
};

struct EnumerateSpec {
  std::vector<std::size_t> batch_sizes{1, 2};
  std::size_t limit = kEnumerationLimit;
};

/// One experiment document. See README.md for the schema.
struct ExperimentConfig {
  std::string source;
  int spec_version = kConfigVersion;
  std::string name;
  ProblemSpec problem;
  PlanSpec plan;
  /// Plan variants for `sweep`; empty means just `plan`.
  std::vector<PlanSpec> sweep;
  /// Resolved to dimension d; zero vector when absent.
  std::vector<double> theta0;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  std::size_t record_every = 1;
  Measure measure = Measure::GradNorm2;
  double slack_se = 2.0;
  EnumerateSpec enumerate;
};

/// Parses a JSON experiment document. Throws ConfigError whose message starts
/// with "source:line:col:" for syntax errors and names the JSON pointer plus a
/// best-effort line for semantic errors.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// make_plan for a spec over n samples.
SchedulerPlan build_plan(const PlanSpec& spec, std::size_t n);
/// Same over the config's problem size; failures become ConfigError naming the plan.
SchedulerPlan build_plan(const ExperimentConfig& cfg, const PlanSpec& spec);

}  // namespace batchlr
