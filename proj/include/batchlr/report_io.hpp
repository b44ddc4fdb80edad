#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchlr/bounds.hpp"
#include "batchlr/engine.hpp"
#include "batchlr/harness.hpp"
#include "batchlr/problems.hpp"
#include "batchlr/schedules.hpp"

namespace batchlr {

/// Shortest text that parses back to the same double ("%.17g"); empty for NaN.
std::string format_double(double x);

void write_trace_csv(std::ostream& os, const Trace& trace);
nlohmann::json to_json(const Trace& trace);

/// Schedule table: t, block, epoch, eta, b.
void write_schedule_csv(std::ostream& os, const SchedulerPlan& plan);
nlohmann::json schedule_json(const SchedulerPlan& plan);

nlohmann::json to_json(const ValidationReport& report);
nlohmann::json to_json(const Certificate& cert);
nlohmann::json to_json(const ProblemConstants& consts);

nlohmann::json to_json(const BoundReport& report);
void write_bound_csv(std::ostream& os, const BoundReport& report);
std::string render_bound_table(const BoundReport& report);

nlohmann::json to_json(const VerdictReport& report);
VerdictReport verdict_from_json(const nlohmann::json& j);
std::string render_verdict_table(const VerdictReport& report);

/// Writes manifest.json listing `files` (relative to dir) plus `extra` fields.
void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files,
                    const nlohmann::json& extra = nlohmann::json::object());

}  // namespace batchlr
