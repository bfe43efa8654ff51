#pragma once

// Probe outputs: table.csv, records.jsonl and one curves_<category>.svg per
// category. All writers are byte-deterministic for identical inputs.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "canonprobe/probe.hpp"

namespace canonprobe {

struct ReportOptions {
  int precision = 3;  // decimals for mean and std in table.csv
};

/// Header `category,condition,steps,mean,std,n`, one row per stats entry.
std::string format_table_csv(const std::vector<AggregateStats>& stats, const ReportOptions& opts = {});

nlohmann::json record_to_json(const ProbeRecord& r);
/// Throws std::invalid_argument on a malformed record.
ProbeRecord record_from_json(const nlohmann::json& j);
std::string format_records_jsonl(const std::vector<ProbeRecord>& records);
std::vector<ProbeRecord> read_records_jsonl(const std::filesystem::path& path);

/// Mean score against inference steps: one line per condition, plus one per
/// non-canonical applied angle.
std::string format_curves_svg(const std::string& category, const std::vector<AggregateStats>& stats,
                              const std::vector<ProbeRecord>& records);

/// Filesystem-safe form of a category name for curves_<name>.svg.
std::string curves_filename(const std::string& category);

/// Writes the three report artifacts into out_dir (created if missing);
/// returns the paths written. Throws std::runtime_error when unwritable.
std::vector<std::filesystem::path> emit_report(const std::vector<AggregateStats>& stats,
                                               const std::vector<ProbeRecord>& records,
                                               const std::filesystem::path& out_dir,
                                               const ReportOptions& opts = {});

}  // namespace canonprobe
