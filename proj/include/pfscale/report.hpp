#pragma once

#include "pfscale/harness.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pfscale {

std::string curve_csv(std::span<const CurveRow> rows);

/// Self-contained SVG line chart: accuracy against budget (log2 axis), one
/// series per method.
std::string curve_svg(std::span<const CurveRow> rows, const std::string& title);

/// Aggregates record files by (method, budget), sorted by method then budget.
/// Throws std::invalid_argument on empty input or records from more than one
/// dataset.
std::vector<CurveRow> aggregate_records(std::span<const std::filesystem::path> files);

/// Writes <prefix>.csv and <prefix>.svg; returns the aggregated rows.
std::vector<CurveRow> emit_report(std::span<const std::filesystem::path> files,
                                  const std::filesystem::path& prefix);

}  // namespace pfscale
