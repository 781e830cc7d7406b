#pragma once

#include <string>
#include <vector>

#include "scrfocus/eval.h"

namespace scrfocus {

// Standalone SVG documents.

// Aggregate score against sampling radius on a log radius axis, argmin
// marked.
std::string AblationPlotSvg(const std::vector<double>& radii,
                            const std::vector<double>& scores, int argmin);

// Grouped bars of log10 median buffer reprojection error and median
// translation error per (sequence, strategy) row.
std::string ReportPlotSvg(const std::vector<ReportRow>& rows);

}  // namespace scrfocus
