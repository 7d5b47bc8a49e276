#pragma once

#include <string>
#include <vector>

#include "tgcfa/harness.hpp"

namespace tgcfa::report {

// One row per (seed, domain) plus a mean row per domain. Values are rounded
// to two decimals identically in every format.
struct TableRow {
  std::string seed;  // "mean" for the aggregate rows
  std::string domain;
  double baseline = 0;
  double tgcfa = 0;
  double difference = 0;
};

std::vector<TableRow> trend_rows(const harness::TrendSummary& summary);
std::string format_text(const harness::TrendSummary& summary);
std::string format_csv(const harness::TrendSummary& summary);

// Writes loss_curves.svg, domain_dice.svg and paired_differences.svg into
// `dir`; returns the written paths.
std::vector<std::string> write_trend_plots(const harness::TrendSummary& summary, const std::string& dir);

// Single training run: epoch table and a loss-curve plot.
std::string format_run_text(const harness::RunRecord& run);
std::string format_run_csv(const harness::RunRecord& run);
std::vector<std::string> write_run_plots(const harness::RunRecord& run, const std::string& dir);

}  // namespace tgcfa::report
