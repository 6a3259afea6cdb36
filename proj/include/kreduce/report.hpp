#pragma once

// Serialization of run results: the ensemble time-series CSV, the simulate
// summary JSON (which echoes the config so a replay needs only the summary),
// and verdict reports in JSON and table form.

#include "kreduce/analysis.hpp"
#include "kreduce/config.hpp"

#include <string>
#include <vector>

namespace kreduce {

// Columns: t, mean_H, se_H, mean_V, se_V, mean_Q, bound_V with full-precision
// values; bound_V is V0/(1 + kappa sigma^2 V0 t).
std::string ensemble_csv_text(const EnsembleStats& stats);

std::string summary_json_text(const RunConfig& cfg, const EnsembleStats& stats);

std::string verdict_json_text(const std::vector<TestVerdict>& verdicts);
std::string verdict_table_text(const std::vector<TestVerdict>& verdicts);

// Overwrites the file; parent directory must exist.
void write_text_file(const std::string& path, const std::string& text);

} // namespace kreduce
