#pragma once

// Scenario configuration: one JSON file describes the backend, the
// observables, the initial state and the SDE parameters of a run. Parsing is
// strict: unknown keys are fatal, matrices must be Hermitian, and every
// complex entry is an [re, im] pair.

#include "kreduce/dynamics.hpp"

#include <optional>
#include <string>

namespace kreduce {

struct RunConfig {
    Backend backend;
    std::optional<Observable> hamiltonian;  // always set after parsing
    std::optional<Observable> tracked;
    ChartPoint x0;
    SdeConfig sde;
    std::string out_dir = ".";
    bool want_csv = true;
    bool want_json = true;
    // set when the initial state was given as a homogeneous vector or landed
    // outside the preferred chart; explains the chart that was selected
    std::string chart_note;
    // canonical echo of the parsed configuration, embedded in summaries so a
    // replay needs nothing but the summary file
    std::string echo;

    const Observable& h() const { return *hamiltonian; }
};

// Load and validate a config file. Throws ConfigError with a stable `code`:
// missing_file, syntax, unknown_key, non_hermitian, dimension_mismatch,
// invalid_value.
RunConfig parse_config(const std::string& path);

// Same validation applied to in-memory JSON text; `origin` names the source
// in diagnostics. Accepts either a bare config or a simulate summary (the
// embedded config and master seed are extracted), which is what replay uses.
RunConfig parse_config_text(const std::string& text, const std::string& origin);

} // namespace kreduce
