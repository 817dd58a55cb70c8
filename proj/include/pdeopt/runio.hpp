#pragma once

#include <cstdint>
#include <string>

#include "pdeopt/admm.hpp"

namespace pdeopt {

// Resolved run settings. Flat dotted keys; strings for problem/method/out,
// numbers for everything forwarded to the preset overrides.
struct RunConfig {
    std::string problem = "ex1";
    std::string method = "ota";
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    Overrides overrides;
    bool cold_start = false;
    bool early_stop = false;
    double primal_tol = 1e-8;
    bool allow_ato_expert = false;
    bool save_checkpoints = false;
    bool serial = false;  // force serial kernels

    void set(const std::string& key, const std::string& value);
};

// key=value per line, '#' comments, blank lines ignored.
RunConfig parse_config_file(const std::string& path, RunConfig base = {});

struct RunOutcome {
    ConvergenceReport report;
    std::string report_path;
    int exit_code = 0;  // 0 ok, 3 numerical failure
};

// Executes the configured run and writes report.json, trace.csv, field CSVs
// and preset provenance into out_dir (atomically: temp file then rename).
RunOutcome cmd_run(const RunConfig& cfg);

// Relative L2 differences between two run directories sharing a preset;
// writes a one-row CSV (columns rel_diff_u, rel_diff_y) to `out_csv` when
// non-empty and returns the u difference.
double cmd_compare(const std::string& dir_a, const std::string& dir_b,
                   const std::string& out_csv = "");

}  // namespace pdeopt
