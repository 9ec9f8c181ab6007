#pragma once

// Scenario matrix runner, error metrics against the reference run, timing and
// CSV / markdown emission.

#include "tdcosim/case_io.hpp"
#include "tdcosim/orchestrator.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tdcosim {

struct ErrorMetrics {
    double max_dv5 = 0.0;
    double avg_dv5 = 0.0;
    double max_dv14a = 0.0;
    double avg_dv14a = 0.0;
    double max_dw_g1 = 0.0;
    double avg_dw_g1 = 0.0;

    std::array<double, 6> values() const { return {max_dv5, avg_dv5, max_dv14a, avg_dv14a, max_dw_g1, avg_dw_g1}; }
    friend bool operator==(const ErrorMetrics&, const ErrorMetrics&) = default;
};

struct MetricsReport {
    ErrorMetrics metrics;
    std::size_t steps = 0;   ///< samples compared
    bool partial = false;    ///< candidate diverged; metrics cover the common prefix only
};

/// Max and mean of |candidate - reference| per monitored signal, paired by
/// time index. Throws ValidationError when the time grids differ or a
/// completed candidate does not cover the reference horizon.
MetricsReport compute_metrics(const TimeSeriesResult& candidate, const TimeSeriesResult& reference);

struct TimingRecord {
    std::string scenario;
    double wall_s = 0.0;          ///< median over repetitions of completed runs
    double mean_iterations = 0.0;
    std::size_t steps = 0;
};

struct BenchCell {
    double beta = 0.0;
    InterfaceModelKind im = InterfaceModelKind::IM7;
    SchemeKind scheme = SchemeKind::IS6;
    std::optional<std::string> skipped;    ///< rejection reason
    bool is_reference = false;
    std::string status;                    ///< "completed", "diverged@t=..." or "skipped"
    std::optional<MetricsReport> metrics;
    TimingRecord timing;
};

struct BenchTable {
    std::vector<BenchCell> cells;
};

struct BenchOptions {
    int threads = 1;              ///< concurrent accuracy runs; timing repetitions stay serial
    bool timing = true;           ///< false reports the accuracy run's own wall time
    std::function<void(const std::string&)> progress;
};

std::string scenario_id(double beta, InterfaceModelKind im, SchemeKind scheme);

/// Runs the reference once per beta, every valid cell, and timing
/// repetitions. Throws AbortError when a reference run diverges.
BenchTable run_matrix(const BenchMatrix& matrix, const CoSimCase& cs, const Scenario& base,
                      const BenchOptions& options = {});

/// One CSV row per cell under the header
/// beta,im,is,max_dv5,avg_dv5,max_dv14a,avg_dv14a,max_dw_g1,avg_dw_g1,wall_s,mean_iters,status.
/// Metrics of diverged cells carry a leading '*'.
void write_csv(std::ostream& out, const BenchTable& table);
void write_markdown(std::ostream& out, const BenchTable& table);
/// t,v5_pos_mag,v14_a_mag,omega_g1,iters
void write_timeseries(std::ostream& out, const TimeSeriesResult& result);

/// Opens `path` for writing and calls `fn`; throws IoError on failure.
void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn);

struct CsvRow {
    double beta = 0.0;
    std::string im;
    std::string scheme;
    std::array<std::optional<double>, 6> metrics{};
    bool flagged = false;
    std::optional<double> wall_s;
    std::optional<double> mean_iters;
    std::string status;
};

/// Parses write_csv output. Throws ValidationError on malformed input.
std::vector<CsvRow> parse_csv(std::istream& in);

}  // namespace tdcosim
