// tdcosim command line: run, bench, validate.

#include "tdcosim/bench.hpp"
#include "tdcosim/case_io.hpp"
#include "tdcosim/errors.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace tdcosim;

namespace {

enum Exit { kOk = 0, kValidation = 2, kDivergence = 3, kIo = 4 };

struct RunArgs {
    std::string path;
    std::optional<int> im;
    std::optional<int> is;
    std::optional<double> beta;
    std::optional<double> dt;
    std::optional<double> t_end;
    std::optional<double> fault_onset;
    std::optional<double> fault_duration;
    std::optional<int> fault_bus;
    bool no_fault = false;
    bool abort = false;
    std::string out;
};

struct BenchArgs {
    std::string path;
    std::string reference;
    std::string out_dir = ".";
    std::string format = "csv";
    std::optional<int> timing_reps;
    int threads = 1;
    bool quiet = false;
};

/// A path is a scenario when it names a case via "case"; otherwise it is a case.
ScenarioFile scenario_or_case(const std::string& path, CoSimCase& cs) {
    try {
        auto sf = load_scenario(path);
        if (!sf.case_path.empty()) {
            cs = load_case(sf.case_path);
            return sf;
        }
    } catch (const ValidationError&) {
    }
    cs = load_case(path);
    ScenarioFile sf;
    sf.scenario.name = fs::path(path).stem().string();
    sf.scenario.fault = FaultSpec{5, Complex(1e6, 0.0), 1.0, 1.07};
    return sf;
}

int cmd_run(const RunArgs& a) {
    CoSimCase cs;
    ScenarioFile sf = scenario_or_case(a.path, cs);
    Scenario sc = sf.scenario;
    if (a.im) sc.im = parse_interface_model(std::to_string(*a.im));
    if (a.is) sc.scheme = parse_scheme(std::to_string(*a.is));
    if (a.beta) sc.beta = *a.beta;
    if (a.dt) sc.dt = *a.dt;
    if (a.t_end) sc.t_end = *a.t_end;
    if (a.no_fault) sc.fault.reset();
    if (a.fault_onset || a.fault_duration || a.fault_bus) {
        FaultSpec f = sc.fault.value_or(FaultSpec{5, Complex(1e6, 0.0), 1.0, 1.07});
        const double dur = f.clear - f.start;
        if (a.fault_bus) f.node = *a.fault_bus;
        if (a.fault_onset) f.start = *a.fault_onset;
        f.clear = f.start + (a.fault_duration ? *a.fault_duration : dur);
        sc.fault = f;
    }
    if (a.abort) sc.convergence.abort_on_nonconvergence = true;
    CoSimulation sim(cs, sc);
    const auto r = sim.run();
    if (!a.out.empty()) write_file(a.out, [&](std::ostream& o) { write_timeseries(o, r); });
    std::printf("%s %s-%s beta=%g steps=%zu mean_iters=%.3f nonconverged=%d status=%s\n", sc.name.c_str(),
                to_string(sc.im).c_str(), to_string(sc.scheme).c_str(), sc.beta, r.steps(), r.mean_iterations(),
                r.nonconverged_steps, r.status_text().c_str());
    return kOk;
}

int cmd_bench(const BenchArgs& a) {
    CoSimCase cs;
    ScenarioFile sf = scenario_or_case(a.path, cs);
    BenchMatrix m = sf.matrix.value_or(BenchMatrix{});
    if (!sf.matrix) throw ValidationError("bench needs a scenario file with a matrix section");
    if (!a.reference.empty()) {
        auto [im, is] = parse_reference(a.reference);
        m.reference_im = im;
        m.reference_is = is;
    }
    if (a.timing_reps) {
        if (*a.timing_reps < 1) throw ValidationError("--timing-reps must be >= 1");
        m.timing_reps = *a.timing_reps;
    }
    if (a.format != "csv" && a.format != "md") throw ValidationError("--format must be csv or md");
    BenchOptions opt;
    opt.threads = a.threads;
    if (!a.quiet) opt.progress = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
    BenchTable table;
    if (!m.ims.empty() && !m.iss.empty() && !m.betas.empty()) table = run_matrix(m, cs, sf.scenario, opt);
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());
    const fs::path out = fs::path(a.out_dir) / (a.format == "csv" ? "bench.csv" : "bench.md");
    write_file(out, [&](std::ostream& o) {
        if (a.format == "csv") write_csv(o, table);
        else write_markdown(o, table);
    });
    std::printf("%zu cells written to %s\n", table.cells.size(), out.string().c_str());
    return kOk;
}

int cmd_validate(const std::vector<std::string>& paths) {
    for (const auto& p : paths) {
        CoSimCase cs;
        ScenarioFile sf = scenario_or_case(p, cs);
        validate_scenario(cs, sf.scenario);
        std::printf("%s: ok (%zu buses, %zu feeders)\n", p.c_str(), cs.transmission.buses.size(), cs.feeders.size());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transmission and distribution dynamic co-simulation"};
    app.require_subcommand(1);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run one scenario");
    run->add_option("path", ra.path, "Case or scenario file")->required();
    run->add_option("--im", ra.im, "Interface model 1..7")->check(CLI::Range(1, 7));
    run->add_option("--is", ra.is, "Interaction scheme 1..6")->check(CLI::Range(1, 6));
    run->add_option("--beta", ra.beta, "Load unbalance factor");
    run->add_option("--dt", ra.dt, "Time step, s");
    run->add_option("--t-end", ra.t_end, "Horizon, s");
    run->add_option("--fault-onset", ra.fault_onset, "Fault onset, s");
    run->add_option("--fault-duration", ra.fault_duration, "Fault duration, s");
    run->add_option("--fault-bus", ra.fault_bus, "Faulted transmission bus");
    run->add_flag("--no-fault", ra.no_fault, "Run without the fault");
    run->add_flag("--abort", ra.abort, "Abort on non-convergence or divergence");
    run->add_option("--out", ra.out, "Time-series CSV output");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Run a scenario matrix");
    bench->add_option("path", ba.path, "Scenario file with a matrix section")->required();
    bench->add_option("--reference", ba.reference, "Reference cell, e.g. im7-is6");
    bench->add_option("--out-dir", ba.out_dir, "Output directory");
    bench->add_option("--format", ba.format, "csv or md");
    bench->add_option("--timing-reps", ba.timing_reps, "Timing repetitions per cell");
    bench->add_option("--threads", ba.threads, "Concurrent accuracy runs")->check(CLI::Range(1, 256));
    bench->add_flag("--quiet", ba.quiet, "No progress output");

    std::vector<std::string> vpaths;
    auto* validate = app.add_subcommand("validate", "Lint case or scenario files");
    validate->add_option("paths", vpaths, "Files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*run) return cmd_run(ra);
        if (*bench) return cmd_bench(ba);
        return cmd_validate(vpaths);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "invalid: %s\n", e.what());
        return kValidation;
    } catch (const AbortError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return kDivergence;
    } catch (const InitializationError& e) {
        std::fprintf(stderr, "initialization failed: %s\n", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kDivergence;
    }
}
