#include "tdcosim/bench.hpp"

#include "tdcosim/errors.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace tdcosim {

namespace {

struct SignalStats {
    double max = 0.0;
    double sum = 0.0;
};

void accumulate(SignalStats& s, double a, double b) {
    const double d = std::abs(a - b);
    s.max = std::max(s.max, d);
    s.sum += d;
}

std::string fmt(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

std::string fmt_fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ValidationError("csv: unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError(std::string("csv: bad ") + what + " '" + s + "'");
    return v;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Timed {
    TimeSeriesResult result;
    double wall_s = 0.0;
};

Timed timed_run(const CoSimCase& cs, const Scenario& sc) {
    const auto t0 = std::chrono::steady_clock::now();
    CoSimulation sim(cs, sc);
    Timed out{sim.run(), 0.0};
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

constexpr const char* kHeader =
    "beta,im,is,max_dv5,avg_dv5,max_dv14a,avg_dv14a,max_dw_g1,avg_dw_g1,wall_s,mean_iters,status";

}  // namespace

MetricsReport compute_metrics(const TimeSeriesResult& candidate, const TimeSeriesResult& reference) {
    const std::size_t n = std::min(candidate.steps(), reference.steps());
    if (candidate.completed() && candidate.steps() != reference.steps())
        throw ValidationError("time grids differ: candidate has " + std::to_string(candidate.steps()) +
                              " samples, reference " + std::to_string(reference.steps()));
    if (!candidate.completed() && candidate.steps() > reference.steps())
        throw ValidationError("candidate extends past the reference horizon");
    for (std::size_t k = 0; k < n; ++k) {
        const double tol = 1e-9 * std::max(1.0, std::abs(reference.time[k]));
        if (std::abs(candidate.time[k] - reference.time[k]) > tol)
            throw ValidationError("time grids differ at sample " + std::to_string(k));
    }
    SignalStats v5, v14, w;
    for (std::size_t k = 0; k < n; ++k) {
        accumulate(v5, candidate.v5_pos[k], reference.v5_pos[k]);
        accumulate(v14, candidate.v14_a[k], reference.v14_a[k]);
        accumulate(w, candidate.omega_g1[k], reference.omega_g1[k]);
    }
    MetricsReport r;
    r.steps = n;
    r.partial = !candidate.completed();
    const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
    r.metrics = {v5.max, v5.sum * inv, v14.max, v14.sum * inv, w.max, w.sum * inv};
    return r;
}

std::string scenario_id(double beta, InterfaceModelKind im, SchemeKind scheme) {
    return to_string(im) + "-" + to_string(scheme) + "-b" + fmt(beta);
}

BenchTable run_matrix(const BenchMatrix& matrix, const CoSimCase& cs, const Scenario& base, const BenchOptions& options) {
    auto say = [&](const std::string& s) {
        if (options.progress) options.progress(s);
    };
    BenchTable table;
    std::map<double, TimeSeriesResult> refs;
    for (double beta : matrix.betas) {
        Scenario sc = base;
        sc.beta = beta;
        sc.im = matrix.reference_im;
        sc.scheme = matrix.reference_is;
        sc.convergence.abort_on_nonconvergence = false;
        say("reference " + scenario_id(beta, sc.im, sc.scheme));
        CoSimulation sim(cs, sc);
        auto r = sim.run();
        if (!r.completed())
            throw AbortError("reference run " + scenario_id(beta, sc.im, sc.scheme) + " " + r.status_text() + ": " +
                             r.message);
        refs.emplace(beta, std::move(r));
    }

    for (double beta : matrix.betas)
        for (auto im : matrix.ims)
            for (auto is : matrix.iss) {
                BenchCell c;
                c.beta = beta;
                c.im = im;
                c.scheme = is;
                c.is_reference = im == matrix.reference_im && is == matrix.reference_is;
                c.timing.scenario = scenario_id(beta, im, is);
                const auto req = requirements(im);
                if (auto rej = validate_combination(im, req.t_mode, req.d_mode)) c.skipped = rej->reason;
                else if (auto rej2 = validate_scheme(im, is)) c.skipped = rej2->reason;
                if (c.skipped) c.status = "skipped";
                table.cells.push_back(std::move(c));
            }

    // Accuracy runs, possibly concurrent. Each run owns its simulators.
    std::vector<TimeSeriesResult> results(table.cells.size());
    std::vector<double> walls(table.cells.size(), 0.0);
    std::vector<std::string> errors(table.cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex say_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < table.cells.size(); i = next++) {
            auto& c = table.cells[i];
            if (c.skipped) continue;
            {
                std::lock_guard lock(say_mutex);
                say("run " + c.timing.scenario);
            }
            Scenario sc = base;
            sc.beta = c.beta;
            sc.im = c.im;
            sc.scheme = c.scheme;
            try {
                auto r = timed_run(cs, sc);
                results[i] = std::move(r.result);
                walls[i] = r.wall_s;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < table.cells.size(); ++i)
        if (!errors[i].empty()) throw AbortError(table.cells[i].timing.scenario + ": " + errors[i]);

    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        auto& c = table.cells[i];
        if (c.skipped) continue;
        const auto& r = results[i];
        c.status = r.status_text();
        c.metrics = compute_metrics(r, refs.at(c.beta));
        c.timing.mean_iterations = r.mean_iterations();
        c.timing.steps = r.steps();
        c.timing.wall_s = walls[i];
    }
    if (!options.timing) return table;

    // Timing repetitions, serial.
    for (auto& c : table.cells) {
        if (c.skipped) continue;
        Scenario sc = base;
        sc.beta = c.beta;
        sc.im = c.im;
        sc.scheme = c.scheme;
        const bool completed = c.status == "completed";
        const int reps = completed ? matrix.timing_reps : 1;
        say("time " + c.timing.scenario);
        std::vector<double> walls;
        for (int k = 0; k < reps; ++k) walls.push_back(timed_run(cs, sc).wall_s);
        c.timing.wall_s = median(walls);
    }
    return table;
}

void write_csv(std::ostream& out, const BenchTable& table) {
    out << kHeader << '\n';
    for (const auto& c : table.cells) {
        out << fmt(c.beta) << ',' << to_string(c.im) << ',' << to_string(c.scheme);
        const bool flagged = c.metrics && c.metrics->partial;
        const std::string mark = flagged ? "*" : "";
        for (int k = 0; k < 6; ++k) {
            out << ',';
            if (c.metrics) out << mark << fmt(c.metrics->metrics.values()[static_cast<std::size_t>(k)]);
        }
        out << ',';
        if (!c.skipped) out << mark << fmt(c.timing.wall_s);
        out << ',';
        if (!c.skipped) out << fmt(c.timing.mean_iterations);
        out << ',' << csv_field(c.skipped ? "skipped: " + *c.skipped : c.status) << '\n';
    }
}

void write_markdown(std::ostream& out, const BenchTable& table) {
    std::vector<double> betas;
    for (const auto& c : table.cells)
        if (std::find(betas.begin(), betas.end(), c.beta) == betas.end()) betas.push_back(c.beta);
    for (double beta : betas) {
        out << "## beta = " << fmt(beta) << "\n\n";
        out << "| IM | IS | max dV5+ | avg dV5+ | max dV14a | avg dV14a | max dw_G1 | avg dw_G1 | wall s | iters/step |\n";
        out << "|---|---|---|---|---|---|---|---|---|---|\n";
        std::vector<std::string> notes;
        for (const auto& c : table.cells) {
            if (c.beta != beta) continue;
            const std::string id = to_string(c.im) + "/" + to_string(c.scheme);
            if (c.skipped) {
                notes.push_back(id + " skipped: " + *c.skipped);
                continue;
            }
            if (c.metrics && c.metrics->partial) {
                notes.push_back(id + " " + c.status + " (excluded from the accuracy columns)");
                continue;
            }
            out << "| " << to_string(c.im) << " | " << to_string(c.scheme) << (c.is_reference ? " (ref)" : "");
            for (double v : c.metrics->metrics.values()) out << " | " << fmt_fixed(v, 3);
            out << " | " << fmt_fixed(c.timing.wall_s, 3) << " | " << fmt_fixed(c.timing.mean_iterations, 3) << " |\n";
        }
        out << '\n';
        for (const auto& n : notes) out << "- " << n << '\n';
        if (!notes.empty()) out << '\n';
    }
}

void write_timeseries(std::ostream& out, const TimeSeriesResult& r) {
    out << "t,v5_pos_mag,v14_a_mag,omega_g1,iters\n";
    for (std::size_t k = 0; k < r.steps(); ++k)
        out << fmt(r.time[k]) << ',' << fmt(r.v5_pos[k]) << ',' << fmt(r.v14_a[k]) << ',' << fmt(r.omega_g1[k]) << ','
            << r.iterations[k] << '\n';
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    fn(f);
    f.flush();
    if (!f) throw IoError("write to " + path.string() + " failed");
}

std::vector<CsvRow> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kHeader) throw ValidationError("csv: missing or unexpected header");
    std::vector<CsvRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 12) throw ValidationError("csv: expected 12 fields, got " + std::to_string(f.size()));
        CsvRow r;
        r.beta = parse_double(f[0], "beta");
        r.im = f[1];
        r.scheme = f[2];
        auto value = [&](const std::string& s, const char* what) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            if (s.front() == '*') {
                r.flagged = true;
                return parse_double(s.substr(1), what);
            }
            return parse_double(s, what);
        };
        for (std::size_t k = 0; k < 6; ++k) r.metrics[k] = value(f[3 + k], "metric");
        r.wall_s = value(f[9], "wall_s");
        r.mean_iters = value(f[10], "mean_iters");
        r.status = f[11];
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace tdcosim
