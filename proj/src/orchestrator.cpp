#include "tdcosim/orchestrator.hpp"

#include "tdcosim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace tdcosim {

namespace {

constexpr double kInitTolerance = 1e-9;

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t from, std::size_t to) {
    double m = 0.0;
    for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void push(std::vector<double>& out, Complex z) {
    out.push_back(z.real());
    out.push_back(z.imag());
}

Complex feeder_total_load(const FeederSpec& f) {
    Complex s{};
    for (const auto& bus : f.buses)
        for (const auto& l : bus.load) s += l.s;
    return s;
}

}  // namespace

double TimeSeriesResult::mean_iterations() const {
    if (iterations.empty()) return 0.0;
    return static_cast<double>(std::accumulate(iterations.begin(), iterations.end(), 0LL)) /
           static_cast<double>(iterations.size());
}

std::string TimeSeriesResult::status_text() const {
    if (status == RunStatus::Completed) return "completed";
    char buf[64];
    std::snprintf(buf, sizeof buf, "diverged@t=%.6g", diverged_at);
    return buf;
}

void validate_scenario(const CoSimCase& cs, const Scenario& sc) {
    const auto req = requirements(sc.im);
    if (auto r = validate_combination(sc.im, req.t_mode, req.d_mode)) throw ValidationError(r->reason);
    if (auto r = validate_scheme(sc.im, sc.scheme)) throw ValidationError(r->reason);
    if (!(sc.dt > 0.0)) throw ValidationError("time step must be positive");
    if (!(sc.t_end > 0.0)) throw ValidationError("horizon must be positive");
    if (!(sc.beta >= 0.0 && sc.beta < 1.0)) throw ValidationError("load unbalance factor must satisfy 0 <= beta < 1");
    if (sc.convergence.tol_v <= 0.0 || sc.convergence.tol_i <= 0.0)
        throw ValidationError("convergence tolerances must be positive");
    if (sc.convergence.max_iter < 1) throw ValidationError("max_iter must be at least 1");
    if (sc.interface.epsilon <= 0.0) throw ValidationError("voltage-source impedance epsilon must be positive");
    if (sc.interface.z_link.norm() == 0.0) throw ValidationError("link branch impedance must be nonzero");
    if (sc.fault) {
        const auto& f = *sc.fault;
        if (!(f.clear > f.start)) throw ValidationError("fault clear time must be after its start time");
        if (!(sc.t_end > f.clear)) throw ValidationError("horizon must extend past the fault clear time");
        if (std::llround(f.clear / sc.dt) == std::llround(f.start / sc.dt))
            throw ValidationError("fault lasts less than one time step");
        cs.transmission.bus_index(f.node);
    }
    if (cs.feeders.size() != cs.transmission.boundary_buses.size())
        throw ValidationError("exactly one feeder per boundary bus is required");
    for (int id : cs.transmission.boundary_buses) {
        const auto n = std::count_if(cs.feeders.begin(), cs.feeders.end(),
                                     [&](const FeederSpec& f) { return f.boundary_bus == id; });
        if (n != 1) throw ValidationError("boundary bus " + std::to_string(id) + " needs exactly one feeder");
    }
}

CoSimulation::CoSimulation(const CoSimCase& cs, Scenario sc)
    : sc_(std::move(sc)), t_(cs.transmission, requirements(sc_.im).t_mode) {
    validate_scenario(cs, sc_);
    const auto& tc = cs.transmission;
    for (int id : tc.boundary_buses) {
        auto it = std::find_if(cs.feeders.begin(), cs.feeders.end(), [&](const FeederSpec& f) { return f.boundary_bus == id; });
        feeders_.emplace_back(apply_unbalance(*it, sc_.beta), cs.motors);
    }
    for (int b = 0; b < static_cast<int>(feeders_.size()); ++b) {
        feeder_of_boundary_.push_back(b);
        links_.push_back({b, b, sc_.interface.z_link});
    }
    mon_bus_ = t_.bus_index(sc_.monitors.v_pos_bus);
    bool found = false;
    for (std::size_t f = 0; f < feeders_.size() && !found; ++f) {
        for (const auto& bus : feeders_[f].spec().buses)
            if (bus.id == sc_.monitors.feeder_bus) {
                mon_feeder_ = static_cast<int>(f);
                mon_feeder_bus_ = feeders_[f].local_index(bus.id);
                found = true;
                break;
            }
    }
    if (!found) throw ValidationError("monitored feeder bus " + std::to_string(sc_.monitors.feeder_bus) + " does not exist");
    found = false;
    for (std::size_t g = 0; g < tc.generators.size(); ++g)
        if (tc.generators[g].bus == sc_.monitors.generator_bus) {
            mon_gen_ = static_cast<int>(g);
            found = true;
            break;
        }
    if (!found) throw ValidationError("no generator at monitored bus " + std::to_string(sc_.monitors.generator_bus));
    if (sc_.fault) {
        fault_on_step_ = static_cast<int>(std::llround(sc_.fault->start / sc_.dt));
        fault_off_step_ = static_cast<int>(std::llround(sc_.fault->clear / sc_.dt));
    }
    for (const auto& f : feeders_) motors_.push_back(f.initial_motors());
}

BoundaryInjectionT CoSimulation::injection_from(const DStage& d, const std::vector<ThreePhase>* link) const {
    BoundaryInjectionT inj = t_.zero_injection();
    const bool mate = requirements(sc_.im).mate;
    for (std::size_t b = 0; b < inj.current.size(); ++b) {
        if (mate) {
            const auto s = phase_to_sequence(link->at(b));
            inj.current[b] = {-s.zero, -s.positive, -s.negative};
        } else {
            const auto& i = d.i_eq.at(b);
            inj.current[b] = {-i.zero, -i.positive, -i.negative};
        }
        if (t_.mode() == SequenceMode::PositiveOnly) inj.current[b].zero = inj.current[b].negative = Complex{};
    }
    return inj;
}

std::vector<SequenceThevenin> CoSimulation::publish(const std::vector<GeneratorState>& gens,
                                                    const TransmissionSolution& sol,
                                                    const BoundaryInjectionT& inj) const {
    std::vector<SequenceThevenin> out;
    const bool thevenin = requirements(sc_.im).t_thevenin;
    for (int b = 0; b < t_.boundary_count(); ++b)
        out.push_back(thevenin ? t_.extract_thevenin(gens, inj, b)
                               : t_.publish_voltage_source(sol, b, sc_.interface.epsilon));
    return out;
}

void CoSimulation::transmission_pass(std::array<TStage, kStages>& t, const std::array<DStage, kStages>& d,
                                     bool event) const {
    const auto& x_n = t_.generators();
    if (event) {
        const auto inj0 = injection_from(d[0], nullptr);
        t[0].gens = x_n;
        t[0].sol = t_.network_solve(x_n, inj0);
        t[0].pub = publish(x_n, t[0].sol, inj0);
        t[0].active = true;
    }
    const auto& sol_n = event ? t[0].sol : tsol_;
    t[1].gens = t_.predict(x_n, sol_n, sc_.dt);
    const auto inj1 = injection_from(d[1], nullptr);
    t[1].sol = t_.network_solve(t[1].gens, inj1);
    t[1].pub = publish(t[1].gens, t[1].sol, inj1);
    t[1].active = true;
    t[2].gens = t_.correct(x_n, sol_n, t[1].sol, sc_.dt);
    const auto inj2 = injection_from(d[2], nullptr);
    t[2].sol = t_.network_solve(t[2].gens, inj2);
    t[2].pub = publish(t[2].gens, t[2].sol, inj2);
    t[2].active = true;
}

FeederSolution CoSimulation::solve_feeder(int b, const SequenceThevenin& pub, const std::vector<ThreePhase>& v_lin) const {
    const auto f = static_cast<std::size_t>(feeder_of_boundary_[static_cast<std::size_t>(b)]);
    const auto req = requirements(sc_.im);
    const HeadSource src = t_to_d(sc_.im, pub);
    if (req.d_mode == DistributionMode::PowerFlow) return feeders_[f].fbs_solve(src, motors_[f]);
    return feeders_[f].dyn_network_solve(src, motors_[f], v_lin);
}

void CoSimulation::finish_feeder_stage(DStage& d, int b, FeederSolution sol) const {
    const auto bi = static_cast<std::size_t>(b);
    const auto f = static_cast<std::size_t>(feeder_of_boundary_[bi]);
    d.ex[bi] = extract_boundary_d(sol, feeders_[f].head_index());
    if (requirements(sc_.im).mate)
        d.thev[bi] = feeders_[f].extract_thevenin_d(motors_[f], sol.v);
    else
        d.i_eq[bi] = d_to_t(sc_.im, d.ex[bi], sc_.interface.voltage_floor);
    d.sol[bi] = std::move(sol);
}

void CoSimulation::distribution_pass(std::array<DStage, kStages>& d, const std::array<TStage, kStages>& t,
                                     bool event) const {
    for (int s = event ? 0 : 1; s < kStages; ++s) {
        auto& ds = d[static_cast<std::size_t>(s)];
        const auto& ts = t[static_cast<std::size_t>(s)];
        for (int b = 0; b < t_.boundary_count(); ++b) {
            auto sol = solve_feeder(b, ts.pub[static_cast<std::size_t>(b)], ds.sol[static_cast<std::size_t>(b)].v);
            finish_feeder_stage(ds, b, std::move(sol));
        }
    }
}

void CoSimulation::mate_pass(std::array<TStage, kStages>& t, std::array<DStage, kStages>& d,
                             std::array<std::vector<ThreePhase>, kStages>& link, bool event) const {
    const auto& x_n = t_.generators();
    for (int s = event ? 0 : 1; s < kStages; ++s) {
        const auto si = static_cast<std::size_t>(s);
        const auto& sol_n = event ? t[0].sol : tsol_;
        auto& ts = t[si];
        if (s == 0) ts.gens = x_n;
        else if (s == 1) ts.gens = t_.predict(x_n, sol_n, sc_.dt);
        else ts.gens = t_.correct(x_n, sol_n, t[1].sol, sc_.dt);
        const auto mp = t_.extract_multiport_thevenin(ts.gens);
        link[si] = mate_link_solve(mp, d[si].thev, links_);
        ts.sol = t_.network_solve(ts.gens, injection_from(d[si], &link[si]));
        ts.pub.resize(mp.v_oc.size());
        for (std::size_t b = 0; b < mp.v_oc.size(); ++b) {
            const auto bb = static_cast<Eigen::Index>(b);
            ts.pub[b] = {mp.v_oc[b], {mp.z[0](bb, bb), mp.z[1](bb, bb), mp.z[2](bb, bb)}, mp.balanced};
        }
        ts.active = true;
        auto& ds = d[si];
        for (int b = 0; b < t_.boundary_count(); ++b) {
            const auto bi = static_cast<std::size_t>(b);
            const auto f = static_cast<std::size_t>(feeder_of_boundary_[bi]);
            finish_feeder_stage(ds, b, feeders_[f].dyn_network_solve_injected(link[si][bi], motors_[f], ds.sol[bi].v));
        }
    }
}

std::vector<double> CoSimulation::signature(const TStage& t, const DStage& d, int b) const {
    const auto bi = static_cast<std::size_t>(b);
    std::vector<double> out;
    out.reserve(18);
    const auto& vt = t.sol.v[static_cast<std::size_t>(t_.boundary_bus_index(b))];
    push(out, vt.zero);
    push(out, vt.positive);
    push(out, vt.negative);
    for (int p = 0; p < 3; ++p) push(out, d.ex[bi].v_head[p]);
    for (int p = 0; p < 3; ++p) push(out, d.ex[bi].i_phase[p]);
    return out;
}

void CoSimulation::apply_events() {
    if (!sc_.fault) return;
    if (step_ == fault_on_step_ && !fault_active_) {
        t_.apply_fault(*sc_.fault);
        fault_active_ = true;
    } else if (step_ == fault_off_step_ && fault_active_) {
        t_.clear_fault(*sc_.fault);
        fault_active_ = false;
    }
}

void CoSimulation::initialize() {
    const auto req = requirements(sc_.im);
    const auto& tc = t_.case_data();
    const int nb = t_.boundary_count();
    std::map<int, Complex> extra;
    for (int b = 0; b < nb; ++b)
        extra[tc.boundary_buses[static_cast<std::size_t>(b)]] =
            feeder_total_load(feeders_[static_cast<std::size_t>(feeder_of_boundary_[static_cast<std::size_t>(b)])].spec());
    std::vector<ThreeSequence> i_cons(static_cast<std::size_t>(nb));
    std::vector<std::vector<ThreePhase>> v_lin(static_cast<std::size_t>(nb));
    for (std::size_t f = 0; f < feeders_.size(); ++f) motors_[f] = feeders_[f].initial_motors();

    DStage d;
    d.sol.resize(static_cast<std::size_t>(nb));
    d.i_eq.resize(static_cast<std::size_t>(nb));
    d.thev.resize(static_cast<std::size_t>(nb));
    d.ex.resize(static_cast<std::size_t>(nb));
    BoundaryInjectionT inj;
    TransmissionSolution sol;
    std::vector<SequenceThevenin> pub;
    const int max_iter = 10 * sc_.convergence.max_iter;
    double change = 0.0;
    bool converged = false;
    for (int it = 1; it <= max_iter + 1; ++it) {
        const auto pf = solve_power_flow(tc, extra);
        t_.init_steady_state(pf);
        inj = t_.zero_injection();
        for (int b = 0; b < nb; ++b) {
            const auto bi = static_cast<std::size_t>(b);
            const Complex v1 = pf.voltage[static_cast<std::size_t>(t_.boundary_bus_index(b))];
            const Complex s_b = extra[tc.boundary_buses[bi]];
            inj.current[bi] = {-i_cons[bi].zero, -std::conj(s_b / v1), -i_cons[bi].negative};
            if (t_.mode() == SequenceMode::PositiveOnly) inj.current[bi].zero = inj.current[bi].negative = Complex{};
        }
        sol = t_.network_solve(t_.generators(), inj);
        pub = publish(t_.generators(), sol, inj);
        if (converged) break;
        change = 0.0;
        for (int b = 0; b < nb; ++b) {
            const auto bi = static_cast<std::size_t>(b);
            const auto f = static_cast<std::size_t>(feeder_of_boundary_[bi]);
            HeadSource src;
            if (req.mate) {
                auto ph = to_phase(pub[bi]);
                src = HeadSource::thevenin(ph.v_oc, ph.z + sc_.interface.z_link);
            } else {
                src = t_to_d(sc_.im, pub[bi]);
            }
            if (v_lin[bi].empty()) v_lin[bi] = feeders_[f].flat_voltages(src.e);
            auto fs = req.d_mode == DistributionMode::PowerFlow ? feeders_[f].fbs_solve(src, motors_[f])
                                                                : feeders_[f].dyn_network_solve(src, motors_[f], v_lin[bi]);
            for (std::size_t k = 0; k < fs.v.size(); ++k)
                change = std::max(change, (fs.v[k] - v_lin[bi][k]).max_abs());
            v_lin[bi] = fs.v;
            const auto ex = extract_boundary_d(fs, feeders_[f].head_index());
            ThreeSequence ic = req.mate ? ex.i_seq : d_to_t(sc_.im, ex, sc_.interface.voltage_floor);
            if (t_.mode() == SequenceMode::PositiveOnly) ic.zero = ic.negative = Complex{};
            const Complex v1 = sol.v[static_cast<std::size_t>(t_.boundary_bus_index(b))].positive;
            const Complex s_new = v1 * std::conj(ic.positive);
            Complex& s_b = extra[tc.boundary_buses[bi]];
            change = std::max({change, std::abs(s_new - s_b), std::abs(ic.zero - i_cons[bi].zero),
                               std::abs(ic.negative - i_cons[bi].negative)});
            s_b = s_new;
            i_cons[bi] = ic;
        }
        if (it > 1 && change < kInitTolerance) converged = true;
    }
    if (!converged)
        throw InitializationError("co-simulation initialization did not reach a boundary fixed point (last change " +
                                  std::to_string(change) + ")");

    // final feeder solves against the converged transmission state
    link_prev_.assign(static_cast<std::size_t>(nb), ThreePhase{});
    for (int b = 0; b < nb; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const auto f = static_cast<std::size_t>(feeder_of_boundary_[bi]);
        FeederSolution fs;
        if (req.mate) {
            auto ph = to_phase(pub[bi]);
            fs = feeders_[f].dyn_network_solve(HeadSource::thevenin(ph.v_oc, ph.z + sc_.interface.z_link), motors_[f],
                                               v_lin[bi]);
            link_prev_[bi] = fs.head_current;
        } else {
            fs = req.d_mode == DistributionMode::PowerFlow
                     ? feeders_[f].fbs_solve(t_to_d(sc_.im, pub[bi]), motors_[f])
                     : feeders_[f].dyn_network_solve(t_to_d(sc_.im, pub[bi]), motors_[f], v_lin[bi]);
        }
        finish_feeder_stage(d, b, std::move(fs));
    }
    if (req.mate) {
        // the link current must reproduce the initialization head current exactly
        inj = injection_from(d, &link_prev_);
        sol = t_.network_solve(t_.generators(), inj);
        pub = publish(t_.generators(), sol, inj);
    } else {
        inj = injection_from(d, nullptr);
        sol = t_.network_solve(t_.generators(), inj);
        pub = publish(t_.generators(), sol, inj);
    }
    tsol_ = sol;
    tpub_ = pub;
    inj_ = inj;
    dprev_ = d;
    dsol_ = d.sol;
    step_ = 0;
    fault_active_ = false;
    initialized_ = true;
}

CoSimulation::StepReport CoSimulation::step() {
    if (!initialized_) throw StateError("co-simulation is not initialized");
    const auto req = requirements(sc_.im);
    const int nb = t_.boundary_count();

    for (std::size_t f = 0; f < feeders_.size(); ++f) {
        std::vector<double> mags;
        mags.reserve(motors_[f].size());
        for (const auto& v : dsol_[f].v)
            for (int p = 0; p < 3; ++p) mags.push_back(std::abs(v[p]));
        step_motors(motors_[f], mags, sc_.dt, feeders_[f].motor_parameters().stall_delay);
    }

    const bool was_active = fault_active_;
    apply_events();
    const bool event = was_active != fault_active_;

    TStage tinit;
    tinit.gens = t_.generators();
    tinit.sol = tsol_;
    tinit.pub = tpub_;
    if (event) {
        tinit.sol = t_.network_solve(t_.generators(), inj_);
        tinit.pub = publish(t_.generators(), tinit.sol, inj_);
    }
    std::array<TStage, kStages> t{tinit, tinit, tinit};
    std::array<DStage, kStages> d{dprev_, dprev_, dprev_};
    std::array<std::vector<ThreePhase>, kStages> link{link_prev_, link_prev_, link_prev_};

    const int first = event ? 0 : 1;
    std::array<std::vector<std::vector<double>>, kStages> prev_sig;
    for (int s = first; s < kStages; ++s)
        for (int b = 0; b < nb; ++b)
            prev_sig[static_cast<std::size_t>(s)].push_back(signature(t[static_cast<std::size_t>(s)], d[static_cast<std::size_t>(s)], b));

    StepReport rep;
    const bool iterative = is_iterative(sc_.scheme);
    const int max_iter = iterative ? sc_.convergence.max_iter : 1;
    for (int k = 1; k <= max_iter; ++k) {
        if (req.mate) {
            mate_pass(t, d, link, event);
        } else if (is_parallel(sc_.scheme)) {
            const auto t_old = t;
            const auto d_old = d;
            transmission_pass(t, d_old, event);
            distribution_pass(d, t_old, event);
        } else if (transmission_first(sc_.scheme)) {
            transmission_pass(t, d, event);
            distribution_pass(d, t, event);
        } else {
            distribution_pass(d, t, event);
            transmission_pass(t, d, event);
        }
        double dv = 0.0, di = 0.0;
        for (int s = first; s < kStages; ++s)
            for (int b = 0; b < nb; ++b) {
                auto sig = signature(t[static_cast<std::size_t>(s)], d[static_cast<std::size_t>(s)], b);
                auto& old = prev_sig[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)];
                dv = std::max(dv, max_abs_diff(sig, old, 0, 12));
                di = std::max(di, max_abs_diff(sig, old, 12, 18));
                old = std::move(sig);
            }
        rep.iterations = k;
        rep.mismatch.push_back(std::max(dv, di));
        rep.converged = dv < sc_.convergence.tol_v && di < sc_.convergence.tol_i;
        if (trace_) {
            for (int b = 0; b < nb; ++b) {
                const auto bi = static_cast<std::size_t>(b);
                BoundaryExchange ex;
                ex.time = static_cast<double>(step_ + 1) * sc_.dt;
                ex.iteration = k;
                ex.kind = sc_.im;
                ex.boundary = b;
                if (req.mate) {
                    const auto ph = to_phase(t[2].pub[bi]);
                    ex.t_to_d = HeadSource::thevenin(ph.v_oc, ph.z);
                    ex.d_to_t = d[2].thev[bi];
                } else {
                    ex.t_to_d = t_to_d(sc_.im, t[2].pub[bi]);
                    ex.d_to_t = d[2].i_eq[bi];
                }
                trace_->push_back(ex);
            }
        }
        if (rep.converged) break;
    }
    if (!iterative) rep.converged = true;
    if (!rep.converged && sc_.convergence.abort_on_nonconvergence) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "step at t=%.6g did not converge in %d iterations (mismatch %.3e)", time(),
                      rep.iterations, rep.mismatch.back());
        throw AbortError(buf);
    }

    t_.set_generators(t[2].gens);
    tsol_ = t[2].sol;
    tpub_ = t[2].pub;
    link_prev_ = link[2];
    dprev_ = d[2];
    dsol_ = d[2].sol;
    inj_ = injection_from(d[2], &link_prev_);
    ++step_;
    return rep;
}

void CoSimulation::record(TimeSeriesResult& r, const StepReport& rep) const {
    r.time.push_back(time());
    r.v5_pos.push_back(v5_pos());
    r.v14_a.push_back(v14_a());
    r.omega_g1.push_back(omega_g1());
    r.iterations.push_back(rep.iterations);
    r.mismatch.push_back(rep.mismatch);
    if (!rep.converged) ++r.nonconverged_steps;
}

TimeSeriesResult CoSimulation::run() {
    TimeSeriesResult r;
    if (!initialized_) initialize();
    trace_ = sc_.record_exchanges ? &r.exchanges : nullptr;
    const long long n_steps = std::llround(sc_.t_end / sc_.dt);
    while (step_ < n_steps) {
        try {
            const auto rep = step();
            record(r, rep);
        } catch (const FbsDivergence& e) {
            trace_ = nullptr;
            if (sc_.convergence.abort_on_nonconvergence) throw AbortError(e.what());
            r.status = RunStatus::Diverged;
            r.diverged_at = time();
            r.message = e.what();
            break;
        } catch (const LowVoltageError& e) {
            trace_ = nullptr;
            if (sc_.convergence.abort_on_nonconvergence) throw AbortError(e.what());
            r.status = RunStatus::Diverged;
            r.diverged_at = time();
            r.message = e.what();
            break;
        } catch (const SolveError& e) {
            trace_ = nullptr;
            char buf[64];
            std::snprintf(buf, sizeof buf, " (at t=%.6g)", time());
            throw SolveError(std::string(e.what()) + buf, e.pivot_hint());
        }
    }
    trace_ = nullptr;
    return r;
}

double CoSimulation::v5_pos() const { return std::abs(tsol_.v.at(static_cast<std::size_t>(mon_bus_)).positive); }

double CoSimulation::v14_a() const {
    return std::abs(dsol_.at(static_cast<std::size_t>(mon_feeder_)).v.at(static_cast<std::size_t>(mon_feeder_bus_)).a);
}

double CoSimulation::omega_g1() const { return t_.generators().at(static_cast<std::size_t>(mon_gen_)).omega; }

ThreeSequence CoSimulation::boundary_voltage_t(int boundary) const {
    return tsol_.v.at(static_cast<std::size_t>(t_.boundary_bus_index(boundary)));
}

ThreePhase CoSimulation::head_voltage_d(int boundary) const { return dprev_.ex.at(static_cast<std::size_t>(boundary)).v_head; }

ThreePhase CoSimulation::head_current_d(int boundary) const {
    return dprev_.ex.at(static_cast<std::size_t>(boundary)).i_phase;
}

}  // namespace tdcosim
