#include "tdcosim/transmission.hpp"

#include "tdcosim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tdcosim {

int TransmissionCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    throw ValidationError("transmission bus " + std::to_string(id) + " does not exist");
}

namespace {

std::vector<BranchSpec> positive_branches(const TransmissionCase& tc) {
    std::vector<BranchSpec> out;
    for (const auto& br : tc.branches)
        out.push_back({tc.bus_index(br.from), tc.bus_index(br.to), br.z1, br.b1, br.tap});
    return out;
}

std::vector<BranchSpec> zero_branches(const TransmissionCase& tc) {
    std::vector<BranchSpec> out;
    for (const auto& br : tc.branches)
        out.push_back({tc.bus_index(br.from), tc.bus_index(br.to), br.z0.value_or(br.z1), br.b0.value_or(br.b1), br.tap});
    return out;
}

}  // namespace

PowerFlowResult solve_power_flow(const TransmissionCase& tc, const std::map<int, Complex>& extra_loads, double tol,
                                 int max_iter) {
    const int n = static_cast<int>(tc.buses.size());
    const auto branches = positive_branches(tc);
    const Eigen::MatrixXcd y = build_ybus(n, branches).to_dense();

    Eigen::VectorXcd s_spec = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd v(n);
    std::vector<int> pv, pq;
    int slack = -1;
    for (int i = 0; i < n; ++i) {
        const auto& b = tc.buses[static_cast<std::size_t>(i)];
        s_spec(i) = Complex(b.p_gen, 0.0) - b.load;
        v(i) = (b.kind == BusKind::PQ) ? Complex(1.0, 0.0) : polar(b.v_set, b.kind == BusKind::Slack ? b.angle : 0.0);
        if (b.kind == BusKind::Slack) {
            if (slack >= 0) throw ValidationError("more than one slack bus");
            slack = i;
        } else if (b.kind == BusKind::PV) {
            pv.push_back(i);
        } else {
            pq.push_back(i);
        }
    }
    if (slack < 0) throw ValidationError("power flow requires a slack bus");
    for (const auto& [id, s] : extra_loads) s_spec(tc.bus_index(id)) -= s;

    std::vector<int> pvpq = pv;
    pvpq.insert(pvpq.end(), pq.begin(), pq.end());
    const int npvpq = static_cast<int>(pvpq.size());
    const int npq = static_cast<int>(pq.size());

    auto mismatch_vector = [&](const Eigen::VectorXcd& vv) {
        const Eigen::VectorXcd s = vv.cwiseProduct((y * vv).conjugate()) - s_spec;
        Eigen::VectorXd f(npvpq + npq);
        for (int k = 0; k < npvpq; ++k) f(k) = s(pvpq[static_cast<std::size_t>(k)]).real();
        for (int k = 0; k < npq; ++k) f(npvpq + k) = s(pq[static_cast<std::size_t>(k)]).imag();
        return f;
    };

    PowerFlowResult out;
    Eigen::VectorXd f = mismatch_vector(v);
    int it = 0;
    while (f.lpNorm<Eigen::Infinity>() > tol) {
        if (it >= max_iter)
            throw InitializationError("power flow did not converge in " + std::to_string(max_iter) +
                                      " iterations (mismatch " + std::to_string(f.lpNorm<Eigen::Infinity>()) + ")");
        const Eigen::VectorXcd ibus = y * v;
        const Eigen::VectorXcd vnorm = v.cwiseQuotient(v.cwiseAbs().cast<Complex>());
        const Eigen::MatrixXcd dva = Complex(0, 1) * v.asDiagonal() *
                                     (Eigen::MatrixXcd(ibus.asDiagonal()) - y * v.asDiagonal()).conjugate();
        const Eigen::MatrixXcd dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate() +
                                     Eigen::MatrixXcd(ibus.conjugate().asDiagonal()) * vnorm.asDiagonal();
        Eigen::MatrixXd jac(npvpq + npq, npvpq + npq);
        for (int r = 0; r < npvpq; ++r) {
            const int i = pvpq[static_cast<std::size_t>(r)];
            for (int c = 0; c < npvpq; ++c) jac(r, c) = dva(i, pvpq[static_cast<std::size_t>(c)]).real();
            for (int c = 0; c < npq; ++c) jac(r, npvpq + c) = dvm(i, pq[static_cast<std::size_t>(c)]).real();
        }
        for (int r = 0; r < npq; ++r) {
            const int i = pq[static_cast<std::size_t>(r)];
            for (int c = 0; c < npvpq; ++c) jac(npvpq + r, c) = dva(i, pvpq[static_cast<std::size_t>(c)]).imag();
            for (int c = 0; c < npq; ++c) jac(npvpq + r, npvpq + c) = dvm(i, pq[static_cast<std::size_t>(c)]).imag();
        }
        const Eigen::VectorXd dx = jac.fullPivLu().solve(-f);
        for (int k = 0; k < npvpq; ++k) {
            const int i = pvpq[static_cast<std::size_t>(k)];
            v(i) = polar(std::abs(v(i)), std::arg(v(i)) + dx(k));
        }
        for (int k = 0; k < npq; ++k) {
            const int i = pq[static_cast<std::size_t>(k)];
            v(i) = polar(std::abs(v(i)) + dx(npvpq + k), std::arg(v(i)));
        }
        if (!v.allFinite()) throw InitializationError("power flow produced non-finite voltages");
        f = mismatch_vector(v);
        ++it;
    }

    out.voltage.assign(v.data(), v.data() + n);
    out.iterations = it;
    out.mismatch = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
    const Eigen::VectorXcd s_calc = v.cwiseProduct((y * v).conjugate());
    for (const auto& g : tc.generators) {
        const int i = tc.bus_index(g.bus);
        Complex s = s_calc(i) + tc.buses[static_cast<std::size_t>(i)].load;
        if (auto it2 = extra_loads.find(g.bus); it2 != extra_loads.end()) s += it2->second;
        out.generator_power.push_back(s);
    }
    return out;
}

TransmissionSystem::TransmissionSystem(TransmissionCase tcase, SequenceMode mode) : case_(std::move(tcase)), mode_(mode) {
    if (case_.frequency <= 0.0) throw ValidationError("system frequency must be positive");
    for (int id : case_.boundary_buses) boundary_index_.push_back(case_.bus_index(id));
    for (const auto& g : case_.generators) {
        if (g.h <= 0.0) throw ValidationError("generator at bus " + std::to_string(g.bus) + " needs H > 0");
        if (g.x_d_prime <= 0.0) throw ValidationError("generator at bus " + std::to_string(g.bus) + " needs x'd > 0");
        GeneratorState s;
        s.bus = case_.bus_index(g.bus);
        s.x_d_prime = g.x_d_prime;
        s.h = g.h;
        s.damping = g.damping;
        gens_.push_back(s);
    }
}

void TransmissionSystem::build_networks(const std::vector<Complex>& load_admittance) {
    const int n = bus_count();
    std::map<int, Complex> sh1, sh2, sh0;
    for (int i = 0; i < n; ++i) {
        const Complex yl = load_admittance[static_cast<std::size_t>(i)];
        if (yl != Complex{}) {
            sh1[i] += yl;
            sh2[i] += yl;
            sh0[i] += yl;
        }
    }
    for (std::size_t k = 0; k < case_.generators.size(); ++k) {
        const auto& spec = case_.generators[k];
        const int b = gens_[k].bus;
        sh1[b] += 1.0 / Complex(0.0, spec.x_d_prime);
        sh2[b] += 1.0 / Complex(0.0, spec.x2.value_or(spec.x_d_prime));
        sh0[b] += 1.0 / Complex(0.0, spec.x0.value_or(0.5 * spec.x_d_prime));
    }
    const auto br1 = positive_branches(case_);
    y1_ = build_ybus(n, br1, sh1);
    if (mode_ == SequenceMode::ThreeSequence) {
        y2_ = build_ybus(n, br1, sh2);
        const auto br0 = zero_branches(case_);
        y0_ = build_ybus(n, br0, sh0);
    } else {
        y2_ = NetworkMatrix();
        y0_ = NetworkMatrix();
    }
    z_cache_.clear();
    z_transfer_.reset();
}

void TransmissionSystem::init_steady_state(const PowerFlowResult& pf) {
    const int n = bus_count();
    if (static_cast<int>(pf.voltage.size()) != n) throw InitializationError("power flow result does not match the case");
    std::vector<Complex> yl(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Complex s = case_.buses[static_cast<std::size_t>(i)].load;
        const double vm = std::abs(pf.voltage[static_cast<std::size_t>(i)]);
        yl[static_cast<std::size_t>(i)] = std::conj(s) / (vm * vm);
    }
    for (std::size_t k = 0; k < gens_.size(); ++k) {
        auto& g = gens_[k];
        const Complex v = pf.voltage[static_cast<std::size_t>(g.bus)];
        const Complex s = pf.generator_power.at(k);
        const Complex i = std::conj(s / v);
        const Complex e = v + Complex(0.0, g.x_d_prime) * i;
        g.e_mag = std::abs(e);
        g.delta = std::arg(e);
        g.omega = 1.0;
        g.p_m = (e * std::conj(i)).real();
    }
    build_networks(yl);
    initialized_ = true;
}

BoundaryInjectionT TransmissionSystem::zero_injection() const {
    return {std::vector<ThreeSequence>(boundary_index_.size())};
}

TransmissionSolution TransmissionSystem::network_solve(std::span<const GeneratorState> gens,
                                                       const BoundaryInjectionT& boundary) const {
    if (!initialized_) throw StateError("transmission system is not initialized");
    if (boundary.current.size() != boundary_index_.size())
        throw ValidationError("boundary injection count does not match boundary buses");
    const int n = bus_count();
    Eigen::VectorXcd i1 = Eigen::VectorXcd::Zero(n);
    for (const auto& g : gens) i1(g.bus) += g.e_prime() / Complex(0.0, g.x_d_prime);
    for (std::size_t b = 0; b < boundary_index_.size(); ++b) i1(boundary_index_[b]) += boundary.current[b].positive;
    const Eigen::VectorXcd v1 = y1_.solve(i1);

    TransmissionSolution sol;
    sol.v.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) sol.v[static_cast<std::size_t>(i)].positive = v1(i);

    if (mode_ == SequenceMode::ThreeSequence) {
        Eigen::VectorXcd i2 = Eigen::VectorXcd::Zero(n);
        Eigen::VectorXcd i0 = Eigen::VectorXcd::Zero(n);
        bool excited2 = false, excited0 = false;
        for (std::size_t b = 0; b < boundary_index_.size(); ++b) {
            i2(boundary_index_[b]) += boundary.current[b].negative;
            i0(boundary_index_[b]) += boundary.current[b].zero;
            excited2 = excited2 || boundary.current[b].negative != Complex{};
            excited0 = excited0 || boundary.current[b].zero != Complex{};
        }
        if (excited2) {
            const Eigen::VectorXcd v2 = y2_.solve(i2);
            for (int i = 0; i < n; ++i) sol.v[static_cast<std::size_t>(i)].negative = v2(i);
        }
        if (excited0) {
            const Eigen::VectorXcd v0 = y0_.solve(i0);
            for (int i = 0; i < n; ++i) sol.v[static_cast<std::size_t>(i)].zero = v0(i);
        }
    }

    sol.p_e.reserve(gens.size());
    for (const auto& g : gens) {
        const Complex e = g.e_prime();
        const Complex ig = (e - v1(g.bus)) / Complex(0.0, g.x_d_prime);
        sol.p_e.push_back((e * std::conj(ig)).real());
    }
    return sol;
}

std::vector<GeneratorState> TransmissionSystem::predict(std::span<const GeneratorState> gens,
                                                        const TransmissionSolution& sol, double dt) const {
    if (dt <= 0.0) throw ValidationError("time step must be positive");
    const double ws = synchronous_speed();
    std::vector<GeneratorState> out(gens.begin(), gens.end());
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto& g = out[k];
        const double dw = g.omega - 1.0;
        g.delta += dt * ws * dw;
        g.omega += dt * (g.p_m - sol.p_e[k] - g.damping * dw) / (2.0 * g.h);
    }
    return out;
}

std::vector<GeneratorState> TransmissionSystem::correct(std::span<const GeneratorState> gens,
                                                        const TransmissionSolution& sol,
                                                        const TransmissionSolution& predicted_sol, double dt) const {
    const double ws = synchronous_speed();
    const auto pred = predict(gens, sol, dt);
    std::vector<GeneratorState> out(gens.begin(), gens.end());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto& g0 = gens[k];
        const auto& gp = pred[k];
        const double ddelta0 = ws * (g0.omega - 1.0);
        const double ddeltap = ws * (gp.omega - 1.0);
        const double domega0 = (g0.p_m - sol.p_e[k] - g0.damping * (g0.omega - 1.0)) / (2.0 * g0.h);
        const double domegap = (gp.p_m - predicted_sol.p_e[k] - gp.damping * (gp.omega - 1.0)) / (2.0 * gp.h);
        out[k].delta = g0.delta + 0.5 * dt * (ddelta0 + ddeltap);
        out[k].omega = g0.omega + 0.5 * dt * (domega0 + domegap);
    }
    return out;
}

TransmissionStep TransmissionSystem::step_dynamics(double dt, const BoundaryInjectionT& boundary) {
    const auto sol_n = network_solve(gens_, boundary);
    const auto pred = predict(gens_, sol_n, dt);
    const auto sol_p = network_solve(pred, boundary);
    gens_ = correct(gens_, sol_n, sol_p, dt);
    return {network_solve(gens_, boundary), gens_};
}

ThreeSequence TransmissionSystem::boundary_impedance(int boundary) const {
    if (auto it = z_cache_.find(boundary); it != z_cache_.end()) return it->second;
    const int node = boundary_bus_index(boundary);
    const int n = bus_count();
    Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(n);
    unit(node) = 1.0;
    ThreeSequence z;
    z.positive = y1_.solve(unit)(node);
    if (mode_ == SequenceMode::ThreeSequence) {
        z.negative = y2_.solve(unit)(node);
        z.zero = y0_.solve(unit)(node);
    } else {
        z.negative = z.positive;
        z.zero = z.positive;
    }
    z_cache_[boundary] = z;
    return z;
}

SequenceThevenin TransmissionSystem::extract_thevenin(std::span<const GeneratorState> gens,
                                                      const BoundaryInjectionT& injections, int boundary) const {
    BoundaryInjectionT others = injections;
    others.current.at(static_cast<std::size_t>(boundary)) = ThreeSequence{};
    if (mode_ == SequenceMode::PositiveOnly)
        for (auto& c : others.current) c.zero = c.negative = Complex{};
    const auto sol = network_solve(gens, others);
    const int node = boundary_bus_index(boundary);
    SequenceThevenin th;
    th.z_th = boundary_impedance(boundary);
    th.v_oc = sol.v[static_cast<std::size_t>(node)];
    th.balanced = mode_ == SequenceMode::PositiveOnly;
    return th;
}

MultiPortThevenin TransmissionSystem::extract_multiport_thevenin(std::span<const GeneratorState> gens) const {
    const int nb = boundary_count();
    MultiPortThevenin th;
    th.balanced = mode_ == SequenceMode::PositiveOnly;
    const auto sol = network_solve(gens, zero_injection());
    for (int b = 0; b < nb; ++b) th.v_oc.push_back(sol.v[static_cast<std::size_t>(boundary_bus_index(b))]);
    if (!z_transfer_) {
        std::array<Eigen::MatrixXcd, 3> z;
        const NetworkMatrix* ys[3] = {&y0_, &y1_, &y2_};
        for (int s = 0; s < 3; ++s) {
            z[static_cast<std::size_t>(s)] = Eigen::MatrixXcd::Zero(nb, nb);
            if (th.balanced && s != 1) continue;
            for (int c = 0; c < nb; ++c) {
                Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(bus_count());
                unit(boundary_bus_index(c)) = 1.0;
                const Eigen::VectorXcd x = ys[s]->solve(unit);
                for (int r = 0; r < nb; ++r) z[static_cast<std::size_t>(s)](r, c) = x(boundary_bus_index(r));
            }
        }
        if (th.balanced) z[0] = z[2] = z[1];
        z_transfer_ = std::move(z);
    }
    th.z = *z_transfer_;
    return th;
}

SequenceThevenin TransmissionSystem::publish_voltage_source(const TransmissionSolution& sol, int boundary,
                                                            double epsilon) const {
    SequenceThevenin th;
    th.v_oc = sol.v.at(static_cast<std::size_t>(boundary_bus_index(boundary)));
    if (mode_ == SequenceMode::PositiveOnly) th.v_oc.zero = th.v_oc.negative = Complex{};
    th.z_th = ThreeSequence::uniform(Complex(epsilon, 0.0));
    th.balanced = mode_ == SequenceMode::PositiveOnly;
    return th;
}

void TransmissionSystem::apply_fault(const FaultSpec& fault) {
    if (!initialized_) throw StateError("transmission system is not initialized");
    FaultSpec f = fault;
    f.node = bus_index(fault.node);
    y1_.apply_fault(f);
    if (mode_ == SequenceMode::ThreeSequence) {
        y2_.apply_fault(f);
        y0_.apply_fault(f);
    }
    z_cache_.clear();
    z_transfer_.reset();
}

void TransmissionSystem::clear_fault(const FaultSpec& fault) {
    FaultSpec f = fault;
    f.node = bus_index(fault.node);
    y1_.clear_fault(f);
    if (mode_ == SequenceMode::ThreeSequence) {
        y2_.clear_fault(f);
        y0_.clear_fault(f);
    }
    z_cache_.clear();
    z_transfer_.reset();
}

}  // namespace tdcosim
