#include "support.hpp"

#include "tdcosim/case_io.hpp"
#include "tdcosim/errors.hpp"
#include "tdcosim/transmission.hpp"

#include <catch_amalgamated.hpp>

using namespace tdcosim;
using tdtest::j;

namespace {

/// The shipped 9-bus case with the feeder totals put back as static loads.
TransmissionCase nine_bus_standalone() {
    const auto cs = load_case(std::string(TDCOSIM_DATA_DIR) + "/ieee9_3feeders.json");
    TransmissionCase t = cs.transmission;
    for (const auto& f : cs.feeders) {
        Complex s{};
        for (const auto& b : f.buses)
            for (const auto& l : b.load) s += l.s;
        t.buses[static_cast<std::size_t>(t.bus_index(f.boundary_bus))].load += s;
    }
    t.boundary_buses.clear();
    return t;
}

TransmissionSystem initialized(const TransmissionCase& c, SequenceMode mode) {
    TransmissionSystem t(c, mode);
    t.init_steady_state(solve_power_flow(c, {}));
    return t;
}

/// Two machines tied by one lossless line, no loads.
TransmissionCase two_machine(double pm_split = 0.0) {
    TransmissionCase c;
    c.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, {}}, {2, BusKind::PV, 1.0, 0.0, pm_split, {}}};
    c.branches = {{1, 2, j(0.3), {}, std::nullopt, std::nullopt, 1.0}};
    c.generators = {{1, 0.2, 5.0, 0.0, std::nullopt, std::nullopt}, {2, 0.25, 3.0, 0.0, std::nullopt, std::nullopt}};
    return c;
}

}  // namespace

TEST_CASE("9-bus steady state is stationary", "[transmission]") {
    auto t = initialized(nine_bus_standalone(), SequenceMode::ThreeSequence);
    const auto inj = t.zero_injection();
    const auto v0 = t.network_solve(inj).v;
    const auto sol = t.network_solve(inj);
    const auto pred = t.predict(t.generators(), sol, 1.0);
    for (std::size_t k = 0; k < pred.size(); ++k) {
        CHECK(std::abs(pred[k].delta - t.generators()[k].delta) < 1e-9);
        CHECK(std::abs(pred[k].omega - t.generators()[k].omega) < 1e-9);
    }
    TransmissionStep st;
    for (int n = 0; n < 200; ++n) st = t.step_dynamics(0.005, inj);
    for (std::size_t i = 0; i < v0.size(); ++i) CHECK(std::abs(std::abs(st.solution.v[i].positive) - std::abs(v0[i].positive)) < 1e-8);
}

TEST_CASE("generator output balances load and losses", "[transmission]") {
    const auto c = nine_bus_standalone();
    auto t = initialized(c, SequenceMode::PositiveOnly);
    const auto sol = t.network_solve(t.zero_injection());
    double pe = 0.0, load = 0.0, losses = 0.0;
    for (double p : sol.p_e) pe += p;
    for (const auto& b : c.buses) load += b.load.real();
    auto v = [&](int id) { return sol.v[static_cast<std::size_t>(c.bus_index(id))].positive; };
    for (const auto& br : c.branches) {
        const Complex vf = v(br.from), vt = v(br.to);
        const Complex is = (vf - vt) / br.z1;
        losses += (std::norm(is) * br.z1).real();
    }
    CHECK(std::abs(pe - (load + losses)) < 1e-8);
}

TEST_CASE("unloaded single machine has zero output", "[transmission]") {
    TransmissionCase c;
    c.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, {}}, {2, BusKind::PQ, 1.0, 0.0, 0.0, {}}};
    c.branches = {{1, 2, j(0.1), {}, std::nullopt, std::nullopt, 1.0}};
    c.generators = {{1, 0.3, 4.0, 0.0, std::nullopt, std::nullopt}};
    c.boundary_buses = {2};
    auto t = initialized(c, SequenceMode::ThreeSequence);
    CHECK(std::abs(t.generators()[0].p_m) < 1e-12);
    CHECK(std::abs(t.network_solve(t.zero_injection()).p_e[0]) < 1e-12);

    const auto th = t.extract_thevenin(t.generators(), t.zero_injection(), 0);
    CHECK(std::abs(th.v_oc.positive - 1.0) < 1e-12);
    CHECK(std::abs(th.z_th.positive - j(0.4)) < 1e-12);
}

TEST_CASE("balanced injection leaves negative and zero sequences unexcited", "[transmission]") {
    const auto c = tdtest::three_bus();
    auto t3 = initialized(c, SequenceMode::ThreeSequence);
    auto t1 = initialized(c, SequenceMode::PositiveOnly);
    BoundaryInjectionT inj{{ThreeSequence{0, Complex(-0.2, 0.05), 0}}};
    const auto s3 = t3.network_solve(inj), s1 = t1.network_solve(inj);
    for (std::size_t i = 0; i < s3.v.size(); ++i) {
        CHECK(s3.v[i].negative == Complex{});
        CHECK(s3.v[i].zero == Complex{});
        CHECK(std::abs(s3.v[i].positive - s1.v[i].positive) <= 1e-12);
    }
}

TEST_CASE("negative-sequence voltage matches a dense solve", "[transmission]") {
    const auto c = tdtest::three_bus();
    const auto pf = solve_power_flow(c, {});
    auto t = initialized(c, SequenceMode::ThreeSequence);
    const Complex i2(0.05, -0.03);
    const auto sol = t.network_solve(BoundaryInjectionT{{ThreeSequence{0, 0, i2}}});

    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(3, 3);
    for (const auto& br : c.branches) {
        const int a = c.bus_index(br.from), b = c.bus_index(br.to);
        const Complex ys = 1.0 / br.z1;
        y(a, a) += ys + br.b1 / 2.0;
        y(b, b) += ys + br.b1 / 2.0;
        y(a, b) -= ys;
        y(b, a) -= ys;
    }
    for (int k = 0; k < 3; ++k) y(k, k) += std::conj(c.buses[k].load) / std::norm(pf.voltage[k]);
    for (const auto& g : c.generators) y(c.bus_index(g.bus), c.bus_index(g.bus)) += 1.0 / j(g.x_d_prime);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(3);
    rhs(2) = i2;
    const Eigen::VectorXcd v2 = y.fullPivLu().solve(rhs);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(sol.v[static_cast<std::size_t>(k)].negative - v2(k)) < 1e-10);

    // Memoryless: the same injections give the same bits.
    const auto again = t.network_solve(BoundaryInjectionT{{ThreeSequence{0, 0, i2}}});
    for (std::size_t k = 0; k < 3; ++k) CHECK(again.v[k] == sol.v[k]);
}

TEST_CASE("equilibrium is held for any damping", "[transmission]") {
    for (double d : {0.0, 2.0, 25.0}) {
        auto t = initialized(tdtest::three_bus(d), SequenceMode::PositiveOnly);
        const auto g0 = t.generators();
        t.step_dynamics(0.005, t.zero_injection());
        for (std::size_t k = 0; k < g0.size(); ++k) {
            CHECK(std::abs(t.generators()[k].delta - g0[k].delta) < 1e-12);
            CHECK(std::abs(t.generators()[k].omega - g0[k].omega) < 1e-12);
        }
    }
}

TEST_CASE("constant acceleration step", "[transmission]") {
    TransmissionCase c;
    c.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, {}}, {2, BusKind::PQ, 1.0, 0.0, 0.0, {}}};
    c.branches = {{1, 2, j(0.1), {}, std::nullopt, std::nullopt, 1.0}};
    c.generators = {{1, 0.3, 3.0, 0.0, std::nullopt, std::nullopt}};
    auto t = initialized(c, SequenceMode::PositiveOnly);
    auto g = t.generators();
    g[0].p_m = 1.0;
    t.set_generators(g);
    const double dt = 0.01;
    t.step_dynamics(dt, t.zero_injection());
    CHECK(std::abs(t.generators()[0].omega - (1.0 + dt / 6.0)) < 1e-12);
    // delta follows the trapezoid of the linear speed ramp.
    const double ws = 2.0 * kPi * 60.0;
    CHECK(std::abs(t.generators()[0].delta - (g[0].delta + 0.5 * dt * ws * dt / 6.0)) < 1e-12);
}

TEST_CASE("integrator is second order against RK4", "[transmission][property]") {
    const auto c = two_machine(0.4);
    auto base = initialized(c, SequenceMode::PositiveOnly);
    auto g0 = base.generators();
    g0[0].omega = 1.004;
    const double ws = base.synchronous_speed();
    const double horizon = 0.4;

    auto rates = [&](const std::vector<GeneratorState>& g) {
        const auto pe = base.network_solve(g, base.zero_injection()).p_e;
        std::vector<std::array<double, 2>> r(g.size());
        for (std::size_t k = 0; k < g.size(); ++k)
            r[k] = {ws * (g[k].omega - 1.0), (g[k].p_m - pe[k] - g[k].damping * (g[k].omega - 1.0)) / (2.0 * g[k].h)};
        return r;
    };
    auto rk4 = [&](double h) {
        auto g = g0;
        for (int n = 0; n < static_cast<int>(std::llround(horizon / h)); ++n) {
            auto shift = [&](const std::vector<std::array<double, 2>>& k, double s) {
                auto x = g;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    x[i].delta += s * k[i][0];
                    x[i].omega += s * k[i][1];
                }
                return x;
            };
            const auto k1 = rates(g), k2 = rates(shift(k1, h / 2)), k3 = rates(shift(k2, h / 2)), k4 = rates(shift(k3, h));
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i].delta += h / 6 * (k1[i][0] + 2 * k2[i][0] + 2 * k3[i][0] + k4[i][0]);
                g[i].omega += h / 6 * (k1[i][1] + 2 * k2[i][1] + 2 * k3[i][1] + k4[i][1]);
            }
        }
        return g;
    };
    const auto exact = rk4(1e-4);
    auto err = [&](double dt) {
        auto t = base;
        t.set_generators(g0);
        for (int n = 0; n < static_cast<int>(std::llround(horizon / dt)); ++n) t.step_dynamics(dt, t.zero_injection());
        return std::abs(t.generators()[0].delta - exact[0].delta);
    };
    const double e1 = err(0.01), e2 = err(0.005);
    INFO("errors " << e1 << " " << e2);
    CHECK(e1 / e2 > 3.0);
}

TEST_CASE("property: undamped lossless momentum is conserved", "[transmission][property]") {
    auto t = initialized(two_machine(0.0), SequenceMode::PositiveOnly);
    auto g = t.generators();
    g[0].omega = 1.003;
    g[1].delta += 0.2;
    t.set_generators(g);
    auto momentum = [&] {
        double m = 0.0;
        for (const auto& x : t.generators()) m += 2.0 * x.h * (x.omega - 1.0);
        return m;
    };
    const double m0 = momentum();
    for (int n = 0; n < 3000; ++n) t.step_dynamics(0.005, t.zero_injection());
    CHECK(std::abs(momentum() - m0) < 1e-12);
}

TEST_CASE("property: positive-only and three-sequence trajectories agree when balanced", "[transmission][property]") {
    const auto c = nine_bus_standalone();
    auto a = initialized(c, SequenceMode::PositiveOnly);
    auto b = initialized(c, SequenceMode::ThreeSequence);
    const FaultSpec f{5, Complex(1e6, 0.0), 0.1, 0.17};
    double worst = 0.0;
    for (int n = 0; n < 400; ++n) {
        if (n == 20) a.apply_fault(f), b.apply_fault(f);
        if (n == 34) a.clear_fault(f), b.clear_fault(f);
        const auto sa = a.step_dynamics(0.005, a.zero_injection());
        const auto sb = b.step_dynamics(0.005, b.zero_injection());
        for (std::size_t i = 0; i < sa.solution.v.size(); ++i)
            worst = std::max(worst, std::abs(sa.solution.v[i].positive - sb.solution.v[i].positive));
        for (std::size_t k = 0; k < sa.generators.size(); ++k)
            worst = std::max(worst, std::abs(sa.generators[k].omega - sb.generators[k].omega));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("Thevenin matches two-point identification", "[transmission][property]") {
    const auto c = tdtest::three_bus();
    auto t = initialized(c, SequenceMode::ThreeSequence);
    const auto th = t.extract_thevenin(t.generators(), t.zero_injection(), 0);
    const ThreeSequence ia{Complex(0.01, 0.02), Complex(-0.3, 0.1), Complex(0.02, -0.01)};
    const ThreeSequence ib{Complex(-0.02, 0.01), Complex(-0.1, -0.2), Complex(0.05, 0.03)};
    const auto va = t.network_solve(BoundaryInjectionT{{ia}}).v[2];
    const auto vb = t.network_solve(BoundaryInjectionT{{ib}}).v[2];
    CHECK(std::abs((va.positive - vb.positive) / (ia.positive - ib.positive) - th.z_th.positive) <= 1e-9);
    CHECK(std::abs((va.negative - vb.negative) / (ia.negative - ib.negative) - th.z_th.negative) <= 1e-9);
    CHECK(std::abs((va.zero - vb.zero) / (ia.zero - ib.zero) - th.z_th.zero) <= 1e-9);

    // Balanced operating point: phase open-circuit voltages are a rotated set.
    const auto ph = sequence_to_phase(th.v_oc);
    CHECK(std::abs(std::abs(ph.a) - std::abs(ph.b)) < 1e-12);
    CHECK(std::abs(ph.b - ph.a * fortescue_a() * fortescue_a()) < 1e-12);
}

TEST_CASE("multi-port Thevenin reproduces solved boundary voltages", "[transmission][property]") {
    const auto cs = load_case(std::string(TDCOSIM_DATA_DIR) + "/ieee9_3feeders.json");
    TransmissionSystem t(cs.transmission, SequenceMode::ThreeSequence);
    std::map<int, Complex> extra;
    for (const auto& f : cs.feeders) extra[f.boundary_bus] = Complex(0.5, 0.2);
    t.init_steady_state(solve_power_flow(cs.transmission, extra));
    const auto mp = t.extract_multiport_thevenin(t.generators());
    BoundaryInjectionT inj = t.zero_injection();
    for (std::size_t b = 0; b < inj.current.size(); ++b)
        inj.current[b] = {Complex(0.01 * b, -0.02), Complex(-0.4, 0.1 * b), Complex(0.03, 0.01 * b)};
    const auto sol = t.network_solve(inj);
    for (int r = 0; r < t.boundary_count(); ++r) {
        ThreeSequence v = mp.v_oc[static_cast<std::size_t>(r)];
        for (int c = 0; c < t.boundary_count(); ++c) {
            const auto& i = inj.current[static_cast<std::size_t>(c)];
            v.zero += mp.z[0](r, c) * i.zero;
            v.positive += mp.z[1](r, c) * i.positive;
            v.negative += mp.z[2](r, c) * i.negative;
        }
        CHECK((v - sol.v[static_cast<std::size_t>(t.boundary_bus_index(r))]).max_abs() < 1e-10);
    }
}

TEST_CASE("voltage-source publication", "[transmission]") {
    const auto c = tdtest::three_bus();
    auto t1 = initialized(c, SequenceMode::PositiveOnly);
    TransmissionSolution sol;
    sol.v.resize(3);
    sol.v[2] = {Complex(0.1, 0.1), polar(0.98, deg_to_rad(-2)), Complex(0.05, 0)};
    const auto pub = t1.publish_voltage_source(sol, 0, 1e-6);
    CHECK(pub.v_oc.positive == polar(0.98, deg_to_rad(-2)));
    CHECK(pub.v_oc.negative == Complex{});
    CHECK(pub.v_oc.zero == Complex{});
    CHECK(pub.z_th.positive == Complex(1e-6, 0));

    // Divider into a j0.1 load stays within 1e-4 of the ideal source.
    const Complex z_load = j(0.1);
    const Complex received = pub.v_oc.positive * z_load / (z_load + pub.z_th.positive);
    CHECK(std::abs(received - pub.v_oc.positive) < 1e-4);
}

TEST_CASE("transmission validation", "[transmission]") {
    auto c = tdtest::three_bus();
    c.generators[0].h = 0.0;
    CHECK_THROWS_AS(TransmissionSystem(c, SequenceMode::PositiveOnly), ValidationError);
    const auto ok = tdtest::three_bus();
    TransmissionSystem t(ok, SequenceMode::PositiveOnly);
    CHECK_THROWS_AS(t.network_solve(t.zero_injection()), StateError);
    CHECK_THROWS_AS(ok.bus_index(42), ValidationError);
}
