#include "support.hpp"

#include "tdcosim/bench.hpp"
#include "tdcosim/errors.hpp"
#include "tdcosim/orchestrator.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace tdcosim;
using tdtest::j;

namespace {

Scenario quiet(InterfaceModelKind im, SchemeKind is, double t_end) {
    Scenario sc = tdtest::three_bus_scenario(im, is, t_end);
    sc.fault.reset();
    return sc;
}

}  // namespace

TEST_CASE("initialization is a steady state", "[orchestrator]") {
    for (auto [im, is] : {std::pair{InterfaceModelKind::IM7, SchemeKind::IS6},
                          std::pair{InterfaceModelKind::IM2, SchemeKind::IS3},
                          std::pair{InterfaceModelKind::IM6, SchemeKind::IS6}}) {
        CoSimulation sim(tdtest::three_bus_cosim(), quiet(im, is, 1.0));
        const auto r = sim.run();
        REQUIRE(r.completed());
        for (std::size_t k = 0; k < r.steps(); ++k) {
            CHECK(std::abs(r.v5_pos[k] - r.v5_pos.front()) < 1e-6);
            CHECK(std::abs(r.omega_g1[k] - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("zero-load feeders reproduce the standalone power flow", "[orchestrator]") {
    CoSimCase cs = tdtest::three_bus_cosim();
    cs.feeders = {tdtest::small_feeder(3, {0.0, 0.0})};
    CoSimulation sim(cs, quiet(InterfaceModelKind::IM7, SchemeKind::IS6, 0.01));
    sim.initialize();

    TransmissionCase alone = tdtest::three_bus();
    alone.boundary_buses.clear();
    const auto pf = solve_power_flow(alone, {});
    const int k = alone.bus_index(3);
    CHECK(std::abs(sim.boundary_voltage_t(0).positive - pf.voltage[static_cast<std::size_t>(k)]) < 1e-8);
}

TEST_CASE("balanced steady run matches a monolithic solution", "[orchestrator]") {
    const CoSimCase cs = tdtest::three_bus_cosim();
    Scenario sc = tdtest::three_bus_scenario(InterfaceModelKind::IM7, SchemeKind::IS6, 2.0);
    sc.interface.z_link = Mat3::Identity() * j(1e-9);
    sc.convergence.tol_v = sc.convergence.tol_i = 1e-10;
    CoSimulation sim(cs, sc);
    const auto r = sim.run();
    REQUIRE(r.completed());

    const tdtest::Monolithic mono(cs.transmission, cs.feeders[0]);
    const auto tr = mono.run(sc.dt, sc.t_end, *sc.fault, 3);
    REQUIRE(tr.t.size() == r.steps());
    double dv = 0.0, dw = 0.0;
    for (std::size_t k = 0; k < r.steps(); ++k) {
        dv = std::max(dv, std::abs(r.v5_pos[k] - tr.v_boundary[k]));
        dw = std::max(dw, std::abs(r.omega_g1[k] - tr.omega1[k]));
    }
    CHECK(dv < 1e-6);
    CHECK(dw < 1e-6);
}

TEST_CASE("unbalanced feeders feed negative sequence back", "[orchestrator]") {
    for (auto im : {InterfaceModelKind::IM5, InterfaceModelKind::IM6}) {
        Scenario sc = quiet(im, SchemeKind::IS6, 0.05);
        sc.beta = 0.2;
        CoSimulation sim(tdtest::three_bus_cosim(), sc);
        sim.run();
        CHECK(std::abs(sim.boundary_voltage_t(0).negative) > 1e-5);
    }
    Scenario sc = quiet(InterfaceModelKind::IM2, SchemeKind::IS6, 0.05);
    sc.beta = 0.2;
    CoSimulation sim(tdtest::three_bus_cosim(), sc);
    sim.run();
    CHECK(std::abs(sim.boundary_voltage_t(0).negative) < 1e-12);
}

TEST_CASE("schemes agree without disturbances", "[orchestrator]") {
    std::vector<TimeSeriesResult> runs;
    for (auto is : {SchemeKind::IS1, SchemeKind::IS2, SchemeKind::IS3, SchemeKind::IS4, SchemeKind::IS5, SchemeKind::IS6}) {
        CoSimulation sim(tdtest::three_bus_cosim(), quiet(InterfaceModelKind::IM3, is, 0.2));
        runs.push_back(sim.run());
    }
    for (const auto& r : runs) {
        REQUIRE(r.steps() == runs.front().steps());
        for (std::size_t k = 0; k < r.steps(); ++k) {
            CHECK(std::abs(r.v5_pos[k] - runs.front().v5_pos[k]) < 1e-9);
            CHECK(std::abs(r.omega_g1[k] - runs.front().omega_g1[k]) < 1e-9);
        }
    }
}

TEST_CASE("iterated schemes close the boundary mismatch", "[orchestrator]") {
    Scenario sc = tdtest::three_bus_scenario(InterfaceModelKind::IM3, SchemeKind::IS6, 1.2);
    sc.convergence.tol_v = sc.convergence.tol_i = 1e-8;
    CoSimulation sim(tdtest::three_bus_cosim(), sc);
    sim.initialize();
    while (sim.time() < sc.t_end - 1e-9) {
        const auto rep = sim.step();
        REQUIRE(rep.converged);
        const auto vt = sequence_to_phase(sim.boundary_voltage_t(0));
        const auto vd = sim.head_voltage_d(0);
        // Thévenin head source: the head voltage sits behind the published impedance.
        CHECK((vt - vd).max_abs() < 1e-6);
    }

    Scenario s1 = tdtest::three_bus_scenario(InterfaceModelKind::IM3, SchemeKind::IS1, 1.1);
    Scenario s2 = s1;
    s2.scheme = SchemeKind::IS2;
    const auto r1 = CoSimulation(tdtest::three_bus_cosim(), s1).run();
    const auto r2 = CoSimulation(tdtest::three_bus_cosim(), s2).run();
    const std::size_t on = 200;
    CHECK(std::abs(r1.v5_pos[on] - r2.v5_pos[on]) > 1e-6);
}

TEST_CASE("property: iterative mismatch contracts", "[orchestrator][property]") {
    Scenario sc = tdtest::three_bus_scenario(InterfaceModelKind::IM6, SchemeKind::IS6, 1.5);
    sc.convergence.tol_v = sc.convergence.tol_i = 1e-10;
    const auto r = CoSimulation(tdtest::three_bus_cosim(), sc).run();
    REQUIRE(r.completed());
    int pairs = 0, shrinking = 0;
    for (const auto& m : r.mismatch)
        for (std::size_t k = 2; k < m.size(); ++k) {
            ++pairs;
            if (m[k] <= m[k - 1]) ++shrinking;
        }
    REQUIRE(pairs > 0);
    CHECK(shrinking >= 0.95 * pairs);
}

TEST_CASE("single-pass scheme equals a capped iterative one", "[orchestrator]") {
    Scenario a = tdtest::three_bus_scenario(InterfaceModelKind::IM3, SchemeKind::IS3, 1.3);
    Scenario b = a;
    b.scheme = SchemeKind::IS6;
    b.convergence.max_iter = 1;
    const auto ra = CoSimulation(tdtest::three_bus_cosim(), a).run();
    const auto rb = CoSimulation(tdtest::three_bus_cosim(), b).run();
    REQUIRE(ra.steps() == rb.steps());
    for (std::size_t k = 0; k < ra.steps(); ++k) {
        CHECK(ra.v5_pos[k] == rb.v5_pos[k]);
        CHECK(ra.omega_g1[k] == rb.omega_g1[k]);
    }
}

TEST_CASE("shipped case", "[orchestrator][case]") {
    const auto file = load_scenario(std::filesystem::path(TDCOSIM_DATA_DIR) / "benchmark_matrix.json");
    const auto cs = load_case(file.case_path);

    SECTION("reference pairing completes the full horizon") {
        Scenario sc = file.scenario;
        const auto r = CoSimulation(cs, sc).run();
        CHECK(r.completed());
        CHECK(r.steps() == 3000);
    }
    SECTION("current injection after a stall diverges when the fault clears") {
        Scenario sc = file.scenario;
        sc.im = InterfaceModelKind::IM1;
        sc.scheme = SchemeKind::IS2;
        sc.t_end = 2.0;
        const auto r = CoSimulation(cs, sc).run();
        CHECK_FALSE(r.completed());
        CHECK(r.diverged_at == Catch::Approx(1.07).margin(1e-9));
        CHECK(r.status_text().rfind("diverged@t=", 0) == 0);

        sc.convergence.abort_on_nonconvergence = true;
        CHECK_THROWS_AS(CoSimulation(cs, sc).run(), AbortError);
    }
    SECTION("repeat runs are byte identical") {
        Scenario sc = file.scenario;
        sc.t_end = 1.5;
        std::ostringstream a, b;
        write_timeseries(a, CoSimulation(cs, sc).run());
        write_timeseries(b, CoSimulation(cs, sc).run());
        CHECK(a.str() == b.str());
    }
}

TEST_CASE("scenario validation", "[orchestrator]") {
    const auto cs = tdtest::three_bus_cosim();
    Scenario sc = quiet(InterfaceModelKind::IM7, SchemeKind::IS2, 0.1);
    CHECK_THROWS_AS(validate_scenario(cs, sc), ValidationError);
    sc = quiet(InterfaceModelKind::IM3, SchemeKind::IS6, 0.1);
    sc.dt = 0.0;
    CHECK_THROWS_AS(validate_scenario(cs, sc), ValidationError);
    sc = quiet(InterfaceModelKind::IM3, SchemeKind::IS6, 0.1);
    sc.beta = 1.0;
    CHECK_THROWS_AS(validate_scenario(cs, sc), ValidationError);
    sc = tdtest::three_bus_scenario(InterfaceModelKind::IM3, SchemeKind::IS6, 0.1);
    sc.fault->node = 42;
    CHECK_THROWS_AS(validate_scenario(cs, sc), ValidationError);
    sc = quiet(InterfaceModelKind::IM3, SchemeKind::IS6, 0.1);
    sc.monitors.feeder_bus = 999;
    CHECK_THROWS_AS(CoSimulation(cs, sc), ValidationError);
    CHECK_NOTHROW(validate_scenario(cs, quiet(InterfaceModelKind::IM3, SchemeKind::IS6, 0.1)));
}
