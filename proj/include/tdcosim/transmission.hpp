#pragma once

// Phasor-domain transient-stability simulator for the transmission system.
// Classical machines (constant E' behind x'd) integrated with an explicit
// predictor-corrector; the network is solved algebraically as Y V = I in the
// positive sequence and, in three-sequence mode, also in the negative and zero
// sequences where boundary injections and faults are the only excitation.

#include "tdcosim/network.hpp"
#include "tdcosim/phasor.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tdcosim {

enum class SequenceMode { PositiveOnly, ThreeSequence };

enum class BusKind { Slack, PV, PQ };

struct TransmissionBus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_set = 1.0;       ///< |V| setpoint (slack/PV) or flat-start guess
    double angle = 0.0;       ///< radians, slack reference
    double p_gen = 0.0;       ///< scheduled generation (PV)
    Complex load{};           ///< static load S, folded into Y as constant impedance
};

struct TransmissionBranch {
    int from = 0;             ///< bus ids
    int to = 0;
    Complex z1{};
    Complex b1{};             ///< total charging, j*B
    std::optional<Complex> z0;  ///< zero-sequence; defaults to z1
    std::optional<Complex> b0;
    double tap = 1.0;
};

struct GeneratorSpec {
    int bus = 0;              ///< bus id
    double x_d_prime = 0.0;
    double h = 0.0;           ///< inertia constant, s
    double damping = 0.0;     ///< p.u.
    std::optional<double> x2; ///< defaults to x'd
    std::optional<double> x0; ///< defaults to 0.5 x'd (grounded wye)
};

struct TransmissionCase {
    std::string name;
    double base_mva = 100.0;
    double frequency = 60.0;
    std::vector<TransmissionBus> buses;
    std::vector<TransmissionBranch> branches;
    std::vector<GeneratorSpec> generators;
    std::vector<int> boundary_buses;  ///< bus ids where feeders attach

    int bus_index(int id) const;
};

struct PowerFlowResult {
    std::vector<Complex> voltage;          ///< per bus index
    std::vector<Complex> generator_power;  ///< per generator, S = P + jQ
    int iterations = 0;
    double mismatch = 0.0;
};

/// Newton-Raphson (polar) power flow. `extra_loads` adds constant-power load
/// at bus ids (used for the distribution boundary). Throws
/// InitializationError when it does not converge.
PowerFlowResult solve_power_flow(const TransmissionCase& tcase, const std::map<int, Complex>& extra_loads,
                                 double tol = 1e-12, int max_iter = 30);

struct GeneratorState {
    int bus = 0;              ///< bus index
    double delta = 0.0;       ///< rotor angle, rad
    double omega = 1.0;       ///< speed, p.u.
    double e_mag = 1.0;       ///< |E'|
    double x_d_prime = 0.0;
    double h = 0.0;
    double damping = 0.0;
    double p_m = 0.0;

    Phasor e_prime() const { return polar(e_mag, delta); }
};

/// Boundary current injections into the transmission network, one entry per
/// boundary bus in TransmissionCase::boundary_buses order.
struct BoundaryInjectionT {
    std::vector<ThreeSequence> current;
};

struct TransmissionSolution {
    std::vector<ThreeSequence> v;  ///< per bus index
    std::vector<double> p_e;       ///< per generator
};

/// Per-sequence Thévenin at a boundary bus. `balanced` marks the
/// positive-sequence-only form (z2 = z0 = z1, v2 = v0 = 0).
struct SequenceThevenin {
    ThreeSequence v_oc;
    ThreeSequence z_th;
    bool balanced = false;
};

/// Thévenin seen from all boundaries at once: open-circuit voltages with
/// every boundary injection removed and, per sequence (zero, positive,
/// negative), the boundary-to-boundary impedance matrix.
struct MultiPortThevenin {
    std::vector<ThreeSequence> v_oc;
    std::array<Eigen::MatrixXcd, 3> z;
    bool balanced = false;
};

struct TransmissionStep {
    TransmissionSolution solution;
    std::vector<GeneratorState> generators;
};

class TransmissionSystem {
public:
    TransmissionSystem(TransmissionCase tcase, SequenceMode mode);

    SequenceMode mode() const { return mode_; }
    const TransmissionCase& case_data() const { return case_; }
    int bus_count() const { return static_cast<int>(case_.buses.size()); }
    int bus_index(int id) const { return case_.bus_index(id); }
    int boundary_count() const { return static_cast<int>(boundary_index_.size()); }
    int boundary_bus_index(int boundary) const { return boundary_index_.at(static_cast<std::size_t>(boundary)); }
    double synchronous_speed() const { return 2.0 * kPi * case_.frequency; }

    /// Sets E', delta and P_m from a converged power flow so every state
    /// derivative vanishes, and folds static loads into the sequence networks
    /// as constant impedances.
    void init_steady_state(const PowerFlowResult& pf);
    bool initialized() const { return initialized_; }

    const std::vector<GeneratorState>& generators() const { return gens_; }
    void set_generators(std::vector<GeneratorState> gens) { gens_ = std::move(gens); }

    /// Algebraic network solution for the given machine states.
    TransmissionSolution network_solve(std::span<const GeneratorState> gens, const BoundaryInjectionT& boundary) const;
    TransmissionSolution network_solve(const BoundaryInjectionT& boundary) const { return network_solve(gens_, boundary); }

    /// Predictor (explicit Euler) from x_n and its network solution.
    std::vector<GeneratorState> predict(std::span<const GeneratorState> gens, const TransmissionSolution& sol, double dt) const;
    /// Trapezoidal corrector from x_n and the predicted stage.
    std::vector<GeneratorState> correct(std::span<const GeneratorState> gens, const TransmissionSolution& sol,
                                        const TransmissionSolution& predicted_sol, double dt) const;

    /// One standalone predictor-corrector step with the boundary injection
    /// held constant. Advances the internal machine states.
    TransmissionStep step_dynamics(double dt, const BoundaryInjectionT& boundary);

    /// Thévenin seen from boundary `boundary`, with that boundary's own
    /// injection excluded and all other injections included.
    SequenceThevenin extract_thevenin(std::span<const GeneratorState> gens, const BoundaryInjectionT& injections,
                                      int boundary) const;

    MultiPortThevenin extract_multiport_thevenin(std::span<const GeneratorState> gens) const;

    /// Driving-point impedances per sequence at a boundary (cached per fault state).
    ThreeSequence boundary_impedance(int boundary) const;

    /// Solved boundary voltage published as a Thévenin with z = epsilon.
    SequenceThevenin publish_voltage_source(const TransmissionSolution& sol, int boundary, double epsilon) const;

    void apply_fault(const FaultSpec& fault);  ///< fault.node is a bus id
    void clear_fault(const FaultSpec& fault);

    const NetworkMatrix& y1() const { return y1_; }
    const NetworkMatrix& y2() const { return y2_; }
    const NetworkMatrix& y0() const { return y0_; }

    BoundaryInjectionT zero_injection() const;

private:
    void build_networks(const std::vector<Complex>& load_admittance);

    TransmissionCase case_;
    SequenceMode mode_;
    std::vector<int> boundary_index_;
    std::vector<GeneratorState> gens_;
    NetworkMatrix y1_, y2_, y0_;
    bool initialized_ = false;
    mutable std::map<int, ThreeSequence> z_cache_;
    mutable std::optional<std::array<Eigen::MatrixXcd, 3>> z_transfer_;
};

}  // namespace tdcosim
