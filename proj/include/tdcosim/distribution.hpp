#pragma once

// Three-phase unbalanced radial feeder simulator.
//
// Per-unit convention: phase voltages and currents share the transmission
// system's current and impedance bases, so a phase carrying V and I consumes
// V*conj(I)/3 in system (three-phase base) p.u. Load powers are stated in the
// same system base; a balanced feeder with 1/3 of P on each phase draws a
// positive-sequence current equal to the transmission-side I1 = conj(P/V1).
//
// Two network solutions:
//  * fbs_solve: forward-backward sweep power flow (interface models 1 and 4).
//    Running motors are constant power at the sweep iterate (impedance law
//    below v_stall). Stalled motors enter as constant-power loads sized from
//    the stall impedance at the head source voltage of that phase.
//  * dyn_network_solve: admittance solution (Y V = I) with the head source
//    converted to its Norton form. Stalled motors are constant impedances and
//    running motors are Norton currents computed at the last solved voltage.

#include "tdcosim/phasor.hpp"

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tdcosim {

class NetworkMatrix;

struct LoadComponent {
    Complex s{};              ///< rated per-phase complex power, system p.u.
    double z_share = 0.75;    ///< constant-impedance fraction
    double motor_share = 0.25;///< single-phase A/C motor fraction
};

struct FeederBus {
    int id = 0;
    std::array<LoadComponent, 3> load{};
};

struct FeederSegment {
    int from = 0;  ///< bus ids, `from` is the upstream end
    int to = 0;
    Mat3 z = Mat3::Zero();
};

struct FeederSpec {
    std::string name;
    int boundary_bus = 0;       ///< transmission bus id the head attaches to
    int head_bus = 0;           ///< feeder bus id of the head
    std::vector<FeederBus> buses;
    std::vector<FeederSegment> segments;
};

struct MotorParameters {
    double v_stall = 0.6;           ///< p.u.
    double stall_delay = 0.005;     ///< s below v_stall before stalling
    double stall_multiplier = 3.0;  ///< stalled |S| at 1 p.u. over rated |S|
    double stall_power_factor = 0.0;///< 0 keeps the rated power factor
    bool enabled = true;            ///< false disables stalling (motors stay running)
};

enum class MotorMode { Running, Stalled };

struct ACMotorState {
    MotorMode mode = MotorMode::Running;
    double v_stall = 0.6;
    double t_below = 0.0;
    Complex z_stall{};      ///< phase-domain stall impedance
    Complex s_rated{};      ///< per-phase running power, system p.u.
    bool can_stall = true;

    /// Complex power drawn while stalled at terminal magnitude |v|.
    Complex stalled_power(double v_mag) const { return v_mag * v_mag * std::conj(1.0 / z_stall) / 3.0; }
};

struct HeadSource {
    enum class Kind { IdealVoltage, Thevenin };
    Kind kind = Kind::IdealVoltage;
    ThreePhase e;
    Mat3 z = Mat3::Zero();

    /// Voltage source represented as a Thévenin with z = epsilon * I.
    static HeadSource ideal(const ThreePhase& e, double epsilon) {
        return {Kind::IdealVoltage, e, Mat3::Identity() * Complex(epsilon, 0.0)};
    }
    static HeadSource thevenin(const ThreePhase& e, const Mat3& z) { return {Kind::Thevenin, e, z}; }
};

struct PhaseThevenin {
    ThreePhase v_oc;
    Mat3 z = Mat3::Zero();
};

struct FeederSolution {
    std::vector<ThreePhase> v;   ///< per local bus index
    ThreePhase head_current;     ///< flowing from the source into the head bus
    int sweeps = 0;              ///< FBS sweeps; 0 for the admittance solution
};

struct BoundaryExtract {
    Complex s_total{};           ///< three-phase power into the feeder, system p.u.
    ThreePhase i_phase;
    ThreeSequence i_seq;
    ThreePhase v_head;
};

struct FbsOptions {
    double tolerance = 1e-8;
    int max_sweeps = 200;
    double blowup = 1e3;         ///< |V| above this aborts early as divergent
};

/// Loads used by the two network solutions; see the file comment.
enum class LoadRepresentation { Admittance, PowerFlow };

/// Rescales per-phase loads so that phase A keeps 1/3, phase B (1-beta)/3 and
/// phase C (1+beta)/3 of each bus total; reactive power uses the same factors.
/// Phase C is computed as the remainder so the three phases sum to the bus
/// total exactly. Throws ValidationError unless 0 <= beta < 1.
FeederSpec apply_unbalance(const FeederSpec& feeder, double beta);

/// Sum of the three phase values in the order (A + B) + C.
double phase_sum(const std::array<double, 3>& p);

/// Advances stall timers from terminal voltage magnitudes (one per motor).
void step_motors(std::span<ACMotorState> motors, std::span<const double> v_mag, double dt, double stall_delay);

BoundaryExtract extract_boundary_d(const FeederSolution& solution, int head_index = 0);

class Feeder {
public:
    Feeder(FeederSpec spec, MotorParameters params = {});
    ~Feeder();
    Feeder(const Feeder&);
    Feeder& operator=(const Feeder&);
    Feeder(Feeder&&) noexcept;
    Feeder& operator=(Feeder&&) noexcept;

    const FeederSpec& spec() const { return spec_; }
    const MotorParameters& motor_parameters() const { return params_; }
    int bus_count() const { return static_cast<int>(spec_.buses.size()); }
    int head_index() const { return head_; }
    int local_index(int bus_id) const;
    /// Parent local index per bus (-1 for the head), from the radial tree.
    const std::vector<int>& parents() const { return parent_; }

    /// One motor per bus-phase, index bus * 3 + phase.
    std::vector<ACMotorState> initial_motors() const;
    std::vector<ThreePhase> flat_voltages(const ThreePhase& head) const;

    /// Sweeps start from a flat profile at the head source voltage.
    FeederSolution fbs_solve(const HeadSource& source, std::span<const ACMotorState> motors,
                             const FbsOptions& options = {}) const;

    FeederSolution dyn_network_solve(const HeadSource& source, std::span<const ACMotorState> motors,
                                     std::span<const ThreePhase> v_lin) const;

    /// Admittance solution with a current injected into the head instead of a
    /// source (multi-area Thévenin coupling). head_current in the result is the injection.
    FeederSolution dyn_network_solve_injected(const ThreePhase& head_injection, std::span<const ACMotorState> motors,
                                              std::span<const ThreePhase> v_lin) const;

    /// Thévenin seen into the head with running motors linearized as Norton
    /// currents at v_lin.
    PhaseThevenin extract_thevenin_d(std::span<const ACMotorState> motors, std::span<const ThreePhase> v_lin) const;

    /// Currents drawn by the loads at voltages v (positive = consumed).
    /// Admittance: running motors at v_lin, stalled motors as impedances.
    /// PowerFlow: running motors at v, stalled motors as constant power at
    /// the magnitudes in v_lin (the head voltage during a sweep).
    std::vector<ThreePhase> load_currents(std::span<const ThreePhase> v, std::span<const ACMotorState> motors,
                                          std::span<const ThreePhase> v_lin, LoadRepresentation rep) const;

    /// Sum of I^H Re(Z) I / 3 over segments for branch currents implied by v.
    double segment_losses(const FeederSolution& solution) const;

    const Mat3& segment_impedance(int local_bus) const { return seg_z_.at(static_cast<std::size_t>(local_bus)); }

    /// Running motor current drawn at the linearization voltage.
    static Complex running_motor_current(const ACMotorState& m, Phasor v_lin);

private:
    struct Cache;

    const NetworkMatrix& admittance(std::span<const ACMotorState> motors, const Mat3* source_z) const;
    std::vector<Complex> norton_injections(std::span<const ACMotorState> motors, std::span<const ThreePhase> v_lin) const;

    FeederSpec spec_;
    MotorParameters params_;
    int head_ = 0;
    std::vector<int> parent_;           ///< per local bus
    std::vector<int> order_;            ///< parents before children
    std::vector<Mat3> seg_z_;           ///< impedance of the segment feeding each bus
    std::unique_ptr<Cache> cache_;
};

}  // namespace tdcosim
