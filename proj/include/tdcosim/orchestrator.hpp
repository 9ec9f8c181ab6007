#pragma once

// Coupled time loop: initialization, event scheduling, the interaction
// schemes and per-step convergence control.
//
// Each step solves the networks at up to three stages: the post-event state
// x_n (only when an event occurs at t_n), the predictor state x* and the
// corrected state x_{n+1}. Payloads are kept per stage. One iteration runs the
// transmission step through all stages and the feeder solves at every stage;
// iterative schemes repeat until the boundary quantities of every stage stop
// changing, so dynamic states advance once per step with converged algebra.

#include "tdcosim/distribution.hpp"
#include "tdcosim/interface.hpp"
#include "tdcosim/transmission.hpp"

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdcosim {

struct ConvergenceConfig {
    double tol_v = 1e-6;
    double tol_i = 1e-6;
    int max_iter = 20;
    bool abort_on_nonconvergence = false;  ///< default warns and accepts the last iterate
};

/// Signals recorded every step.
struct MonitorSpec {
    int v_pos_bus = 5;       ///< transmission bus id, positive-sequence magnitude
    int feeder_bus = 14;     ///< feeder bus id, phase A magnitude
    int generator_bus = 1;   ///< speed of the generator at this bus
};

/// Transmission case, feeders (one per boundary bus) and motor constants.
struct CoSimCase {
    TransmissionCase transmission;
    std::vector<FeederSpec> feeders;
    MotorParameters motors;
};

struct Scenario {
    std::string name;
    InterfaceModelKind im = InterfaceModelKind::IM7;
    SchemeKind scheme = SchemeKind::IS6;
    double beta = 0.0;
    double dt = 0.005;
    double t_end = 15.0;
    std::optional<FaultSpec> fault;   ///< node is a transmission bus id; start/clear in s
    ConvergenceConfig convergence;
    InterfaceConfig interface;
    MonitorSpec monitors;
    bool record_exchanges = false;
};

enum class RunStatus { Completed, Diverged };

struct TimeSeriesResult {
    std::vector<double> time;
    std::vector<double> v5_pos;
    std::vector<double> v14_a;
    std::vector<double> omega_g1;
    std::vector<int> iterations;
    std::vector<std::vector<double>> mismatch;   ///< per step, one entry per iteration
    RunStatus status = RunStatus::Completed;
    double diverged_at = 0.0;
    std::string message;
    int nonconverged_steps = 0;
    std::vector<BoundaryExchange> exchanges;

    std::size_t steps() const { return time.size(); }
    bool completed() const { return status == RunStatus::Completed; }
    double mean_iterations() const;
    /// "completed" or "diverged@t=<time>".
    std::string status_text() const;
};

/// Raised in abort mode when a step fails to converge or a feeder diverges.
class AbortError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rejects invalid scenarios with the violated rule.
void validate_scenario(const CoSimCase& cs, const Scenario& sc);

class CoSimulation {
public:
    CoSimulation(const CoSimCase& cs, Scenario sc);

    const Scenario& scenario() const { return sc_; }
    const TransmissionSystem& transmission() const { return t_; }
    const std::vector<Feeder>& feeders() const { return feeders_; }
    const std::vector<ACMotorState>& motors(int feeder) const { return motors_.at(static_cast<std::size_t>(feeder)); }
    double time() const { return static_cast<double>(step_) * sc_.dt; }
    int step_index() const { return step_; }

    /// Boundary-consistent steady state; throws InitializationError when no
    /// fixed point is found within 10 * max_iter exchanges.
    void initialize();
    bool initialized() const { return initialized_; }

    struct StepReport {
        int iterations = 0;
        std::vector<double> mismatch;
        bool converged = true;
    };
    /// Advances one step under the scenario's scheme. Throws FbsDivergence or
    /// LowVoltageError when the feeder solution fails.
    StepReport step();

    /// Initializes (if needed) and runs to t_end. Feeder divergence ends the
    /// run with a diverged status unless abort mode is on (AbortError).
    TimeSeriesResult run();

    /// Latest monitored values.
    double v5_pos() const;
    double v14_a() const;
    double omega_g1() const;

    /// Latest converged boundary quantities per boundary index.
    ThreeSequence boundary_voltage_t(int boundary) const;
    ThreePhase head_voltage_d(int boundary) const;
    ThreePhase head_current_d(int boundary) const;
    const FeederSolution& feeder_solution(int feeder) const { return dsol_.at(static_cast<std::size_t>(feeder)); }
    const TransmissionSolution& transmission_solution() const { return tsol_; }
    /// Boundary injection currently applied to the transmission side.
    const BoundaryInjectionT& boundary_injection() const { return inj_; }

private:
    static constexpr int kStages = 3;

    struct TStage {
        bool active = false;
        std::vector<GeneratorState> gens;
        TransmissionSolution sol;
        std::vector<SequenceThevenin> pub;   ///< per boundary
    };
    struct DStage {
        std::vector<FeederSolution> sol;     ///< per boundary
        std::vector<ThreeSequence> i_eq;     ///< consumed current per boundary (models 1-6)
        std::vector<PhaseThevenin> thev;     ///< feeder Thévenin per boundary (model 7)
        std::vector<BoundaryExtract> ex;
    };

    BoundaryInjectionT injection_from(const DStage& d, const std::vector<ThreePhase>* link) const;
    std::vector<SequenceThevenin> publish(const std::vector<GeneratorState>& gens, const TransmissionSolution& sol,
                                          const BoundaryInjectionT& inj) const;
    void transmission_pass(std::array<TStage, kStages>& t, const std::array<DStage, kStages>& d, bool event) const;
    void distribution_pass(std::array<DStage, kStages>& d, const std::array<TStage, kStages>& t, bool event) const;
    FeederSolution solve_feeder(int b, const SequenceThevenin& pub, const std::vector<ThreePhase>& v_lin) const;
    void finish_feeder_stage(DStage& d, int b, FeederSolution sol) const;
    /// Multi-area Thévenin iteration: per stage both sides publish
    /// equivalents, the coupled link subsystem is solved and its currents are
    /// injected into both networks.
    void mate_pass(std::array<TStage, kStages>& t, std::array<DStage, kStages>& d,
                   std::array<std::vector<ThreePhase>, kStages>& link, bool event) const;
    std::vector<double> signature(const TStage& t, const DStage& d, int b) const;
    void apply_events();
    void record(TimeSeriesResult& r, const StepReport& rep) const;

    Scenario sc_;
    TransmissionSystem t_;
    std::vector<Feeder> feeders_;
    std::vector<int> feeder_of_boundary_;
    std::vector<LinkBranch> links_;
    std::vector<std::vector<ACMotorState>> motors_;
    bool initialized_ = false;
    int step_ = 0;
    bool fault_active_ = false;
    int fault_on_step_ = -1;
    int fault_off_step_ = -1;

    // state at t_n
    TransmissionSolution tsol_;
    BoundaryInjectionT inj_;
    std::vector<SequenceThevenin> tpub_;
    DStage dprev_;
    std::vector<FeederSolution> dsol_;
    std::vector<ThreePhase> link_prev_;

    int mon_bus_ = 0;
    int mon_feeder_ = 0;
    int mon_feeder_bus_ = 0;
    int mon_gen_ = 0;
    std::vector<BoundaryExchange>* trace_ = nullptr;
};

}  // namespace tdcosim
