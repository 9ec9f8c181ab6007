#pragma once

// Interface models: transformations between simulator outputs and the
// payloads exchanged at a transmission/distribution boundary, plus the link
// subsystem solve used by the multi-area Thévenin model.

#include "tdcosim/distribution.hpp"
#include "tdcosim/phasor.hpp"
#include "tdcosim/transmission.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tdcosim {

enum class InterfaceModelKind { IM1 = 1, IM2, IM3, IM4, IM5, IM6, IM7 };

enum class SchemeKind {
    IS1 = 1,  ///< non-iterative series, transmission first
    IS2,      ///< non-iterative series, distribution first
    IS3,      ///< non-iterative parallel
    IS4,      ///< iterative series, transmission first
    IS5,      ///< iterative series, distribution first
    IS6       ///< iterative parallel
};

enum class DistributionMode { PowerFlow, Dynamic };

/// What each interface model expects from the two simulators.
struct InterfaceRequirements {
    SequenceMode t_mode;
    DistributionMode d_mode;
    bool t_thevenin;      ///< transmission publishes a Thévenin rather than a voltage source
    bool mate;
};

InterfaceRequirements requirements(InterfaceModelKind kind);

bool is_iterative(SchemeKind scheme);
bool is_parallel(SchemeKind scheme);
bool transmission_first(SchemeKind scheme);

std::string to_string(InterfaceModelKind kind);
std::string to_string(SchemeKind scheme);
/// Accepts "IM3", "im3" or "3". Throws ValidationError.
InterfaceModelKind parse_interface_model(const std::string& text);
SchemeKind parse_scheme(const std::string& text);

struct Rejection {
    std::string cell;    ///< which compatibility rule was violated
    std::string reason;
};

/// Mode and fault-placement compatibility of an interface model.
std::optional<Rejection> validate_combination(InterfaceModelKind kind, SequenceMode t_mode, DistributionMode d_mode,
                                              bool fault_in_distribution = false, bool unbalanced_t_fault = false);
/// Interface model / interaction scheme compatibility.
std::optional<Rejection> validate_scheme(InterfaceModelKind kind, SchemeKind scheme);

struct InterfaceConfig {
    double epsilon = 1e-6;                                        ///< voltage-source impedance, p.u.
    Mat3 z_link = Mat3::Identity() * Complex(0.0, 1e-4);          ///< link branch impedance
    double voltage_floor = 1e-7;                                  ///< |V1| below this rejects the constant-current conversion
};

/// Transmission-side publication converted to the feeder head source.
/// `published` is a voltage source (models 1, 2, 4, 5) or a Thévenin (3, 6).
HeadSource t_to_d(InterfaceModelKind kind, const SequenceThevenin& published);

/// Consumed boundary current handed to the transmission side, in sequence
/// components (zero/negative left at 0 for models 1-3).
ThreeSequence d_to_t(InterfaceModelKind kind, const BoundaryExtract& extract, double voltage_floor);

struct LinkBranch {
    int boundary = 0;   ///< transmission boundary index
    int feeder = 0;     ///< feeder index
    Mat3 z_link = Mat3::Identity() * Complex(0.0, 1e-4);
};

/// Per link solves (Z_T + Z_link + Z_D) i = E_T - E_D. Returned currents flow
/// from the transmission side into the feeder head.
std::vector<ThreePhase> mate_link_solve(const std::vector<PhaseThevenin>& thev_t, const std::vector<PhaseThevenin>& thev_d,
                                        const std::vector<LinkBranch>& links);

/// Coupled link subsystem against a multi-port transmission equivalent:
/// (Z_T + diag(Z_link + Z_D)) i = E_T - E_D over all links at once, where
/// Z_T carries the transfer impedances between boundaries.
std::vector<ThreePhase> mate_link_solve(const MultiPortThevenin& thev_t, const std::vector<PhaseThevenin>& thev_d,
                                        const std::vector<LinkBranch>& links);

/// Phase-domain form of a sequence Thévenin.
PhaseThevenin to_phase(const SequenceThevenin& th);

/// One boundary exchange record.
struct BoundaryExchange {
    double time = 0.0;
    int iteration = 0;
    InterfaceModelKind kind = InterfaceModelKind::IM2;
    int boundary = 0;
    HeadSource t_to_d;
    std::variant<ThreeSequence, PhaseThevenin> d_to_t;
};

}  // namespace tdcosim
