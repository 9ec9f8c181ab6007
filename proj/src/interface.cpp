#include "tdcosim/interface.hpp"

#include "tdcosim/errors.hpp"

#include <algorithm>
#include <cctype>

namespace tdcosim {

InterfaceRequirements requirements(InterfaceModelKind kind) {
    switch (kind) {
    case InterfaceModelKind::IM1: return {SequenceMode::PositiveOnly, DistributionMode::PowerFlow, false, false};
    case InterfaceModelKind::IM2: return {SequenceMode::PositiveOnly, DistributionMode::Dynamic, false, false};
    case InterfaceModelKind::IM3: return {SequenceMode::PositiveOnly, DistributionMode::Dynamic, true, false};
    case InterfaceModelKind::IM4: return {SequenceMode::ThreeSequence, DistributionMode::PowerFlow, false, false};
    case InterfaceModelKind::IM5: return {SequenceMode::ThreeSequence, DistributionMode::Dynamic, false, false};
    case InterfaceModelKind::IM6: return {SequenceMode::ThreeSequence, DistributionMode::Dynamic, true, false};
    case InterfaceModelKind::IM7: return {SequenceMode::ThreeSequence, DistributionMode::Dynamic, true, true};
    }
    throw ValidationError("unknown interface model");
}

bool is_iterative(SchemeKind s) { return s == SchemeKind::IS4 || s == SchemeKind::IS5 || s == SchemeKind::IS6; }
bool is_parallel(SchemeKind s) { return s == SchemeKind::IS3 || s == SchemeKind::IS6; }
bool transmission_first(SchemeKind s) { return s == SchemeKind::IS1 || s == SchemeKind::IS4; }

std::string to_string(InterfaceModelKind kind) { return "IM" + std::to_string(static_cast<int>(kind)); }
std::string to_string(SchemeKind scheme) { return "IS" + std::to_string(static_cast<int>(scheme)); }

namespace {

int parse_index(const std::string& text, const std::string& prefix, int max, const char* what) {
    std::string t;
    for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t.rfind(prefix, 0) == 0) t = t.substr(prefix.size());
    if (t.size() == 1 && t[0] >= '1' && t[0] <= '0' + max) return t[0] - '0';
    throw ValidationError(std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace

InterfaceModelKind parse_interface_model(const std::string& text) {
    return static_cast<InterfaceModelKind>(parse_index(text, "im", 7, "interface model"));
}

SchemeKind parse_scheme(const std::string& text) {
    return static_cast<SchemeKind>(parse_index(text, "is", 6, "interaction scheme"));
}

std::optional<Rejection> validate_combination(InterfaceModelKind kind, SequenceMode t_mode, DistributionMode d_mode,
                                              bool fault_in_distribution, bool unbalanced_t_fault) {
    const auto req = requirements(kind);
    const std::string name = to_string(kind);
    if (t_mode != req.t_mode)
        return Rejection{name + "/transmission model",
                         name + " requires " +
                             (req.t_mode == SequenceMode::PositiveOnly ? "a positive-sequence" : "a three-sequence") +
                             " transmission simulation"};
    if (d_mode != req.d_mode)
        return Rejection{name + "/distribution model",
                         name + " requires the distribution " +
                             (req.d_mode == DistributionMode::PowerFlow ? "power-flow" : "dynamic network") + " solution"};
    if (fault_in_distribution && req.d_mode == DistributionMode::PowerFlow)
        return Rejection{name + "/limitations", "no fault is allowed in D under " + name};
    if (fault_in_distribution)
        return Rejection{name + "/limitations", "faults inside distribution feeders are not supported"};
    if (unbalanced_t_fault) return Rejection{name + "/limitations", "unbalanced fault can't be applied in T"};
    return std::nullopt;
}

std::optional<Rejection> validate_scheme(InterfaceModelKind kind, SchemeKind scheme) {
    if (kind == InterfaceModelKind::IM7 && !is_parallel(scheme))
        return Rejection{"IM7/" + to_string(scheme),
                         "the multi-area Thévenin link solve runs outside both simulators and needs a parallel scheme (IS3 or IS6)"};
    return std::nullopt;
}

std::vector<ThreePhase> mate_link_solve(const MultiPortThevenin& thev_t, const std::vector<PhaseThevenin>& thev_d,
                                        const std::vector<LinkBranch>& links) {
    if (links.empty()) throw ValidationError("the link subsystem needs at least one link");
    const auto n = static_cast<Eigen::Index>(3 * links.size());
    Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, n);
    Eigen::VectorXcd rhs(n);
    for (std::size_t r = 0; r < links.size(); ++r) {
        const auto br = static_cast<Eigen::Index>(links[r].boundary);
        if (links[r].z_link.norm() == 0.0) throw ValidationError("link branch impedance must be nonzero");
        for (std::size_t c = 0; c < links.size(); ++c) {
            const auto bc = static_cast<Eigen::Index>(links[c].boundary);
            const ThreeSequence zs{thev_t.z[0](br, bc), thev_t.z[1](br, bc), thev_t.z[2](br, bc)};
            const Mat3 block = thev_t.balanced ? Mat3(Mat3::Identity() * zs.positive) : sequence_impedance_to_phase_matrix(zs);
            z.block<3, 3>(3 * static_cast<Eigen::Index>(r), 3 * static_cast<Eigen::Index>(c)) = block;
        }
        const auto& d = thev_d.at(static_cast<std::size_t>(links[r].feeder));
        z.block<3, 3>(3 * static_cast<Eigen::Index>(r), 3 * static_cast<Eigen::Index>(r)) += links[r].z_link + d.z;
        const auto& v = thev_t.v_oc.at(static_cast<std::size_t>(br));
        const ThreePhase e_t = thev_t.balanced ? ThreePhase::balanced(v.positive) : sequence_to_phase(v);
        rhs.segment<3>(3 * static_cast<Eigen::Index>(r)) = e_t.to_vector() - d.v_oc.to_vector();
    }
    if (!z.allFinite()) throw ValidationError("link subsystem impedance is not finite");
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(z);
    if (!lu.isInvertible()) throw SolveError("link subsystem has a singular impedance matrix");
    const Eigen::VectorXcd i = lu.solve(rhs);
    std::vector<ThreePhase> out;
    for (std::size_t r = 0; r < links.size(); ++r)
        out.push_back(ThreePhase::from_vector(Vec3(i.segment<3>(3 * static_cast<Eigen::Index>(r)))));
    return out;
}

PhaseThevenin to_phase(const SequenceThevenin& th) {
    PhaseThevenin out;
    if (th.balanced) {
        out.v_oc = ThreePhase::balanced(th.v_oc.positive);
        out.z = Mat3::Identity() * th.z_th.positive;
    } else {
        out.v_oc = sequence_to_phase(th.v_oc);
        out.z = sequence_impedance_to_phase_matrix(th.z_th);
    }
    return out;
}

HeadSource t_to_d(InterfaceModelKind kind, const SequenceThevenin& published) {
    const auto req = requirements(kind);
    if (req.mate) throw ValidationError("IM7 exchanges Thévenin pairs through the link solve, not a head source");
    const bool positive_only = req.t_mode == SequenceMode::PositiveOnly;
    if (published.balanced != positive_only)
        throw ValidationError(to_string(kind) + " received a transmission publication from the wrong sequence mode");
    if (!req.t_thevenin) {
        const ThreePhase e =
            positive_only ? ThreePhase::balanced(published.v_oc.positive) : sequence_to_phase(published.v_oc);
        return HeadSource::ideal(e, published.z_th.positive.real());
    }
    const auto ph = to_phase(published);
    return HeadSource::thevenin(ph.v_oc, ph.z);
}

ThreeSequence d_to_t(InterfaceModelKind kind, const BoundaryExtract& extract, double voltage_floor) {
    const auto req = requirements(kind);
    if (req.mate) throw ValidationError("IM7 exchanges Thévenin pairs through the link solve, not an equivalent load");
    if (req.t_mode == SequenceMode::ThreeSequence) return extract.i_seq;
    const Complex v1 = phase_to_sequence(extract.v_head).positive;
    if (std::abs(v1) < voltage_floor)
        throw LowVoltageError("boundary positive-sequence voltage " + std::to_string(std::abs(v1)) +
                              " p.u. is below the constant-current conversion floor");
    ThreeSequence out;
    out.positive = std::conj(extract.s_total / v1);
    return out;
}

std::vector<ThreePhase> mate_link_solve(const std::vector<PhaseThevenin>& thev_t, const std::vector<PhaseThevenin>& thev_d,
                                        const std::vector<LinkBranch>& links) {
    if (links.empty()) throw ValidationError("the link subsystem needs at least one link");
    std::vector<ThreePhase> out;
    out.reserve(links.size());
    for (const auto& link : links) {
        const auto& t = thev_t.at(static_cast<std::size_t>(link.boundary));
        const auto& d = thev_d.at(static_cast<std::size_t>(link.feeder));
        if (link.z_link.norm() == 0.0) throw ValidationError("link branch impedance must be nonzero");
        const Mat3 z = t.z + link.z_link + d.z;
        if (!z.allFinite()) throw ValidationError("link subsystem impedance is not finite");
        Eigen::FullPivLU<Mat3> lu(z);
        if (!lu.isInvertible())
            throw SolveError("link subsystem " + std::to_string(link.boundary) + " has a singular impedance matrix");
        out.push_back(ThreePhase::from_vector(lu.solve(Vec3(t.v_oc.to_vector() - d.v_oc.to_vector()))));
    }
    return out;
}

}  // namespace tdcosim
