#pragma once

// Sparse complex nodal admittance matrices with cached LU factors, fault
// modification and Thévenin extraction. Current injections INTO the network
// are positive.

#include "tdcosim/phasor.hpp"

#include <Eigen/Sparse>

#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace tdcosim {

struct BranchSpec {
    int from = 0;
    int to = 0;
    Complex z{};          ///< series impedance, |z| > 0
    Complex b_total{};    ///< total line-charging susceptance term (j*B), split half per end
    double tap = 1.0;     ///< off-nominal ratio on the `from` side
};

/// Balanced three-phase-to-ground fault: y_f is added to the diagonal of every
/// sequence network it is applied to.
struct FaultSpec {
    int node = 0;
    Complex admittance{1.0e6, 0.0};
    double start = 0.0;
    double clear = 0.0;
};

/// Default near-bolted fault admittance (p.u.).
inline constexpr double kBoltedFaultAdmittance = 1.0e6;

class NetworkMatrix {
public:
    NetworkMatrix() = default;
    explicit NetworkMatrix(int dimension);

    int dimension() const { return n_; }

    /// Effective entry: base value plus any active fault admittance.
    Complex operator()(int row, int col) const;

    /// Adds to a base entry and invalidates the cached factorization.
    void add(int row, int col, Complex value);
    void add_shunt(int node, Complex y) { add(node, node, y); }

    void apply_fault(const FaultSpec& fault);
    /// Throws StateError if `fault` is not currently applied.
    void clear_fault(const FaultSpec& fault);
    const std::vector<FaultSpec>& active_faults() const { return faults_; }

    /// Factorizes now. Concurrent solve() calls are safe once this returned.
    void factorize() const;
    bool factorized() const { return static_cast<bool>(lu_); }

    /// Solves Y V = I. Reuses the cached factorization until the matrix is edited.
    Eigen::VectorXcd solve(const Eigen::VectorXcd& injections) const;
    std::vector<Complex> solve(std::span<const Complex> injections) const;

    /// Y * V with the effective entries.
    Eigen::VectorXcd multiply(const Eigen::VectorXcd& v) const;

    Eigen::MatrixXcd to_dense() const;
    bool is_symmetric(double tol) const;

    /// Base entries (without fault overlay), row-major ordered.
    const std::map<std::pair<int, int>, Complex>& base_entries() const { return base_; }

private:
    struct Factorization;

    Eigen::SparseMatrix<Complex> assemble() const;

    int n_ = 0;
    std::map<std::pair<int, int>, Complex> base_;
    std::vector<FaultSpec> faults_;
    mutable std::shared_ptr<const Factorization> lu_;
};

/// Standard pi-model Y-bus assembly. Node ids must be dense in [0, n).
/// Throws ValidationError naming any isolated node or a zero-impedance branch.
NetworkMatrix build_ybus(int node_count, std::span<const BranchSpec> branches,
                         const std::map<int, Complex>& shunts = {});

struct Thevenin {
    Phasor v_oc{};
    Complex z_th{};
};

/// Open-circuit voltage at `node` with its own injection zeroed, and the
/// driving-point impedance Z[node][node] from a unit current injection.
Thevenin thevenin_at(const NetworkMatrix& y, std::span<const Complex> internal_injections, int node);

}  // namespace tdcosim
