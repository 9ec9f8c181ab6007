#include "tdcosim/network.hpp"

#include "tdcosim/errors.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cctype>
#include <string>

namespace tdcosim {

struct NetworkMatrix::Factorization {
    Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> lu;
};

namespace {

int pivot_from_message(const std::string& msg) {
    // Eigen reports e.g. "THE MATRIX IS STRUCTURALLY SINGULAR ... ZERO COLUMN AT 3"
    auto it = std::find_if(msg.rbegin(), msg.rend(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (it == msg.rend()) return -1;
    auto end = it.base();
    auto begin = end;
    while (begin != msg.begin() && std::isdigit(static_cast<unsigned char>(*(begin - 1)))) --begin;
    return std::stoi(std::string(begin, end));
}

}  // namespace

NetworkMatrix::NetworkMatrix(int dimension) : n_(dimension) {
    if (dimension < 0) throw ValidationError("network dimension must be non-negative");
}

Complex NetworkMatrix::operator()(int row, int col) const {
    Complex v{};
    if (auto it = base_.find({row, col}); it != base_.end()) v = it->second;
    if (row == col) {
        for (const auto& f : faults_)
            if (f.node == row) v += f.admittance;
    }
    return v;
}

void NetworkMatrix::add(int row, int col, Complex value) {
    if (row < 0 || col < 0 || row >= n_ || col >= n_)
        throw ValidationError("network entry (" + std::to_string(row) + "," + std::to_string(col) + ") out of range");
    base_[{row, col}] += value;
    lu_.reset();
}

void NetworkMatrix::apply_fault(const FaultSpec& fault) {
    if (fault.node < 0 || fault.node >= n_)
        throw ValidationError("fault node " + std::to_string(fault.node) + " does not exist");
    if (!std::isfinite(fault.admittance.real()) || !std::isfinite(fault.admittance.imag()))
        throw ValidationError("fault admittance must be finite");
    if (fault.admittance == Complex{}) return;
    faults_.push_back(fault);
    lu_.reset();
}

void NetworkMatrix::clear_fault(const FaultSpec& fault) {
    if (fault.admittance == Complex{}) return;
    auto it = std::find_if(faults_.begin(), faults_.end(), [&](const FaultSpec& f) {
        return f.node == fault.node && f.admittance == fault.admittance;
    });
    if (it == faults_.end())
        throw StateError("no fault applied at node " + std::to_string(fault.node));
    faults_.erase(it);
    lu_.reset();
}

Eigen::SparseMatrix<Complex> NetworkMatrix::assemble() const {
    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(base_.size() + faults_.size());
    for (const auto& [rc, v] : base_) triplets.emplace_back(rc.first, rc.second, v);
    for (const auto& f : faults_) triplets.emplace_back(f.node, f.node, f.admittance);
    Eigen::SparseMatrix<Complex> m(n_, n_);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

void NetworkMatrix::factorize() const {
    if (lu_) return;
    auto f = std::make_shared<Factorization>();
    auto m = assemble();
    f->lu.analyzePattern(m);
    f->lu.factorize(m);
    if (f->lu.info() != Eigen::Success) {
        const std::string msg = f->lu.lastErrorMessage();
        throw SolveError("singular network matrix (" + std::to_string(n_) + " nodes): " + msg,
                         pivot_from_message(msg));
    }
    lu_ = std::move(f);
}

Eigen::VectorXcd NetworkMatrix::solve(const Eigen::VectorXcd& injections) const {
    if (injections.size() != n_) throw ValidationError("injection vector size mismatch");
    factorize();
    Eigen::VectorXcd v = lu_->lu.solve(injections);
    if (!v.allFinite()) throw SolveError("network solution is not finite (numerically singular matrix)");
    return v;
}

std::vector<Complex> NetworkMatrix::solve(std::span<const Complex> injections) const {
    Eigen::VectorXcd rhs(static_cast<Eigen::Index>(injections.size()));
    for (std::size_t i = 0; i < injections.size(); ++i) rhs(static_cast<Eigen::Index>(i)) = injections[i];
    Eigen::VectorXcd v = solve(rhs);
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXcd NetworkMatrix::multiply(const Eigen::VectorXcd& v) const { return assemble() * v; }

Eigen::MatrixXcd NetworkMatrix::to_dense() const { return Eigen::MatrixXcd(assemble()); }

bool NetworkMatrix::is_symmetric(double tol) const {
    for (const auto& [rc, v] : base_) {
        if (std::abs((*this)(rc.second, rc.first) - (*this)(rc.first, rc.second)) > tol) return false;
    }
    return true;
}

NetworkMatrix build_ybus(int node_count, std::span<const BranchSpec> branches, const std::map<int, Complex>& shunts) {
    NetworkMatrix y(node_count);
    std::vector<bool> connected(static_cast<std::size_t>(node_count), false);
    for (const auto& br : branches) {
        if (br.from < 0 || br.to < 0 || br.from >= node_count || br.to >= node_count)
            throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + " references a missing node");
        if (std::abs(br.z) == 0.0)
            throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + " has zero impedance");
        if (br.tap <= 0.0) throw ValidationError("branch tap must be positive");
        const Complex ys = 1.0 / br.z;
        const Complex half_b = br.b_total / 2.0;
        const double t = br.tap;
        y.add(br.from, br.from, (ys + half_b) / (t * t));
        y.add(br.to, br.to, ys + half_b);
        y.add(br.from, br.to, -ys / t);
        y.add(br.to, br.from, -ys / t);
        connected[static_cast<std::size_t>(br.from)] = true;
        connected[static_cast<std::size_t>(br.to)] = true;
    }
    for (const auto& [node, ysh] : shunts) {
        if (node < 0 || node >= node_count) throw ValidationError("shunt at missing node " + std::to_string(node));
        y.add_shunt(node, ysh);
        if (ysh != Complex{}) connected[static_cast<std::size_t>(node)] = true;
    }
    for (int i = 0; i < node_count; ++i)
        if (!connected[static_cast<std::size_t>(i)]) throw ValidationError("node " + std::to_string(i) + " is isolated");
    return y;
}

Thevenin thevenin_at(const NetworkMatrix& y, std::span<const Complex> internal_injections, int node) {
    if (node < 0 || node >= y.dimension()) throw ValidationError("thevenin node out of range");
    Eigen::VectorXcd rhs(y.dimension());
    for (int i = 0; i < y.dimension(); ++i) rhs(i) = internal_injections[static_cast<std::size_t>(i)];
    rhs(node) = 0.0;
    const Eigen::VectorXcd v = y.solve(rhs);
    Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(y.dimension());
    unit(node) = 1.0;
    const Eigen::VectorXcd x = y.solve(unit);
    return {v(node), x(node)};
}

}  // namespace tdcosim
