#pragma once

// Small cases and dense oracles shared by the test executables.

#include "tdcosim/orchestrator.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

namespace tdtest {

using tdcosim::Complex;
using tdcosim::Mat3;

inline Complex j(double x) { return {0.0, x}; }

/// Phase matrix of a transposed segment from sequence impedances.
inline Mat3 seg(Complex z1, Complex z0) {
    return tdcosim::sequence_impedance_to_phase_matrix({z0, z1, z1});
}

/// Buses 1 (slack), 2 (PV) and 3 (boundary, PQ); two classical machines.
inline tdcosim::TransmissionCase three_bus(double damping = 2.0) {
    using namespace tdcosim;
    TransmissionCase c;
    c.name = "three-bus";
    c.buses = {{1, BusKind::Slack, 1.03, 0.0, 0.0, {}},
               {2, BusKind::PV, 1.02, 0.0, 0.9, {}},
               {3, BusKind::PQ, 1.0, 0.0, 0.0, Complex(0.4, 0.1)}};
    c.branches = {{1, 3, Complex(0.01, 0.10), j(0.04), Complex(0.03, 0.30), j(0.02), 1.0},
                  {2, 3, Complex(0.012, 0.12), j(0.03), Complex(0.036, 0.36), j(0.015), 1.0},
                  {1, 2, Complex(0.02, 0.20), j(0.02), Complex(0.06, 0.60), j(0.01), 1.0}};
    c.generators = {{1, 0.08, 8.0, damping, std::nullopt, std::nullopt},
                    {2, 0.12, 4.0, damping, std::nullopt, std::nullopt}};
    c.boundary_buses = {3};
    return c;
}

/// Radial feeder 100 (head) - 101 - 102 - 103 with a lateral 102 - 104.
/// `total` is each load bus's three-phase power; loads are split 1/3 per phase.
inline tdcosim::FeederSpec small_feeder(int boundary = 3, Complex total = {0.3, 0.1}, double z_share = 1.0,
                                        double motor_share = 0.0) {
    using namespace tdcosim;
    FeederSpec f;
    f.name = "F";
    f.boundary_bus = boundary;
    f.head_bus = 100;
    for (int id = 100; id <= 104; ++id) {
        FeederBus b;
        b.id = id;
        if (id != 100)
            for (auto& l : b.load) l = {total / 3.0, z_share, motor_share};
        f.buses.push_back(b);
    }
    const Mat3 line = seg(Complex(0.01, 0.02), Complex(0.03, 0.06));
    f.segments = {{100, 101, seg(Complex(0.005, 0.05), Complex(0.005, 0.05))},
                  {101, 102, line},
                  {102, 103, line},
                  {102, 104, line}};
    return f;
}

inline tdcosim::CoSimCase three_bus_cosim(double damping = 2.0, double z_share = 1.0, double motor_share = 0.0) {
    tdcosim::CoSimCase cs;
    cs.transmission = three_bus(damping);
    cs.feeders = {small_feeder(3, {0.3, 0.1}, z_share, motor_share)};
    cs.motors.enabled = motor_share > 0.0;
    return cs;
}

inline tdcosim::Scenario three_bus_scenario(tdcosim::InterfaceModelKind im, tdcosim::SchemeKind is, double t_end = 2.0) {
    tdcosim::Scenario sc;
    sc.name = "three-bus";
    sc.im = im;
    sc.scheme = is;
    sc.dt = 0.005;
    sc.t_end = t_end;
    sc.fault = tdcosim::FaultSpec{2, Complex(1e6, 0.0), 1.0, 1.07};
    sc.monitors = {3, 103, 1};
    return sc;
}

/// Newton iteration on a real residual with a central-difference Jacobian.
inline Eigen::VectorXd newton(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                              double tol = 1e-13, int max_iter = 50) {
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd r = f(x);
        if (r.cwiseAbs().maxCoeff() < tol) return x;
        Eigen::MatrixXd jac(r.size(), x.size());
        for (int k = 0; k < x.size(); ++k) {
            const double h = 1e-7;
            Eigen::VectorXd xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            jac.col(k) = (f(xp) - f(xm)) / (2.0 * h);
        }
        x -= jac.fullPivLu().solve(r);
    }
    return x;
}

/// One admittance system holding the transmission buses and the feeder's
/// positive-sequence network (head merged into the boundary bus), solved
/// densely. Balanced constant-impedance feeders only.
class Monolithic {
public:
    Monolithic(const tdcosim::TransmissionCase& t, const tdcosim::FeederSpec& f) : t_(t) {
        nt_ = static_cast<int>(t.buses.size());
        for (const auto& b : f.buses)
            if (b.id != f.head_bus) node_[b.id] = nt_ + static_cast<int>(node_.size());
        node_[f.head_bus] = t.bus_index(f.boundary_bus);
        n_ = nt_ + static_cast<int>(f.buses.size()) - 1;
        ybase_ = Eigen::MatrixXcd::Zero(n_, n_);
        for (const auto& br : t.branches) {
            const int a = t.bus_index(br.from), b = t.bus_index(br.to);
            const Complex y = 1.0 / br.z1;
            ybase_(a, a) += y + br.b1 / 2.0;
            ybase_(b, b) += y + br.b1 / 2.0;
            ybase_(a, b) -= y;
            ybase_(b, a) -= y;
        }
        for (const auto& s : f.segments) {
            const Complex z1 = tdcosim::phase_matrix_to_sequence(s.z)(1, 1);
            const int a = node_.at(s.from), b = node_.at(s.to);
            ybase_(a, a) += 1.0 / z1;
            ybase_(b, b) += 1.0 / z1;
            ybase_(a, b) -= 1.0 / z1;
            ybase_(b, a) -= 1.0 / z1;
        }
        for (const auto& b : f.buses) {
            Complex s{};
            for (const auto& l : b.load) s += l.s;
            ybase_(node_.at(b.id), node_.at(b.id)) += std::conj(s);
        }
        power_flow();
    }

    /// Runs the coupled-equivalent trajectory with the same stage pattern as
    /// the co-simulation: post-event solve, predictor, corrector.
    struct Trace {
        std::vector<double> t, v_boundary, omega1;
    };
    Trace run(double dt, double t_end, const tdcosim::FaultSpec& fault, int boundary_bus) const {
        const double ws = 2.0 * tdcosim::kPi * t_.frequency;
        const int nb = t_.bus_index(boundary_bus);
        const int on = static_cast<int>(std::llround(fault.start / dt));
        const int off = static_cast<int>(std::llround(fault.clear / dt));
        const int steps = static_cast<int>(std::llround(t_end / dt));
        auto delta = delta0_;
        auto omega = std::vector<double>(delta.size(), 1.0);
        bool faulted = false;
        auto solve = [&](const std::vector<double>& d) {
            Eigen::MatrixXcd y = yload_;
            Eigen::VectorXcd i = Eigen::VectorXcd::Zero(n_);
            for (std::size_t g = 0; g < d.size(); ++g) {
                const int b = t_.bus_index(t_.generators[g].bus);
                const Complex yg = 1.0 / j(t_.generators[g].x_d_prime);
                y(b, b) += yg;
                i(b) += std::polar(e_[g], d[g]) * yg;
            }
            if (faulted) y(t_.bus_index(fault.node), t_.bus_index(fault.node)) += fault.admittance;
            const Eigen::VectorXcd v = y.fullPivLu().solve(i);
            std::vector<double> pe(d.size());
            for (std::size_t g = 0; g < d.size(); ++g) {
                const int b = t_.bus_index(t_.generators[g].bus);
                const Complex e = std::polar(e_[g], d[g]);
                pe[g] = (e * std::conj((e - v(b)) / j(t_.generators[g].x_d_prime))).real();
            }
            return std::pair{v, pe};
        };
        auto rates = [&](const std::vector<double>& w, const std::vector<double>& pe, std::size_t g) {
            const auto& gs = t_.generators[g];
            return std::pair{ws * (w[g] - 1.0), (pm_[g] - pe[g] - gs.damping * (w[g] - 1.0)) / (2.0 * gs.h)};
        };
        Trace tr;
        auto [v, pe] = solve(delta);
        for (int n = 0; n < steps; ++n) {
            if (n == on || n == off) {
                faulted = n == on;
                std::tie(v, pe) = solve(delta);
            }
            std::vector<double> dp(delta.size()), wp(delta.size());
            for (std::size_t g = 0; g < delta.size(); ++g) {
                auto [dd, dw] = rates(omega, pe, g);
                dp[g] = delta[g] + dt * dd;
                wp[g] = omega[g] + dt * dw;
            }
            const auto pe_p = solve(dp).second;
            for (std::size_t g = 0; g < delta.size(); ++g) {
                auto [dd0, dw0] = rates(omega, pe, g);
                auto [dd1, dw1] = rates(wp, pe_p, g);
                delta[g] += 0.5 * dt * (dd0 + dd1);
                omega[g] += 0.5 * dt * (dw0 + dw1);
            }
            std::tie(v, pe) = solve(delta);
            tr.t.push_back((n + 1) * dt);
            tr.v_boundary.push_back(std::abs(v(nb)));
            tr.omega1.push_back(omega[0]);
        }
        return tr;
    }

    const Eigen::VectorXcd& initial_voltage() const { return v0_; }

private:
    void power_flow() {
        // Unknowns: angles of non-slack buses, magnitudes of PQ buses and
        // rectangular voltages of the feeder buses.
        std::vector<int> ang, mag;
        for (int k = 0; k < nt_; ++k) {
            if (t_.buses[k].kind != tdcosim::BusKind::Slack) ang.push_back(k);
            if (t_.buses[k].kind == tdcosim::BusKind::PQ) mag.push_back(k);
        }
        const int nf = n_ - nt_;
        auto voltages = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXcd v(n_);
            for (int k = 0; k < nt_; ++k) v(k) = std::polar(t_.buses[k].v_set, t_.buses[k].angle);
            for (std::size_t a = 0; a < ang.size(); ++a) v(ang[a]) = std::polar(std::abs(v(ang[a])), x(a));
            for (std::size_t m = 0; m < mag.size(); ++m)
                v(mag[m]) = std::polar(x(ang.size() + m), std::arg(v(mag[m])));
            for (int k = 0; k < nf; ++k) v(nt_ + k) = Complex(x(ang.size() + mag.size() + 2 * k), x(ang.size() + mag.size() + 2 * k + 1));
            return v;
        };
        auto residual = [&](const Eigen::VectorXd& x) {
            const Eigen::VectorXcd v = voltages(x);
            const Eigen::VectorXcd i = ybase_ * v;
            Eigen::VectorXd r(x.size());
            int row = 0;
            for (int k : ang) {
                const auto& b = t_.buses[k];
                const Complex s = v(k) * std::conj(i(k)) + b.load;
                r(row++) = s.real() - (b.kind == tdcosim::BusKind::PV ? b.p_gen : 0.0);
            }
            for (int k : mag) r(row++) = (v(k) * std::conj(i(k)) + t_.buses[k].load).imag();
            for (int k = 0; k < nf; ++k) {
                r(row++) = i(nt_ + k).real();
                r(row++) = i(nt_ + k).imag();
            }
            return r;
        };
        Eigen::VectorXd x(ang.size() + mag.size() + 2 * nf);
        x.setZero();
        for (std::size_t m = 0; m < mag.size(); ++m) x(ang.size() + m) = 1.0;
        for (int k = 0; k < nf; ++k) x(ang.size() + mag.size() + 2 * k) = 1.0;
        x = newton(residual, x);
        v0_ = voltages(x);
        yload_ = ybase_;
        for (int k = 0; k < nt_; ++k) yload_(k, k) += std::conj(t_.buses[k].load) / std::norm(v0_(k));
        const Eigen::VectorXcd inj = yload_ * v0_;
        for (const auto& g : t_.generators) {
            const int b = t_.bus_index(g.bus);
            const Complex e = v0_(b) + j(g.x_d_prime) * inj(b);
            e_.push_back(std::abs(e));
            delta0_.push_back(std::arg(e));
            pm_.push_back((e * std::conj(inj(b))).real());
        }
    }

    tdcosim::TransmissionCase t_;
    int nt_ = 0, n_ = 0;
    std::map<int, int> node_;
    Eigen::MatrixXcd ybase_, yload_;
    Eigen::VectorXcd v0_;
    std::vector<double> e_, delta0_, pm_;
};

}  // namespace tdtest
