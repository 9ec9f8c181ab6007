#include "tdcosim/distribution.hpp"

#include "tdcosim/errors.hpp"
#include "tdcosim/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <string>

namespace tdcosim {

namespace {

constexpr double kTimeEps = 1e-12;

Complex scale_to_magnitude(Complex s, double mag, double pf) {
    if (pf <= 0.0) {
        const double a = std::abs(s);
        return a > 0.0 ? s * (mag / a) : Complex{};
    }
    const double q_sign = s.imag() < 0.0 ? -1.0 : 1.0;
    return {mag * pf, q_sign * mag * std::sqrt(std::max(0.0, 1.0 - pf * pf))};
}

}  // namespace

struct Feeder::Cache {
    struct Entry {
        NetworkMatrix y;
        bool has_z = false;
        Mat3 z_th = Mat3::Zero();
    };
    std::map<std::string, Entry> entries;
};

double phase_sum(const std::array<double, 3>& p) { return (p[0] + p[1]) + p[2]; }

FeederSpec apply_unbalance(const FeederSpec& feeder, double beta) {
    if (!(beta >= 0.0 && beta < 1.0))
        throw ValidationError("load unbalance factor must satisfy 0 <= beta < 1 (got " + std::to_string(beta) + ")");
    FeederSpec out = feeder;
    for (auto& bus : out.buses) {
        std::array<double, 3> p{}, q{};
        for (int k = 0; k < 3; ++k) {
            p[static_cast<std::size_t>(k)] = bus.load[static_cast<std::size_t>(k)].s.real();
            q[static_cast<std::size_t>(k)] = bus.load[static_cast<std::size_t>(k)].s.imag();
        }
        const double p_total = phase_sum(p);
        const double q_total = phase_sum(q);
        const double pa = p_total / 3.0;
        const double pb = (1.0 - beta) * p_total / 3.0;
        const double pc = p_total - (pa + pb);
        const double qa = q_total / 3.0;
        const double qb = (1.0 - beta) * q_total / 3.0;
        const double qc = q_total - (qa + qb);
        bus.load[0].s = {pa, qa};
        bus.load[1].s = {pb, qb};
        bus.load[2].s = {pc, qc};
    }
    return out;
}

void step_motors(std::span<ACMotorState> motors, std::span<const double> v_mag, double dt, double stall_delay) {
    if (dt <= 0.0) throw ValidationError("motor time step must be positive");
    if (motors.size() != v_mag.size()) throw ValidationError("one terminal voltage per motor is required");
    for (std::size_t k = 0; k < motors.size(); ++k) {
        auto& m = motors[k];
        if (m.mode == MotorMode::Stalled || !m.can_stall) continue;
        if (v_mag[k] < m.v_stall) {
            m.t_below += dt;
            if (m.t_below >= stall_delay - kTimeEps) m.mode = MotorMode::Stalled;
        } else {
            m.t_below = 0.0;
        }
    }
}

BoundaryExtract extract_boundary_d(const FeederSolution& solution, int head_index) {
    BoundaryExtract out;
    out.v_head = solution.v.at(static_cast<std::size_t>(head_index));
    out.i_phase = solution.head_current;
    Complex s{};
    for (int p = 0; p < 3; ++p) s += out.v_head[p] * std::conj(out.i_phase[p]);
    out.s_total = s / 3.0;
    out.i_seq = phase_to_sequence(out.i_phase);
    return out;
}

Feeder::Feeder(FeederSpec spec, MotorParameters params)
    : spec_(std::move(spec)), params_(params), cache_(std::make_unique<Cache>()) {
    const int n = bus_count();
    if (n == 0) throw ValidationError("feeder '" + spec_.name + "' has no buses");
    head_ = local_index(spec_.head_bus);
    if (static_cast<int>(spec_.segments.size()) != n - 1)
        throw ValidationError("feeder '" + spec_.name + "' is not radial: " + std::to_string(spec_.segments.size()) +
                              " segments for " + std::to_string(n) + " buses");
    parent_.assign(static_cast<std::size_t>(n), -2);
    parent_[static_cast<std::size_t>(head_)] = -1;
    seg_z_.assign(static_cast<std::size_t>(n), Mat3::Zero());
    std::vector<std::vector<std::pair<int, Mat3>>> adj(static_cast<std::size_t>(n));
    for (const auto& seg : spec_.segments) {
        const int a = local_index(seg.from);
        const int b = local_index(seg.to);
        if ((seg.z - seg.z.transpose()).norm() > 1e-12 * std::max(1.0, seg.z.norm()))
            throw ValidationError("feeder '" + spec_.name + "' segment " + std::to_string(seg.from) + "-" +
                                  std::to_string(seg.to) + " impedance matrix is not symmetric");
        if (seg.z.norm() == 0.0)
            throw ValidationError("feeder '" + spec_.name + "' segment " + std::to_string(seg.from) + "-" +
                                  std::to_string(seg.to) + " has zero impedance");
        adj[static_cast<std::size_t>(a)].push_back({b, seg.z});
        adj[static_cast<std::size_t>(b)].push_back({a, seg.z});
    }
    std::deque<int> queue{head_};
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        order_.push_back(u);
        for (const auto& [w, z] : adj[static_cast<std::size_t>(u)]) {
            if (w == parent_[static_cast<std::size_t>(u)]) continue;
            if (parent_[static_cast<std::size_t>(w)] != -2)
                throw ValidationError("feeder '" + spec_.name + "' contains a loop");
            parent_[static_cast<std::size_t>(w)] = u;
            seg_z_[static_cast<std::size_t>(w)] = z;
            queue.push_back(w);
        }
    }
    if (static_cast<int>(order_.size()) != n)
        throw ValidationError("feeder '" + spec_.name + "' is not connected to its head bus");
    for (const auto& bus : spec_.buses)
        for (const auto& l : bus.load) {
            if (l.z_share < 0.0 || l.motor_share < 0.0 || std::abs(l.z_share + l.motor_share - 1.0) > 1e-9)
                throw ValidationError("feeder '" + spec_.name + "' bus " + std::to_string(bus.id) +
                                      ": load shares must be non-negative and sum to 1");
        }
}

Feeder::~Feeder() = default;
Feeder::Feeder(const Feeder& o)
    : spec_(o.spec_), params_(o.params_), head_(o.head_), parent_(o.parent_), order_(o.order_), seg_z_(o.seg_z_),
      cache_(std::make_unique<Cache>()) {}
Feeder& Feeder::operator=(const Feeder& o) {
    if (this != &o) {
        Feeder tmp(o);
        *this = std::move(tmp);
    }
    return *this;
}
Feeder::Feeder(Feeder&&) noexcept = default;
Feeder& Feeder::operator=(Feeder&&) noexcept = default;

int Feeder::local_index(int bus_id) const {
    for (std::size_t i = 0; i < spec_.buses.size(); ++i)
        if (spec_.buses[i].id == bus_id) return static_cast<int>(i);
    throw ValidationError("feeder '" + spec_.name + "' has no bus " + std::to_string(bus_id));
}

std::vector<ACMotorState> Feeder::initial_motors() const {
    std::vector<ACMotorState> motors;
    motors.reserve(spec_.buses.size() * 3);
    for (const auto& bus : spec_.buses) {
        for (const auto& l : bus.load) {
            ACMotorState m;
            m.v_stall = params_.v_stall;
            m.s_rated = l.s * l.motor_share;
            m.can_stall = params_.enabled && std::abs(m.s_rated) > 0.0;
            if (std::abs(m.s_rated) > 0.0) {
                const Complex s_stall =
                    scale_to_magnitude(m.s_rated, params_.stall_multiplier * std::abs(m.s_rated), params_.stall_power_factor);
                m.z_stall = 1.0 / (3.0 * std::conj(s_stall));
            }
            motors.push_back(m);
        }
    }
    return motors;
}

std::vector<ThreePhase> Feeder::flat_voltages(const ThreePhase& head) const {
    return std::vector<ThreePhase>(spec_.buses.size(), head);
}

Complex Feeder::running_motor_current(const ACMotorState& m, Phasor v_lin) {
    if (m.s_rated == Complex{}) return {};
    const double vm = std::abs(v_lin);
    if (vm >= m.v_stall) return 3.0 * std::conj(m.s_rated / v_lin);
    // impedance law below the stall threshold, continuous at v_stall
    return 3.0 * std::conj(m.s_rated) * v_lin / (m.v_stall * m.v_stall);
}

std::vector<ThreePhase> Feeder::load_currents(std::span<const ThreePhase> v, std::span<const ACMotorState> motors,
                                              std::span<const ThreePhase> v_lin, LoadRepresentation rep) const {
    std::vector<ThreePhase> out(spec_.buses.size());
    for (std::size_t b = 0; b < spec_.buses.size(); ++b) {
        for (int p = 0; p < 3; ++p) {
            const auto& l = spec_.buses[b].load[static_cast<std::size_t>(p)];
            const auto& m = motors[b * 3 + static_cast<std::size_t>(p)];
            const Phasor vb = v[b][p];
            Complex i = 3.0 * std::conj(l.s * l.z_share) * vb;
            if (m.mode == MotorMode::Running) {
                i += running_motor_current(m, rep == LoadRepresentation::Admittance ? v_lin[b][p] : vb);
            } else if (m.z_stall == Complex{}) {
            } else if (rep == LoadRepresentation::Admittance) {
                i += vb / m.z_stall;
            } else {
                const Complex s = m.stalled_power(std::abs(v_lin[b][p]));
                if (s != Complex{}) i += 3.0 * std::conj(s / vb);
            }
            out[b][p] = i;
        }
    }
    return out;
}

FeederSolution Feeder::fbs_solve(const HeadSource& source, std::span<const ACMotorState> motors,
                                 const FbsOptions& options) const {
    const std::size_t n = spec_.buses.size();
    const auto v_head = flat_voltages(source.e);
    std::vector<ThreePhase> v = v_head;
    std::vector<ThreePhase> branch(n);
    std::vector<double> trace;

    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        std::fill(branch.begin(), branch.end(), ThreePhase{});
        // backward: accumulate load currents from the leaves toward the head
        auto loads = load_currents(v, motors, v_head, LoadRepresentation::PowerFlow);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            const auto u = static_cast<std::size_t>(*it);
            branch[u] += loads[u];
            const int p = parent_[u];
            if (p >= 0) branch[static_cast<std::size_t>(p)] += branch[u];
        }
        // forward: voltage drops from the head outward
        std::vector<ThreePhase> next(n);
        const auto h = static_cast<std::size_t>(head_);
        next[h] = ThreePhase::from_vector(source.e.to_vector() - source.z * branch[h].to_vector());
        for (int u : order_) {
            const int p = parent_[static_cast<std::size_t>(u)];
            if (p < 0) continue;
            const auto uu = static_cast<std::size_t>(u);
            next[uu] = ThreePhase::from_vector(next[static_cast<std::size_t>(p)].to_vector() -
                                               seg_z_[uu] * branch[uu].to_vector());
        }
        double delta = 0.0;
        bool finite = true;
        for (std::size_t b = 0; b < n; ++b) {
            delta = std::max(delta, (next[b] - v[b]).max_abs());
            finite = finite && std::isfinite(next[b].max_abs());
        }
        trace.push_back(finite ? delta : std::numeric_limits<double>::infinity());
        v = std::move(next);
        if (!finite || delta > options.blowup)
            throw FbsDivergence("forward-backward sweep diverged on feeder '" + spec_.name + "' after " +
                                    std::to_string(sweep) + " sweeps",
                                std::move(trace));
        if (delta < options.tolerance) {
            FeederSolution sol;
            sol.v = std::move(v);
            sol.sweeps = sweep;
            std::fill(branch.begin(), branch.end(), ThreePhase{});
            auto final_loads = load_currents(sol.v, motors, v_head, LoadRepresentation::PowerFlow);
            for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
                const auto u = static_cast<std::size_t>(*it);
                branch[u] += final_loads[u];
                const int p = parent_[u];
                if (p >= 0) branch[static_cast<std::size_t>(p)] += branch[u];
            }
            sol.head_current = branch[h];
            return sol;
        }
    }
    throw FbsDivergence("forward-backward sweep did not converge on feeder '" + spec_.name + "' within " +
                            std::to_string(options.max_sweeps) + " sweeps",
                        std::move(trace));
}

const NetworkMatrix& Feeder::admittance(std::span<const ACMotorState> motors, const Mat3* source_z) const {
    std::string key;
    key.reserve(motors.size() + 1 + sizeof(Mat3));
    for (const auto& m : motors) key.push_back(m.mode == MotorMode::Stalled ? 'S' : 'R');
    if (source_z) {
        key.push_back('|');
        key.append(reinterpret_cast<const char*>(source_z->data()), sizeof(Complex) * 9);
    }
    if (auto it = cache_->entries.find(key); it != cache_->entries.end()) return it->second.y;
    if (cache_->entries.size() > 32) cache_->entries.clear();

    const int n = bus_count();
    NetworkMatrix y(3 * n);
    for (int u = 0; u < n; ++u) {
        const int p = parent_[static_cast<std::size_t>(u)];
        if (p < 0) continue;
        const Mat3 ys = seg_z_[static_cast<std::size_t>(u)].inverse();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                y.add(3 * p + r, 3 * p + c, ys(r, c));
                y.add(3 * u + r, 3 * u + c, ys(r, c));
                y.add(3 * p + r, 3 * u + c, -ys(r, c));
                y.add(3 * u + r, 3 * p + c, -ys(r, c));
            }
    }
    for (int b = 0; b < n; ++b)
        for (int p = 0; p < 3; ++p) {
            const auto& l = spec_.buses[static_cast<std::size_t>(b)].load[static_cast<std::size_t>(p)];
            const auto& m = motors[static_cast<std::size_t>(3 * b + p)];
            Complex ysh = 3.0 * std::conj(l.s * l.z_share);
            if (m.mode == MotorMode::Stalled && m.z_stall != Complex{}) ysh += 1.0 / m.z_stall;
            if (ysh != Complex{}) y.add_shunt(3 * b + p, ysh);
        }
    if (source_z) {
        const Mat3 ysrc = source_z->inverse();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) y.add(3 * head_ + r, 3 * head_ + c, ysrc(r, c));
    }
    auto [it, _] = cache_->entries.emplace(key, Cache::Entry{std::move(y), false, Mat3::Zero()});
    return it->second.y;
}

std::vector<Complex> Feeder::norton_injections(std::span<const ACMotorState> motors,
                                               std::span<const ThreePhase> v_lin) const {
    std::vector<Complex> inj(spec_.buses.size() * 3);
    for (std::size_t b = 0; b < spec_.buses.size(); ++b)
        for (int p = 0; p < 3; ++p) {
            const auto& m = motors[b * 3 + static_cast<std::size_t>(p)];
            if (m.mode == MotorMode::Running) inj[b * 3 + static_cast<std::size_t>(p)] = -running_motor_current(m, v_lin[b][p]);
        }
    return inj;
}

namespace {

std::vector<ThreePhase> unpack(const Eigen::VectorXcd& x, std::size_t n) {
    std::vector<ThreePhase> v(n);
    for (std::size_t b = 0; b < n; ++b)
        v[b] = {x(static_cast<Eigen::Index>(3 * b)), x(static_cast<Eigen::Index>(3 * b + 1)),
                x(static_cast<Eigen::Index>(3 * b + 2))};
    return v;
}

Eigen::VectorXcd pack(const std::vector<Complex>& inj) {
    Eigen::VectorXcd x(static_cast<Eigen::Index>(inj.size()));
    for (std::size_t i = 0; i < inj.size(); ++i) x(static_cast<Eigen::Index>(i)) = inj[i];
    return x;
}

}  // namespace

FeederSolution Feeder::dyn_network_solve(const HeadSource& source, std::span<const ACMotorState> motors,
                                         std::span<const ThreePhase> v_lin) const {
    const auto& y = admittance(motors, &source.z);
    Eigen::VectorXcd rhs = pack(norton_injections(motors, v_lin));
    const Mat3 ysrc = source.z.inverse();
    const Vec3 i_norton = ysrc * source.e.to_vector();
    for (int p = 0; p < 3; ++p) rhs(3 * head_ + p) += i_norton(p);
    FeederSolution sol;
    sol.v = unpack(y.solve(rhs), spec_.buses.size());
    sol.head_current =
        ThreePhase::from_vector(ysrc * (source.e.to_vector() - sol.v[static_cast<std::size_t>(head_)].to_vector()));
    return sol;
}

FeederSolution Feeder::dyn_network_solve_injected(const ThreePhase& head_injection, std::span<const ACMotorState> motors,
                                                  std::span<const ThreePhase> v_lin) const {
    const auto& y = admittance(motors, nullptr);
    Eigen::VectorXcd rhs = pack(norton_injections(motors, v_lin));
    for (int p = 0; p < 3; ++p) rhs(3 * head_ + p) += head_injection[p];
    FeederSolution sol;
    sol.v = unpack(y.solve(rhs), spec_.buses.size());
    sol.head_current = head_injection;
    return sol;
}

PhaseThevenin Feeder::extract_thevenin_d(std::span<const ACMotorState> motors, std::span<const ThreePhase> v_lin) const {
    const auto& y = admittance(motors, nullptr);
    auto& entry = std::find_if(cache_->entries.begin(), cache_->entries.end(),
                               [&](const auto& kv) { return &kv.second.y == &y; })
                      ->second;
    PhaseThevenin th;
    const Eigen::VectorXcd v = y.solve(pack(norton_injections(motors, v_lin)));
    th.v_oc = {v(3 * head_), v(3 * head_ + 1), v(3 * head_ + 2)};
    if (!entry.has_z) {
        for (int k = 0; k < 3; ++k) {
            Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(y.dimension());
            unit(3 * head_ + k) = 1.0;
            const Eigen::VectorXcd x = y.solve(unit);
            for (int r = 0; r < 3; ++r) entry.z_th(r, k) = x(3 * head_ + r);
        }
        entry.has_z = true;
    }
    th.z = entry.z_th;
    return th;
}

double Feeder::segment_losses(const FeederSolution& solution) const {
    double loss = 0.0;
    for (std::size_t u = 0; u < spec_.buses.size(); ++u) {
        const int p = parent_[u];
        if (p < 0) continue;
        const Vec3 dv = solution.v[static_cast<std::size_t>(p)].to_vector() - solution.v[u].to_vector();
        const Vec3 j = seg_z_[u].inverse() * dv;
        loss += (dv.transpose() * j.conjugate())(0).real() / 3.0;
    }
    return loss;
}

}  // namespace tdcosim
