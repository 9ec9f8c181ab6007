#pragma once

// Complex phasors, three-phase / three-sequence containers and the Fortescue
// transforms. Angles are radians everywhere inside the library; degrees only
// appear at the CLI and file boundaries.
//
// Fortescue normalization (power-variant):
//   [V0 V1 V2]^T = 1/3 * [1 1 1; 1 a a^2; 1 a^2 a] * [Va Vb Vc]^T
//   [Va Vb Vc]^T =       [1 1 1; 1 a^2 a; 1 a a^2] * [V0 V1 V2]^T
// with a = 1∠120°.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>

namespace tdcosim {

using Complex = std::complex<double>;
using Phasor = Complex;
using Mat3 = Eigen::Matrix3cd;
using Vec3 = Eigen::Vector3cd;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Phasor from magnitude and angle in radians.
inline Phasor polar(double magnitude, double angle) { return std::polar(magnitude, angle); }

/// The Fortescue operator a = 1∠120°.
inline Complex fortescue_a() { return {-0.5, std::sqrt(3.0) / 2.0}; }

enum class Phase { A = 0, B = 1, C = 2 };

struct ThreePhase {
    Phasor a{};
    Phasor b{};
    Phasor c{};

    Phasor& operator[](Phase p) { return p == Phase::A ? a : (p == Phase::B ? b : c); }
    const Phasor& operator[](Phase p) const { return p == Phase::A ? a : (p == Phase::B ? b : c); }
    Phasor& operator[](int k) { return (*this)[static_cast<Phase>(k)]; }
    const Phasor& operator[](int k) const { return (*this)[static_cast<Phase>(k)]; }

    /// Positive-sequence balanced set with phase A equal to `phase_a`.
    static ThreePhase balanced(Phasor phase_a) {
        const Complex a = fortescue_a();
        return {phase_a, phase_a * a * a, phase_a * a};
    }

    Vec3 to_vector() const { return Vec3(a, b, c); }
    static ThreePhase from_vector(const Vec3& v) { return {v(0), v(1), v(2)}; }

    ThreePhase& operator+=(const ThreePhase& o) { a += o.a; b += o.b; c += o.c; return *this; }
    ThreePhase& operator-=(const ThreePhase& o) { a -= o.a; b -= o.b; c -= o.c; return *this; }
    ThreePhase& operator*=(Complex s) { a *= s; b *= s; c *= s; return *this; }

    friend ThreePhase operator+(ThreePhase l, const ThreePhase& r) { return l += r; }
    friend ThreePhase operator-(ThreePhase l, const ThreePhase& r) { return l -= r; }
    friend ThreePhase operator*(Complex s, ThreePhase v) { return v *= s; }
    friend bool operator==(const ThreePhase&, const ThreePhase&) = default;

    /// Largest per-phase magnitude.
    double max_abs() const { return std::max({std::abs(a), std::abs(b), std::abs(c)}); }
};

struct ThreeSequence {
    Phasor zero{};
    Phasor positive{};
    Phasor negative{};

    Vec3 to_vector() const { return Vec3(zero, positive, negative); }
    static ThreeSequence from_vector(const Vec3& v) { return {v(0), v(1), v(2)}; }
    static ThreeSequence uniform(Phasor x) { return {x, x, x}; }

    ThreeSequence& operator+=(const ThreeSequence& o) { zero += o.zero; positive += o.positive; negative += o.negative; return *this; }
    ThreeSequence& operator-=(const ThreeSequence& o) { zero -= o.zero; positive -= o.positive; negative -= o.negative; return *this; }
    ThreeSequence& operator*=(Complex s) { zero *= s; positive *= s; negative *= s; return *this; }

    friend ThreeSequence operator+(ThreeSequence l, const ThreeSequence& r) { return l += r; }
    friend ThreeSequence operator-(ThreeSequence l, const ThreeSequence& r) { return l -= r; }
    friend ThreeSequence operator*(Complex s, ThreeSequence v) { return v *= s; }
    friend bool operator==(const ThreeSequence&, const ThreeSequence&) = default;

    double max_abs() const { return std::max({std::abs(zero), std::abs(positive), std::abs(negative)}); }
};

/// Fortescue matrix A: phase = A * sequence.
inline Mat3 fortescue_matrix() {
    const Complex a = fortescue_a();
    const Complex a2 = a * a;
    Mat3 m;
    m << 1.0, 1.0, 1.0,
         1.0, a2, a,
         1.0, a, a2;
    return m;
}

/// A^-1: sequence = A^-1 * phase.
inline Mat3 inverse_fortescue_matrix() {
    const Complex a = fortescue_a();
    const Complex a2 = a * a;
    Mat3 m;
    m << 1.0, 1.0, 1.0,
         1.0, a, a2,
         1.0, a2, a;
    return m / 3.0;
}

inline ThreeSequence phase_to_sequence(const ThreePhase& v) {
    const Complex a = fortescue_a();
    const Complex a2 = a * a;
    return {(v.a + v.b + v.c) / 3.0,
            (v.a + a * v.b + a2 * v.c) / 3.0,
            (v.a + a2 * v.b + a * v.c) / 3.0};
}

inline ThreePhase sequence_to_phase(const ThreeSequence& s) {
    const Complex a = fortescue_a();
    const Complex a2 = a * a;
    return {s.zero + s.positive + s.negative,
            s.zero + a2 * s.positive + a * s.negative,
            s.zero + a * s.positive + a2 * s.negative};
}

/// A * diag(z0, z1, z2) * A^-1. For z1 == z2 the result has diagonal
/// (z0 + 2 z1)/3 and off-diagonals (z0 - z1)/3.
inline Mat3 sequence_impedance_to_phase_matrix(const ThreeSequence& z) {
    Mat3 d = Mat3::Zero();
    d(0, 0) = z.zero;
    d(1, 1) = z.positive;
    d(2, 2) = z.negative;
    return fortescue_matrix() * d * inverse_fortescue_matrix();
}

/// A^-1 * M * A: the sequence-domain image of a phase-domain matrix.
inline Mat3 phase_matrix_to_sequence(const Mat3& m) {
    return inverse_fortescue_matrix() * m * fortescue_matrix();
}

}  // namespace tdcosim
