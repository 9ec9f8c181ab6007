#include "tdcosim/phasor.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace tdcosim;
using Catch::Matchers::WithinAbs;

namespace {

double dist(const ThreeSequence& a, const ThreeSequence& b) { return (a - b).max_abs(); }
double dist(const ThreePhase& a, const ThreePhase& b) { return (a - b).max_abs(); }

ThreePhase random_phase(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    return {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
}

}  // namespace

TEST_CASE("balanced set is pure positive sequence", "[phasor]") {
    const ThreePhase v{polar(1, 0), polar(1, deg_to_rad(-120)), polar(1, deg_to_rad(120))};
    CHECK(dist(phase_to_sequence(v), {0, 1, 0}) < 1e-12);
}

TEST_CASE("common-mode set is pure zero sequence", "[phasor]") {
    CHECK(dist(phase_to_sequence({1, 1, 1}), {1, 0, 0}) < 1e-12);
}

TEST_CASE("single-phase set splits equally", "[phasor]") {
    const Complex third(1.0 / 3.0, 0.0);
    CHECK(dist(phase_to_sequence({1, 0, 0}), {third, third, third}) < 1e-12);
}

TEST_CASE("inverse transform examples", "[phasor]") {
    const ThreePhase bal{polar(1, 0), polar(1, deg_to_rad(-120)), polar(1, deg_to_rad(120))};
    CHECK(dist(sequence_to_phase({0, 1, 0}), bal) < 1e-12);
    CHECK(dist(sequence_to_phase({1, 0, 0}), ThreePhase{1, 1, 1}) < 1e-12);
}

TEST_CASE("transforms agree with the explicit matrices", "[phasor]") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const auto x = random_phase(rng);
        const Vec3 seq = inverse_fortescue_matrix() * x.to_vector();
        CHECK(dist(phase_to_sequence(x), ThreeSequence::from_vector(seq)) < 1e-12);
    }
    CHECK((fortescue_matrix() * inverse_fortescue_matrix() - Mat3::Identity()).norm() < 1e-14);
}

TEST_CASE("property: round trip and linearity", "[phasor][property]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 2000; ++k) {
        const auto x = random_phase(rng);
        const auto y = random_phase(rng);
        const Complex alpha(u(rng), u(rng));
        CHECK(dist(sequence_to_phase(phase_to_sequence(x)), x) <= 1e-12);
        const auto lhs = phase_to_sequence(alpha * x + y);
        const auto rhs = alpha * phase_to_sequence(x) + phase_to_sequence(y);
        CHECK(dist(lhs, rhs) <= 1e-12);
    }
}

TEST_CASE("property: rotated sets have no zero or negative sequence", "[phasor][property]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> mag(0.1, 2.0), ang(-kPi, kPi);
    for (int k = 0; k < 500; ++k) {
        const auto s = phase_to_sequence(ThreePhase::balanced(polar(mag(rng), ang(rng))));
        CHECK(std::abs(s.zero) < 1e-12);
        CHECK(std::abs(s.negative) < 1e-12);
    }
}

TEST_CASE("sequence impedances to phase matrix", "[phasor]") {
    const Mat3 eq = sequence_impedance_to_phase_matrix(ThreeSequence::uniform({0, 0.1}));
    CHECK((eq - Mat3::Identity() * Complex(0, 0.1)).norm() < 1e-12);

    const ThreeSequence z{{0, 0.3}, {0, 0.1}, {0, 0.1}};
    const Mat3 m = sequence_impedance_to_phase_matrix(z);
    // Direct product A diag(z) A^-1 written out element by element.
    const Mat3 a = fortescue_matrix(), ai = inverse_fortescue_matrix();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const Complex want = a(r, 0) * z.zero * ai(0, c) + a(r, 1) * z.positive * ai(1, c) + a(r, 2) * z.negative * ai(2, c);
            CHECK(std::abs(m(r, c) - want) < 1e-12);
            const Complex closed = r == c ? Complex(0, 0.5 / 3.0) : Complex(0, 0.2 / 3.0);
            CHECK(std::abs(m(r, c) - closed) < 1e-12);
        }
    const Mat3 back = phase_matrix_to_sequence(m);
    CHECK((back - Mat3(Vec3(z.zero, z.positive, z.negative).asDiagonal())).norm() < 1e-12);
}

TEST_CASE("polar form and phase labels", "[phasor]") {
    const Phasor p = polar(2.0, 0.7);
    CHECK_THAT(std::abs(p), WithinAbs(2.0, 1e-15));
    CHECK_THAT(std::arg(p), WithinAbs(0.7, 1e-15));
    CHECK(std::abs(polar(std::abs(p), std::arg(p)) - p) <= 1e-12 * std::abs(p));
    CHECK_THAT(rad_to_deg(deg_to_rad(37.5)), WithinAbs(37.5, 1e-12));
    ThreePhase v{1, 2, 3};
    CHECK(v[Phase::A] == Complex(1));
    CHECK(v[Phase::B] == Complex(2));
    CHECK(v[Phase::C] == Complex(3));
    v[Phase::B] = 5;
    CHECK(v.b == Complex(5));
}
