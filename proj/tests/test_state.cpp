#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "qmlkit/observable.hpp"
#include "qmlkit/rng.hpp"
#include "qmlkit/state.hpp"

using namespace qmlkit;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

StateVector random_state(int n_qubits, std::uint64_t seed, int n_gates = 30) {
    Rng rng(seed);
    StateVector psi(n_qubits);
    for (int i = 0; i < n_gates; ++i) {
        const int q = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_qubits)));
        switch (rng.next_below(4)) {
        case 0:
            psi.apply(Gate(GateKind::RX, q, rng.uniform(-pi, pi)));
            break;
        case 1:
            psi.apply(Gate(GateKind::RY, q, rng.uniform(-pi, pi)));
            break;
        case 2:
            psi.apply(Gate(GateKind::RZ, q, rng.uniform(-pi, pi)));
            break;
        default:
            if (n_qubits > 1) {
                const int t = (q + 1) % n_qubits;
                psi.apply(Gate(GateKind::CX, q, t));
            } else {
                psi.apply(Gate(GateKind::H, q));
            }
            break;
        }
    }
    return psi;
}

} // namespace

TEST_CASE("RY(pi) maps |0> to |1>", "[state]") {
    StateVector psi(1);
    psi.apply(Gate(GateKind::RY, 0, pi));
    CHECK(std::abs(psi.amplitude(0)) == Approx(0.0).margin(1e-12));
    CHECK(std::abs(psi.amplitude(1) - complex_t{1.0, 0.0}) < 1e-12);
}

TEST_CASE("H creates the equal superposition", "[state]") {
    StateVector psi(1);
    psi.apply(Gate(GateKind::H, 0));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(psi.amplitude(0).real() == Approx(inv_sqrt2));
    CHECK(psi.amplitude(1).real() == Approx(inv_sqrt2));
}

TEST_CASE("CX truth table", "[state]") {
    // Prepare qubit 0 in |1>, qubit 1 in |0>; CX(control=0, target=1) flips
    // the target, leaving index 0b11 = 3.
    StateVector psi(2);
    psi.apply(Gate(GateKind::X, 0));
    psi.apply(Gate(GateKind::CX, 0, 1));
    CHECK(std::abs(psi.amplitude(3) - complex_t{1.0, 0.0}) < 1e-12);

    // Control 0 leaves the state untouched.
    StateVector phi(2);
    phi.apply(Gate(GateKind::X, 1));
    phi.apply(Gate(GateKind::CX, 0, 1));
    CHECK(std::abs(phi.amplitude(2) - complex_t{1.0, 0.0}) < 1e-12);
}

TEST_CASE("expectation values on eigenstates and rotations", "[state]") {
    StateVector zero(1);
    CHECK(expectation(zero, PauliObservable::parse("Z", 1)) == Approx(1.0));

    StateVector rotated(1);
    rotated.apply(Gate(GateKind::RY, 0, pi / 3.0));
    CHECK(expectation(rotated, PauliObservable::parse("Z", 1)) == Approx(std::cos(pi / 3.0)));

    StateVector anti(2);
    anti.apply(Gate(GateKind::X, 0)); // |01> in msq-first rendering
    CHECK(expectation(anti, PauliObservable::parse("ZZ", 2)) == Approx(-1.0));
}

TEST_CASE("expectation rejects mismatched qubit counts", "[state]") {
    StateVector psi(2);
    CHECK_THROWS_AS(expectation(psi, PauliObservable::parse("Z", 1)), Error);
}

TEST_CASE("gate validation", "[state]") {
    StateVector psi(2);
    CHECK_THROWS_AS(psi.apply(Gate(GateKind::X, 2)), Error);
    CHECK_THROWS_AS(psi.apply(Gate(GateKind::CX, 1, 1)), Error);
    Gate missing(GateKind::RY, 0);
    CHECK_THROWS_AS(psi.apply(missing), Error);
}

TEST_CASE("sampling is deterministic and respects the distribution", "[state]") {
    StateVector psi(1);
    psi.apply(Gate(GateKind::H, 0));

    const auto result = sample(psi, 5000, 42);
    CHECK(result.shots == 5000);
    std::uint64_t total = 0;
    for (const auto &[idx, count] : result.counts) {
        total += count;
    }
    CHECK(total == 5000);
    // 3 sigma binomial bound around 0.5 at 5000 shots.
    CHECK(std::abs(result.frequency(0) - 0.5) <= 0.0213);

    const auto repeat = sample(psi, 5000, 42);
    CHECK(repeat.counts == result.counts);

    StateVector one(1);
    one.apply(Gate(GateKind::X, 0));
    const auto deterministic = sample(one, 100, 7);
    CHECK(deterministic.counts.size() == 1);
    CHECK(deterministic.counts.at(1) == 100);

    CHECK_THROWS_AS(sample(psi, 0, 1), Error);
}

TEST_CASE("sampled frequencies converge over independent seeds", "[state]") {
    StateVector psi = random_state(3, 99);
    const auto exact = psi.probabilities();
    const long long shots = 10000;
    std::vector<double> mean(exact.size(), 0.0);
    const int n_seeds = 10;
    for (int s = 0; s < n_seeds; ++s) {
        const auto res = sample(psi, shots, derive_seed(123, {static_cast<std::uint64_t>(s)}));
        for (const auto &[idx, count] : res.counts) {
            mean[idx] += static_cast<double>(count) / static_cast<double>(shots);
        }
    }
    for (std::size_t i = 0; i < exact.size(); ++i) {
        mean[i] /= n_seeds;
        const double sigma = std::sqrt(exact[i] * (1.0 - exact[i]) /
                                       static_cast<double>(shots * n_seeds));
        CHECK(std::abs(mean[i] - exact[i]) <= 4.0 * sigma + 1e-12);
    }
}

TEST_CASE("overlap of states", "[state]") {
    StateVector a = random_state(3, 5);
    CHECK(overlap_sq(a, a) == Approx(1.0).margin(1e-12));

    StateVector zero(1);
    StateVector one(1);
    one.apply(Gate(GateKind::X, 0));
    CHECK(overlap_sq(zero, one) == Approx(0.0).margin(1e-15));

    StateVector u(1);
    StateVector v(1);
    v.apply(Gate(GateKind::RY, 0, pi / 2.0));
    CHECK(overlap_sq(u, v) == Approx(0.5));

    StateVector w(2);
    CHECK_THROWS_AS(overlap_sq(zero, w), Error);
}

TEST_CASE("depolarizing mixing of distributions", "[state]") {
    const std::vector<double> q{1.0, 0.0};
    CHECK(mix_depolarizing(q, 0.0) == q);
    const auto full = mix_depolarizing(q, 1.0);
    CHECK(full[0] == Approx(0.5));
    CHECK(full[1] == Approx(0.5));
    const auto half = mix_depolarizing(q, 0.5);
    CHECK(half[0] == Approx(0.75));
    CHECK(half[1] == Approx(0.25));
    CHECK_THROWS_AS(mix_depolarizing(q, -0.1), Error);
    CHECK_THROWS_AS(mix_depolarizing(q, 1.1), Error);
}

TEST_CASE("norm is preserved by random gate sequences", "[state]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        StateVector psi = random_state(5, seed, 60);
        CHECK(std::abs(1.0 - psi.norm_sq()) < 1e-10);
    }
}

TEST_CASE("applying a gate and its inverse restores the state", "[state]") {
    const std::vector<Gate> gates{
        Gate(GateKind::RX, 0, 0.3),  Gate(GateKind::RY, 1, -1.1),
        Gate(GateKind::RZ, 2, 2.2),  Gate(GateKind::H, 1),
        Gate(GateKind::X, 0),        Gate(GateKind::Y, 2),
        Gate(GateKind::Z, 1),        Gate(GateKind::CX, 0, 2),
        Gate(GateKind::CZ, 1, 2),    Gate(GateKind::CRX, 0, 1, 0.7),
        Gate(GateKind::CRY, 2, 0, -0.4), Gate(GateKind::CRZ, 1, 0, 1.9),
        Gate(GateKind::SWAP, 0, 2),
    };
    for (const auto &g : gates) {
        StateVector psi = random_state(3, 17);
        const auto before = psi.amplitudes();
        psi.apply(g);
        psi.apply(g.inverse());
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(std::abs(psi.amplitude(i) - before[i]) < 1e-12);
        }
    }
}

TEST_CASE("expectation of diagonal observables equals the probability sum", "[state]") {
    StateVector psi = random_state(4, 21);
    PauliObservable obs(4);
    obs.add_term({0.7, PauliString::parse("ZIIZ"), false});
    obs.add_term({-1.3, PauliString::parse("IZZI"), false});
    obs.add_term({0.25, PauliString::identity(4), false});

    const auto probs = psi.probabilities();
    double by_outcomes = 0.0;
    for (std::uint64_t b = 0; b < probs.size(); ++b) {
        double eig = 0.0;
        for (const auto &t : obs.terms()) {
            eig += t.coefficient * pauli_outcome_eigenvalue(t.string, b);
        }
        by_outcomes += probs[b] * eig;
    }
    CHECK(expectation(psi, obs) == Approx(by_outcomes).margin(1e-12));
}

TEST_CASE("bitstring rendering is most-significant qubit first", "[state]") {
    CHECK(to_bitstring(1, 3) == "001");
    CHECK(to_bitstring(4, 3) == "100");
}

TEST_CASE("seed derivation distinguishes paths", "[rng]") {
    CHECK(derive_seed(0, {0}) != derive_seed(0, {1}));
    CHECK(derive_seed(0, {0}) == derive_seed(0, {0}));
    CHECK(derive_seed(0, {0, 1}) != derive_seed(0, {1, 0}));
    CHECK(derive_seed(1, {0}) != derive_seed(2, {0}));
}
