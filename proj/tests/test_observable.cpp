#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "qmlkit/observable.hpp"
#include "qmlkit/state.hpp"

using namespace qmlkit;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

// Dense matrix of a Pauli observable via Kronecker products; brute-force
// oracle for the algebraic expansion paths.
Eigen::MatrixXcd dense_matrix(const PauliObservable &obs) {
    const int n = obs.num_qubits();
    const std::size_t dim = std::size_t{1} << n;
    Eigen::MatrixXcd total = Eigen::MatrixXcd::Zero(dim, dim);
    Eigen::Matrix2cd paulis[4];
    paulis[0] << 1, 0, 0, 1;
    paulis[1] << 0, 1, 1, 0;
    paulis[2] << 0, complex_t(0, -1), complex_t(0, 1), 0;
    paulis[3] << 1, 0, 0, -1;
    for (const auto &term : obs.terms()) {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(1, 1);
        // Qubit 0 is the least significant factor: M = p_{n-1} x ... x p_0.
        for (int q = 0; q < n; ++q) {
            const auto &p = paulis[static_cast<int>(term.string.letters[q])];
            Eigen::MatrixXcd kron(m.rows() * 2, m.cols() * 2);
            for (Eigen::Index r = 0; r < 2; ++r) {
                for (Eigen::Index c = 0; c < 2; ++c) {
                    kron.block(r * m.rows(), c * m.cols(), m.rows(), m.cols()) = p(r, c) * m;
                }
            }
            m = kron;
        }
        total += term.coefficient * m;
    }
    return total;
}

StateVector random_state(int n_qubits, std::uint64_t seed) {
    Rng rng(seed);
    StateVector psi(n_qubits);
    for (int i = 0; i < 24; ++i) {
        const int q = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_qubits)));
        psi.apply(Gate(GateKind::RY, q, rng.uniform(-pi, pi)));
        psi.apply(Gate(GateKind::RZ, q, rng.uniform(-pi, pi)));
        if (n_qubits > 1 && i % 3 == 0) {
            psi.apply(Gate(GateKind::CX, q, (q + 1) % n_qubits));
        }
    }
    return psi;
}

double dense_expectation(const StateVector &psi, const Eigen::MatrixXcd &m) {
    const auto &amps = psi.amplitudes();
    Eigen::VectorXcd v(static_cast<Eigen::Index>(amps.size()));
    for (std::size_t i = 0; i < amps.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = amps[i];
    }
    const complex_t val = v.adjoint() * m * v;
    return val.real();
}

} // namespace

TEST_CASE("parse single Pauli strings", "[observable]") {
    const auto obs = PauliObservable::parse("ZZZZ", 4);
    REQUIRE(obs.size() == 1);
    CHECK(obs.terms()[0].coefficient == 1.0);
    CHECK(obs.terms()[0].string.str() == "ZZZZ");
    CHECK_FALSE(obs.terms()[0].trainable);

    StateVector psi = random_state(4, 3);
    CHECK(expectation(psi, PauliObservable::parse("IIII", 4)) == Approx(1.0));

    CHECK_THROWS_AS(PauliObservable::parse("ZQ", 2), Error);
    CHECK_THROWS_AS(PauliObservable::parse("ZZ", 3), Error);
}

TEST_CASE("summed Paulis factory", "[observable]") {
    const auto obs = PauliObservable::summed_paulis(4);
    CHECK(obs.size() == 5);
    CHECK(obs.trainable_indices().size() == 5);

    StateVector zero(1);
    CHECK(expectation(zero, PauliObservable::summed_paulis(1)) == Approx(1.0));

    StateVector ones(2);
    ones.apply(Gate(GateKind::X, 0));
    ones.apply(Gate(GateKind::X, 1));
    CHECK(expectation(ones, PauliObservable::summed_paulis(2)) == Approx(-2.0));
}

TEST_CASE("Ising Hamiltonian factory", "[observable]") {
    CHECK(PauliObservable::ising_hamiltonian(3).size() == 7);
    CHECK(PauliObservable::ising_hamiltonian(1).size() == 2);

    StateVector zeros(2);
    CHECK(expectation(zeros, PauliObservable::ising_hamiltonian(2)) == Approx(3.0));
}

TEST_CASE("square through Pauli algebra", "[observable]") {
    const auto z0z1 = PauliObservable::parse("IZ", 2) + PauliObservable::parse("ZI", 2);
    const auto sq = z0z1.square();
    REQUIRE(sq.size() == 2);
    double identity_coeff = 0.0;
    double zz_coeff = 0.0;
    for (const auto &t : sq.terms()) {
        if (t.string.is_identity()) {
            identity_coeff = t.coefficient;
        } else if (t.string.str() == "ZZ") {
            zz_coeff = t.coefficient;
        }
    }
    CHECK(identity_coeff == Approx(2.0));
    CHECK(zz_coeff == Approx(2.0));

    const auto z = PauliObservable::parse("Z", 1);
    const auto z_sq = z.square();
    REQUIRE(z_sq.size() == 1);
    CHECK(z_sq.terms()[0].string.is_identity());
    CHECK(z_sq.terms()[0].coefficient == Approx(1.0));

    // XZ + ZX anticommute away: (X + Z)^2 = 2 I.
    const auto xz = PauliObservable::parse("X", 1) + PauliObservable::parse("Z", 1);
    const auto xz_sq = xz.square();
    REQUIRE(xz_sq.size() == 1);
    CHECK(xz_sq.terms()[0].string.is_identity());
    CHECK(xz_sq.terms()[0].coefficient == Approx(2.0));
}

TEST_CASE("square matches the dense-matrix oracle", "[observable]") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Rng rng(derive_seed(88, {seed}));
        const int n = 2 + static_cast<int>(seed % 3);
        PauliObservable obs(n);
        for (int t = 0; t < 4; ++t) {
            PauliString s(n);
            for (int q = 0; q < n; ++q) {
                s.letters[static_cast<std::size_t>(q)] =
                    static_cast<Pauli>(rng.next_below(4));
            }
            obs.add_term({rng.uniform(-1.0, 1.0), s, false});
        }
        StateVector psi = random_state(n, seed + 40);
        const Eigen::MatrixXcd dense = dense_matrix(obs);
        const double oracle = dense_expectation(psi, dense * dense);
        CHECK(expectation(psi, obs.square()) == Approx(oracle).margin(1e-10));
    }
}

TEST_CASE("coefficient gradients are term expectations", "[observable]") {
    const auto obs = PauliObservable::summed_paulis(1);

    StateVector zero(1);
    auto grad = coefficient_gradient(obs, zero);
    REQUIRE(grad.size() == 2);
    CHECK(grad[0] == Approx(1.0)); // identity offset
    CHECK(grad[1] == Approx(1.0)); // <Z> on |0>

    StateVector plus(1);
    plus.apply(Gate(GateKind::H, 0));
    grad = coefficient_gradient(obs, plus);
    CHECK(grad[0] == Approx(1.0));
    CHECK(grad[1] == Approx(0.0).margin(1e-12));

    const auto fixed = PauliObservable::parse("Z", 1);
    CHECK(coefficient_gradient(fixed, zero).empty());
}

TEST_CASE("expectation is linear in the observable", "[observable]") {
    StateVector psi = random_state(3, 7);
    const auto a = PauliObservable::parse("XYZ", 3);
    const auto b = PauliObservable::parse("ZII", 3);
    const double alpha = 0.37;
    const double beta = -1.21;
    const auto combo = a * alpha + b * beta;
    CHECK(expectation(psi, combo) ==
          Approx(alpha * expectation(psi, a) + beta * expectation(psi, b)).margin(1e-12));
}

TEST_CASE("variance is non-negative for random observables", "[observable]") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(derive_seed(5150, {seed}));
        const int n = 3;
        PauliObservable obs(n);
        for (int t = 0; t < 3; ++t) {
            PauliString s(n);
            for (int q = 0; q < n; ++q) {
                s.letters[static_cast<std::size_t>(q)] =
                    static_cast<Pauli>(rng.next_below(4));
            }
            obs.add_term({rng.uniform(-2.0, 2.0), s, false});
        }
        StateVector psi = random_state(n, seed);
        const double mean = expectation(psi, obs);
        const double second = expectation(psi, obs.square());
        CHECK(second - mean * mean >= -1e-10);
    }
}

TEST_CASE("duplicate strings are merged on construction", "[observable]") {
    PauliObservable obs(2);
    obs.add_term({0.5, PauliString::parse("ZI"), false});
    obs.add_term({0.25, PauliString::parse("ZI"), false});
    REQUIRE(obs.size() == 1);
    CHECK(obs.terms()[0].coefficient == Approx(0.75));

    // Cancellation drops non-trainable terms entirely.
    obs.add_term({-0.75, PauliString::parse("ZI"), false});
    CHECK(obs.size() == 0);

    // A zero-initialized trainable term survives.
    PauliObservable trainable(2);
    trainable.add_term({0.0, PauliString::identity(2), true});
    CHECK(trainable.size() == 1);
}
