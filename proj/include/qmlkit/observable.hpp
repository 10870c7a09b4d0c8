// Copyright 2026 The qmlkit developers

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file
 * Pauli-sum observables with optionally trainable coefficients.
 *
 * Observables are weighted sums of Pauli strings. Strings are written
 * most-significant qubit first ("ZX" on two qubits puts Z on qubit 1 and X
 * on qubit 0), matching the bitstring rendering of the simulator.
 */

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "state.hpp"

namespace qmlkit {

enum class Pauli : unsigned char { I = 0, X = 1, Y = 2, Z = 3 };

inline char pauli_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

struct PauliString {
    int n_qubits = 0;
    std::vector<Pauli> letters; // indexed by qubit

    PauliString() = default;
    explicit PauliString(int n) : n_qubits(n), letters(static_cast<std::size_t>(n), Pauli::I) {}

    static PauliString identity(int n) { return PauliString(n); }

    static PauliString single(int n, int qubit, Pauli p) {
        PauliString s(n);
        s.letters[static_cast<std::size_t>(qubit)] = p;
        return s;
    }

    /// Parses a most-significant-qubit-first text like "ZZXI".
    static PauliString parse(const std::string &text) {
        PauliString s(static_cast<int>(text.size()));
        for (std::size_t i = 0; i < text.size(); ++i) {
            Pauli p;
            switch (text[i]) {
            case 'I':
                p = Pauli::I;
                break;
            case 'X':
                p = Pauli::X;
                break;
            case 'Y':
                p = Pauli::Y;
                break;
            case 'Z':
                p = Pauli::Z;
                break;
            default:
                throw Error(std::string("illegal Pauli character '") + text[i] + "' in \"" +
                            text + "\"");
            }
            s.letters[text.size() - 1 - i] = p;
        }
        return s;
    }

    [[nodiscard]] std::string str() const {
        std::string out(static_cast<std::size_t>(n_qubits), 'I');
        for (int q = 0; q < n_qubits; ++q) {
            out[static_cast<std::size_t>(n_qubits - 1 - q)] =
                pauli_char(letters[static_cast<std::size_t>(q)]);
        }
        return out;
    }

    [[nodiscard]] bool is_identity() const {
        for (const Pauli p : letters) {
            if (p != Pauli::I) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const PauliString &other) const { return letters == other.letters; }

    /// Bit mask of qubits carrying a non-identity letter.
    [[nodiscard]] std::uint64_t support_mask() const {
        std::uint64_t m = 0;
        for (int q = 0; q < n_qubits; ++q) {
            if (letters[static_cast<std::size_t>(q)] != Pauli::I) {
                m |= std::uint64_t{1} << q;
            }
        }
        return m;
    }
};

/// Product of two single-qubit Paulis: returns (phase index, letter) with
/// phase = i^{phase index}.
inline std::pair<int, Pauli> pauli_letter_mul(Pauli a, Pauli b) {
    if (a == Pauli::I) {
        return {0, b};
    }
    if (b == Pauli::I) {
        return {0, a};
    }
    if (a == b) {
        return {0, Pauli::I};
    }
    // XY = iZ, YZ = iX, ZX = iY and the reversed orders pick up -i.
    const int ia = static_cast<int>(a);
    const int ib = static_cast<int>(b);
    const Pauli c = static_cast<Pauli>(6 - ia - ib);
    const bool forward = (ib - ia + 3) % 3 == 1;
    return {forward ? 1 : 3, c};
}

/// String product A*B with accumulated phase i^k.
inline std::pair<int, PauliString> pauli_string_mul(const PauliString &a, const PauliString &b) {
    PauliString out(a.n_qubits);
    int phase = 0;
    for (int q = 0; q < a.n_qubits; ++q) {
        const auto [k, letter] =
            pauli_letter_mul(a.letters[static_cast<std::size_t>(q)],
                             b.letters[static_cast<std::size_t>(q)]);
        phase = (phase + k) % 4;
        out.letters[static_cast<std::size_t>(q)] = letter;
    }
    return {phase, out};
}

struct PauliTerm {
    double coefficient = 1.0;
    PauliString string;
    bool trainable = false;
};

/**
 * @brief Weighted sum of Pauli strings over a fixed qubit count.
 *
 * Duplicate strings are merged on construction; non-trainable terms with
 * |coefficient| < 1e-14 are dropped. Trainable terms are kept regardless so
 * their coefficient slots survive a zero initialization.
 */
class PauliObservable {
  public:
    explicit PauliObservable(int n_qubits) : n_qubits_(n_qubits) {}

    PauliObservable(int n_qubits, std::vector<PauliTerm> terms) : n_qubits_(n_qubits) {
        for (auto &t : terms) {
            add_term(std::move(t));
        }
    }

    /// Single-string observable with coefficient 1, e.g. parse("ZZZZ", 4).
    static PauliObservable parse(const std::string &text, int n_qubits) {
        if (static_cast<int>(text.size()) != n_qubits) {
            throw Error("Pauli text length " + std::to_string(text.size()) +
                        " does not match qubit count " + std::to_string(n_qubits));
        }
        PauliObservable obs(n_qubits);
        obs.add_term({1.0, PauliString::parse(text), false});
        return obs;
    }

    /// b*I + sum_i a_i * P_i with trainable coefficients (a_i = 1, b = 0).
    static PauliObservable summed_paulis(int n_qubits, Pauli letter = Pauli::Z) {
        PauliObservable obs(n_qubits);
        obs.add_term({0.0, PauliString::identity(n_qubits), true});
        for (int q = 0; q < n_qubits; ++q) {
            obs.add_term({1.0, PauliString::single(n_qubits, q, letter), true});
        }
        return obs;
    }

    /// b*I + sum_i a_i Z_i + sum_{i<j} J_ij Z_i Z_j, all trainable.
    static PauliObservable ising_hamiltonian(int n_qubits) {
        PauliObservable obs(n_qubits);
        obs.add_term({0.0, PauliString::identity(n_qubits), true});
        for (int q = 0; q < n_qubits; ++q) {
            obs.add_term({1.0, PauliString::single(n_qubits, q, Pauli::Z), true});
        }
        for (int i = 0; i < n_qubits; ++i) {
            for (int j = i + 1; j < n_qubits; ++j) {
                PauliString s(n_qubits);
                s.letters[static_cast<std::size_t>(i)] = Pauli::Z;
                s.letters[static_cast<std::size_t>(j)] = Pauli::Z;
                obs.add_term({1.0, std::move(s), true});
            }
        }
        return obs;
    }

    [[nodiscard]] int num_qubits() const { return n_qubits_; }
    [[nodiscard]] const std::vector<PauliTerm> &terms() const { return terms_; }
    [[nodiscard]] std::size_t size() const { return terms_.size(); }

    void add_term(PauliTerm term) {
        if (term.string.n_qubits != n_qubits_) {
            throw Error("Pauli term qubit count mismatch");
        }
        const std::string key = term.string.str();
        const auto it = index_.find(key);
        if (it != index_.end()) {
            auto &existing = terms_[it->second];
            existing.coefficient += term.coefficient;
            existing.trainable = existing.trainable || term.trainable;
        } else {
            index_.emplace(key, terms_.size());
            terms_.push_back(std::move(term));
        }
        prune();
    }

    [[nodiscard]] std::vector<int> trainable_indices() const {
        std::vector<int> idx;
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            if (terms_[i].trainable) {
                idx.push_back(static_cast<int>(i));
            }
        }
        return idx;
    }

    [[nodiscard]] std::vector<double> trainable_coefficients() const {
        std::vector<double> c;
        for (const auto &t : terms_) {
            if (t.trainable) {
                c.push_back(t.coefficient);
            }
        }
        return c;
    }

    void set_trainable_coefficients(std::span<const double> c) {
        std::size_t k = 0;
        for (auto &t : terms_) {
            if (t.trainable) {
                if (k >= c.size()) {
                    throw Error("trainable coefficient vector too short");
                }
                t.coefficient = c[k++];
            }
        }
        if (k != c.size()) {
            throw Error("trainable coefficient vector too long");
        }
    }

    /// True if every term is diagonal in the computational basis (I/Z only).
    [[nodiscard]] bool is_diagonal() const {
        for (const auto &t : terms_) {
            for (const Pauli p : t.string.letters) {
                if (p == Pauli::X || p == Pauli::Y) {
                    return false;
                }
            }
        }
        return true;
    }

    PauliObservable operator*(double factor) const {
        PauliObservable out(n_qubits_);
        for (const auto &t : terms_) {
            out.add_term({t.coefficient * factor, t.string, t.trainable});
        }
        return out;
    }

    PauliObservable operator+(const PauliObservable &other) const {
        if (other.n_qubits_ != n_qubits_) {
            throw Error("observable qubit counts differ");
        }
        PauliObservable out = *this;
        for (const auto &t : other.terms_) {
            out.add_term(t);
        }
        return out;
    }

    PauliObservable operator-(const PauliObservable &other) const {
        return *this + other * -1.0;
    }

    /**
     * @brief O^2 expanded through Pauli algebra into a real canonical sum.
     *
     * For Hermitian input the imaginary cross terms cancel pairwise; the
     * expansion asserts this and returns a non-trainable observable.
     */
    [[nodiscard]] PauliObservable square() const { return product(*this); }

    /// Hermitian part of this * other, i.e. (A B + B A) / 2 expanded.
    [[nodiscard]] PauliObservable symmetrized_product(const PauliObservable &other) const {
        return (product(other) + other.product(*this)) * 0.5;
    }

    [[nodiscard]] std::string key() const {
        std::string k;
        char buf[40];
        for (const auto &t : terms_) {
            std::snprintf(buf, sizeof(buf), "%.17g*", t.coefficient);
            k += buf;
            k += t.string.str();
            k += t.trainable ? "~;" : ";";
        }
        return k;
    }

  private:
    [[nodiscard]] PauliObservable product(const PauliObservable &other) const {
        if (other.n_qubits_ != n_qubits_) {
            throw Error("observable qubit counts differ");
        }
        // Accumulate complex coefficients keyed by string, then require the
        // imaginary residue to vanish.
        std::unordered_map<std::string, std::pair<complex_t, PauliString>> acc;
        std::vector<std::string> order;
        constexpr complex_t phases[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        for (const auto &a : terms_) {
            for (const auto &b : other.terms_) {
                auto [phase, s] = pauli_string_mul(a.string, b.string);
                const complex_t coeff = a.coefficient * b.coefficient * phases[phase];
                const std::string key = s.str();
                auto it = acc.find(key);
                if (it == acc.end()) {
                    acc.emplace(key, std::make_pair(coeff, std::move(s)));
                    order.push_back(key);
                } else {
                    it->second.first += coeff;
                }
            }
        }
        PauliObservable out(n_qubits_);
        for (const auto &key : order) {
            const auto &[coeff, s] = acc.at(key);
            if (std::abs(coeff.imag()) > 1e-10) {
                throw Error("observable product has a non-Hermitian residue");
            }
            if (std::abs(coeff.real()) < 1e-14) {
                continue;
            }
            out.add_term({coeff.real(), s, false});
        }
        return out;
    }

    void prune() {
        const auto droppable = [](const PauliTerm &t) {
            return !t.trainable && std::abs(t.coefficient) < 1e-14;
        };
        if (std::none_of(terms_.begin(), terms_.end(), droppable)) {
            return;
        }
        std::vector<PauliTerm> kept;
        kept.reserve(terms_.size());
        for (auto &t : terms_) {
            if (!droppable(t)) {
                kept.push_back(std::move(t));
            }
        }
        terms_ = std::move(kept);
        index_.clear();
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            index_.emplace(terms_[i].string.str(), i);
        }
    }

    int n_qubits_ = 0;
    std::vector<PauliTerm> terms_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// <psi|P|psi> for a single Pauli string; exact statevector contraction.
inline double expectation(const StateVector &state, const PauliString &p) {
    if (p.n_qubits != state.num_qubits()) {
        throw Error("expectation: observable qubit count mismatch");
    }
    std::uint64_t flip_mask = 0;  // X and Y positions
    std::uint64_t phase_mask = 0; // Y and Z positions contribute (-1)^bit
    int y_count = 0;
    for (int q = 0; q < p.n_qubits; ++q) {
        switch (p.letters[static_cast<std::size_t>(q)]) {
        case Pauli::I:
            break;
        case Pauli::X:
            flip_mask |= std::uint64_t{1} << q;
            break;
        case Pauli::Y:
            flip_mask |= std::uint64_t{1} << q;
            phase_mask |= std::uint64_t{1} << q;
            ++y_count;
            break;
        case Pauli::Z:
            phase_mask |= std::uint64_t{1} << q;
            break;
        }
    }
    constexpr complex_t phases[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const complex_t global = phases[y_count % 4];
    const auto &amps = state.amplitudes();
    complex_t acc{0.0, 0.0};
    for (std::uint64_t b = 0; b < amps.size(); ++b) {
        const double sign = std::popcount(b & phase_mask) % 2 == 0 ? 1.0 : -1.0;
        acc += std::conj(amps[b ^ flip_mask]) * (global * sign) * amps[b];
    }
    if (std::abs(acc.imag()) > 1e-9) {
        throw NumericError("Pauli expectation has a large imaginary residue");
    }
    return acc.real();
}

inline double expectation(const StateVector &state, const PauliObservable &obs) {
    if (obs.num_qubits() != state.num_qubits()) {
        throw Error("expectation: observable qubit count mismatch");
    }
    double value = 0.0;
    for (const auto &t : obs.terms()) {
        value += t.coefficient * expectation(state, t.string);
    }
    return value;
}

/// d<O>/dc_k = <P_k> for every trainable coefficient, in term order.
inline std::vector<double> coefficient_gradient(const PauliObservable &obs,
                                                const StateVector &state) {
    std::vector<double> grad;
    for (const auto &t : obs.terms()) {
        if (t.trainable) {
            grad.push_back(expectation(state, t.string));
        }
    }
    return grad;
}

/// Eigenvalue (+/-1) of a measured Pauli string on a basis outcome, assuming
/// the state was rotated into the string's measurement basis beforehand.
inline double pauli_outcome_eigenvalue(const PauliString &p, std::uint64_t bits) {
    return std::popcount(bits & p.support_mask()) % 2 == 0 ? 1.0 : -1.0;
}

} // namespace qmlkit
