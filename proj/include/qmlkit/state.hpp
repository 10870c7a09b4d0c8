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
 * Dense statevector simulator: state preparation, gate application, shot
 * sampling, overlaps and depolarizing mixing of measurement distributions.
 *
 * Conventions used throughout qmlkit:
 *  - Qubit 0 is the least-significant bit of the basis-state index.
 *  - Bitstrings and Pauli strings are rendered most-significant qubit first,
 *    i.e. the leftmost character belongs to qubit n-1.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace qmlkit {

using complex_t = std::complex<double>;

enum class GateKind {
    RX,
    RY,
    RZ,
    H,
    X,
    Y,
    Z,
    CX,
    CZ,
    CRX,
    CRY,
    CRZ,
    SWAP,
};

inline bool is_rotation(GateKind k) {
    return k == GateKind::RX || k == GateKind::RY || k == GateKind::RZ ||
           k == GateKind::CRX || k == GateKind::CRY || k == GateKind::CRZ;
}

inline bool is_two_qubit(GateKind k) {
    return k == GateKind::CX || k == GateKind::CZ || k == GateKind::CRX ||
           k == GateKind::CRY || k == GateKind::CRZ || k == GateKind::SWAP;
}

inline const char *gate_name(GateKind k) {
    switch (k) {
    case GateKind::RX:
        return "RX";
    case GateKind::RY:
        return "RY";
    case GateKind::RZ:
        return "RZ";
    case GateKind::H:
        return "H";
    case GateKind::X:
        return "X";
    case GateKind::Y:
        return "Y";
    case GateKind::Z:
        return "Z";
    case GateKind::CX:
        return "CX";
    case GateKind::CZ:
        return "CZ";
    case GateKind::CRX:
        return "CRX";
    case GateKind::CRY:
        return "CRY";
    case GateKind::CRZ:
        return "CRZ";
    case GateKind::SWAP:
        return "SWAP";
    }
    return "?";
}

/**
 * @brief A single concrete gate. For two-qubit gates `q0` is the control
 * (first operand for SWAP) and `q1` the target.
 */
struct Gate {
    GateKind kind;
    int q0 = 0;
    int q1 = -1;
    std::optional<double> angle{};

    Gate() : kind(GateKind::H) {}
    Gate(GateKind k, int a) : kind(k), q0(a) {}
    Gate(GateKind k, int a, double theta) : kind(k), q0(a), angle(theta) {}
    Gate(GateKind k, int a, int b) : kind(k), q0(a), q1(b) {}
    Gate(GateKind k, int a, int b, double theta) : kind(k), q0(a), q1(b), angle(theta) {}

    /// Inverse gate: rotations negate their angle, everything else is an involution.
    [[nodiscard]] Gate inverse() const {
        Gate g = *this;
        if (g.angle) {
            g.angle = -*g.angle;
        }
        return g;
    }
};

/**
 * @brief Dense n-qubit statevector with in-place gate application.
 *
 * Gates are applied with stride iteration over the amplitude array; no full
 * 2^n x 2^n matrices are ever formed. Instances are cheap to copy and safe
 * for concurrent read-only use.
 */
class StateVector {
  public:
    explicit StateVector(int n_qubits) : n_qubits_(n_qubits) {
        if (n_qubits < 1) {
            throw Error("StateVector requires at least one qubit");
        }
        amps_.assign(std::size_t{1} << n_qubits, complex_t{0.0, 0.0});
        amps_[0] = complex_t{1.0, 0.0};
    }

    StateVector(int n_qubits, std::vector<complex_t> amplitudes)
        : n_qubits_(n_qubits), amps_(std::move(amplitudes)) {
        if (amps_.size() != (std::size_t{1} << n_qubits)) {
            throw Error("amplitude vector length must be 2^n_qubits");
        }
    }

    [[nodiscard]] int num_qubits() const { return n_qubits_; }
    [[nodiscard]] std::size_t size() const { return amps_.size(); }
    [[nodiscard]] const std::vector<complex_t> &amplitudes() const { return amps_; }
    [[nodiscard]] std::vector<complex_t> &amplitudes() { return amps_; }
    [[nodiscard]] complex_t amplitude(std::size_t i) const { return amps_[i]; }

    [[nodiscard]] double norm_sq() const {
        double s = 0.0;
        for (const auto &a : amps_) {
            s += std::norm(a);
        }
        return s;
    }

    [[nodiscard]] std::vector<double> probabilities() const {
        std::vector<double> p(amps_.size());
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            p[i] = std::norm(amps_[i]);
        }
        return p;
    }

    void apply(const Gate &g) {
        validate(g);
        const double theta = g.angle.value_or(0.0);
        const double c = std::cos(theta / 2.0);
        const double s = std::sin(theta / 2.0);
        constexpr complex_t im{0.0, 1.0};
        switch (g.kind) {
        case GateKind::RX:
            apply_1q(g.q0, {c, 0.0}, -im * s, -im * s, {c, 0.0});
            break;
        case GateKind::RY:
            apply_1q(g.q0, {c, 0.0}, {-s, 0.0}, {s, 0.0}, {c, 0.0});
            break;
        case GateKind::RZ:
            apply_phase(g.q0, std::exp(-im * (theta / 2.0)), std::exp(im * (theta / 2.0)));
            break;
        case GateKind::H: {
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            apply_1q(g.q0, {inv_sqrt2, 0.0}, {inv_sqrt2, 0.0}, {inv_sqrt2, 0.0},
                     {-inv_sqrt2, 0.0});
            break;
        }
        case GateKind::X:
            apply_1q(g.q0, {0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0});
            break;
        case GateKind::Y:
            apply_1q(g.q0, {0.0, 0.0}, -im, im, {0.0, 0.0});
            break;
        case GateKind::Z:
            apply_phase(g.q0, {1.0, 0.0}, {-1.0, 0.0});
            break;
        case GateKind::CX:
            apply_controlled_1q(g.q0, g.q1, {0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0});
            break;
        case GateKind::CZ:
            apply_controlled_phase(g.q0, g.q1, {1.0, 0.0}, {-1.0, 0.0});
            break;
        case GateKind::CRX:
            apply_controlled_1q(g.q0, g.q1, {c, 0.0}, -im * s, -im * s, {c, 0.0});
            break;
        case GateKind::CRY:
            apply_controlled_1q(g.q0, g.q1, {c, 0.0}, {-s, 0.0}, {s, 0.0}, {c, 0.0});
            break;
        case GateKind::CRZ:
            apply_controlled_phase(g.q0, g.q1, std::exp(-im * (theta / 2.0)),
                                   std::exp(im * (theta / 2.0)));
            break;
        case GateKind::SWAP:
            apply_swap(g.q0, g.q1);
            break;
        }
    }

    void apply_all(std::span<const Gate> gates) {
        for (const auto &g : gates) {
            apply(g);
        }
    }

  private:
    void validate(const Gate &g) const {
        if (g.q0 < 0 || g.q0 >= n_qubits_) {
            throw Error("gate target out of range: qubit " + std::to_string(g.q0));
        }
        if (is_two_qubit(g.kind)) {
            if (g.q1 < 0 || g.q1 >= n_qubits_) {
                throw Error("gate target out of range: qubit " + std::to_string(g.q1));
            }
            if (g.q0 == g.q1) {
                throw Error("two-qubit gate targets must be distinct");
            }
        }
        if (is_rotation(g.kind) && !g.angle.has_value()) {
            throw Error(std::string("missing angle on rotation gate ") + gate_name(g.kind));
        }
    }

    // u = [[m00, m01], [m10, m11]] on qubit t.
    void apply_1q(int t, complex_t m00, complex_t m01, complex_t m10, complex_t m11) {
        const std::size_t step = std::size_t{1} << t;
        const std::size_t n = amps_.size();
        for (std::size_t base = 0; base < n; base += 2 * step) {
            for (std::size_t low = 0; low < step; ++low) {
                const std::size_t i0 = base + low;
                const std::size_t i1 = i0 + step;
                const complex_t a0 = amps_[i0];
                const complex_t a1 = amps_[i1];
                amps_[i0] = m00 * a0 + m01 * a1;
                amps_[i1] = m10 * a0 + m11 * a1;
            }
        }
    }

    // Diagonal single-qubit gate diag(d0, d1) on qubit t.
    void apply_phase(int t, complex_t d0, complex_t d1) {
        const std::size_t bit = std::size_t{1} << t;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            amps_[i] *= (i & bit) ? d1 : d0;
        }
    }

    void apply_controlled_1q(int ctrl, int t, complex_t m00, complex_t m01, complex_t m10,
                             complex_t m11) {
        const std::size_t cbit = std::size_t{1} << ctrl;
        const std::size_t step = std::size_t{1} << t;
        const std::size_t n = amps_.size();
        for (std::size_t base = 0; base < n; base += 2 * step) {
            for (std::size_t low = 0; low < step; ++low) {
                const std::size_t i0 = base + low;
                if (!(i0 & cbit)) {
                    continue;
                }
                const std::size_t i1 = i0 + step;
                const complex_t a0 = amps_[i0];
                const complex_t a1 = amps_[i1];
                amps_[i0] = m00 * a0 + m01 * a1;
                amps_[i1] = m10 * a0 + m11 * a1;
            }
        }
    }

    void apply_controlled_phase(int ctrl, int t, complex_t d0, complex_t d1) {
        const std::size_t cbit = std::size_t{1} << ctrl;
        const std::size_t tbit = std::size_t{1} << t;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if (i & cbit) {
                amps_[i] *= (i & tbit) ? d1 : d0;
            }
        }
    }

    void apply_swap(int a, int b) {
        const std::size_t abit = std::size_t{1} << a;
        const std::size_t bbit = std::size_t{1} << b;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if ((i & abit) && !(i & bbit)) {
                std::swap(amps_[i], amps_[(i & ~abit) | bbit]);
            }
        }
    }

    int n_qubits_;
    std::vector<complex_t> amps_;
};

/// Renders a basis-state index as a bitstring, qubit n-1 first.
inline std::string to_bitstring(std::uint64_t index, int n_qubits) {
    std::string s(static_cast<std::size_t>(n_qubits), '0');
    for (int q = 0; q < n_qubits; ++q) {
        if (index & (std::uint64_t{1} << q)) {
            s[static_cast<std::size_t>(n_qubits - 1 - q)] = '1';
        }
    }
    return s;
}

/**
 * @brief Outcome histogram of a projective measurement in the computational
 * basis. Keys are basis-state indices (see to_bitstring for rendering).
 */
struct ShotResult {
    std::map<std::uint64_t, std::uint64_t> counts;
    long long shots = 0;
    std::uint64_t seed = 0;
    int n_qubits = 0;

    [[nodiscard]] double frequency(std::uint64_t index) const {
        const auto it = counts.find(index);
        return it == counts.end() ? 0.0
                                  : static_cast<double>(it->second) / static_cast<double>(shots);
    }
};

/// Multinomial sampling from an explicit probability vector.
inline ShotResult sample_probabilities(std::span<const double> probs, int n_qubits,
                                       long long shots, std::uint64_t seed) {
    if (shots < 1) {
        throw Error("shots must be >= 1");
    }
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    const double total = acc;
    Rng rng(seed);
    ShotResult result;
    result.shots = shots;
    result.seed = seed;
    result.n_qubits = n_qubits;
    for (long long s = 0; s < shots; ++s) {
        const double u = rng.next_double() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
        if (idx >= probs.size()) {
            idx = probs.size() - 1;
        }
        ++result.counts[idx];
    }
    return result;
}

/// Samples computational-basis shots from a state; deterministic per seed.
inline ShotResult sample(const StateVector &state, long long shots, std::uint64_t seed) {
    const auto probs = state.probabilities();
    return sample_probabilities(probs, state.num_qubits(), shots, seed);
}

/// Squared overlap |<a|b>|^2 of two states on the same qubit count.
inline double overlap_sq(const StateVector &a, const StateVector &b) {
    if (a.num_qubits() != b.num_qubits()) {
        throw Error("overlap_sq: qubit counts differ");
    }
    complex_t acc{0.0, 0.0};
    const auto &av = a.amplitudes();
    const auto &bv = b.amplitudes();
    for (std::size_t i = 0; i < av.size(); ++i) {
        acc += std::conj(av[i]) * bv[i];
    }
    return std::norm(acc);
}

/**
 * @brief Global depolarizing mixing of a measurement distribution:
 * q' = (1 - p) q + p / 2^n.
 */
inline std::vector<double> mix_depolarizing(std::span<const double> probs, double p) {
    if (p < 0.0 || p > 1.0) {
        throw Error("depolarizing probability must lie in [0, 1]");
    }
    const double uniform = p / static_cast<double>(probs.size());
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out[i] = (1.0 - p) * probs[i] + uniform;
    }
    return out;
}

} // namespace qmlkit
