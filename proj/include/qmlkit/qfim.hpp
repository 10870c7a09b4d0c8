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
 * Quantum Fisher information of encoding circuits and QFIM-based detection
 * and removal of redundant parameters.
 *
 * F_ij = 4 Re[<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>], computed from
 * exact statevector tangents. A parameter is redundant when its QFIM column
 * lies in the span of the remaining columns for every sampled (x, theta);
 * removal is iterative, one parameter at a time, and re-expresses the
 * removed parameter's gates with the parameter fixed at 0.
 */

#pragma once

#include <numbers>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "circuit.hpp"
#include "executor.hpp"
#include "rng.hpp"
#include "state.hpp"

namespace qmlkit {

struct QfimReport {
    Eigen::MatrixXd qfim;
    int rank = 0;
    std::set<int> redundant;
};

namespace detail {

/// (-i/2) P applied to a copy of psi, scaled by `chain`.
inline StateVector generator_half(const StateVector &psi, GateKind kind, int qubit,
                                  double chain) {
    StateVector out = psi;
    switch (kind) {
    case GateKind::RX:
        out.apply(Gate(GateKind::X, qubit));
        break;
    case GateKind::RY:
        out.apply(Gate(GateKind::Y, qubit));
        break;
    case GateKind::RZ:
        out.apply(Gate(GateKind::Z, qubit));
        break;
    default:
        throw Error("generator insertion expects a plain rotation gate");
    }
    const complex_t factor = complex_t{0.0, -0.5} * chain;
    for (auto &amp : out.amplitudes()) {
        amp *= factor;
    }
    return out;
}

inline complex_t inner(const StateVector &a, const StateVector &b) {
    complex_t acc{0.0, 0.0};
    const auto &av = a.amplitudes();
    const auto &bv = b.amplitudes();
    for (std::size_t i = 0; i < av.size(); ++i) {
        acc += std::conj(av[i]) * bv[i];
    }
    return acc;
}

/// Tangent state d|psi>/d theta_i accumulated along the gate sequence.
inline StateVector tangent_state(const EncodingCircuit &circuit, const BoundProgram &p,
                                 std::span<const double> x, std::span<const double> theta,
                                 int param) {
    StateVector psi(p.n_qubits);
    StateVector dpsi(p.n_qubits);
    for (auto &amp : dpsi.amplitudes()) {
        amp = complex_t{0.0, 0.0};
    }
    const CircuitVar var = CircuitVar::param(param);
    for (std::size_t g = 0; g < p.gates.size(); ++g) {
        dpsi.apply(p.gates[g]);
        psi.apply(p.gates[g]);
        const auto &bi = p.info[g];
        if (bi.circuit_gate < 0) {
            continue;
        }
        const auto &expr = *circuit.gates()[static_cast<std::size_t>(bi.circuit_gate)].angle;
        if (!expr.depends_on(var)) {
            continue;
        }
        const double chain = bi.sub_scale * expr.d1(x, theta, var);
        if (chain == 0.0) {
            continue;
        }
        const StateVector contribution =
            generator_half(psi, p.gates[g].kind, p.gates[g].q0, chain);
        auto &acc = dpsi.amplitudes();
        const auto &add = contribution.amplitudes();
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += add[i];
        }
    }
    return dpsi;
}

inline int matrix_rank(const Eigen::MatrixXd &m, double rel_tol = 1e-10) {
    if (m.cols() == 0 || m.rows() == 0) {
        return 0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto &sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) {
        return 0;
    }
    const double tol = rel_tol * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol) {
            ++rank;
        }
    }
    return rank;
}

} // namespace detail

/// Exact QFIM of a circuit at one (x, theta) sample.
inline Eigen::MatrixXd qfim_matrix(const EncodingCircuit &circuit, std::span<const double> x,
                                   std::span<const double> theta) {
    const BoundProgram p = circuit.bind(x, theta);
    const StateVector psi = simulate(p);
    const int k = circuit.num_params();
    std::vector<StateVector> tangents;
    tangents.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        tangents.push_back(detail::tangent_state(circuit, p, x, theta, i));
    }
    std::vector<complex_t> overlap(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        overlap[static_cast<std::size_t>(i)] = detail::inner(tangents[static_cast<std::size_t>(i)], psi);
    }
    Eigen::MatrixXd f(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) {
            const complex_t didj = detail::inner(tangents[static_cast<std::size_t>(i)],
                                                 tangents[static_cast<std::size_t>(j)]);
            const complex_t gauge =
                overlap[static_cast<std::size_t>(i)] * std::conj(overlap[static_cast<std::size_t>(j)]);
            const double value = 4.0 * (didj - gauge).real();
            f(i, j) = value;
            f(j, i) = value;
        }
    }
    return f;
}

/// QFIM with a backend check: shot-based plans cannot produce exact tangents.
inline QfimReport qfim(const EncodingCircuit &circuit, std::span<const double> x,
                       std::span<const double> theta, const Executor &exec) {
    if (exec.plan().backend != Backend::Exact) {
        throw Error("QFIM requires the exact backend");
    }
    QfimReport report;
    report.qfim = qfim_matrix(circuit, x, theta);
    report.rank = detail::matrix_rank(report.qfim);
    return report;
}

/// New circuit with parameter `param` fixed at 0 and indices re-packed.
inline EncodingCircuit remove_parameter(const EncodingCircuit &circuit, int param) {
    if (param < 0 || param >= circuit.num_params()) {
        throw Error("parameter index out of range");
    }
    EncodingCircuit out(circuit.num_qubits(), circuit.num_features());
    for (int i = 0; i < circuit.num_params() - 1; ++i) {
        out.new_param();
    }
    for (const auto &g : circuit.gates()) {
        if (!g.angle) {
            out.add(g.kind, g.q0, g.q1);
            continue;
        }
        AngleExpr e = *g.angle;
        if (e.source == AngleSource::Param) {
            if (e.index == param) {
                e.source = AngleSource::Constant;
                e.const_value = 0.0;
                e.index = -1;
            } else if (e.index > param) {
                --e.index;
            }
        }
        if (e.scale_param == param) {
            e.scale_param = -1;
            e.scale = 0.0;
        } else if (e.scale_param > param) {
            --e.scale_param;
        }
        if (g.kind == GateKind::CRX || g.kind == GateKind::CRY || g.kind == GateKind::CRZ) {
            out.add_controlled_rotation(g.kind, g.q0, g.q1, e);
        } else {
            out.add_rotation(g.kind, g.q0, e);
        }
    }
    return out;
}

namespace detail {

inline std::vector<double> random_vector(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto &x : v) {
        x = rng.uniform(-std::numbers::pi, std::numbers::pi);
    }
    return v;
}

} // namespace detail

/**
 * @brief Detects redundant parameters over `n_samples` random (x, theta)
 * draws, removing one parameter at a time until every remaining QFIM column
 * is independent on at least one sample. Returns original parameter indices.
 */
inline std::set<int> detect_redundant(const EncodingCircuit &circuit, int n_samples,
                                      std::uint64_t seed, const Executor &exec) {
    if (exec.plan().backend != Backend::Exact) {
        throw Error("redundancy detection requires the exact backend");
    }
    if (n_samples < 1) {
        throw Error("n_samples must be >= 1");
    }
    EncodingCircuit current = circuit;
    std::vector<int> original(static_cast<std::size_t>(circuit.num_params()));
    for (std::size_t i = 0; i < original.size(); ++i) {
        original[i] = static_cast<int>(i);
    }
    std::set<int> removed;
    while (current.num_params() > 0) {
        const int k = current.num_params();
        std::vector<Eigen::MatrixXd> fims;
        fims.reserve(static_cast<std::size_t>(n_samples));
        for (int s = 0; s < n_samples; ++s) {
            const auto x = detail::random_vector(
                derive_seed(seed, {0x5au, static_cast<std::uint64_t>(s)}),
                current.num_features());
            const auto theta = detail::random_vector(
                derive_seed(seed, {0x7bu, static_cast<std::uint64_t>(s)}), k);
            fims.push_back(qfim_matrix(current, x, theta));
        }
        int candidate = -1;
        for (int i = 0; i < k && candidate < 0; ++i) {
            bool redundant_in_all = true;
            for (const auto &f : fims) {
                const int full_rank = detail::matrix_rank(f);
                Eigen::MatrixXd without(f.rows(), f.cols() - 1);
                Eigen::Index col = 0;
                for (int j = 0; j < k; ++j) {
                    if (j != i) {
                        without.col(col++) = f.col(j);
                    }
                }
                if (detail::matrix_rank(without) != full_rank) {
                    redundant_in_all = false;
                    break;
                }
            }
            if (redundant_in_all) {
                candidate = i;
            }
        }
        if (candidate < 0) {
            break;
        }
        removed.insert(original[static_cast<std::size_t>(candidate)]);
        original.erase(original.begin() + candidate);
        current = remove_parameter(current, candidate);
    }
    return removed;
}

/// Removal entry point: new circuit plus the removed original indices.
inline std::pair<EncodingCircuit, std::set<int>>
remove_redundant(const EncodingCircuit &circuit, int n_samples, std::uint64_t seed,
                 const Executor &exec) {
    const auto redundant = detect_redundant(circuit, n_samples, seed, exec);
    EncodingCircuit out = circuit;
    // Indices shift as parameters are removed; walk from the highest down.
    std::vector<int> ordered(redundant.begin(), redundant.end());
    for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) {
        out = remove_parameter(out, *it);
    }
    return {std::move(out), redundant};
}

} // namespace qmlkit
