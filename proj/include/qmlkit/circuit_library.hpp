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
 * String-based layered circuit construction and predefined circuit families.
 *
 * Layered DSL grammar (EBNF):
 *
 *     spec  := token ("-" token)*
 *     token := gate "(" arg ")" | gate
 *     gate  := "Rx" | "Ry" | "Rz" | "h" | "cx" | "cz" | "crx" | "cry" | "crz"
 *     arg   := "x" | "p"
 *
 * Single-qubit tokens expand to one gate per qubit; "cx"/"cz"/"cr*" expand to
 * a nearest-neighbor chain (qubit i controls i+1). The token sequence repeats
 * n_layers times. Feature arguments are assigned round-robin over all feature
 * gates of the whole circuit; every "p" occurrence allocates a fresh
 * parameter.
 */

#pragma once

#include <string>
#include <vector>

#include "circuit.hpp"

namespace qmlkit {

enum class CircuitFamily { YzCx, HighDim, ChebyshevPQC };

namespace detail {

struct LayeredToken {
    std::string gate;
    std::string arg; // "", "x" or "p"
};

inline std::vector<LayeredToken> tokenize_layered(const std::string &spec) {
    if (spec.empty()) {
        throw Error("empty layered circuit specification");
    }
    std::vector<LayeredToken> tokens;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        std::size_t dash = spec.find('-', pos);
        if (dash == std::string::npos) {
            dash = spec.size();
        }
        std::string piece = spec.substr(pos, dash - pos);
        if (piece.empty()) {
            throw Error("empty token in layered specification \"" + spec + "\"");
        }
        LayeredToken tok;
        const std::size_t paren = piece.find('(');
        if (paren == std::string::npos) {
            tok.gate = piece;
        } else {
            if (piece.back() != ')') {
                throw Error("malformed token \"" + piece + "\"");
            }
            tok.gate = piece.substr(0, paren);
            tok.arg = piece.substr(paren + 1, piece.size() - paren - 2);
            if (tok.arg != "x" && tok.arg != "p") {
                throw Error("unknown argument \"" + tok.arg + "\" in token \"" + piece +
                            "\"; expected x or p");
            }
        }
        tokens.push_back(std::move(tok));
        if (dash == spec.size()) {
            break;
        }
        pos = dash + 1;
    }
    return tokens;
}

} // namespace detail

/**
 * @brief Builds a layered encoding circuit from a dash-separated string,
 * e.g. "Ry(x)-Rz(x)-Rx(p)-cx".
 */
inline EncodingCircuit layered_from_string(const std::string &spec, int n_qubits,
                                           int n_features, int n_layers) {
    const auto tokens = detail::tokenize_layered(spec);
    EncodingCircuit circuit(n_qubits, n_features);
    int feature_cursor = 0;
    const auto next_feature = [&]() {
        if (n_features < 1) {
            throw Error("layered specification uses features but n_features is 0");
        }
        const int j = feature_cursor % n_features;
        ++feature_cursor;
        return j;
    };
    for (int layer = 0; layer < n_layers; ++layer) {
        for (const auto &tok : tokens) {
            GateKind rot;
            if (tok.gate == "Rx" || tok.gate == "Ry" || tok.gate == "Rz") {
                rot = tok.gate == "Rx"   ? GateKind::RX
                      : tok.gate == "Ry" ? GateKind::RY
                                         : GateKind::RZ;
                if (tok.arg.empty()) {
                    throw Error("token \"" + tok.gate + "\" requires an (x) or (p) argument");
                }
                for (int q = 0; q < n_qubits; ++q) {
                    const AngleExpr expr = tok.arg == "x"
                                               ? AngleExpr::feature(next_feature())
                                               : AngleExpr::param(circuit.new_param());
                    circuit.add_rotation(rot, q, expr);
                }
            } else if (tok.gate == "h") {
                for (int q = 0; q < n_qubits; ++q) {
                    circuit.add(GateKind::H, q);
                }
            } else if (tok.gate == "cx" || tok.gate == "cz") {
                const GateKind kind = tok.gate == "cx" ? GateKind::CX : GateKind::CZ;
                for (int q = 0; q + 1 < n_qubits; ++q) {
                    circuit.add(kind, q, q + 1);
                }
            } else if (tok.gate == "crx" || tok.gate == "cry" || tok.gate == "crz") {
                if (tok.arg != "p") {
                    throw Error("token \"" + tok.gate + "\" requires a (p) argument");
                }
                const GateKind kind = tok.gate == "crx"   ? GateKind::CRX
                                      : tok.gate == "cry" ? GateKind::CRY
                                                          : GateKind::CRZ;
                for (int q = 0; q + 1 < n_qubits; ++q) {
                    circuit.add_controlled_rotation(
                        kind, q, q + 1, AngleExpr::param(circuit.new_param()));
                }
            } else {
                throw Error("unknown token \"" + tok.gate + "\" in layered specification");
            }
        }
    }
    return circuit;
}

/**
 * @brief Predefined circuit families.
 *
 * YzCx: per layer Ry(theta_i * x_j) on every qubit, then Rz(theta'_i * x_j),
 * then a CX chain. Features are assigned round-robin; every rotation gets a
 * fresh scale parameter (2n per layer).
 *
 * ChebyshevPQC: per layer Rx(p) on every qubit, Ry(theta * arccos(x)) on
 * every qubit, a CX ring, and closing Rx(p) rotations (3n parameters per
 * layer). The arccos map produces Chebyshev polynomials of the input, so
 * features must lie in [-1, 1] at binding time.
 *
 * HighDim: alternating Ry/Rz feature sublayers with CX chains in between,
 * sized so every feature index is consumed at least once per layer; carries
 * no trainable parameters.
 */
inline EncodingCircuit build_family(CircuitFamily family, int n_qubits, int n_features,
                                    int n_layers) {
    if (n_qubits < 1 || n_features < 1 || n_layers < 0) {
        throw Error("invalid circuit family dimensions");
    }
    EncodingCircuit circuit(n_qubits, n_features);
    int feature_cursor = 0;
    const auto next_feature = [&]() {
        const int j = feature_cursor % n_features;
        ++feature_cursor;
        return j;
    };
    switch (family) {
    case CircuitFamily::YzCx:
        for (int layer = 0; layer < n_layers; ++layer) {
            for (int q = 0; q < n_qubits; ++q) {
                circuit.add_rotation(GateKind::RY, q,
                                     AngleExpr::feature(next_feature(), AngleMap::Identity,
                                                        1.0, circuit.new_param()));
            }
            for (int q = 0; q < n_qubits; ++q) {
                circuit.add_rotation(GateKind::RZ, q,
                                     AngleExpr::feature(next_feature(), AngleMap::Identity,
                                                        1.0, circuit.new_param()));
            }
            for (int q = 0; q + 1 < n_qubits; ++q) {
                circuit.add(GateKind::CX, q, q + 1);
            }
        }
        break;
    case CircuitFamily::ChebyshevPQC:
        for (int layer = 0; layer < n_layers; ++layer) {
            for (int q = 0; q < n_qubits; ++q) {
                circuit.add_rotation(GateKind::RX, q, AngleExpr::param(circuit.new_param()));
            }
            for (int q = 0; q < n_qubits; ++q) {
                circuit.add_rotation(GateKind::RY, q,
                                     AngleExpr::feature(next_feature(), AngleMap::ArcCos,
                                                        1.0, circuit.new_param()));
            }
            if (n_qubits >= 2) {
                for (int q = 0; q < n_qubits; ++q) {
                    circuit.add(GateKind::CX, q, (q + 1) % n_qubits);
                }
            }
            for (int q = 0; q < n_qubits; ++q) {
                circuit.add_rotation(GateKind::RX, q, AngleExpr::param(circuit.new_param()));
            }
        }
        break;
    case CircuitFamily::HighDim: {
        const int sublayers =
            std::max(2, (n_features + n_qubits - 1) / n_qubits);
        for (int layer = 0; layer < n_layers; ++layer) {
            for (int sub = 0; sub < sublayers; ++sub) {
                const GateKind rot = sub % 2 == 0 ? GateKind::RY : GateKind::RZ;
                for (int q = 0; q < n_qubits; ++q) {
                    circuit.add_rotation(rot, q, AngleExpr::feature(next_feature()));
                }
                if (sub + 1 < sublayers) {
                    for (int q = 0; q + 1 < n_qubits; ++q) {
                        circuit.add(GateKind::CX, q, q + 1);
                    }
                }
            }
        }
        break;
    }
    }
    return circuit;
}

/**
 * @brief Builds a circuit from a compact name, the form used by estimator
 * hyperparameters: "yz_cx", "chebyshev", "highdim" or "layered:<spec>".
 */
inline EncodingCircuit build_named_circuit(const std::string &name, int n_qubits,
                                           int n_features, int n_layers) {
    if (name == "yz_cx") {
        return build_family(CircuitFamily::YzCx, n_qubits, n_features, n_layers);
    }
    if (name == "chebyshev") {
        return build_family(CircuitFamily::ChebyshevPQC, n_qubits, n_features, n_layers);
    }
    if (name == "highdim") {
        return build_family(CircuitFamily::HighDim, n_qubits, n_features, n_layers);
    }
    constexpr const char *prefix = "layered:";
    if (name.rfind(prefix, 0) == 0) {
        return layered_from_string(name.substr(8), n_qubits, n_features, n_layers);
    }
    throw ConfigError("unknown encoding circuit \"" + name + "\"");
}

} // namespace qmlkit
