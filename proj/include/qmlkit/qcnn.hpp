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
 * Quantum convolutional encoding circuits built from convolution, pooling
 * and fully-connected layers.
 *
 * Convolution applies a shared-parameter two-qubit block on adjacent pairs
 * of active qubits. Pooling halves the active set with a CRY rotation from
 * each discarded qubit onto its kept partner; this is the deferred-measurement
 * equivalent of a measure-and-feed-forward pooling, so the `measurement`
 * flag only documents intent. Observables should be restricted to the active
 * qubits that remain after the final layer.
 */

#pragma once

#include <vector>

#include "circuit.hpp"
#include "observable.hpp"

namespace qmlkit {

class QcnnBuilder {
  public:
    QcnnBuilder(int n_qubits, int n_features)
        : n_features_(n_features), circuit_(n_qubits, n_features) {
        for (int q = 0; q < n_qubits; ++q) {
            active_.push_back(q);
        }
    }

    /// Shared-parameter convolution block on adjacent active pairs:
    /// Ry(a) x Ry(b), CX, Ry(c) x Ry(d) with (a, b, c, d) shared per layer.
    QcnnBuilder &convolution() {
        encode_features_once();
        if (active_.size() < 2) {
            return *this;
        }
        const int pa = circuit_.new_param();
        const int pb = circuit_.new_param();
        const int pc = circuit_.new_param();
        const int pd = circuit_.new_param();
        for (std::size_t i = 0; i + 1 < active_.size(); i += 2) {
            const int p = active_[i];
            const int q = active_[i + 1];
            circuit_.add_rotation(GateKind::RY, p, AngleExpr::param(pa));
            circuit_.add_rotation(GateKind::RY, q, AngleExpr::param(pb));
            circuit_.add(GateKind::CX, p, q);
            circuit_.add_rotation(GateKind::RY, p, AngleExpr::param(pc));
            circuit_.add_rotation(GateKind::RY, q, AngleExpr::param(pd));
        }
        return *this;
    }

    /// Halves the active set; each discarded qubit controls a CRY on its
    /// kept partner. The rotation parameter is shared within the layer.
    QcnnBuilder &pooling(bool measurement = true) {
        (void)measurement; // both variants map to the deferred controlled gate
        encode_features_once();
        if (active_.size() < 2) {
            throw Error("pooling requires at least two active qubits");
        }
        const int p = circuit_.new_param();
        std::vector<int> kept;
        std::size_t i = 0;
        for (; i + 1 < active_.size(); i += 2) {
            const int discarded = active_[i];
            const int keep = active_[i + 1];
            circuit_.add_controlled_rotation(GateKind::CRY, discarded, keep,
                                             AngleExpr::param(p));
            kept.push_back(keep);
        }
        if (i < active_.size()) {
            kept.push_back(active_[i]); // odd qubit stays active
        }
        active_ = std::move(kept);
        return *this;
    }

    /// Repeats convolution + pooling until a single active qubit remains.
    QcnnBuilder &repeat_layers() {
        while (active_.size() >= 2) {
            convolution();
            pooling();
        }
        return *this;
    }

    /// Entangling block over all active qubits followed by Rz/Ry rotations.
    QcnnBuilder &fully_connected() {
        encode_features_once();
        for (std::size_t i = 0; i + 1 < active_.size(); ++i) {
            circuit_.add(GateKind::CX, active_[i], active_[i + 1]);
        }
        for (const int q : active_) {
            circuit_.add_rotation(GateKind::RZ, q, AngleExpr::param(circuit_.new_param()));
            circuit_.add_rotation(GateKind::RY, q, AngleExpr::param(circuit_.new_param()));
        }
        return *this;
    }

    [[nodiscard]] const EncodingCircuit &circuit() const { return circuit_; }
    [[nodiscard]] const std::vector<int> &active_qubits() const { return active_; }

    /// Mean of Pauli-Z over the active qubits; output stays within [-1, 1].
    [[nodiscard]] PauliObservable default_observable() const {
        PauliObservable obs(circuit_.num_qubits());
        const double w = 1.0 / static_cast<double>(active_.size());
        for (const int q : active_) {
            obs.add_term({w, PauliString::single(circuit_.num_qubits(), q, Pauli::Z), false});
        }
        return obs;
    }

  private:
    // Ry(x) feature encoding, round-robin over qubits, before the first layer.
    void encode_features_once() {
        if (features_encoded_) {
            return;
        }
        features_encoded_ = true;
        if (n_features_ < 1) {
            return;
        }
        for (int q = 0; q < circuit_.num_qubits(); ++q) {
            circuit_.add_rotation(GateKind::RY, q, AngleExpr::feature(q % n_features_));
        }
    }

    int n_features_;
    EncodingCircuit circuit_;
    std::vector<int> active_;
    bool features_encoded_ = false;
};

} // namespace qmlkit
