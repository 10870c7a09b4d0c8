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
 * Parameterized encoding-circuit representation.
 *
 * An EncodingCircuit is an ordered gate program whose rotation angles are
 * expressions over a feature vector x and a parameter vector theta. Binding
 * concrete (x, theta) yields a BoundProgram of plain gates; controlled
 * rotations are expanded into {CX, R} sequences during binding so that every
 * bound parameterized angle sits in a plain single-qubit rotation. This keeps
 * the two-term parameter-shift rule valid for every occurrence.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "state.hpp"

namespace qmlkit {

enum class AngleSource { Constant, Feature, Param };
enum class AngleMap { Identity, ArcCos, ArcTan, Square };

/// Differentiation target of a circuit-level derivative.
struct CircuitVar {
    enum class Kind { Param, Feature };
    Kind kind = Kind::Param;
    int index = 0;

    static CircuitVar param(int i) { return {Kind::Param, i}; }
    static CircuitVar feature(int j) { return {Kind::Feature, j}; }
};

/**
 * @brief Angle expression: scale * theta[scale_param] * map(source).
 *
 * The optional scale_param multiplies the mapped value, which is how layouts
 * like "Ry(theta * x)" are expressed. `map` is one of the four supported
 * nonlinear input maps; ArcCos requires |source| <= 1 at binding time.
 */
struct AngleExpr {
    AngleSource source = AngleSource::Constant;
    int index = -1;          // feature or parameter index, per `source`
    AngleMap map = AngleMap::Identity;
    double scale = 1.0;
    int scale_param = -1;    // optional parameter index multiplying map(source)
    double const_value = 1.0; // source value when `source` is Constant

    static AngleExpr constant(double value) {
        AngleExpr e;
        e.source = AngleSource::Constant;
        e.const_value = value;
        return e;
    }

    static AngleExpr feature(int j, AngleMap m = AngleMap::Identity, double s = 1.0,
                             int sp = -1) {
        AngleExpr e;
        e.source = AngleSource::Feature;
        e.index = j;
        e.map = m;
        e.scale = s;
        e.scale_param = sp;
        return e;
    }

    static AngleExpr param(int i, AngleMap m = AngleMap::Identity, double s = 1.0) {
        AngleExpr e;
        e.source = AngleSource::Param;
        e.index = i;
        e.map = m;
        e.scale = s;
        return e;
    }

    [[nodiscard]] double source_value(std::span<const double> x,
                                      std::span<const double> theta) const {
        switch (source) {
        case AngleSource::Constant:
            return const_value;
        case AngleSource::Feature:
            return x[static_cast<std::size_t>(index)];
        case AngleSource::Param:
            return theta[static_cast<std::size_t>(index)];
        }
        return 0.0;
    }

    [[nodiscard]] double value(std::span<const double> x,
                               std::span<const double> theta) const {
        const double v = source_value(x, theta);
        const double sp = scale_param >= 0 ? theta[static_cast<std::size_t>(scale_param)] : 1.0;
        return scale * sp * map_value(v);
    }

    /// First derivative of the angle with respect to a circuit variable.
    [[nodiscard]] double d1(std::span<const double> x, std::span<const double> theta,
                            CircuitVar var) const {
        const double v = source_value(x, theta);
        const double sp = scale_param >= 0 ? theta[static_cast<std::size_t>(scale_param)] : 1.0;
        const double dv = source_select(var);
        const double dsp =
            (var.kind == CircuitVar::Kind::Param && scale_param == var.index) ? 1.0 : 0.0;
        return scale * (dsp * map_value(v) + sp * map_d1(v) * dv);
    }

    /// Second derivative with respect to two circuit variables.
    [[nodiscard]] double d2(std::span<const double> x, std::span<const double> theta,
                            CircuitVar a, CircuitVar b) const {
        const double v = source_value(x, theta);
        const double sp = scale_param >= 0 ? theta[static_cast<std::size_t>(scale_param)] : 1.0;
        const double dva = source_select(a);
        const double dvb = source_select(b);
        const double dspa =
            (a.kind == CircuitVar::Kind::Param && scale_param == a.index) ? 1.0 : 0.0;
        const double dspb =
            (b.kind == CircuitVar::Kind::Param && scale_param == b.index) ? 1.0 : 0.0;
        return scale * (dspa * map_d1(v) * dvb + dspb * map_d1(v) * dva +
                        sp * map_d2(v) * dva * dvb);
    }

    [[nodiscard]] bool depends_on(CircuitVar var) const {
        if (var.kind == CircuitVar::Kind::Param) {
            return (source == AngleSource::Param && index == var.index) ||
                   scale_param == var.index;
        }
        return source == AngleSource::Feature && index == var.index;
    }

    [[nodiscard]] bool depends_on_any_param() const {
        return source == AngleSource::Param || scale_param >= 0;
    }

    [[nodiscard]] std::string str() const {
        std::ostringstream os;
        char buf[40];
        if (scale != 1.0) {
            std::snprintf(buf, sizeof(buf), "%g*", scale);
            os << buf;
        }
        if (scale_param >= 0) {
            os << "p" << scale_param << "*";
        }
        std::string inner;
        switch (source) {
        case AngleSource::Constant: {
            std::snprintf(buf, sizeof(buf), "%g", const_value);
            inner = buf;
            break;
        }
        case AngleSource::Feature:
            inner = "x" + std::to_string(index);
            break;
        case AngleSource::Param:
            inner = "p" + std::to_string(index);
            break;
        }
        switch (map) {
        case AngleMap::Identity:
            os << inner;
            break;
        case AngleMap::ArcCos:
            os << "acos(" << inner << ")";
            break;
        case AngleMap::ArcTan:
            os << "atan(" << inner << ")";
            break;
        case AngleMap::Square:
            os << inner << "^2";
            break;
        }
        return os.str();
    }

  private:
    [[nodiscard]] double source_select(CircuitVar var) const {
        if (var.kind == CircuitVar::Kind::Param) {
            return (source == AngleSource::Param && index == var.index) ? 1.0 : 0.0;
        }
        return (source == AngleSource::Feature && index == var.index) ? 1.0 : 0.0;
    }

    [[nodiscard]] double map_value(double v) const {
        switch (map) {
        case AngleMap::Identity:
            return v;
        case AngleMap::ArcCos:
            check_acos_domain(v);
            return std::acos(v);
        case AngleMap::ArcTan:
            return std::atan(v);
        case AngleMap::Square:
            return v * v;
        }
        return v;
    }

    [[nodiscard]] double map_d1(double v) const {
        switch (map) {
        case AngleMap::Identity:
            return 1.0;
        case AngleMap::ArcCos:
            check_acos_domain(v);
            return -1.0 / std::sqrt(1.0 - v * v);
        case AngleMap::ArcTan:
            return 1.0 / (1.0 + v * v);
        case AngleMap::Square:
            return 2.0 * v;
        }
        return 1.0;
    }

    [[nodiscard]] double map_d2(double v) const {
        switch (map) {
        case AngleMap::Identity:
            return 0.0;
        case AngleMap::ArcCos: {
            check_acos_domain(v);
            const double w = 1.0 - v * v;
            return -v / (w * std::sqrt(w));
        }
        case AngleMap::ArcTan: {
            const double w = 1.0 + v * v;
            return -2.0 * v / (w * w);
        }
        case AngleMap::Square:
            return 2.0;
        }
        return 0.0;
    }

    static void check_acos_domain(double v) {
        if (v < -1.0 || v > 1.0) {
            throw DomainError("arccos input " + std::to_string(v) + " outside [-1, 1]");
        }
    }
};

/// One gate of an encoding circuit; rotations carry an angle expression.
struct CircuitGate {
    GateKind kind;
    int q0 = 0;
    int q1 = -1;
    std::optional<AngleExpr> angle{};
};

/// Back-reference from a bound gate to the circuit gate it derives from.
/// The bound angle equals sub_scale * expr_value(circuit_gate).
struct BindInfo {
    int circuit_gate = -1;
    double sub_scale = 1.0;
};

/// Concrete gate program produced by binding an encoding circuit.
struct BoundProgram {
    int n_qubits = 0;
    std::vector<Gate> gates;
    std::vector<BindInfo> info;

    /// Canonical content key; identical programs serialize identically.
    [[nodiscard]] std::string key() const {
        std::string k = "n" + std::to_string(n_qubits) + ";";
        char buf[48];
        for (const auto &g : gates) {
            k += gate_name(g.kind);
            k += ',';
            k += std::to_string(g.q0);
            k += ',';
            k += std::to_string(g.q1);
            if (g.angle) {
                std::snprintf(buf, sizeof(buf), ",%.17g", *g.angle);
                k += buf;
            }
            k += ';';
        }
        return k;
    }
};

/**
 * @brief Ordered gate program over n qubits with feature/parameter angle
 * expressions. Immutable once built; binding never mutates.
 */
class EncodingCircuit {
  public:
    EncodingCircuit() = default;

    EncodingCircuit(int n_qubits, int n_features)
        : n_qubits_(n_qubits), n_features_(n_features) {
        if (n_qubits < 1) {
            throw Error("encoding circuit requires at least one qubit");
        }
        if (n_features < 0) {
            throw Error("negative feature count");
        }
    }

    [[nodiscard]] int num_qubits() const { return n_qubits_; }
    [[nodiscard]] int num_features() const { return n_features_; }
    [[nodiscard]] int num_params() const { return n_params_; }
    [[nodiscard]] const std::vector<CircuitGate> &gates() const { return gates_; }
    [[nodiscard]] std::size_t size() const { return gates_.size(); }

    /// Allocates a fresh trainable parameter and returns its index.
    int new_param() { return n_params_++; }

    void add(GateKind kind, int q0, int q1 = -1) {
        if (is_rotation(kind)) {
            throw Error("rotation gates need an angle expression");
        }
        validate_targets(kind, q0, q1);
        gates_.push_back({kind, q0, q1, std::nullopt});
    }

    void add_rotation(GateKind kind, int q0, AngleExpr expr) {
        if (!is_rotation(kind) || is_two_qubit(kind)) {
            throw Error("add_rotation expects a single-qubit rotation kind");
        }
        validate_targets(kind, q0, -1);
        validate_expr(expr);
        gates_.push_back({kind, q0, -1, expr});
    }

    void add_controlled_rotation(GateKind kind, int control, int target, AngleExpr expr) {
        if (kind != GateKind::CRX && kind != GateKind::CRY && kind != GateKind::CRZ) {
            throw Error("add_controlled_rotation expects CRX/CRY/CRZ");
        }
        validate_targets(kind, control, target);
        validate_expr(expr);
        gates_.push_back({kind, control, target, expr});
    }

    /**
     * @brief Bind features and parameters to a concrete gate program.
     *
     * Controlled rotations are expanded into {CX, R(+-angle/2)} sequences;
     * the BindInfo entries keep the mapping back to circuit gates so the
     * differentiation engine can attach chain factors per occurrence.
     */
    [[nodiscard]] BoundProgram bind(std::span<const double> x,
                                    std::span<const double> theta) const {
        if (static_cast<int>(x.size()) != n_features_) {
            throw Error("feature vector length " + std::to_string(x.size()) +
                        " does not match circuit features " + std::to_string(n_features_));
        }
        if (static_cast<int>(theta.size()) != n_params_) {
            throw Error("parameter vector length " + std::to_string(theta.size()) +
                        " does not match circuit parameters " + std::to_string(n_params_));
        }
        BoundProgram p;
        p.n_qubits = n_qubits_;
        for (std::size_t g = 0; g < gates_.size(); ++g) {
            const auto &cg = gates_[g];
            const int gi = static_cast<int>(g);
            if (!cg.angle) {
                p.gates.emplace_back(cg.kind, cg.q0, cg.q1);
                p.info.push_back({-1, 1.0});
                continue;
            }
            const double a = cg.angle->value(x, theta);
            switch (cg.kind) {
            case GateKind::RX:
            case GateKind::RY:
            case GateKind::RZ:
                p.gates.emplace_back(cg.kind, cg.q0, a);
                p.info.push_back({gi, 1.0});
                break;
            case GateKind::CRY:
            case GateKind::CRZ: {
                const GateKind rk = cg.kind == GateKind::CRY ? GateKind::RY : GateKind::RZ;
                p.gates.emplace_back(GateKind::CX, cg.q0, cg.q1);
                p.info.push_back({-1, 1.0});
                p.gates.emplace_back(rk, cg.q1, -0.5 * a);
                p.info.push_back({gi, -0.5});
                p.gates.emplace_back(GateKind::CX, cg.q0, cg.q1);
                p.info.push_back({-1, 1.0});
                p.gates.emplace_back(rk, cg.q1, 0.5 * a);
                p.info.push_back({gi, 0.5});
                break;
            }
            case GateKind::CRX:
                p.gates.emplace_back(GateKind::H, cg.q1);
                p.info.push_back({-1, 1.0});
                p.gates.emplace_back(GateKind::CX, cg.q0, cg.q1);
                p.info.push_back({-1, 1.0});
                p.gates.emplace_back(GateKind::RZ, cg.q1, -0.5 * a);
                p.info.push_back({gi, -0.5});
                p.gates.emplace_back(GateKind::CX, cg.q0, cg.q1);
                p.info.push_back({-1, 1.0});
                p.gates.emplace_back(GateKind::RZ, cg.q1, 0.5 * a);
                p.info.push_back({gi, 0.5});
                p.gates.emplace_back(GateKind::H, cg.q1);
                p.info.push_back({-1, 1.0});
                break;
            default:
                throw Error("angle expression on a non-rotation gate");
            }
        }
        return p;
    }

    /// Occurrence list of a circuit variable: (bound gate index, chain factor).
    [[nodiscard]] std::vector<std::pair<int, double>>
    occurrences(const BoundProgram &p, std::span<const double> x,
                std::span<const double> theta, CircuitVar var) const {
        std::vector<std::pair<int, double>> occ;
        for (std::size_t b = 0; b < p.gates.size(); ++b) {
            const auto &bi = p.info[b];
            if (bi.circuit_gate < 0) {
                continue;
            }
            const auto &expr = *gates_[static_cast<std::size_t>(bi.circuit_gate)].angle;
            if (!expr.depends_on(var)) {
                continue;
            }
            const double chain = bi.sub_scale * expr.d1(x, theta, var);
            occ.emplace_back(static_cast<int>(b), chain);
        }
        return occ;
    }

    /// Feature-coverage helper: true if feature j is bound by some gate.
    [[nodiscard]] bool uses_feature(int j) const {
        for (const auto &g : gates_) {
            if (g.angle && g.angle->source == AngleSource::Feature && g.angle->index == j) {
                return true;
            }
        }
        return false;
    }

    /// Number of gates whose angle consumes a feature.
    [[nodiscard]] int feature_gate_count() const {
        int n = 0;
        for (const auto &g : gates_) {
            if (g.angle && g.angle->source == AngleSource::Feature) {
                ++n;
            }
        }
        return n;
    }

    [[nodiscard]] std::string to_text() const {
        std::ostringstream os;
        os << "circuit v1\n";
        os << n_qubits_ << " " << n_features_ << " " << n_params_ << " " << gates_.size()
           << "\n";
        char buf[48];
        for (const auto &g : gates_) {
            os << gate_name(g.kind) << " " << g.q0 << " " << g.q1;
            if (g.angle) {
                const auto &e = *g.angle;
                os << " " << source_tag(e.source) << " " << e.index << " " << map_tag(e.map);
                std::snprintf(buf, sizeof(buf), " %.17g", e.scale);
                os << buf << " " << e.scale_param;
                std::snprintf(buf, sizeof(buf), " %.17g", e.const_value);
                os << buf;
            }
            os << "\n";
        }
        return os.str();
    }

    static EncodingCircuit from_text(std::istream &in) {
        std::string header;
        std::getline(in, header);
        if (header != "circuit v1") {
            throw Error("unrecognized circuit header: " + header);
        }
        int n_qubits = 0;
        int n_features = 0;
        int n_params = 0;
        std::size_t n_gates = 0;
        in >> n_qubits >> n_features >> n_params >> n_gates;
        EncodingCircuit c(n_qubits, n_features);
        c.n_params_ = n_params;
        for (std::size_t g = 0; g < n_gates; ++g) {
            std::string kind;
            int q0 = 0;
            int q1 = -1;
            in >> kind >> q0 >> q1;
            const GateKind gk = parse_gate_kind(kind);
            if (is_rotation(gk)) {
                std::string src;
                std::string map;
                AngleExpr e;
                in >> src >> e.index >> map >> e.scale >> e.scale_param >> e.const_value;
                e.source = parse_source(src);
                e.map = parse_map(map);
                c.gates_.push_back({gk, q0, q1, e});
            } else {
                c.gates_.push_back({gk, q0, q1, std::nullopt});
            }
        }
        return c;
    }

    static EncodingCircuit from_text(const std::string &text) {
        std::istringstream is(text);
        return from_text(is);
    }

    /// Text diagram with one lane per qubit; for docs and tests.
    [[nodiscard]] std::string pretty() const {
        std::vector<std::vector<std::string>> cells(
            static_cast<std::size_t>(n_qubits_));
        for (const auto &g : gates_) {
            std::vector<std::string> column(static_cast<std::size_t>(n_qubits_));
            std::string label = gate_name(g.kind);
            if (g.angle) {
                label += "(" + g.angle->str() + ")";
            }
            if (is_two_qubit(g.kind)) {
                if (g.kind == GateKind::SWAP) {
                    column[static_cast<std::size_t>(g.q0)] = "x";
                    column[static_cast<std::size_t>(g.q1)] = "x";
                } else {
                    column[static_cast<std::size_t>(g.q0)] = "*";
                    column[static_cast<std::size_t>(g.q1)] =
                        g.kind == GateKind::CX ? "+" : label;
                }
            } else {
                column[static_cast<std::size_t>(g.q0)] = label;
            }
            std::size_t width = 1;
            for (const auto &cell : column) {
                width = std::max(width, cell.size());
            }
            for (int q = 0; q < n_qubits_; ++q) {
                std::string cell = column[static_cast<std::size_t>(q)];
                if (cell.empty()) {
                    cell = "-";
                }
                cell.resize(width, '-');
                cells[static_cast<std::size_t>(q)].push_back(cell);
            }
        }
        std::ostringstream os;
        for (int q = n_qubits_ - 1; q >= 0; --q) {
            os << "q" << q << ": ";
            for (const auto &cell : cells[static_cast<std::size_t>(q)]) {
                os << "-" << cell;
            }
            os << "-\n";
        }
        return os.str();
    }

  private:
    void validate_targets(GateKind kind, int q0, int q1) const {
        if (q0 < 0 || q0 >= n_qubits_) {
            throw Error("gate qubit out of range");
        }
        if (is_two_qubit(kind)) {
            if (q1 < 0 || q1 >= n_qubits_ || q1 == q0) {
                throw Error("invalid two-qubit gate targets");
            }
        }
    }

    void validate_expr(const AngleExpr &e) const {
        if (e.source == AngleSource::Feature && (e.index < 0 || e.index >= n_features_)) {
            throw Error("feature index out of range in angle expression");
        }
        if (e.source == AngleSource::Param && (e.index < 0 || e.index >= n_params_)) {
            throw Error("parameter index out of range in angle expression");
        }
        if (e.scale_param >= n_params_) {
            throw Error("scale parameter index out of range in angle expression");
        }
    }

    static const char *source_tag(AngleSource s) {
        switch (s) {
        case AngleSource::Constant:
            return "C";
        case AngleSource::Feature:
            return "F";
        case AngleSource::Param:
            return "P";
        }
        return "?";
    }

    static const char *map_tag(AngleMap m) {
        switch (m) {
        case AngleMap::Identity:
            return "ID";
        case AngleMap::ArcCos:
            return "ACOS";
        case AngleMap::ArcTan:
            return "ATAN";
        case AngleMap::Square:
            return "SQ";
        }
        return "?";
    }

    static AngleSource parse_source(const std::string &s) {
        if (s == "C") {
            return AngleSource::Constant;
        }
        if (s == "F") {
            return AngleSource::Feature;
        }
        if (s == "P") {
            return AngleSource::Param;
        }
        throw Error("bad angle source tag: " + s);
    }

    static AngleMap parse_map(const std::string &s) {
        if (s == "ID") {
            return AngleMap::Identity;
        }
        if (s == "ACOS") {
            return AngleMap::ArcCos;
        }
        if (s == "ATAN") {
            return AngleMap::ArcTan;
        }
        if (s == "SQ") {
            return AngleMap::Square;
        }
        throw Error("bad angle map tag: " + s);
    }

    static GateKind parse_gate_kind(const std::string &s) {
        static const std::pair<const char *, GateKind> table[] = {
            {"RX", GateKind::RX},   {"RY", GateKind::RY},   {"RZ", GateKind::RZ},
            {"H", GateKind::H},     {"X", GateKind::X},     {"Y", GateKind::Y},
            {"Z", GateKind::Z},     {"CX", GateKind::CX},   {"CZ", GateKind::CZ},
            {"CRX", GateKind::CRX}, {"CRY", GateKind::CRY}, {"CRZ", GateKind::CRZ},
            {"SWAP", GateKind::SWAP}};
        for (const auto &[name, kind] : table) {
            if (s == name) {
                return kind;
            }
        }
        throw Error("unknown gate kind: " + s);
    }

    int n_qubits_ = 1;
    int n_features_ = 0;
    int n_params_ = 0;
    std::vector<CircuitGate> gates_;
};

/// Reverses a bound program: gates in reverse order, angles negated.
inline BoundProgram inverse_program(const BoundProgram &p) {
    BoundProgram inv;
    inv.n_qubits = p.n_qubits;
    inv.gates.reserve(p.gates.size());
    inv.info.reserve(p.info.size());
    for (std::size_t i = p.gates.size(); i-- > 0;) {
        inv.gates.push_back(p.gates[i].inverse());
        BindInfo bi = p.info[i];
        bi.sub_scale = -bi.sub_scale;
        inv.info.push_back(bi);
    }
    return inv;
}

/// Runs a bound program on |0...0> and returns the final state.
inline StateVector simulate(const BoundProgram &p) {
    StateVector psi(p.n_qubits);
    psi.apply_all(p.gates);
    return psi;
}

} // namespace qmlkit
