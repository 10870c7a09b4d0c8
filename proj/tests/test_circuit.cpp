#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "qmlkit/circuit.hpp"
#include "qmlkit/circuit_library.hpp"
#include "qmlkit/qcnn.hpp"

using namespace qmlkit;
using Catch::Approx;

namespace {

int rotation_count(const EncodingCircuit &c) {
    int n = 0;
    for (const auto &g : c.gates()) {
        if (g.angle) {
            ++n;
        }
    }
    return n;
}

} // namespace

TEST_CASE("layered string expansion follows the documented rules", "[circuit]") {
    const auto c = layered_from_string("Ry(x)-Rz(x)-Rx(p)-cx", 4, 3, 2);
    CHECK(c.size() == 30); // (12 rotations + 3 CX) per layer
    CHECK(rotation_count(c) == 24);
    CHECK(c.num_params() == 8); // fresh parameter per Rx(p) gate
    for (int j = 0; j < 3; ++j) {
        CHECK(c.uses_feature(j));
    }
}

TEST_CASE("layered string edge cases", "[circuit]") {
    const auto id = layered_from_string("Ry(x)-cx", 3, 2, 0);
    CHECK(id.size() == 0);
    CHECK(id.num_params() == 0);

    CHECK_THROWS_WITH(layered_from_string("Rq(x)", 2, 1, 1),
                      Catch::Matchers::ContainsSubstring("Rq"));
    CHECK_THROWS_AS(layered_from_string("", 2, 1, 1), Error);
    CHECK_THROWS_AS(layered_from_string("Ry", 2, 1, 1), Error);
    CHECK_THROWS_AS(layered_from_string("cry(x)", 2, 1, 1), Error);

    // Controlled-rotation tokens expand into a parameterized chain.
    const auto cr = layered_from_string("Ry(x)-cry(p)", 3, 1, 1);
    CHECK(cr.num_params() == 2);
}

TEST_CASE("YzCx family layout", "[circuit]") {
    const auto c = build_family(CircuitFamily::YzCx, 5, 2, 2);
    CHECK(c.size() == 2 * (5 + 5 + 4));
    CHECK(c.num_params() == 20);
    CHECK(c.uses_feature(0));
    CHECK(c.uses_feature(1));
}

TEST_CASE("ChebyshevPQC family uses the arccos map on features", "[circuit]") {
    const auto c = build_family(CircuitFamily::ChebyshevPQC, 4, 1, 3);
    CHECK(c.num_params() == 36);
    for (const auto &g : c.gates()) {
        if (g.angle && g.angle->source == AngleSource::Feature) {
            CHECK(g.angle->map == AngleMap::ArcCos);
        }
    }
    // Domain violation surfaces at bind time, not build time.
    std::vector<double> theta(36, 0.1);
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(c.bind(bad, theta), DomainError);
    const std::vector<double> good{0.5};
    CHECK_NOTHROW(c.bind(good, theta));
}

TEST_CASE("HighDim covers every feature index", "[circuit]") {
    const auto c = build_family(CircuitFamily::HighDim, 4, 23, 2);
    for (int j = 0; j < 23; ++j) {
        CHECK(c.uses_feature(j));
    }
    CHECK(c.num_params() == 0);
}

TEST_CASE("round-robin coverage holds whenever slots suffice", "[circuit]") {
    for (int d = 1; d <= 6; ++d) {
        const auto c = layered_from_string("Ry(x)-Rz(x)-cx", 3, d, 1);
        if (c.feature_gate_count() >= d) {
            for (int j = 0; j < d; ++j) {
                CHECK(c.uses_feature(j));
            }
        }
    }
}

TEST_CASE("binding is deterministic and validates dimensions", "[circuit]") {
    const auto c = build_family(CircuitFamily::YzCx, 3, 2, 1);
    std::vector<double> x{0.3, -0.4};
    std::vector<double> theta(static_cast<std::size_t>(c.num_params()), 0.7);
    const auto p1 = c.bind(x, theta);
    const auto p2 = c.bind(x, theta);
    CHECK(p1.key() == p2.key());

    // Stale theta length fails loudly after a rebuild with more layers.
    const auto larger = build_family(CircuitFamily::YzCx, 3, 2, 2);
    CHECK_THROWS_AS(larger.bind(x, theta), Error);
    CHECK_THROWS_AS(c.bind(std::vector<double>{0.1}, theta), Error);
}

TEST_CASE("controlled-rotation expansion matches the direct gate", "[circuit]") {
    for (const GateKind kind : {GateKind::CRX, GateKind::CRY, GateKind::CRZ}) {
        EncodingCircuit c(2, 0);
        const int p = c.new_param();
        c.add_controlled_rotation(kind, 0, 1, AngleExpr::param(p));
        const std::vector<double> theta{0.83};
        const auto program = c.bind({}, theta);
        for (const auto &g : program.gates) {
            CHECK(g.kind != kind); // expanded away
        }
        // Compare against the native controlled rotation on a random state.
        StateVector direct(2);
        direct.apply(Gate(GateKind::H, 0));
        direct.apply(Gate(GateKind::RY, 1, 0.4));
        StateVector expanded = direct;
        direct.apply(Gate(kind, 0, 1, 0.83));
        expanded.apply_all(program.gates);
        for (std::size_t i = 0; i < direct.size(); ++i) {
            CHECK(std::abs(direct.amplitude(i) - expanded.amplitude(i)) < 1e-12);
        }
    }
}

TEST_CASE("angle expressions differentiate their maps", "[circuit]") {
    // value = scale * theta[sp] * map(theta[i])
    AngleExpr e = AngleExpr::param(0, AngleMap::Square, 2.0);
    e.scale_param = 1;
    const std::vector<double> x{};
    const std::vector<double> theta{0.3, -1.2};
    const double h = 1e-6;

    const auto value_at = [&](double t0, double t1) { return 2.0 * t1 * (t0 * t0); };
    CHECK(e.value(x, theta) == Approx(value_at(0.3, -1.2)));
    const double d0 = e.d1(x, theta, CircuitVar::param(0));
    CHECK(d0 ==
          Approx((value_at(0.3 + h, -1.2) - value_at(0.3 - h, -1.2)) / (2 * h)).margin(1e-6));
    const double d1v = e.d1(x, theta, CircuitVar::param(1));
    CHECK(d1v == Approx(2.0 * 0.09));
    const double d01 = e.d2(x, theta, CircuitVar::param(0), CircuitVar::param(1));
    CHECK(d01 == Approx(2.0 * 2.0 * 0.3));
    const double d00 = e.d2(x, theta, CircuitVar::param(0), CircuitVar::param(0));
    CHECK(d00 == Approx(2.0 * -1.2 * 2.0));

    AngleExpr acos_expr = AngleExpr::feature(0, AngleMap::ArcCos);
    const std::vector<double> xf{0.4};
    CHECK(acos_expr.value(xf, {}) == Approx(std::acos(0.4)));
    CHECK(acos_expr.d1(xf, {}, CircuitVar::feature(0)) ==
          Approx(-1.0 / std::sqrt(1.0 - 0.16)));
}

TEST_CASE("circuit text serialization round-trips", "[circuit]") {
    const auto c = build_family(CircuitFamily::ChebyshevPQC, 3, 1, 2);
    const auto text = c.to_text();
    const auto back = EncodingCircuit::from_text(text);
    CHECK(back.num_qubits() == c.num_qubits());
    CHECK(back.num_features() == c.num_features());
    CHECK(back.num_params() == c.num_params());
    CHECK(back.to_text() == text);

    std::vector<double> x{0.2};
    std::vector<double> theta(static_cast<std::size_t>(c.num_params()), 0.4);
    CHECK(back.bind(x, theta).key() == c.bind(x, theta).key());
}

TEST_CASE("pretty printer emits a lane per qubit", "[circuit]") {
    const auto c = layered_from_string("Ry(x)-cx", 3, 2, 1);
    const auto diagram = c.pretty();
    CHECK(diagram.find("q0:") != std::string::npos);
    CHECK(diagram.find("q2:") != std::string::npos);
    CHECK(diagram.find("RY(x0)") != std::string::npos);
}

TEST_CASE("non-rotation gates refuse angle expressions", "[circuit]") {
    EncodingCircuit c(2, 1);
    CHECK_THROWS_AS(c.add(GateKind::RY, 0), Error);
    CHECK_THROWS_AS(c.add_rotation(GateKind::H, 0, AngleExpr::feature(0)), Error);
    CHECK_THROWS_AS(c.add_rotation(GateKind::RY, 0, AngleExpr::param(3)), Error);
}

TEST_CASE("QCNN pooling halves the active set", "[qcnn]") {
    QcnnBuilder builder(4, 2);
    builder.convolution().pooling();
    CHECK(builder.active_qubits().size() == 2);
    builder.convolution().pooling();
    CHECK(builder.active_qubits().size() == 1);
    CHECK_THROWS_AS(builder.pooling(), Error);
}

TEST_CASE("QCNN repeat_layers pools down to one qubit", "[qcnn]") {
    QcnnBuilder builder(8, 2);
    builder.convolution().pooling().repeat_layers();
    CHECK(builder.active_qubits().size() == 1);

    // Three pooling stages for 8 qubits; parameters grow with the layer
    // count, not the qubit count: 4 (conv) + 1 (pool) per stage.
    CHECK(builder.circuit().num_params() == 3 * 5);

    builder.fully_connected();
    CHECK(builder.circuit().num_params() == 3 * 5 + 2);
}

TEST_CASE("QCNN observable is restricted to kept qubits", "[qcnn]") {
    QcnnBuilder builder(4, 2);
    builder.convolution().pooling();
    const auto obs = builder.default_observable();
    const auto active = builder.active_qubits();
    const std::set<int> kept(active.begin(), active.end());
    for (const auto &term : obs.terms()) {
        for (int q = 0; q < 4; ++q) {
            if (term.string.letters[static_cast<std::size_t>(q)] != Pauli::I) {
                CHECK(kept.contains(q));
            }
        }
    }
}

TEST_CASE("QCNN bound programs contain no controlled rotations", "[qcnn]") {
    QcnnBuilder builder(4, 2);
    builder.convolution().pooling(true).repeat_layers().fully_connected();
    const auto &c = builder.circuit();
    std::vector<double> x{0.4, -0.2};
    std::vector<double> theta(static_cast<std::size_t>(c.num_params()), 0.3);
    const auto program = c.bind(x, theta);
    for (const auto &g : program.gates) {
        CHECK(g.kind != GateKind::CRY);
        CHECK(g.kind != GateKind::CRX);
        CHECK(g.kind != GateKind::CRZ);
    }
}
