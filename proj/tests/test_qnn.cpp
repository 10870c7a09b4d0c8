#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "qmlkit/circuit_library.hpp"
#include "qmlkit/executor.hpp"
#include "qmlkit/qnn.hpp"

using namespace qmlkit;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

QnnModel ry_model() {
    EncodingCircuit c(1, 1);
    c.add_rotation(GateKind::RY, 0, AngleExpr::feature(0));
    return QnnModel(std::move(c), PauliObservable::parse("Z", 1));
}

QnnModel ry_param_model() {
    EncodingCircuit c(1, 0);
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param()));
    return QnnModel(std::move(c), PauliObservable::parse("Z", 1));
}

// Random layered circuits exercising shared parameters and nonlinear maps;
// used by the finite-difference gradient checks.
struct RandomModel {
    EncodingCircuit circuit;
    std::vector<double> x;
    std::vector<double> theta;
};

RandomModel random_model(std::uint64_t seed) {
    Rng rng(derive_seed(909, {seed}));
    const int n_qubits = 2 + static_cast<int>(rng.next_below(3));
    const int n_features = 1 + static_cast<int>(rng.next_below(2));
    EncodingCircuit c(n_qubits, n_features);
    const int n_params = 3 + static_cast<int>(rng.next_below(4));
    for (int i = 0; i < n_params; ++i) {
        c.new_param();
    }
    const int n_gates = 6 + static_cast<int>(rng.next_below(6));
    for (int g = 0; g < n_gates; ++g) {
        const int q = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_qubits)));
        const int choice = static_cast<int>(rng.next_below(5));
        if (choice == 0 && n_qubits > 1) {
            c.add(GateKind::CX, q, (q + 1) % n_qubits);
            continue;
        }
        const GateKind kind = choice == 1   ? GateKind::RX
                              : choice == 2 ? GateKind::RZ
                                            : GateKind::RY;
        AngleExpr expr;
        switch (rng.next_below(4)) {
        case 0:
            expr = AngleExpr::param(static_cast<int>(rng.next_below(n_params)));
            break;
        case 1:
            expr = AngleExpr::param(static_cast<int>(rng.next_below(n_params)),
                                    AngleMap::Square);
            break;
        case 2:
            expr = AngleExpr::feature(static_cast<int>(rng.next_below(n_features)),
                                      AngleMap::ArcCos, 1.0,
                                      static_cast<int>(rng.next_below(n_params)));
            break;
        default:
            expr = AngleExpr::feature(static_cast<int>(rng.next_below(n_features)),
                                      AngleMap::Identity, 1.0,
                                      static_cast<int>(rng.next_below(n_params)));
            break;
        }
        c.add_rotation(kind, q, expr);
    }
    RandomModel m{std::move(c), {}, {}};
    for (int j = 0; j < n_features; ++j) {
        m.x.push_back(rng.uniform(-0.8, 0.8));
    }
    for (int i = 0; i < n_params; ++i) {
        m.theta.push_back(rng.uniform(-1.2, 1.2));
    }
    return m;
}

double fd_param_derivative(const QnnModel &model, const std::vector<double> &x, int param,
                           Executor &exec, double h = 1e-5) {
    QnnModel copy = model;
    auto theta = model.theta();
    theta[static_cast<std::size_t>(param)] += h;
    copy.set_theta(theta);
    const double up = copy.evaluate(x, exec)[0];
    theta[static_cast<std::size_t>(param)] -= 2 * h;
    copy.set_theta(theta);
    const double down = copy.evaluate(x, exec)[0];
    return (up - down) / (2 * h);
}

} // namespace

TEST_CASE("QNN evaluation of a single-qubit feature circuit", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_model();
    CHECK(model.evaluate(std::vector<double>{0.0}, exec)[0] == Approx(1.0));
    CHECK(model.evaluate(std::vector<double>{pi / 2}, exec)[0] == Approx(0.0).margin(1e-12));
}

TEST_CASE("multi-output evaluation equals per-observable evaluation", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    EncodingCircuit c(1, 1);
    c.add_rotation(GateKind::RY, 0, AngleExpr::feature(0));
    QnnModel both(c, {PauliObservable::parse("Z", 1), PauliObservable::parse("X", 1)});
    const auto v = both.evaluate(std::vector<double>{pi / 2}, exec);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == Approx(0.0).margin(1e-12));
    CHECK(v[1] == Approx(1.0));

    QnnModel only_z(c, PauliObservable::parse("Z", 1));
    QnnModel only_x(c, PauliObservable::parse("X", 1));
    CHECK(v[0] == only_z.evaluate(std::vector<double>{pi / 2}, exec)[0]);
    CHECK(v[1] == only_x.evaluate(std::vector<double>{pi / 2}, exec)[0]);
}

TEST_CASE("parameter-shift derivative of cos(theta)", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_param_model();
    model.set_theta(std::vector<double>{pi / 2});
    const DiffVar var = DiffVar::param(0);
    const auto d = model.derivative({}, std::span<const DiffVar>(&var, 1), exec);
    CHECK(d[0] == Approx(-1.0).margin(1e-12));
}

TEST_CASE("shared parameters sum over occurrences", "[qnn]") {
    // Two sequential Ry(theta): f = cos(2 theta), df = -2 sin(2 theta).
    EncodingCircuit c(1, 0);
    const int p = c.new_param();
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(p));
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(p));
    QnnModel model(std::move(c), PauliObservable::parse("Z", 1));
    model.set_theta(std::vector<double>{0.37});
    Executor exec(ExecutionPlan::exact(0));
    CHECK(model.evaluate({}, exec)[0] == Approx(std::cos(2 * 0.37)));
    const DiffVar var = DiffVar::param(0);
    const auto d = model.derivative({}, std::span<const DiffVar>(&var, 1), exec);
    CHECK(d[0] == Approx(-2.0 * std::sin(2 * 0.37)).margin(1e-12));
}

TEST_CASE("second derivative of cos(theta) at zero", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_param_model();
    model.set_theta(std::vector<double>{0.0});
    const DiffVar vars[2] = {DiffVar::param(0), DiffVar::param(0)};
    const auto d2 = model.derivative({}, vars, exec);
    CHECK(d2[0] == Approx(-1.0).margin(1e-12));
}

TEST_CASE("square-map chain factor vanishes at zero", "[qnn]") {
    EncodingCircuit c(1, 0);
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param(), AngleMap::Square));
    QnnModel model(std::move(c), PauliObservable::parse("Z", 1));
    model.set_theta(std::vector<double>{0.0});
    Executor exec(ExecutionPlan::exact(0));
    const DiffVar var = DiffVar::param(0);
    CHECK(model.derivative({}, std::span<const DiffVar>(&var, 1), exec)[0] ==
          Approx(0.0).margin(1e-14));
}

TEST_CASE("feature derivatives use the same shift machinery", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_model();
    const std::vector<double> x{0.9};
    const DiffVar var = DiffVar::feature(0);
    const auto d = model.derivative(x, std::span<const DiffVar>(&var, 1), exec);
    CHECK(d[0] == Approx(-std::sin(0.9)).margin(1e-12));
}

TEST_CASE("observable-coefficient derivatives are term expectations", "[qnn]") {
    EncodingCircuit c(1, 0);
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param()));
    QnnModel model(std::move(c), PauliObservable::summed_paulis(1));
    model.set_theta(std::vector<double>{0.6});
    Executor exec(ExecutionPlan::exact(0));

    const DiffVar offset = DiffVar::obs_coeff(0);
    CHECK(model.derivative({}, std::span<const DiffVar>(&offset, 1), exec)[0] ==
          Approx(1.0));
    const DiffVar weight = DiffVar::obs_coeff(1);
    CHECK(model.derivative({}, std::span<const DiffVar>(&weight, 1), exec)[0] ==
          Approx(std::cos(0.6)));

    // Mixed theta/coefficient second derivative: d/dtheta <Z> = -sin(theta).
    const DiffVar mixed[2] = {DiffVar::param(0), DiffVar::obs_coeff(1)};
    CHECK(model.derivative({}, mixed, exec)[0] == Approx(-std::sin(0.6)).margin(1e-12));

    const DiffVar cc[2] = {DiffVar::obs_coeff(0), DiffVar::obs_coeff(1)};
    CHECK(model.derivative({}, cc, exec)[0] == 0.0);
}

TEST_CASE("parameter shift matches finite differences on random circuits", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto rm = random_model(seed);
        QnnModel model(rm.circuit, PauliObservable::summed_paulis(rm.circuit.num_qubits()));
        model.set_theta(rm.theta);
        for (int p = 0; p < model.num_params(); ++p) {
            const DiffVar var = DiffVar::param(p);
            const double shift =
                model.derivative(rm.x, std::span<const DiffVar>(&var, 1), exec)[0];
            const double fd = fd_param_derivative(model, rm.x, p, exec);
            CHECK(shift == Approx(fd).margin(1e-6));
        }
    }
}

TEST_CASE("second derivatives match second-order finite differences", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto rm = random_model(3);
    QnnModel model(rm.circuit, PauliObservable::summed_paulis(rm.circuit.num_qubits()));
    model.set_theta(rm.theta);
    const double h = 1e-4;
    for (int a = 0; a < std::min(3, model.num_params()); ++a) {
        for (int b = 0; b <= a; ++b) {
            const DiffVar vars[2] = {DiffVar::param(a), DiffVar::param(b)};
            const double d2 = model.derivative(rm.x, vars, exec)[0];
            // Central second-order difference via first-order shifts.
            QnnModel copy = model;
            auto theta = model.theta();
            theta[static_cast<std::size_t>(b)] += h;
            copy.set_theta(theta);
            const double up = fd_param_derivative(copy, rm.x, a, exec, 1e-5);
            theta[static_cast<std::size_t>(b)] -= 2 * h;
            copy.set_theta(theta);
            const double down = fd_param_derivative(copy, rm.x, a, exec, 1e-5);
            CHECK(d2 == Approx((up - down) / (2 * h)).margin(1e-4));
        }
    }
}

TEST_CASE("variance of eigenstates and superpositions", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));

    EncodingCircuit plus(1, 0);
    plus.add(GateKind::H, 0);
    QnnModel model_plus(plus, PauliObservable::parse("Z", 1));
    CHECK(model_plus.variance({}, exec)[0] == Approx(1.0));

    EncodingCircuit idle(1, 0);
    QnnModel model_zero(idle, PauliObservable::parse("Z", 1));
    CHECK(model_zero.variance({}, exec)[0] == Approx(0.0).margin(1e-12));

    EncodingCircuit two(2, 0);
    QnnModel model_two(two,
                       PauliObservable::parse("IZ", 2) + PauliObservable::parse("ZI", 2));
    CHECK(model_two.variance({}, exec)[0] == Approx(0.0).margin(1e-12));
}

TEST_CASE("regularized loss reduces to MSE at alpha zero", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_model();
    const std::vector<std::vector<double>> X{{0.0}, {pi}};
    const std::vector<std::vector<double>> Y{{1.0}, {-1.0}};
    CHECK(regularized_loss(model, X, Y, 0.0, exec) == Approx(0.0).margin(1e-20));

    const std::vector<std::vector<double>> Y_off{{0.5}, {-1.0}};
    CHECK(regularized_loss(model, X, Y_off, 0.0, exec) == Approx(0.125));

    // alpha = 0.005 adds the mean output variance.
    const double with_reg = regularized_loss(model, X, Y_off, 0.005, exec);
    CHECK(with_reg >= 0.125);
    CHECK_THROWS_AS(regularized_loss(model, {}, {}, 0.0, exec), Error);
}

TEST_CASE("shot policy sizing", "[qnn]") {
    CHECK(choose_shots(ShotPolicy::fixed(5000), 1.0, 1.0) == 5000);
    const auto policy = ShotPolicy::rstd(0.1, 10, 100000);
    CHECK(choose_shots(policy, 1.0, 0.0) == 10);
    CHECK(choose_shots(policy, 1.0, 1.0) == 100);
    CHECK(choose_shots(policy, 0.5, 1.0) == 400);
    CHECK(choose_shots(policy, 1.0, 1e9) == 100000);
    CHECK_THROWS_AS(ShotPolicy::rstd(0.0, 1, 10), ConfigError);
}

TEST_CASE("fit recovers a realizable cosine target", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    EncodingCircuit c(1, 1);
    c.add_rotation(GateKind::RY, 0, AngleExpr::feature(0));
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param()));
    QnnModel model(std::move(c), PauliObservable::parse("Z", 1));

    // Target f(x) = cos(x + 0.8); exactly realizable at theta = 0.8.
    std::vector<std::vector<double>> X;
    std::vector<std::vector<double>> Y;
    for (int i = 0; i < 9; ++i) {
        const double x = -1.0 + 0.25 * i;
        X.push_back({x});
        Y.push_back({std::cos(x + 0.8)});
    }
    TrainConfig config;
    config.optimizer = OptimizerConfig::adam(0.1);
    config.epochs = 200;
    config.seed = 4;
    const auto result = qnn_fit(model, X, Y, config, exec);
    REQUIRE(result.loss_history.size() == 200);
    CHECK(result.loss_history.back() < 1e-4);
}

TEST_CASE("zero-epoch fits leave the model untouched", "[qnn]") {
    Executor exec(ExecutionPlan::exact(0));
    auto model = ry_param_model();
    model.set_theta(std::vector<double>{0.55});
    TrainConfig config;
    config.epochs = 0;
    const auto result =
        qnn_fit(model, {{0.0}}, {{1.0}}, config, exec);
    CHECK(result.loss_history.empty());
    CHECK(model.theta()[0] == 0.55);
}

TEST_CASE("training is deterministic per seed and detects divergence", "[qnn]") {
    const std::vector<std::vector<double>> X{{0.1}, {0.4}, {-0.3}, {0.8}};
    const std::vector<std::vector<double>> Y{{0.2}, {0.5}, {-0.1}, {0.6}};

    const auto run = [&](double lr) {
        Executor exec(ExecutionPlan::exact(0));
        auto model = ry_model();
        EncodingCircuit c(1, 1);
        c.add_rotation(GateKind::RY, 0, AngleExpr::feature(0));
        c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param()));
        QnnModel m(std::move(c), PauliObservable::summed_paulis(1));
        TrainConfig config;
        config.optimizer = OptimizerConfig::adam(lr);
        config.epochs = 5;
        config.batch_size = 2;
        config.seed = 99;
        qnn_fit(m, X, Y, config, exec);
        return m.theta()[0];
    };
    CHECK(run(0.05) == run(0.05));

    Executor exec(ExecutionPlan::exact(0));
    EncodingCircuit c(1, 1);
    c.add_rotation(GateKind::RY, 0, AngleExpr::feature(0));
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(c.new_param()));
    QnnModel diverging(std::move(c), PauliObservable::summed_paulis(1));
    TrainConfig config;
    config.optimizer = OptimizerConfig::sgd(1e280);
    config.epochs = 3;
    config.seed = 1;
    CHECK_THROWS_AS(qnn_fit(diverging, X, Y, config, exec), NumericError);
}

TEST_CASE("caching makes repeated evaluations transparent", "[qnn]") {
    auto model = ry_param_model();
    model.set_theta(std::vector<double>{0.9});

    Executor cached(ExecutionPlan::exact(0));
    ExecutionPlan off = ExecutionPlan::exact(0);
    off.cache = CacheMode::Off;
    Executor uncached(off);
    const DiffVar var = DiffVar::param(0);
    CHECK(model.derivative({}, std::span<const DiffVar>(&var, 1), cached) ==
          model.derivative({}, std::span<const DiffVar>(&var, 1), uncached));
}

TEST_CASE("<O> and <O^2> of a diagonal observable share one sampling pass", "[qnn]") {
    EncodingCircuit c(2, 0);
    const int p = c.new_param();
    c.add_rotation(GateKind::RY, 0, AngleExpr::param(p));
    c.add(GateKind::CX, 0, 1);
    QnnModel model(std::move(c), PauliObservable::summed_paulis(2));
    model.set_theta(std::vector<double>{0.77});

    Executor exec(ExecutionPlan::sampled(1000, 5));
    model.variance({}, exec);
    CHECK(exec.counters().sampling_passes == 1);
}

TEST_CASE("trained models serialize and reload bit-exactly", "[qnn]") {
    EncodingCircuit c = build_family(CircuitFamily::ChebyshevPQC, 2, 1, 1);
    QnnModel model(std::move(c), PauliObservable::summed_paulis(2));
    Rng rng(31);
    std::vector<double> theta(static_cast<std::size_t>(model.num_params()));
    for (auto &t : theta) {
        t = rng.uniform(-pi, pi);
    }
    model.set_theta(theta);
    std::vector<double> coeffs = model.coefficients();
    coeffs[0] = 0.123456789012345678;
    model.set_coefficients(coeffs);

    std::ostringstream os;
    save_qnn_model(os, model, {{"optimizer", "adam"}, {"lr", "0.3"}});
    std::istringstream is(os.str());
    std::map<std::string, std::string> config;
    const auto loaded = load_qnn_model(is, &config);
    CHECK(loaded.theta() == model.theta());
    CHECK(loaded.coefficients() == model.coefficients());
    CHECK(config.at("lr") == "0.3");

    Executor exec(ExecutionPlan::exact(0));
    const std::vector<double> x{0.4};
    CHECK(loaded.evaluate(x, exec)[0] == Approx(model.evaluate(x, exec)[0]).margin(1e-15));
}
