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
 * Quantum kernels and Gram-matrix machinery.
 *
 * Two kernel kinds are implemented. The fidelity kernel
 * K(x, x') = |<psi(x)|psi(x')>|^2 is evaluated from statevector overlaps on
 * the exact backend and from the zero-state probability of the test circuit
 * U^dag(x') U(x) |0> on sampled backends. The projected kernel measures a
 * feature vector per data point (by default the 1-RDM X/Y/Z expectations on
 * every qubit) and applies a classical outer kernel; its quantum cost is
 * linear in the dataset size.
 *
 * The module also carries the Gram post-processing used on noisy backends:
 * PSD restoration by eigenvalue thresholding or Tikhonov shifts, and the
 * msplit mitigation K_ij / sqrt(K_ii K_jj) for depolarizing noise, plus the
 * target-alignment and negative-log-likelihood losses used to train
 * parameterized kernels.
 */

#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "circuit.hpp"
#include "executor.hpp"
#include "observable.hpp"
#include "optimize.hpp"
#include "qnn.hpp"

namespace qmlkit {

// ---------------------------------------------------------------------------
// Outer kernels for projected quantum kernels
// ---------------------------------------------------------------------------

enum class OuterKernelKind { Gaussian, Matern, RationalQuadratic, DotProduct };

struct OuterKernel {
    OuterKernelKind kind = OuterKernelKind::Gaussian;
    double gamma = 1.0;        // Gaussian
    double nu = 1.5;           // Matern smoothness, one of {0.5, 1.5, 2.5}
    double length_scale = 1.0; // Matern / RationalQuadratic
    double alpha = 1.0;        // RationalQuadratic

    static OuterKernel gaussian(double gamma = 1.0) {
        OuterKernel k;
        k.kind = OuterKernelKind::Gaussian;
        k.gamma = gamma;
        return k;
    }

    static OuterKernel matern(double nu = 1.5, double length_scale = 1.0) {
        OuterKernel k;
        k.kind = OuterKernelKind::Matern;
        k.nu = nu;
        k.length_scale = length_scale;
        return k;
    }

    static OuterKernel rational_quadratic(double alpha = 1.0, double length_scale = 1.0) {
        OuterKernel k;
        k.kind = OuterKernelKind::RationalQuadratic;
        k.alpha = alpha;
        k.length_scale = length_scale;
        return k;
    }

    static OuterKernel dot_product() {
        OuterKernel k;
        k.kind = OuterKernelKind::DotProduct;
        return k;
    }

    void validate() const {
        if (gamma <= 0.0 || length_scale <= 0.0 || alpha <= 0.0) {
            throw ConfigError("outer kernel hyperparameters must be positive");
        }
        if (kind == OuterKernelKind::Matern && nu != 0.5 && nu != 1.5 && nu != 2.5) {
            throw ConfigError("Matern nu restricted to {0.5, 1.5, 2.5}");
        }
    }

    [[nodiscard]] double value(std::span<const double> f, std::span<const double> g) const {
        switch (kind) {
        case OuterKernelKind::Gaussian: {
            return std::exp(-gamma * squared_distance(f, g));
        }
        case OuterKernelKind::Matern: {
            const double r = std::sqrt(squared_distance(f, g));
            if (nu == 0.5) {
                return std::exp(-r / length_scale);
            }
            if (nu == 1.5) {
                const double c = std::numbers::sqrt3 * r / length_scale;
                return (1.0 + c) * std::exp(-c);
            }
            const double c = std::sqrt(5.0) * r / length_scale;
            return (1.0 + c + c * c / 3.0) * std::exp(-c);
        }
        case OuterKernelKind::RationalQuadratic: {
            const double r2 = squared_distance(f, g);
            return std::pow(1.0 + r2 / (2.0 * alpha * length_scale * length_scale), -alpha);
        }
        case OuterKernelKind::DotProduct: {
            double acc = 0.0;
            for (std::size_t a = 0; a < f.size(); ++a) {
                acc += f[a] * g[a];
            }
            return acc;
        }
        }
        return 0.0;
    }

    /// Partial derivative of h(f, g) with respect to the first argument.
    [[nodiscard]] std::vector<double> grad_first(std::span<const double> f,
                                                 std::span<const double> g) const {
        std::vector<double> grad(f.size(), 0.0);
        switch (kind) {
        case OuterKernelKind::Gaussian: {
            const double h = value(f, g);
            for (std::size_t a = 0; a < f.size(); ++a) {
                grad[a] = -2.0 * gamma * (f[a] - g[a]) * h;
            }
            break;
        }
        case OuterKernelKind::Matern: {
            const double r = std::sqrt(squared_distance(f, g));
            if (r < 1e-15) {
                break; // gradient defined as zero at coincident points
            }
            double dh_dr = 0.0;
            if (nu == 0.5) {
                dh_dr = -std::exp(-r / length_scale) / length_scale;
            } else if (nu == 1.5) {
                const double c = std::numbers::sqrt3 / length_scale;
                dh_dr = -c * c * r * std::exp(-c * r);
            } else {
                const double c = std::sqrt(5.0) / length_scale;
                dh_dr = -(c * c * r / 3.0) * (1.0 + c * r) * std::exp(-c * r);
            }
            for (std::size_t a = 0; a < f.size(); ++a) {
                grad[a] = dh_dr * (f[a] - g[a]) / r;
            }
            break;
        }
        case OuterKernelKind::RationalQuadratic: {
            const double r2 = squared_distance(f, g);
            const double base = 1.0 + r2 / (2.0 * alpha * length_scale * length_scale);
            const double factor = -std::pow(base, -alpha - 1.0) / (length_scale * length_scale);
            for (std::size_t a = 0; a < f.size(); ++a) {
                grad[a] = factor * (f[a] - g[a]);
            }
            break;
        }
        case OuterKernelKind::DotProduct:
            for (std::size_t a = 0; a < f.size(); ++a) {
                grad[a] = g[a];
            }
            break;
        }
        return grad;
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
        case OuterKernelKind::Gaussian:
            return "gaussian";
        case OuterKernelKind::Matern:
            return "matern";
        case OuterKernelKind::RationalQuadratic:
            return "rationalquadratic";
        case OuterKernelKind::DotProduct:
            return "dotproduct";
        }
        return "?";
    }

  private:
    static double squared_distance(std::span<const double> f, std::span<const double> g) {
        double acc = 0.0;
        for (std::size_t a = 0; a < f.size(); ++a) {
            const double d = f[a] - g[a];
            acc += d * d;
        }
        return acc;
    }
};

inline OuterKernel outer_kernel_from_name(const std::string &name) {
    if (name == "gaussian") {
        return OuterKernel::gaussian();
    }
    if (name == "matern") {
        return OuterKernel::matern();
    }
    if (name == "rationalquadratic") {
        return OuterKernel::rational_quadratic();
    }
    if (name == "dotproduct") {
        return OuterKernel::dot_product();
    }
    throw ConfigError("unknown outer kernel \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Gram matrices
// ---------------------------------------------------------------------------

enum class KernelKind { Fidelity, Projected };
enum class DuplicatePolicy { All, SymmetricOff, None };
enum class Mitigation { None, Msplit };

struct GramProvenance {
    KernelKind kind = KernelKind::Fidelity;
    Backend backend = Backend::Exact;
    long long shots = 0;
    std::uint64_t seed = 0;
    std::string regularization = "none";
    std::string mitigation = "none";
};

struct GramMatrix {
    Eigen::MatrixXd values;
    bool symmetric = false;
    GramProvenance provenance;

    void save(std::ostream &os) const {
        os << "gram v1\n";
        os << values.rows() << " " << values.cols() << " " << (symmetric ? 1 : 0) << " "
           << (provenance.kind == KernelKind::Fidelity ? "fidelity" : "projected") << " "
           << backend_name(provenance.backend) << " " << provenance.shots << " "
           << provenance.seed << " " << provenance.regularization << " "
           << provenance.mitigation << "\n";
        char buf[40];
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", values(i, j));
                os << buf << (j + 1 < values.cols() ? " " : "");
            }
            os << "\n";
        }
    }

    static GramMatrix load(std::istream &in) {
        std::string header;
        std::getline(in, header);
        if (header != "gram v1") {
            throw Error("unrecognized gram header: " + header);
        }
        GramMatrix g;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        int symmetric = 0;
        std::string kind;
        std::string backend;
        in >> rows >> cols >> symmetric >> kind >> backend >> g.provenance.shots >>
            g.provenance.seed >> g.provenance.regularization >> g.provenance.mitigation;
        g.symmetric = symmetric != 0;
        g.provenance.kind = kind == "fidelity" ? KernelKind::Fidelity : KernelKind::Projected;
        g.provenance.backend = parse_backend(backend);
        g.values.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                in >> g.values(i, j);
            }
        }
        if (!in) {
            throw Error("truncated gram matrix file");
        }
        return g;
    }
};

// ---------------------------------------------------------------------------
// Quantum kernel
// ---------------------------------------------------------------------------

/**
 * @brief Parameterized fidelity or projected quantum kernel over an encoding
 * circuit. Kernel objects are immutable during Gram evaluation; training
 * updates theta between evaluations.
 */
class QuantumKernel {
  public:
    static QuantumKernel fidelity(EncodingCircuit circuit,
                                  DuplicatePolicy duplicates = DuplicatePolicy::SymmetricOff,
                                  Mitigation mitigation = Mitigation::None) {
        QuantumKernel k;
        k.kind_ = KernelKind::Fidelity;
        k.circuit_ = std::move(circuit);
        k.duplicates_ = duplicates;
        k.mitigation_ = mitigation;
        k.theta_.assign(static_cast<std::size_t>(k.circuit_.num_params()), 0.0);
        return k;
    }

    static QuantumKernel projected(EncodingCircuit circuit,
                                   OuterKernel outer = OuterKernel::gaussian(),
                                   std::vector<PauliObservable> measurements = {}) {
        outer.validate();
        QuantumKernel k;
        k.kind_ = KernelKind::Projected;
        k.circuit_ = std::move(circuit);
        k.outer_ = outer;
        if (measurements.empty()) {
            k.measurements_ = default_1rdm_measurements(k.circuit_.num_qubits());
        } else {
            for (const auto &m : measurements) {
                if (m.num_qubits() != k.circuit_.num_qubits()) {
                    throw Error("measurement observable qubit count mismatch");
                }
            }
            k.measurements_ = std::move(measurements);
        }
        k.theta_.assign(static_cast<std::size_t>(k.circuit_.num_params()), 0.0);
        return k;
    }

    /// X_k, Y_k, Z_k on every qubit: the 1-RDM feature set of Eq. (9)-style
    /// Gaussian projected kernels.
    static std::vector<PauliObservable> default_1rdm_measurements(int n_qubits) {
        std::vector<PauliObservable> obs;
        for (const Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
            for (int q = 0; q < n_qubits; ++q) {
                PauliObservable o(n_qubits);
                o.add_term({1.0, PauliString::single(n_qubits, q, p), false});
                obs.push_back(std::move(o));
            }
        }
        return obs;
    }

    [[nodiscard]] KernelKind kind() const { return kind_; }
    [[nodiscard]] const EncodingCircuit &circuit() const { return circuit_; }
    [[nodiscard]] const OuterKernel &outer() const { return outer_; }
    [[nodiscard]] const std::vector<PauliObservable> &measurements() const {
        return measurements_;
    }
    [[nodiscard]] DuplicatePolicy duplicates() const { return duplicates_; }
    [[nodiscard]] Mitigation mitigation() const { return mitigation_; }
    [[nodiscard]] int num_params() const { return circuit_.num_params(); }
    [[nodiscard]] const std::vector<double> &theta() const { return theta_; }

    void set_theta(std::span<const double> theta) {
        if (static_cast<int>(theta.size()) != circuit_.num_params()) {
            throw Error("kernel parameter vector length mismatch");
        }
        theta_.assign(theta.begin(), theta.end());
    }

    /// Projected-kernel feature vector tr[P rho(x)] per measurement.
    [[nodiscard]] std::vector<double> features(std::span<const double> x,
                                               Executor &exec) const {
        if (kind_ != KernelKind::Projected) {
            throw Error("features are defined for projected kernels only");
        }
        EvalRequest req;
        req.program = circuit_.bind(x, theta_);
        req.observables = measurements_;
        return exec.run(req);
    }

    [[nodiscard]] double entry(std::span<const double> x, std::span<const double> xp,
                               Executor &exec) const {
        if (kind_ == KernelKind::Projected) {
            const auto f = features(x, exec);
            const auto g = features(xp, exec);
            return outer_.value(f, g);
        }
        if (exec.plan().backend == Backend::Exact) {
            const StateVector a = bound_state(x, exec);
            const StateVector b = bound_state(xp, exec);
            return overlap_sq(a, b);
        }
        return fidelity_test_entry(x, xp, exec);
    }

    /// Zero-state probability of U^dag(x') U(x) |0>; works on every backend.
    [[nodiscard]] double fidelity_test_entry(std::span<const double> x,
                                             std::span<const double> xp,
                                             Executor &exec) const {
        EvalRequest req;
        req.program = fidelity_test_program(x, xp);
        req.zero_prob = true;
        return exec.run(req)[0];
    }

    /**
     * @brief Pairwise kernel matrix. Symmetric evaluations honor the
     * duplicate policy: SymmetricOff evaluates the upper triangle and sets
     * the fidelity diagonal to one, All evaluates every entry independently
     * (exposing sampling noise), None additionally skips duplicate data
     * points. Entries run in parallel over `n_threads` with content-derived
     * seeds, so the result is identical to a serial evaluation.
     */
    [[nodiscard]] GramMatrix gram(const Eigen::MatrixXd &X, Executor &exec,
                                  const Eigen::MatrixXd *X2 = nullptr,
                                  int n_threads = 1) const {
        if (X.rows() == 0) {
            throw Error("empty data set in gram evaluation");
        }
        const bool symmetric = X2 == nullptr;
        const Eigen::MatrixXd &rows_data = X;
        const Eigen::MatrixXd &cols_data = symmetric ? X : *X2;
        GramMatrix result;
        result.symmetric = symmetric;
        result.values.resize(rows_data.rows(), cols_data.rows());
        result.provenance.kind = kind_;
        result.provenance.backend = exec.plan().backend;
        result.provenance.shots = exec.plan().shots;
        result.provenance.seed = exec.plan().base_seed;
        if (kind_ == KernelKind::Projected) {
            assemble_projected(rows_data, cols_data, symmetric, exec, n_threads, result);
        } else {
            assemble_fidelity(rows_data, cols_data, symmetric, exec, n_threads, result);
        }
        return result;
    }

    /// dK(x, x')/dtheta for one entry; chain rule through the outer kernel
    /// for projected kernels, parameter shift on the composed fidelity test
    /// circuit for fidelity kernels.
    [[nodiscard]] std::vector<double> entry_gradient(std::span<const double> x,
                                                     std::span<const double> xp,
                                                     Executor &exec) const {
        const int k = circuit_.num_params();
        std::vector<double> grad(static_cast<std::size_t>(k), 0.0);
        if (kind_ == KernelKind::Projected) {
            const auto f = features(x, exec);
            const auto g = features(xp, exec);
            const auto jf = feature_jacobian(x, exec);
            const auto jg = feature_jacobian(xp, exec);
            const auto df = outer_.grad_first(f, g);
            const auto dg = outer_.grad_first(g, f);
            const std::size_t n_feat = f.size();
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t a = 0; a < n_feat; ++a) {
                    acc += df[a] * jf[a * static_cast<std::size_t>(k) + static_cast<std::size_t>(p)];
                    acc += dg[a] * jg[a * static_cast<std::size_t>(k) + static_cast<std::size_t>(p)];
                }
                grad[static_cast<std::size_t>(p)] = acc;
            }
            return grad;
        }
        // Fidelity: differentiate the zero-state probability of the composed
        // circuit; theta occurs in both the forward and the inverted half.
        const BoundProgram fwd = circuit_.bind(x, theta_);
        const BoundProgram inv = inverse_program(circuit_.bind(xp, theta_));
        BoundProgram composed;
        composed.n_qubits = fwd.n_qubits;
        composed.gates = fwd.gates;
        composed.gates.insert(composed.gates.end(), inv.gates.begin(), inv.gates.end());
        constexpr double half_pi = std::numbers::pi / 2.0;
        const int offset = static_cast<int>(fwd.gates.size());
        for (int p = 0; p < k; ++p) {
            std::vector<std::pair<int, double>> occ =
                circuit_.occurrences(fwd, x, theta_, CircuitVar::param(p));
            for (const auto &[g, chain] : circuit_.occurrences(inv, xp, theta_,
                                                               CircuitVar::param(p))) {
                occ.emplace_back(g + offset, chain);
            }
            double acc = 0.0;
            for (const auto &[g, chain] : occ) {
                if (chain == 0.0) {
                    continue;
                }
                acc += 0.5 * chain *
                       (shifted_zero_prob(composed, g, half_pi, exec) -
                        shifted_zero_prob(composed, g, -half_pi, exec));
            }
            grad[static_cast<std::size_t>(p)] = acc;
        }
        return grad;
    }

    /// d features / d theta, features-major layout (result[a * K + p]).
    [[nodiscard]] std::vector<double> feature_jacobian(std::span<const double> x,
                                                       Executor &exec) const {
        QnnModel model(circuit_, measurements_);
        model.set_theta(theta_);
        return model.parameter_gradient(x, exec);
    }

  private:
    QuantumKernel() = default;

    [[nodiscard]] StateVector bound_state(std::span<const double> x, Executor &exec) const {
        EvalRequest req;
        req.program = circuit_.bind(x, theta_);
        req.return_state = true;
        return state_from_result(circuit_.num_qubits(), exec.run(req));
    }

    [[nodiscard]] BoundProgram fidelity_test_program(std::span<const double> x,
                                                     std::span<const double> xp) const {
        const BoundProgram fwd = circuit_.bind(x, theta_);
        const BoundProgram inv = inverse_program(circuit_.bind(xp, theta_));
        BoundProgram composed;
        composed.n_qubits = fwd.n_qubits;
        composed.gates = fwd.gates;
        composed.gates.insert(composed.gates.end(), inv.gates.begin(), inv.gates.end());
        return composed;
    }

    [[nodiscard]] double shifted_zero_prob(const BoundProgram &program, int gate,
                                           double delta, Executor &exec) const {
        EvalRequest req;
        req.program = program;
        auto &angle = req.program.gates[static_cast<std::size_t>(gate)].angle;
        angle = angle.value_or(0.0) + delta;
        req.zero_prob = true;
        return exec.run(req)[0];
    }

    void assemble_projected(const Eigen::MatrixXd &rows_data,
                            const Eigen::MatrixXd &cols_data, bool symmetric,
                            Executor &exec, int n_threads, GramMatrix &result) const {
        // Feature vectors are computed once per data point: the quantum cost
        // is linear in the number of points.
        const auto row_features = all_features(rows_data, exec, n_threads);
        const auto col_features =
            symmetric ? row_features : all_features(cols_data, exec, n_threads);
        for (Eigen::Index i = 0; i < rows_data.rows(); ++i) {
            for (Eigen::Index j = 0; j < cols_data.rows(); ++j) {
                result.values(i, j) = outer_.value(row_features[static_cast<std::size_t>(i)],
                                                   col_features[static_cast<std::size_t>(j)]);
            }
        }
    }

    [[nodiscard]] std::vector<std::vector<double>>
    all_features(const Eigen::MatrixXd &data, Executor &exec, int n_threads) const {
        std::vector<std::vector<double>> features(static_cast<std::size_t>(data.rows()));
        parallel_for(static_cast<std::size_t>(data.rows()), n_threads, [&](std::size_t i) {
            std::vector<double> x(static_cast<std::size_t>(data.cols()));
            for (Eigen::Index j = 0; j < data.cols(); ++j) {
                x[static_cast<std::size_t>(j)] = data(static_cast<Eigen::Index>(i), j);
            }
            features[i] = this->features(x, exec);
        });
        return features;
    }

    void assemble_fidelity(const Eigen::MatrixXd &rows_data,
                           const Eigen::MatrixXd &cols_data, bool symmetric, Executor &exec,
                           int n_threads, GramMatrix &result) const {
        const bool exact = exec.plan().backend == Backend::Exact;
        struct Entry {
            Eigen::Index i;
            Eigen::Index j;
        };
        std::vector<Entry> entries;
        if (symmetric && duplicates_ != DuplicatePolicy::All) {
            for (Eigen::Index i = 0; i < rows_data.rows(); ++i) {
                result.values(i, i) = 1.0;
                for (Eigen::Index j = i + 1; j < rows_data.rows(); ++j) {
                    if (duplicates_ == DuplicatePolicy::None &&
                        rows_data.row(i) == rows_data.row(j)) {
                        result.values(i, j) = 1.0;
                        result.values(j, i) = 1.0;
                        continue;
                    }
                    entries.push_back({i, j});
                }
            }
        } else {
            for (Eigen::Index i = 0; i < rows_data.rows(); ++i) {
                for (Eigen::Index j = 0; j < cols_data.rows(); ++j) {
                    if (!symmetric && duplicates_ == DuplicatePolicy::None &&
                        rows_data.row(i) == cols_data.row(j)) {
                        result.values(i, j) = 1.0;
                        continue;
                    }
                    entries.push_back({i, j});
                }
            }
        }
        parallel_for(entries.size(), n_threads, [&](std::size_t e) {
            const auto [i, j] = entries[e];
            std::vector<double> xi(static_cast<std::size_t>(rows_data.cols()));
            std::vector<double> xj(static_cast<std::size_t>(cols_data.cols()));
            for (Eigen::Index col = 0; col < rows_data.cols(); ++col) {
                xi[static_cast<std::size_t>(col)] = rows_data(i, col);
            }
            for (Eigen::Index col = 0; col < cols_data.cols(); ++col) {
                xj[static_cast<std::size_t>(col)] = cols_data(j, col);
            }
            const double value = exact && duplicates_ != DuplicatePolicy::All
                                     ? entry(xi, xj, exec)
                                     : fidelity_test_entry(xi, xj, exec);
            result.values(i, j) = value;
            if (symmetric && duplicates_ != DuplicatePolicy::All) {
                result.values(j, i) = value;
            }
        });
        if (mitigation_ == Mitigation::Msplit && symmetric) {
            apply_msplit(rows_data, exec, result);
        }
    }

    void apply_msplit(const Eigen::MatrixXd &data, Executor &exec, GramMatrix &result) const {
        // Normalize with the measured diagonal, which equals one only in the
        // noise-free case.
        Eigen::VectorXd diag(data.rows());
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            if (duplicates_ == DuplicatePolicy::All) {
                diag(i) = result.values(i, i);
            } else {
                std::vector<double> xi(static_cast<std::size_t>(data.cols()));
                for (Eigen::Index col = 0; col < data.cols(); ++col) {
                    xi[static_cast<std::size_t>(col)] = data(i, col);
                }
                diag(i) = fidelity_test_entry(xi, xi, exec);
            }
            if (diag(i) <= 0.0) {
                throw NumericError("msplit mitigation failed: non-positive diagonal entry");
            }
        }
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            for (Eigen::Index j = 0; j < data.rows(); ++j) {
                result.values(i, j) /= std::sqrt(diag(i) * diag(j));
            }
            result.values(i, i) = 1.0;
        }
        result.provenance.mitigation = "msplit";
    }

    KernelKind kind_ = KernelKind::Fidelity;
    EncodingCircuit circuit_;
    std::vector<double> theta_;
    std::vector<PauliObservable> measurements_;
    OuterKernel outer_;
    DuplicatePolicy duplicates_ = DuplicatePolicy::SymmetricOff;
    Mitigation mitigation_ = Mitigation::None;
};

// ---------------------------------------------------------------------------
// Gram post-processing
// ---------------------------------------------------------------------------

enum class PsdRepair { Thresholding, Tikhonov };

/// Restores positive semi-definiteness of a noisy symmetric Gram matrix.
inline GramMatrix regularize(const GramMatrix &gram, PsdRepair method) {
    if (gram.values.rows() != gram.values.cols()) {
        throw Error("regularization requires a square matrix");
    }
    GramMatrix out = gram;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram.values);
    if (es.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed");
    }
    const double min_eig = es.eigenvalues().minCoeff();
    if (method == PsdRepair::Thresholding) {
        Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
        out.values =
            es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
        out.provenance.regularization = "thresholding";
    } else {
        if (min_eig < 0.0) {
            out.values = gram.values +
                         std::abs(min_eig) *
                             Eigen::MatrixXd::Identity(gram.values.rows(), gram.values.cols());
        }
        out.provenance.regularization = "tikhonov";
    }
    return out;
}

/// Depolarizing-noise mitigation K_ij / sqrt(K_ii K_jj); unit diagonal by
/// construction.
inline GramMatrix mitigate_msplit(const GramMatrix &gram) {
    if (gram.values.rows() != gram.values.cols()) {
        throw Error("msplit mitigation requires a square matrix");
    }
    for (Eigen::Index i = 0; i < gram.values.rows(); ++i) {
        if (gram.values(i, i) <= 0.0) {
            throw NumericError("msplit mitigation failed: non-positive diagonal entry");
        }
    }
    GramMatrix out = gram;
    for (Eigen::Index i = 0; i < gram.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < gram.values.cols(); ++j) {
            out.values(i, j) = gram.values(i, j) /
                               std::sqrt(gram.values(i, i) * gram.values(j, j));
        }
    }
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        out.values(i, i) = 1.0;
    }
    out.provenance.mitigation = "msplit";
    return out;
}

/// Kernel target alignment <K, yy^T>_F / (|K|_F |yy^T|_F) in [-1, 1].
inline double target_alignment(const GramMatrix &gram, const Eigen::VectorXd &y) {
    if (gram.values.rows() != y.size() || gram.values.cols() != y.size()) {
        throw Error("alignment requires a square Gram over the labels");
    }
    const double k_norm = gram.values.norm();
    const double y_norm_sq = y.squaredNorm();
    if (k_norm == 0.0 || y_norm_sq == 0.0) {
        throw Error("alignment undefined for zero-norm inputs");
    }
    const double overlap = y.transpose() * gram.values * y;
    return overlap / (k_norm * y_norm_sq);
}

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd &m,
                                                        double &jitter_used) {
    const double jitters[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
    for (const double j : jitters) {
        Eigen::MatrixXd shifted = m;
        if (j > 0.0) {
            shifted += j * Eigen::MatrixXd::Identity(m.rows(), m.cols());
        }
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            jitter_used = j;
            return llt;
        }
    }
    throw NumericError("Cholesky factorization failed after jitter escalation to 1e-6");
}

} // namespace detail

/// Gaussian-process negative log marginal likelihood
/// 0.5 y^T (K + s^2 I)^-1 y + 0.5 log det(K + s^2 I) + N/2 log 2 pi.
inline double nll_loss(const GramMatrix &gram, const Eigen::VectorXd &y, double noise_var) {
    if (gram.values.rows() != gram.values.cols() || gram.values.rows() != y.size()) {
        throw Error("NLL requires a square Gram matching the labels");
    }
    const Eigen::Index n = y.size();
    Eigen::MatrixXd shifted =
        gram.values + noise_var * Eigen::MatrixXd::Identity(n, n);
    double jitter = 0.0;
    const auto llt = detail::cholesky_with_jitter(shifted, jitter);
    const Eigen::VectorXd alpha = llt.solve(y);
    double log_det = 0.0;
    const auto &l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) {
        log_det += 2.0 * std::log(l(i, i));
    }
    constexpr double log_two_pi = 1.8378770664093454836;
    return 0.5 * y.dot(alpha) + 0.5 * log_det +
           0.5 * static_cast<double>(n) * log_two_pi;
}

// ---------------------------------------------------------------------------
// Variational kernel training
// ---------------------------------------------------------------------------

enum class KernelLoss { TargetAlignment, NegLogLikelihood };

struct KernelOptResult {
    std::vector<double> loss_history;
};

/**
 * @brief Gradient-based kernel training: the Gram matrix is re-evaluated per
 * iteration (theta changed), dL/dK is computed in closed form and dK/dtheta
 * by parameter-shift differentiation of each entry.
 */
inline KernelOptResult optimize_kernel(QuantumKernel &kernel, const Eigen::MatrixXd &X,
                                       const Eigen::VectorXd &y, KernelLoss loss,
                                       OptimizerConfig optimizer, int maxiter,
                                       Executor &exec, double noise_var = 1e-2,
                                       int n_threads = 1) {
    if (kernel.num_params() < 1) {
        throw Error("kernel optimization requires at least one trainable parameter");
    }
    if (X.rows() != y.size()) {
        throw Error("data/label shape mismatch");
    }
    const int k = kernel.num_params();
    const Eigen::Index n = X.rows();
    GradientStepper stepper(optimizer, static_cast<std::size_t>(k));
    KernelOptResult result;
    for (int iter = 0; iter < maxiter; ++iter) {
        const GramMatrix gram = kernel.gram(X, exec, nullptr, n_threads);
        double loss_value = 0.0;
        Eigen::MatrixXd dl_dk(n, n);
        if (loss == KernelLoss::TargetAlignment) {
            const double k_norm = gram.values.norm();
            const double y_norm_sq = y.squaredNorm();
            if (k_norm == 0.0 || y_norm_sq == 0.0) {
                throw Error("alignment undefined for zero-norm inputs");
            }
            const double overlap = y.transpose() * gram.values * y;
            const double alignment = overlap / (k_norm * y_norm_sq);
            loss_value = -alignment;
            // dA/dK = yy^T / (|K| c) - S K / (|K|^3 c), c = |y|^2.
            dl_dk = -(y * y.transpose() / (k_norm * y_norm_sq) -
                      overlap * gram.values / (k_norm * k_norm * k_norm * y_norm_sq));
        } else {
            loss_value = nll_loss(gram, y, noise_var);
            Eigen::MatrixXd shifted =
                gram.values + noise_var * Eigen::MatrixXd::Identity(n, n);
            double jitter = 0.0;
            const auto llt = detail::cholesky_with_jitter(shifted, jitter);
            const Eigen::VectorXd alpha = llt.solve(y);
            const Eigen::MatrixXd k_inv =
                llt.solve(Eigen::MatrixXd::Identity(n, n));
            dl_dk = 0.5 * (k_inv - alpha * alpha.transpose());
        }
        if (!std::isfinite(loss_value)) {
            throw NumericError("non-finite kernel loss at iteration " +
                               std::to_string(iter + 1));
        }
        result.loss_history.push_back(loss_value);

        // Chain rule over the upper triangle; symmetric Gram entries share
        // their gradient.
        std::vector<double> grad(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<double> xi(static_cast<std::size_t>(X.cols()));
            for (Eigen::Index col = 0; col < X.cols(); ++col) {
                xi[static_cast<std::size_t>(col)] = X(i, col);
            }
            for (Eigen::Index j = i; j < n; ++j) {
                std::vector<double> xj(static_cast<std::size_t>(X.cols()));
                for (Eigen::Index col = 0; col < X.cols(); ++col) {
                    xj[static_cast<std::size_t>(col)] = X(j, col);
                }
                const auto dk = kernel.entry_gradient(xi, xj, exec);
                const double weight =
                    i == j ? dl_dk(i, i) : dl_dk(i, j) + dl_dk(j, i);
                for (int p = 0; p < k; ++p) {
                    grad[static_cast<std::size_t>(p)] += weight * dk[static_cast<std::size_t>(p)];
                }
            }
        }
        std::vector<double> theta = kernel.theta();
        stepper.step(theta, grad);
        kernel.set_theta(theta);
        if (exec.plan().cache == CacheMode::Memory) {
            exec.clear_memory_cache();
        }
    }
    return result;
}

} // namespace qmlkit
