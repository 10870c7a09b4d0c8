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
 * High-level fit/predict heads: QNN regression and classification plus the
 * kernel heads QSVC, QSVR, QKRR and QGPR. All heads expose their knobs as
 * flat string-keyed hyperparameters so pipelines and grid search can drive
 * them; structural keys (encoding, n_qubits, n_layers, kernel choices)
 * rebuild the circuit and invalidate any fitted state.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "base.hpp"
#include "circuit_library.hpp"
#include "executor.hpp"
#include "kernel.hpp"
#include "qnn.hpp"
#include "svm.hpp"

namespace qmlkit {

namespace detail {

inline void write_vector(std::ostream &os, const char *tag, const Eigen::VectorXd &v) {
    os << tag << " " << v.size() << "\n";
    char buf[40];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", v(i));
        os << buf << "\n";
    }
}

inline Eigen::VectorXd read_vector(std::istream &in, const char *tag) {
    std::string name;
    Eigen::Index n = 0;
    in >> name >> n;
    if (name != tag) {
        throw Error("expected block \"" + std::string(tag) + "\", found \"" + name + "\"");
    }
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        in >> v(i);
    }
    return v;
}

inline void write_matrix(std::ostream &os, const char *tag, const Eigen::MatrixXd &m) {
    os << tag << " " << m.rows() << " " << m.cols() << "\n";
    char buf[40];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            os << buf << (j + 1 < m.cols() ? " " : "");
        }
        os << "\n";
    }
}

inline Eigen::MatrixXd read_matrix(std::istream &in, const char *tag) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    in >> name >> rows >> cols;
    if (name != tag) {
        throw Error("expected block \"" + std::string(tag) + "\", found \"" + name + "\"");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            in >> m(i, j);
        }
    }
    return m;
}

inline std::vector<double> eigen_row(const Eigen::MatrixXd &m, Eigen::Index i) {
    std::vector<double> x(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        x[static_cast<std::size_t>(j)] = m(i, j);
    }
    return x;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Kernel heads
// ---------------------------------------------------------------------------

/// Rebuildable kernel description shared by all kernel heads.
struct KernelHeadConfig {
    std::string encoding = "chebyshev";
    long long n_qubits = 4;
    long long n_layers = 1;
    std::string kernel = "projected"; // "projected" | "fidelity"
    std::string outer_kernel = "gaussian";
    double gamma = 1.0;
    double nu = 1.5;
    double length_scale = 1.0;
    double alpha_rq = 1.0;
    std::string regularization = "none"; // "none" | "thresholding" | "tikhonov"
    std::string evaluate_duplicates = "off"; // "all" | "off" | "none"
    std::string mitigation = "none";         // "none" | "msplit"

    [[nodiscard]] ParamMap params() const {
        return {
            {"encoding", encoding},
            {"n_qubits", n_qubits},
            {"n_layers", n_layers},
            {"kernel", kernel},
            {"outer_kernel", outer_kernel},
            {"gamma", gamma},
            {"nu", nu},
            {"length_scale", length_scale},
            {"alpha_rq", alpha_rq},
            {"regularization", regularization},
            {"evaluate_duplicates", evaluate_duplicates},
            {"mitigation", mitigation},
        };
    }

    bool set(const std::string &key, const ParamValue &value) {
        if (key == "encoding") {
            encoding = param_string(value);
        } else if (key == "n_qubits") {
            n_qubits = param_int(value);
        } else if (key == "n_layers") {
            n_layers = param_int(value);
        } else if (key == "kernel") {
            kernel = param_string(value);
        } else if (key == "outer_kernel") {
            outer_kernel = param_string(value);
        } else if (key == "gamma") {
            gamma = param_double(value);
        } else if (key == "nu") {
            nu = param_double(value);
        } else if (key == "length_scale") {
            length_scale = param_double(value);
        } else if (key == "alpha_rq") {
            alpha_rq = param_double(value);
        } else if (key == "regularization") {
            regularization = param_string(value);
        } else if (key == "evaluate_duplicates") {
            evaluate_duplicates = param_string(value);
        } else if (key == "mitigation") {
            mitigation = param_string(value);
        } else {
            return false;
        }
        return true;
    }

    [[nodiscard]] QuantumKernel build(int n_features) const {
        EncodingCircuit circuit =
            build_named_circuit(encoding, static_cast<int>(n_qubits), n_features,
                                static_cast<int>(n_layers));
        if (kernel == "fidelity") {
            DuplicatePolicy dup = DuplicatePolicy::SymmetricOff;
            if (evaluate_duplicates == "all") {
                dup = DuplicatePolicy::All;
            } else if (evaluate_duplicates == "none") {
                dup = DuplicatePolicy::None;
            } else if (evaluate_duplicates != "off") {
                throw ConfigError("evaluate_duplicates must be all, off or none");
            }
            const Mitigation mit = mitigation == "msplit" ? Mitigation::Msplit
                                                          : Mitigation::None;
            return QuantumKernel::fidelity(std::move(circuit), dup, mit);
        }
        if (kernel != "projected") {
            throw ConfigError("kernel must be \"projected\" or \"fidelity\"");
        }
        OuterKernel outer = outer_kernel_from_name(outer_kernel);
        outer.gamma = gamma;
        outer.nu = nu;
        outer.length_scale = length_scale;
        outer.alpha = alpha_rq;
        outer.validate();
        return QuantumKernel::projected(std::move(circuit), outer);
    }
};

/**
 * @brief Common machinery of the kernel heads: kernel construction (from a
 * rebuildable config or a preset kernel object), train/cross Gram evaluation
 * with optional PSD repair, and fitted-state bookkeeping.
 */
class KernelHead : public Estimator {
  public:
    [[nodiscard]] bool is_fitted() const override { return fitted_; }

    [[nodiscard]] ParamMap get_params() const override {
        ParamMap params = preset_kernel_ ? ParamMap{} : config_.params();
        extra_params(params);
        return params;
    }

    void set_params(const ParamMap &params) override {
        for (const auto &[key, value] : params) {
            if (set_extra_param(key, value)) {
                continue;
            }
            if (preset_kernel_) {
                throw ConfigError("structural hyperparameter \"" + key +
                                  "\" requires a config-built estimator");
            }
            if (!config_.set(key, value)) {
                throw ConfigError("unknown hyperparameter \"" + key + "\"");
            }
        }
        fitted_ = false; // any change requires a refit
    }

    /// Parameters of the trained kernel (empty for parameter-free circuits).
    [[nodiscard]] const std::vector<double> &kernel_theta() const { return theta_; }

    [[nodiscard]] const Eigen::MatrixXd &training_inputs() const { return x_train_; }

  protected:
    KernelHead(KernelHeadConfig config, std::shared_ptr<Executor> exec)
        : config_(std::move(config)), exec_(std::move(exec)) {}

    KernelHead(QuantumKernel kernel, std::shared_ptr<Executor> exec)
        : preset_kernel_(std::move(kernel)), exec_(std::move(exec)) {}

    virtual void extra_params(ParamMap &params) const = 0;
    virtual bool set_extra_param(const std::string &key, const ParamValue &value) = 0;

    [[nodiscard]] QuantumKernel make_kernel(int n_features) const {
        if (preset_kernel_) {
            QuantumKernel k = *preset_kernel_;
            if (!theta_.empty()) {
                k.set_theta(theta_);
            }
            return k;
        }
        QuantumKernel k = config_.build(n_features);
        if (static_cast<int>(theta_.size()) == k.num_params()) {
            k.set_theta(theta_);
        }
        return k;
    }

    /// Training Gram with the configured PSD repair applied.
    [[nodiscard]] GramMatrix train_gram(const QuantumKernel &kernel,
                                        const Eigen::MatrixXd &X) const {
        GramMatrix gram = kernel.gram(X, *exec_, nullptr, n_threads_);
        const std::string &reg =
            preset_kernel_ ? preset_regularization_ : config_.regularization;
        if (reg == "thresholding") {
            gram = regularize(gram, PsdRepair::Thresholding);
        } else if (reg == "tikhonov") {
            gram = regularize(gram, PsdRepair::Tikhonov);
        } else if (reg != "none") {
            throw ConfigError("regularization must be none, thresholding or tikhonov");
        }
        return gram;
    }

    [[nodiscard]] Eigen::MatrixXd cross_gram(const Eigen::MatrixXd &X) const {
        const QuantumKernel kernel = make_kernel(static_cast<int>(x_train_.cols()));
        return kernel.gram(X, *exec_, &x_train_, n_threads_).values;
    }

    void require_fitted() const {
        if (!fitted_) {
            throw NotFittedError();
        }
    }

    void capture_fit(const QuantumKernel &kernel, const Eigen::MatrixXd &X) {
        x_train_ = X;
        theta_ = kernel.theta();
        fitted_ = true;
    }

    KernelHeadConfig config_;
    std::optional<QuantumKernel> preset_kernel_;
    std::string preset_regularization_ = "none";
    std::shared_ptr<Executor> exec_;
    int n_threads_ = 1;
    bool fitted_ = false;
    Eigen::MatrixXd x_train_;
    std::vector<double> theta_;

  public:
    void set_threads(int n_threads) { n_threads_ = std::max(1, n_threads); }
    [[nodiscard]] const std::shared_ptr<Executor> &executor() const { return exec_; }
    void set_preset_regularization(std::string reg) {
        preset_regularization_ = std::move(reg);
    }
    /// Adopt externally optimized kernel parameters (e.g. after alignment
    /// training); invalidates any fitted state.
    void set_kernel_theta(std::span<const double> theta) {
        theta_.assign(theta.begin(), theta.end());
        fitted_ = false;
    }
};

/// Kernel ridge regression: solves (K + lambda I) beta = y.
class Qkrr : public KernelHead {
  public:
    Qkrr(KernelHeadConfig config, std::shared_ptr<Executor> exec, double lambda = 1e-6)
        : KernelHead(std::move(config), std::move(exec)), lambda_(lambda) {}

    Qkrr(QuantumKernel kernel, std::shared_ptr<Executor> exec, double lambda = 1e-6)
        : KernelHead(std::move(kernel), std::move(exec)), lambda_(lambda) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        const QuantumKernel kernel = make_kernel(static_cast<int>(X.cols()));
        const GramMatrix gram = train_gram(kernel, X);
        if (!gram.values.allFinite()) {
            throw NumericError("non-finite kernel entries in QKRR fit");
        }
        const Eigen::Index n = X.rows();
        const Eigen::MatrixXd system =
            gram.values + lambda_ * Eigen::MatrixXd::Identity(n, n);
        beta_ = Eigen::LDLT<Eigen::MatrixXd>(system).solve(y);
        capture_fit(kernel, X);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        require_fitted();
        if (X.rows() == 0) {
            return Eigen::VectorXd(0);
        }
        return cross_gram(X) * beta_;
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<Qkrr>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return false; }

    [[nodiscard]] const Eigen::VectorXd &dual_coefficients() const { return beta_; }

    void save(std::ostream &os) const {
        os << "qmlkit-estimator v1\nkind qkrr\n";
        save_params(os, get_params());
        detail::write_vector(os, "theta", to_eigen(theta_));
        detail::write_matrix(os, "x_train", x_train_);
        detail::write_vector(os, "beta", beta_);
    }

    static void save_params(std::ostream &os, const ParamMap &params) {
        os << "params " << params.size() << "\n";
        for (const auto &[key, value] : params) {
            os << key << " " << param_to_string(value) << "\n";
        }
    }

    static Eigen::VectorXd to_eigen(const std::vector<double> &v) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            out(static_cast<Eigen::Index>(i)) = v[i];
        }
        return out;
    }

  private:
    double lambda_;
    Eigen::VectorXd beta_;

    void extra_params(ParamMap &params) const override { params["lambda"] = lambda_; }

    bool set_extra_param(const std::string &key, const ParamValue &value) override {
        if (key == "lambda") {
            lambda_ = param_double(value);
            return true;
        }
        return false;
    }
};

/// Gaussian-process regression head; stores the Cholesky factor of
/// (K + sigma^2 I) and the prior weights beta.
class Qgpr : public KernelHead {
  public:
    Qgpr(KernelHeadConfig config, std::shared_ptr<Executor> exec, double sigma_sq = 1e-8)
        : KernelHead(std::move(config), std::move(exec)), sigma_sq_(sigma_sq) {}

    Qgpr(QuantumKernel kernel, std::shared_ptr<Executor> exec, double sigma_sq = 1e-8)
        : KernelHead(std::move(kernel), std::move(exec)), sigma_sq_(sigma_sq) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        const QuantumKernel kernel = make_kernel(static_cast<int>(X.cols()));
        const GramMatrix gram = train_gram(kernel, X);
        if (!gram.values.allFinite()) {
            throw NumericError("non-finite kernel entries in QGPR fit");
        }
        const Eigen::Index n = X.rows();
        Eigen::MatrixXd system =
            gram.values + sigma_sq_ * Eigen::MatrixXd::Identity(n, n);
        double jitter = 0.0;
        llt_ = detail::cholesky_with_jitter(system, jitter);
        beta_ = llt_.solve(y);
        capture_fit(kernel, X);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        require_fitted();
        if (X.rows() == 0) {
            return Eigen::VectorXd(0);
        }
        return cross_gram(X) * beta_;
    }

    /// Posterior mean and standard deviation.
    [[nodiscard]] std::pair<Eigen::VectorXd, Eigen::VectorXd>
    predict_with_std(const Eigen::MatrixXd &X) const {
        require_fitted();
        const Eigen::MatrixXd cross = cross_gram(X);
        const Eigen::VectorXd mean = cross * beta_;
        const QuantumKernel kernel = make_kernel(static_cast<int>(x_train_.cols()));
        Eigen::VectorXd std_dev(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const auto xi = detail::eigen_row(X, i);
            const double prior = kernel.entry(xi, xi, *exec_);
            const Eigen::VectorXd k_star = cross.row(i).transpose();
            const Eigen::VectorXd v = llt_.matrixL().solve(k_star);
            std_dev(i) = std::sqrt(std::max(0.0, prior - v.squaredNorm()));
        }
        return {mean, std_dev};
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<Qgpr>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return false; }
    [[nodiscard]] const Eigen::VectorXd &dual_coefficients() const { return beta_; }

  private:
    double sigma_sq_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd beta_;

    void extra_params(ParamMap &params) const override { params["sigma_sq"] = sigma_sq_; }

    bool set_extra_param(const std::string &key, const ParamValue &value) override {
        if (key == "sigma_sq") {
            sigma_sq_ = param_double(value);
            return true;
        }
        return false;
    }
};

/// Support-vector classification on a quantum Gram; one-vs-rest above two
/// classes. Ties on the decision value map to the positive class.
class Qsvc : public KernelHead {
  public:
    Qsvc(KernelHeadConfig config, std::shared_ptr<Executor> exec, double C = 1.0)
        : KernelHead(std::move(config), std::move(exec)), c_(C) {}

    Qsvc(QuantumKernel kernel, std::shared_ptr<Executor> exec, double C = 1.0)
        : KernelHead(std::move(kernel), std::move(exec)), c_(C) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        const QuantumKernel kernel = make_kernel(static_cast<int>(X.cols()));
        const GramMatrix gram = train_gram(kernel, X);
        if (!gram.values.allFinite()) {
            throw NumericError("non-finite kernel entries in QSVC fit");
        }
        classes_.clear();
        std::set<double> labels(y.begin(), y.end());
        classes_.assign(labels.begin(), labels.end());
        if (classes_.size() < 2) {
            throw Error("classification requires at least two classes");
        }
        machines_.clear();
        if (classes_.size() == 2) {
            machines_.push_back(train_binary(gram.values, y, classes_[1]));
        } else {
            for (const double cls : classes_) {
                machines_.push_back(train_binary(gram.values, y, cls));
            }
        }
        capture_fit(kernel, X);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        require_fitted();
        if (X.rows() == 0) {
            return Eigen::VectorXd(0);
        }
        const Eigen::MatrixXd cross = cross_gram(X);
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            if (classes_.size() == 2) {
                const double value = decision(machines_[0], cross.row(i));
                out(i) = value >= 0.0 ? classes_[1] : classes_[0];
            } else {
                std::size_t best = 0;
                double best_value = -std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < machines_.size(); ++c) {
                    const double value = decision(machines_[c], cross.row(i));
                    if (value > best_value) {
                        best_value = value;
                        best = c;
                    }
                }
                out(i) = classes_[best];
            }
        }
        return out;
    }

    /// Decision values of the (first) binary machine; spans the margin.
    [[nodiscard]] Eigen::VectorXd decision_function(const Eigen::MatrixXd &X) const {
        require_fitted();
        const Eigen::MatrixXd cross = cross_gram(X);
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            out(i) = decision(machines_[0], cross.row(i));
        }
        return out;
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<Qsvc>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return true; }

    struct BinaryMachine {
        Eigen::VectorXd signed_alpha; // alpha_i * y_i
        double bias = 0.0;
        double objective = 0.0;
        std::vector<int> support;
    };

    [[nodiscard]] const std::vector<BinaryMachine> &machines() const { return machines_; }

  private:
    [[nodiscard]] BinaryMachine train_binary(const Eigen::MatrixXd &gram,
                                             const Eigen::VectorXd &y,
                                             double positive_class) const {
        Eigen::VectorXd labels(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            labels(i) = y(i) == positive_class ? 1.0 : -1.0;
        }
        const auto solution = solve_svc_dual(gram, labels, c_, tol_, max_passes_);
        BinaryMachine machine;
        machine.signed_alpha = solution.alpha.cwiseProduct(labels);
        machine.bias = solution.bias;
        machine.objective = solution.objective;
        machine.support = solution.support;
        return machine;
    }

    static double decision(const BinaryMachine &machine,
                           const Eigen::RowVectorXd &kernel_row) {
        return kernel_row * machine.signed_alpha + machine.bias;
    }

    double c_;
    double tol_ = 1e-3;
    int max_passes_ = 200;
    std::vector<double> classes_;
    std::vector<BinaryMachine> machines_;

    void extra_params(ParamMap &params) const override { params["C"] = c_; }

    bool set_extra_param(const std::string &key, const ParamValue &value) override {
        if (key == "C") {
            c_ = param_double(value);
            return true;
        }
        return false;
    }
};

/// Epsilon-insensitive support-vector regression on a quantum Gram.
class Qsvr : public KernelHead {
  public:
    Qsvr(KernelHeadConfig config, std::shared_ptr<Executor> exec, double C = 1.0,
         double epsilon = 0.1)
        : KernelHead(std::move(config), std::move(exec)), c_(C), epsilon_(epsilon) {}

    Qsvr(QuantumKernel kernel, std::shared_ptr<Executor> exec, double C = 1.0,
         double epsilon = 0.1)
        : KernelHead(std::move(kernel), std::move(exec)), c_(C), epsilon_(epsilon) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        const QuantumKernel kernel = make_kernel(static_cast<int>(X.cols()));
        const GramMatrix gram = train_gram(kernel, X);
        if (!gram.values.allFinite()) {
            throw NumericError("non-finite kernel entries in QSVR fit");
        }
        const auto solution = solve_svr_dual(gram.values, y, c_, epsilon_, tol_, max_passes_);
        beta_ = solution.beta;
        bias_ = solution.bias;
        objective_ = solution.objective;
        capture_fit(kernel, X);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        require_fitted();
        if (X.rows() == 0) {
            return Eigen::VectorXd(0);
        }
        return (cross_gram(X) * beta_).array() + bias_;
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<Qsvr>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return false; }

    [[nodiscard]] const Eigen::VectorXd &dual_coefficients() const { return beta_; }
    [[nodiscard]] double dual_objective() const { return objective_; }

  private:
    double c_;
    double epsilon_;
    double tol_ = 1e-3;
    int max_passes_ = 200;
    Eigen::VectorXd beta_;
    double bias_ = 0.0;
    double objective_ = 0.0;

    void extra_params(ParamMap &params) const override {
        params["C"] = c_;
        params["epsilon"] = epsilon_;
    }

    bool set_extra_param(const std::string &key, const ParamValue &value) override {
        if (key == "C") {
            c_ = param_double(value);
            return true;
        }
        if (key == "epsilon") {
            epsilon_ = param_double(value);
            return true;
        }
        return false;
    }
};

/// Reads a params block written by Qkrr::save_params.
inline ParamMap load_params_block(std::istream &in) {
    std::string tag;
    std::size_t count = 0;
    in >> tag >> count;
    if (tag != "params") {
        throw Error("expected params block, found: " + tag);
    }
    ParamMap params;
    for (std::size_t i = 0; i < count; ++i) {
        std::string key;
        std::string value;
        in >> key >> value;
        // Recover the value type: integers, then doubles, then strings.
        char *end = nullptr;
        const long long as_int = std::strtoll(value.c_str(), &end, 10);
        if (end != nullptr && *end == '\0' && value.find('.') == std::string::npos &&
            value.find('e') == std::string::npos) {
            params[key] = as_int;
            continue;
        }
        end = nullptr;
        const double as_double = std::strtod(value.c_str(), &end);
        if (end != nullptr && *end == '\0') {
            params[key] = as_double;
            continue;
        }
        params[key] = value;
    }
    return params;
}

/// Rebuilds a config-built QKRR from its text document.
inline Qkrr load_qkrr(std::istream &in, std::shared_ptr<Executor> exec) {
    std::string header;
    std::getline(in, header);
    if (header != "qmlkit-estimator v1") {
        throw Error("unrecognized estimator header: " + header);
    }
    std::string kind_tag;
    std::string kind;
    in >> kind_tag >> kind;
    if (kind_tag != "kind" || kind != "qkrr") {
        throw Error("expected a qkrr document");
    }
    ParamMap params = load_params_block(in);
    const double lambda = param_double(params.at("lambda"));
    params.erase("lambda");
    KernelHeadConfig config;
    for (const auto &[key, value] : params) {
        if (!config.set(key, value)) {
            throw Error("unknown stored hyperparameter \"" + key + "\"");
        }
    }
    Qkrr estimator(config, std::move(exec), lambda);
    const Eigen::VectorXd theta = detail::read_vector(in, "theta");
    const Eigen::MatrixXd x_train = detail::read_matrix(in, "x_train");
    const Eigen::VectorXd beta = detail::read_vector(in, "beta");
    estimator.restore_fit(theta, x_train, beta);
    return estimator;
}

// ---------------------------------------------------------------------------
// QNN heads
// ---------------------------------------------------------------------------

/// Rebuildable QNN description: circuit, observable and training knobs.
struct QnnHeadConfig {
    std::string encoding = "chebyshev";
    long long n_qubits = 4;
    long long n_layers = 1;
    std::string observable = "summed_paulis"; // "summed_paulis" | "ising"
    std::string optimizer = "adam";
    double lr = 0.1;
    long long epochs = 100;
    long long batch_size = 0; // 0 = full batch
    double variance_weight = 0.0;
    long long seed = 0;
    std::string shot_control = "fixed"; // "fixed" | "rstd"
    double target_rstd = 0.1;

    [[nodiscard]] ParamMap params() const {
        return {
            {"encoding", encoding},
            {"n_qubits", n_qubits},
            {"n_layers", n_layers},
            {"observable", observable},
            {"optimizer", optimizer},
            {"lr", lr},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"variance_weight", variance_weight},
            {"seed", seed},
            {"shot_control", shot_control},
            {"target_rstd", target_rstd},
        };
    }

    bool set(const std::string &key, const ParamValue &value) {
        if (key == "encoding") {
            encoding = param_string(value);
        } else if (key == "n_qubits") {
            n_qubits = param_int(value);
        } else if (key == "n_layers") {
            n_layers = param_int(value);
        } else if (key == "observable") {
            observable = param_string(value);
        } else if (key == "optimizer") {
            optimizer = param_string(value);
        } else if (key == "lr") {
            lr = param_double(value);
        } else if (key == "epochs") {
            epochs = param_int(value);
        } else if (key == "batch_size") {
            batch_size = param_int(value);
        } else if (key == "variance_weight") {
            variance_weight = param_double(value);
        } else if (key == "seed") {
            seed = param_int(value);
        } else if (key == "shot_control") {
            shot_control = param_string(value);
        } else if (key == "target_rstd") {
            target_rstd = param_double(value);
        } else {
            return false;
        }
        return true;
    }

    [[nodiscard]] QnnModel build(int n_features) const {
        EncodingCircuit circuit =
            build_named_circuit(encoding, static_cast<int>(n_qubits), n_features,
                                static_cast<int>(n_layers));
        PauliObservable obs =
            observable == "ising"
                ? PauliObservable::ising_hamiltonian(static_cast<int>(n_qubits))
                : PauliObservable::summed_paulis(static_cast<int>(n_qubits));
        return QnnModel(std::move(circuit), std::move(obs));
    }

    [[nodiscard]] TrainConfig train_config(long long plan_shots) const {
        TrainConfig config;
        config.optimizer = optimizer == "sgd" ? OptimizerConfig::sgd(lr)
                                              : OptimizerConfig::adam(lr);
        config.epochs = static_cast<int>(epochs);
        if (batch_size > 0) {
            config.batch_size = static_cast<int>(batch_size);
        }
        config.variance_weight = variance_weight;
        config.seed = static_cast<std::uint64_t>(seed);
        if (shot_control == "rstd") {
            config.shot_policy =
                ShotPolicy::rstd(target_rstd, 100, std::max<long long>(plan_shots, 100));
        } else {
            config.shot_policy = ShotPolicy::fixed(0);
        }
        return config;
    }
};

namespace detail {

/// Shared fit/predict plumbing of QNNRegressor and QNNClassifier.
class QnnHead : public Estimator {
  public:
    [[nodiscard]] bool is_fitted() const override { return model_.has_value(); }

    [[nodiscard]] ParamMap get_params() const override {
        if (preset_) {
            ParamMap params;
            params["optimizer"] = config_.optimizer;
            params["lr"] = config_.lr;
            params["epochs"] = config_.epochs;
            params["batch_size"] = config_.batch_size;
            params["variance_weight"] = config_.variance_weight;
            params["seed"] = config_.seed;
            params["shot_control"] = config_.shot_control;
            params["target_rstd"] = config_.target_rstd;
            return params;
        }
        return config_.params();
    }

    void set_params(const ParamMap &params) override {
        const std::set<std::string> structural{"encoding", "n_qubits", "n_layers",
                                               "observable"};
        for (const auto &[key, value] : params) {
            if (preset_ && structural.contains(key)) {
                throw ConfigError("structural hyperparameter \"" + key +
                                  "\" requires a config-built estimator");
            }
            if (!config_.set(key, value)) {
                throw ConfigError("unknown hyperparameter \"" + key + "\"");
            }
        }
        model_.reset();
    }

    [[nodiscard]] const QnnModel &model() const {
        if (!model_) {
            throw NotFittedError();
        }
        return *model_;
    }

    [[nodiscard]] const std::vector<double> &loss_history() const { return loss_history_; }

  protected:
    QnnHead(QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : config_(std::move(config)), exec_(std::move(exec)) {}

    QnnHead(QnnModel model, QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : config_(std::move(config)), exec_(std::move(exec)), preset_(std::move(model)) {}

    void train(const Eigen::MatrixXd &X, const Eigen::VectorXd &targets, bool squash) {
        QnnModel model = preset_ ? *preset_ : config_.build(static_cast<int>(X.cols()));
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(X.rows()));
        std::vector<std::vector<double>> ys(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            rows[static_cast<std::size_t>(i)] = eigen_row(X, i);
            ys[static_cast<std::size_t>(i)] = {targets(i)};
        }
        TrainConfig train = config_.train_config(exec_->plan().shots);
        train.squash_tanh = squash;
        const auto result = qnn_fit(model, rows, ys, train, *exec_);
        loss_history_ = result.loss_history;
        model_ = std::move(model);
    }

    [[nodiscard]] Eigen::VectorXd raw_outputs(const Eigen::MatrixXd &X) const {
        if (!model_) {
            throw NotFittedError();
        }
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            out(i) = model_->evaluate(eigen_row(X, i), *exec_)[0];
        }
        return out;
    }

    QnnHeadConfig config_;
    std::shared_ptr<Executor> exec_;
    std::optional<QnnModel> preset_;
    std::optional<QnnModel> model_;
    std::vector<double> loss_history_;
};

} // namespace detail

/// QNN regression head trained with the squared loss.
class QnnRegressor : public detail::QnnHead {
  public:
    QnnRegressor(QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : QnnHead(std::move(config), std::move(exec)) {}

    QnnRegressor(QnnModel model, QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : QnnHead(std::move(model), std::move(config), std::move(exec)) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        train(X, y, false);
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        if (X.rows() == 0) {
            if (!model_) {
                throw NotFittedError();
            }
            return Eigen::VectorXd(0);
        }
        return raw_outputs(X);
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<QnnRegressor>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return false; }
};

/**
 * @brief QNN classification head. Labels are mapped to +-1 targets (one-vs-
 * rest above two classes), the raw output is squashed with tanh during
 * training, and prediction takes the sign with ties resolved to the
 * positive class.
 */
class QnnClassifier : public detail::QnnHead {
  public:
    QnnClassifier(QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : QnnHead(std::move(config), std::move(exec)) {}

    QnnClassifier(QnnModel model, QnnHeadConfig config, std::shared_ptr<Executor> exec)
        : QnnHead(std::move(model), std::move(config), std::move(exec)) {}

    void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) override {
        std::set<double> labels(y.begin(), y.end());
        classes_.assign(labels.begin(), labels.end());
        if (classes_.size() < 2) {
            throw Error("classification requires at least two classes");
        }
        ovr_models_.clear();
        if (classes_.size() == 2) {
            Eigen::VectorXd targets(y.size());
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                targets(i) = y(i) == classes_[1] ? 1.0 : -1.0;
            }
            train(X, targets, true);
            return;
        }
        for (const double cls : classes_) {
            Eigen::VectorXd targets(y.size());
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                targets(i) = y(i) == cls ? 1.0 : -1.0;
            }
            train(X, targets, true);
            ovr_models_.push_back(std::move(*model_));
        }
        // keep the last model as the fitted marker
        model_ = ovr_models_.back();
    }

    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd &X) const override {
        if (!model_) {
            throw NotFittedError();
        }
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const auto x = detail::eigen_row(X, i);
            if (classes_.size() == 2) {
                const double raw = model_->evaluate(x, *exec_)[0];
                out(i) = raw >= 0.0 ? classes_[1] : classes_[0];
            } else {
                std::size_t best = 0;
                double best_value = -std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < ovr_models_.size(); ++c) {
                    const double raw = ovr_models_[c].evaluate(x, *exec_)[0];
                    if (raw > best_value) {
                        best_value = raw;
                        best = c;
                    }
                }
                out(i) = classes_[best];
            }
        }
        return out;
    }

    [[nodiscard]] double score(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) const {
        const Eigen::VectorXd pred = predict(X);
        double correct = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (pred(i) == y(i)) {
                correct += 1.0;
            }
        }
        return correct / static_cast<double>(y.size());
    }

    [[nodiscard]] std::unique_ptr<Estimator> clone() const override {
        return std::make_unique<QnnClassifier>(*this);
    }
    [[nodiscard]] bool is_classifier() const override { return true; }

  private:
    std::vector<double> classes_;
    std::vector<QnnModel> ovr_models_;
};

} // namespace qmlkit
