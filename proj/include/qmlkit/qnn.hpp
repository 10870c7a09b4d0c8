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
 * Low-level QNN engine: evaluates f(x, theta) = <psi(x, theta)|O|psi(x, theta)>
 * for one or more observables, differentiates it to first and second order
 * with the parameter-shift rule, and trains it by gradient descent.
 *
 * Derivatives follow the two-term shift rule per occurrence,
 *     d<O>/dtheta = 1/2 * phi'(theta) * (<O>_+ - <O>_-),
 * where the shift of +-pi/2 is applied to the bound gate angle and
 * phi'(theta) is the chain factor of the angle expression. Parameters
 * appearing in several gates are handled by summing over occurrences
 * (product rule); second derivatives apply the rule recursively and pick up
 * the phi'' chain term. Observable coefficients enter linearly, so their
 * derivatives are plain term expectations.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "circuit.hpp"
#include "errors.hpp"
#include "executor.hpp"
#include "observable.hpp"
#include "optimize.hpp"
#include "rng.hpp"

namespace qmlkit {

/// Differentiation target for QNN derivatives.
struct DiffVar {
    enum class Kind { Param, Feature, ObsCoeff };
    Kind kind = Kind::Param;
    int index = 0;

    static DiffVar param(int i) { return {Kind::Param, i}; }
    static DiffVar feature(int j) { return {Kind::Feature, j}; }
    static DiffVar obs_coeff(int k) { return {Kind::ObsCoeff, k}; }
};

/**
 * @brief QNN model: an encoding circuit, one or more observables and the
 * current parameter values. Multi-output models evaluate all observables on
 * one prepared state.
 */
class QnnModel {
  public:
    QnnModel(EncodingCircuit circuit, PauliObservable observable)
        : QnnModel(std::move(circuit), std::vector<PauliObservable>{std::move(observable)}) {}

    QnnModel(EncodingCircuit circuit, std::vector<PauliObservable> observables)
        : circuit_(std::move(circuit)), observables_(std::move(observables)),
          theta_(static_cast<std::size_t>(circuit_.num_params()), 0.0) {
        if (observables_.empty()) {
            throw Error("QNN model needs at least one observable");
        }
        for (const auto &obs : observables_) {
            if (obs.num_qubits() != circuit_.num_qubits()) {
                throw Error("observable qubit count does not match the circuit");
            }
        }
        rebuild_slots();
    }

    [[nodiscard]] const EncodingCircuit &circuit() const { return circuit_; }
    [[nodiscard]] const std::vector<PauliObservable> &observables() const {
        return observables_;
    }
    [[nodiscard]] int num_outputs() const { return static_cast<int>(observables_.size()); }
    [[nodiscard]] int num_params() const { return circuit_.num_params(); }
    [[nodiscard]] int num_coefficients() const { return static_cast<int>(slots_.size()); }

    [[nodiscard]] const std::vector<double> &theta() const { return theta_; }

    void set_theta(std::span<const double> theta) {
        if (static_cast<int>(theta.size()) != circuit_.num_params()) {
            throw Error("theta length does not match circuit parameters");
        }
        theta_.assign(theta.begin(), theta.end());
    }

    /// Flattened trainable observable coefficients, over outputs in order.
    [[nodiscard]] std::vector<double> coefficients() const {
        std::vector<double> c;
        for (const auto &[obs, term] : slots_) {
            c.push_back(observables_[static_cast<std::size_t>(obs)]
                            .terms()[static_cast<std::size_t>(term)]
                            .coefficient);
        }
        return c;
    }

    void set_coefficients(std::span<const double> c) {
        if (c.size() != slots_.size()) {
            throw Error("coefficient vector length mismatch");
        }
        for (std::size_t o = 0; o < observables_.size(); ++o) {
            std::vector<double> per_obs;
            for (std::size_t s = 0; s < slots_.size(); ++s) {
                if (slots_[s].first == static_cast<int>(o)) {
                    per_obs.push_back(c[s]);
                }
            }
            observables_[o].set_trainable_coefficients(per_obs);
        }
        squares_.clear();
        sym_products_.clear();
    }

    /// One value per observable; results flow through the executor cache.
    [[nodiscard]] std::vector<double>
    evaluate(std::span<const double> x, Executor &exec,
             std::optional<long long> shots = std::nullopt) const {
        EvalRequest req;
        req.program = circuit_.bind(x, theta_);
        req.observables = observables_;
        req.shots_override = shots;
        return exec.run(req);
    }

    /// Var[f_o] = <O_o^2> - <O_o>^2 per output.
    [[nodiscard]] std::vector<double>
    variance(std::span<const double> x, Executor &exec,
             std::optional<long long> shots = std::nullopt) const {
        ensure_squares();
        EvalRequest req;
        req.program = circuit_.bind(x, theta_);
        req.observables = observables_;
        req.observables.insert(req.observables.end(), squares_.begin(), squares_.end());
        req.shots_override = shots;
        const auto r = exec.run(req);
        const std::size_t b = observables_.size();
        std::vector<double> var(b);
        for (std::size_t o = 0; o < b; ++o) {
            var[o] = r[b + o] - r[o] * r[o];
        }
        return var;
    }

    /**
     * @brief Mixed derivative of every output with respect to up to two
     * targets (parameters, features or observable coefficients).
     */
    [[nodiscard]] std::vector<double>
    derivative(std::span<const double> x, std::span<const DiffVar> vars, Executor &exec,
               std::optional<long long> shots = std::nullopt) const {
        if (vars.size() > 2) {
            throw Error("derivative order > 2 is not supported directly; "
                        "compose first- and second-order requests instead");
        }
        validate_vars(vars);
        // Observable-coefficient targets reduce to term expectations.
        std::vector<DiffVar> circuit_vars;
        std::optional<int> coeff_slot;
        for (const auto &v : vars) {
            if (v.kind == DiffVar::Kind::ObsCoeff) {
                if (coeff_slot) {
                    return std::vector<double>(observables_.size(), 0.0);
                }
                coeff_slot = v.index;
            } else {
                circuit_vars.push_back(v);
            }
        }
        if (coeff_slot) {
            const auto [obs_idx, term_idx] = slots_[static_cast<std::size_t>(*coeff_slot)];
            PauliObservable term_obs(circuit_.num_qubits());
            term_obs.add_term({1.0,
                               observables_[static_cast<std::size_t>(obs_idx)]
                                   .terms()[static_cast<std::size_t>(term_idx)]
                                   .string,
                               false});
            const auto partial =
                derive_observables(x, circuit_vars, {term_obs}, exec, shots);
            std::vector<double> out(observables_.size(), 0.0);
            out[static_cast<std::size_t>(obs_idx)] = partial[0];
            return out;
        }
        return derive_observables(x, circuit_vars, observables_, exec, shots);
    }

    /// Gradient of every output with respect to all circuit parameters
    /// (outputs-major layout: result[o * K + k]).
    [[nodiscard]] std::vector<double>
    parameter_gradient(std::span<const double> x, Executor &exec,
                       std::optional<long long> shots = std::nullopt) const {
        const int k = circuit_.num_params();
        std::vector<double> out(observables_.size() * static_cast<std::size_t>(k));
        for (int p = 0; p < k; ++p) {
            const DiffVar var = DiffVar::param(p);
            const auto d = derivative(x, std::span<const DiffVar>(&var, 1), exec, shots);
            for (std::size_t o = 0; o < d.size(); ++o) {
                out[o * static_cast<std::size_t>(k) + static_cast<std::size_t>(p)] = d[o];
            }
        }
        return out;
    }

    /// d<O_o>/dc_s for every trainable coefficient slot (exact or sampled).
    [[nodiscard]] std::vector<double>
    coefficient_expectations(std::span<const double> x, Executor &exec,
                             std::optional<long long> shots = std::nullopt) const {
        if (slots_.empty()) {
            return {};
        }
        EvalRequest req;
        req.program = circuit_.bind(x, theta_);
        for (const auto &[obs, term] : slots_) {
            PauliObservable single(circuit_.num_qubits());
            single.add_term({1.0,
                             observables_[static_cast<std::size_t>(obs)]
                                 .terms()[static_cast<std::size_t>(term)]
                                 .string,
                             false});
            req.observables.push_back(std::move(single));
        }
        req.shots_override = shots;
        return exec.run(req);
    }

    /// (observable index, term index) of flattened coefficient slot s.
    [[nodiscard]] std::pair<int, int> coefficient_slot(int s) const {
        return slots_[static_cast<std::size_t>(s)];
    }

    [[nodiscard]] const std::vector<PauliObservable> &squared_observables() const {
        ensure_squares();
        return squares_;
    }

    /// Hermitian products sym(P_s O_o) used by the variance gradient.
    [[nodiscard]] const std::vector<PauliObservable> &symmetrized_slot_products() const {
        ensure_sym_products();
        return sym_products_;
    }

  private:
    friend struct QnnTrainer;

    void rebuild_slots() {
        slots_.clear();
        for (std::size_t o = 0; o < observables_.size(); ++o) {
            const auto &terms = observables_[o].terms();
            for (std::size_t t = 0; t < terms.size(); ++t) {
                if (terms[t].trainable) {
                    slots_.emplace_back(static_cast<int>(o), static_cast<int>(t));
                }
            }
        }
    }

    void validate_vars(std::span<const DiffVar> vars) const {
        for (const auto &v : vars) {
            switch (v.kind) {
            case DiffVar::Kind::Param:
                if (v.index < 0 || v.index >= circuit_.num_params()) {
                    throw Error("derivative parameter index out of range");
                }
                break;
            case DiffVar::Kind::Feature:
                if (v.index < 0 || v.index >= circuit_.num_features()) {
                    throw Error("derivative feature index out of range");
                }
                break;
            case DiffVar::Kind::ObsCoeff:
                if (v.index < 0 || v.index >= static_cast<int>(slots_.size())) {
                    throw Error("derivative coefficient index out of range");
                }
                break;
            }
        }
    }

    static CircuitVar to_circuit_var(const DiffVar &v) {
        return v.kind == DiffVar::Kind::Param ? CircuitVar::param(v.index)
                                              : CircuitVar::feature(v.index);
    }

    [[nodiscard]] std::vector<double>
    eval_shifted(const BoundProgram &base,
                 std::span<const std::pair<int, double>> shifts,
                 const std::vector<PauliObservable> &obs, Executor &exec,
                 std::optional<long long> shots) const {
        EvalRequest req;
        req.program = base;
        for (const auto &[g, delta] : shifts) {
            auto &angle = req.program.gates[static_cast<std::size_t>(g)].angle;
            angle = angle.value_or(0.0) + delta;
        }
        req.observables = obs;
        req.shots_override = shots;
        return exec.run(req);
    }

    [[nodiscard]] std::vector<double>
    derive_observables(std::span<const double> x, std::span<const DiffVar> vars,
                       const std::vector<PauliObservable> &obs, Executor &exec,
                       std::optional<long long> shots) const {
        if (vars.empty()) {
            EvalRequest req;
            req.program = circuit_.bind(x, theta_);
            req.observables = obs;
            req.shots_override = shots;
            return exec.run(req);
        }
        const BoundProgram base = circuit_.bind(x, theta_);
        constexpr double half_pi = std::numbers::pi / 2.0;
        const std::size_t n_out = obs.size();
        std::vector<double> result(n_out, 0.0);
        if (vars.size() == 1) {
            const CircuitVar a = to_circuit_var(vars[0]);
            for (const auto &[g, chain] : circuit_.occurrences(base, x, theta_, a)) {
                if (chain == 0.0) {
                    continue;
                }
                const std::pair<int, double> plus{g, half_pi};
                const std::pair<int, double> minus{g, -half_pi};
                const auto up = eval_shifted(base, {&plus, 1}, obs, exec, shots);
                const auto down = eval_shifted(base, {&minus, 1}, obs, exec, shots);
                for (std::size_t o = 0; o < n_out; ++o) {
                    result[o] += 0.5 * chain * (up[o] - down[o]);
                }
            }
            return result;
        }
        // Second order: chain-rule expansion
        //   d2f = sum_g phi_g'' D_g + sum_{g,h} phi_g' phi_h' D_gh.
        const CircuitVar a = to_circuit_var(vars[0]);
        const CircuitVar b = to_circuit_var(vars[1]);
        for (std::size_t g = 0; g < base.gates.size(); ++g) {
            const auto &bi = base.info[g];
            if (bi.circuit_gate < 0) {
                continue;
            }
            const auto &expr =
                *circuit_.gates()[static_cast<std::size_t>(bi.circuit_gate)].angle;
            const double c2 = bi.sub_scale * expr.d2(x, theta_, a, b);
            if (c2 == 0.0) {
                continue;
            }
            const std::pair<int, double> plus{static_cast<int>(g), half_pi};
            const std::pair<int, double> minus{static_cast<int>(g), -half_pi};
            const auto up = eval_shifted(base, {&plus, 1}, obs, exec, shots);
            const auto down = eval_shifted(base, {&minus, 1}, obs, exec, shots);
            for (std::size_t o = 0; o < n_out; ++o) {
                result[o] += 0.5 * c2 * (up[o] - down[o]);
            }
        }
        const auto occ_a = circuit_.occurrences(base, x, theta_, a);
        const auto occ_b = circuit_.occurrences(base, x, theta_, b);
        for (const auto &[g, ca] : occ_a) {
            if (ca == 0.0) {
                continue;
            }
            for (const auto &[h, cb] : occ_b) {
                if (cb == 0.0) {
                    continue;
                }
                const std::pair<int, double> pp[2] = {{g, half_pi}, {h, half_pi}};
                const std::pair<int, double> pm[2] = {{g, half_pi}, {h, -half_pi}};
                const std::pair<int, double> mp[2] = {{g, -half_pi}, {h, half_pi}};
                const std::pair<int, double> mm[2] = {{g, -half_pi}, {h, -half_pi}};
                const auto fpp = eval_shifted(base, pp, obs, exec, shots);
                const auto fpm = eval_shifted(base, pm, obs, exec, shots);
                const auto fmp = eval_shifted(base, mp, obs, exec, shots);
                const auto fmm = eval_shifted(base, mm, obs, exec, shots);
                for (std::size_t o = 0; o < n_out; ++o) {
                    result[o] += 0.25 * ca * cb * (fpp[o] - fpm[o] - fmp[o] + fmm[o]);
                }
            }
        }
        return result;
    }

    void ensure_squares() const {
        if (squares_.size() == observables_.size()) {
            return;
        }
        squares_.clear();
        for (const auto &obs : observables_) {
            squares_.push_back(obs.square());
        }
    }

    void ensure_sym_products() const {
        if (sym_products_.size() == slots_.size()) {
            return;
        }
        sym_products_.clear();
        for (const auto &[obs_idx, term_idx] : slots_) {
            PauliObservable single(circuit_.num_qubits());
            single.add_term({1.0,
                             observables_[static_cast<std::size_t>(obs_idx)]
                                 .terms()[static_cast<std::size_t>(term_idx)]
                                 .string,
                             false});
            sym_products_.push_back(single.symmetrized_product(
                observables_[static_cast<std::size_t>(obs_idx)]));
        }
    }

    EncodingCircuit circuit_;
    std::vector<PauliObservable> observables_;
    std::vector<double> theta_;
    std::vector<std::pair<int, int>> slots_;
    mutable std::vector<PauliObservable> squares_;
    mutable std::vector<PauliObservable> sym_products_;
};

// ---------------------------------------------------------------------------
// Shot control
// ---------------------------------------------------------------------------

/// Shot budgeting for gradient evaluations on sampled backends.
struct ShotPolicy {
    enum class Mode { Fixed, RstdAdaptive };
    Mode mode = Mode::Fixed;
    long long shots = 0; // Fixed; 0 falls back to the plan's shot count
    double target_rstd = 0.1;
    long long min_shots = 100;
    long long max_shots = 10000;

    static ShotPolicy fixed(long long shots) {
        ShotPolicy p;
        p.mode = Mode::Fixed;
        p.shots = shots;
        return p;
    }

    static ShotPolicy rstd(double target, long long min_shots, long long max_shots) {
        if (!(target > 0.0) || min_shots < 1 || max_shots < min_shots) {
            throw ConfigError("invalid RSTD shot policy");
        }
        ShotPolicy p;
        p.mode = Mode::RstdAdaptive;
        p.target_rstd = target;
        p.min_shots = min_shots;
        p.max_shots = max_shots;
        return p;
    }
};

/**
 * @brief Shots needed so the relative standard deviation of a mean estimate
 * roughly matches the policy target: ceil(var / (rstd * max(|value|, 1e-3))^2),
 * clamped to [min_shots, max_shots]. Fixed policies return their constant.
 */
inline long long choose_shots(const ShotPolicy &policy, double value_estimate,
                              double variance_estimate) {
    if (variance_estimate < 0.0) {
        variance_estimate = 0.0;
    }
    if (policy.mode == ShotPolicy::Mode::Fixed) {
        return policy.shots;
    }
    constexpr double eps_floor = 1e-3;
    const double denom = policy.target_rstd * std::max(std::abs(value_estimate), eps_floor);
    const double raw = variance_estimate / (denom * denom);
    const long long wanted = static_cast<long long>(std::ceil(raw));
    return std::clamp(wanted, policy.min_shots, policy.max_shots);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class LossKind { SquaredLoss };

struct TrainConfig {
    LossKind loss = LossKind::SquaredLoss;
    OptimizerConfig optimizer = OptimizerConfig::adam(0.1);
    int epochs = 100;
    std::optional<int> batch_size{};
    double variance_weight = 0.0; // alpha
    ShotPolicy shot_policy = ShotPolicy::fixed(0);
    std::uint64_t seed = 0;
    bool squash_tanh = false; // classifier head: fit tanh(f) to +-1 targets
    bool init_params = true;
};

struct FitResult {
    std::vector<double> loss_history;
};

/// Mean squared loss plus alpha-weighted output variance over a batch.
inline double regularized_loss(const QnnModel &model,
                               const std::vector<std::vector<double>> &X,
                               const std::vector<std::vector<double>> &Y, double alpha,
                               Executor &exec, bool squash_tanh = false) {
    if (X.empty()) {
        throw Error("empty batch");
    }
    if (alpha < 0.0) {
        throw Error("variance weight must be non-negative");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto f = model.evaluate(X[i], exec);
        for (std::size_t o = 0; o < f.size(); ++o) {
            const double out = squash_tanh ? std::tanh(f[o]) : f[o];
            const double r = out - Y[i][o];
            loss += r * r;
        }
        if (alpha > 0.0) {
            const auto var = model.variance(X[i], exec);
            for (const double v : var) {
                loss += alpha * v;
            }
        }
    }
    return loss / static_cast<double>(X.size());
}

struct QnnTrainer {
    /**
     * @brief Gradient-descent training of theta and the trainable observable
     * coefficients. Deterministic per config seed on the exact backend.
     *
     * Shifted-circuit evaluations within an epoch are deduplicated by the
     * executor cache; the memory cache is cleared at each epoch boundary to
     * keep it bounded (stale entries cannot be hit again once theta moved).
     */
    static FitResult fit(QnnModel &model, const std::vector<std::vector<double>> &X,
                         const std::vector<std::vector<double>> &Y, const TrainConfig &config,
                         Executor &exec) {
        const std::size_t n = X.size();
        if (n == 0 || Y.size() != n) {
            throw Error("training data shape mismatch");
        }
        for (const auto &y : Y) {
            if (static_cast<int>(y.size()) != model.num_outputs()) {
                throw Error("label width does not match the model output count");
            }
        }
        FitResult result;
        if (config.epochs <= 0) {
            return result;
        }
        const int k = model.num_params();
        const int c = model.num_coefficients();
        if (config.init_params && k > 0) {
            Rng rng(derive_seed(config.seed, {0x7e7a11u}));
            std::vector<double> theta(static_cast<std::size_t>(k));
            for (auto &t : theta) {
                t = rng.uniform(-std::numbers::pi, std::numbers::pi);
            }
            model.set_theta(theta);
        }
        const std::size_t batch =
            config.batch_size ? static_cast<std::size_t>(*config.batch_size) : n;
        if (batch < 1 || batch > n) {
            throw Error("batch size must lie in [1, N]");
        }
        GradientStepper stepper(config.optimizer, static_cast<std::size_t>(k + c));
        const bool sampled = exec.plan().backend != Backend::Exact;
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) {
                order[i] = i;
            }
            Rng shuffle_rng(derive_seed(config.seed, {0xba7c4u, static_cast<std::uint64_t>(epoch)}));
            for (std::size_t i = n; i > 1; --i) {
                std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
            }
            for (std::size_t start = 0; start < n; start += batch) {
                const std::size_t stop = std::min(start + batch, n);
                std::vector<double> grad(static_cast<std::size_t>(k + c), 0.0);
                for (std::size_t j = start; j < stop; ++j) {
                    accumulate_sample(model, X[order[j]], Y[order[j]], config, sampled, exec,
                                      grad);
                }
                const double inv = 1.0 / static_cast<double>(stop - start);
                for (auto &g : grad) {
                    g *= inv;
                }
                std::vector<double> flat = model.theta();
                const auto coeffs = model.coefficients();
                flat.insert(flat.end(), coeffs.begin(), coeffs.end());
                stepper.step(flat, grad);
                model.set_theta(std::span<const double>(flat.data(), static_cast<std::size_t>(k)));
                model.set_coefficients(
                    std::span<const double>(flat.data() + k, static_cast<std::size_t>(c)));
            }
            // Full-batch loss at epoch end, also under mini-batching.
            const double loss = regularized_loss(model, X, Y, config.variance_weight, exec,
                                                 config.squash_tanh);
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch));
            }
            result.loss_history.push_back(loss);
            if (exec.plan().cache == CacheMode::Memory) {
                exec.clear_memory_cache();
            }
        }
        return result;
    }

  private:
    static void accumulate_sample(QnnModel &model, const std::vector<double> &x,
                                  const std::vector<double> &y, const TrainConfig &config,
                                  bool sampled, Executor &exec, std::vector<double> &grad) {
        const int k = model.num_params();
        const int c = model.num_coefficients();
        const std::size_t b = static_cast<std::size_t>(model.num_outputs());
        const double alpha = config.variance_weight;
        const bool need_squares =
            alpha > 0.0 || (sampled && config.shot_policy.mode == ShotPolicy::Mode::RstdAdaptive);

        // Value pass: all observables (plus squares, slot terms and slot-times-
        // observable products) on the unshifted circuit share one request, so
        // compatible measurement bases share sampling passes.
        EvalRequest req;
        req.program = model.circuit().bind(x, model.theta());
        req.observables = model.observables();
        std::size_t sq_offset = 0;
        std::size_t slot_offset = 0;
        std::size_t sym_offset = 0;
        if (need_squares) {
            sq_offset = req.observables.size();
            const auto &squares = model.squared_observables();
            req.observables.insert(req.observables.end(), squares.begin(), squares.end());
        }
        if (c > 0) {
            slot_offset = req.observables.size();
            for (int s = 0; s < c; ++s) {
                const auto [obs_idx, term_idx] = model.coefficient_slot(s);
                PauliObservable single(model.circuit().num_qubits());
                single.add_term({1.0,
                                 model.observables()[static_cast<std::size_t>(obs_idx)]
                                     .terms()[static_cast<std::size_t>(term_idx)]
                                     .string,
                                 false});
                req.observables.push_back(std::move(single));
            }
            if (alpha > 0.0) {
                sym_offset = req.observables.size();
                const auto &sym = model.symmetrized_slot_products();
                req.observables.insert(req.observables.end(), sym.begin(), sym.end());
            }
        }
        const auto values = exec.run(req);

        std::vector<double> factor(b);
        for (std::size_t o = 0; o < b; ++o) {
            const double f = values[o];
            if (config.squash_tanh) {
                const double t = std::tanh(f);
                factor[o] = 2.0 * (t - y[o]) * (1.0 - t * t);
            } else {
                factor[o] = 2.0 * (f - y[o]);
            }
        }

        std::optional<long long> shift_shots;
        if (sampled) {
            if (config.shot_policy.mode == ShotPolicy::Mode::Fixed) {
                if (config.shot_policy.shots > 0) {
                    shift_shots = config.shot_policy.shots;
                }
            } else {
                double max_abs = 0.0;
                double max_var = 0.0;
                for (std::size_t o = 0; o < b; ++o) {
                    max_abs = std::max(max_abs, std::abs(values[o]));
                    max_var = std::max(max_var, values[sq_offset + o] -
                                                    values[o] * values[o]);
                }
                shift_shots = choose_shots(config.shot_policy, max_abs, max_var);
            }
        }

        // Parameter gradient by parameter shift; squares ride along when the
        // variance term needs d<O^2>/dtheta.
        if (k > 0) {
            std::vector<PauliObservable> shift_obs = model.observables();
            if (alpha > 0.0) {
                const auto &squares = model.squared_observables();
                shift_obs.insert(shift_obs.end(), squares.begin(), squares.end());
            }
            constexpr double half_pi = std::numbers::pi / 2.0;
            for (int p = 0; p < k; ++p) {
                const auto occ = model.circuit().occurrences(req.program, x, model.theta(),
                                                             CircuitVar::param(p));
                double df_sum = 0.0;
                std::vector<double> df(b, 0.0);
                std::vector<double> dsq(b, 0.0);
                for (const auto &[g, chain] : occ) {
                    if (chain == 0.0) {
                        continue;
                    }
                    const std::pair<int, double> plus{g, half_pi};
                    const std::pair<int, double> minus{g, -half_pi};
                    const auto up = model.eval_shifted(req.program, {&plus, 1}, shift_obs,
                                                       exec, shift_shots);
                    const auto down = model.eval_shifted(req.program, {&minus, 1}, shift_obs,
                                                         exec, shift_shots);
                    for (std::size_t o = 0; o < b; ++o) {
                        df[o] += 0.5 * chain * (up[o] - down[o]);
                        if (alpha > 0.0) {
                            dsq[o] += 0.5 * chain * (up[b + o] - down[b + o]);
                        }
                    }
                }
                for (std::size_t o = 0; o < b; ++o) {
                    df_sum = factor[o] * df[o];
                    if (alpha > 0.0) {
                        df_sum += alpha * (dsq[o] - 2.0 * values[o] * df[o]);
                    }
                    grad[static_cast<std::size_t>(p)] += df_sum;
                }
            }
        }

        // Coefficient gradient: d<O>/dc_s = <P_s>; the variance term adds
        // dVar/dc_s = 2 <sym(P_s O)> - 2 <O><P_s>.
        for (int s = 0; s < c; ++s) {
            const auto [obs_idx, term_idx] = model.coefficient_slot(s);
            const double p_s = values[slot_offset + static_cast<std::size_t>(s)];
            double g = factor[static_cast<std::size_t>(obs_idx)] * p_s;
            if (alpha > 0.0) {
                const double sym = values[sym_offset + static_cast<std::size_t>(s)];
                g += alpha * (2.0 * sym - 2.0 * values[static_cast<std::size_t>(obs_idx)] * p_s);
            }
            grad[static_cast<std::size_t>(k + s)] += g;
        }
    }
};

inline FitResult qnn_fit(QnnModel &model, const std::vector<std::vector<double>> &X,
                         const std::vector<std::vector<double>> &Y, const TrainConfig &config,
                         Executor &exec) {
    return QnnTrainer::fit(model, X, Y, config, exec);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void save_observable(std::ostream &os, const PauliObservable &obs) {
    os << "observable " << obs.num_qubits() << " " << obs.size() << "\n";
    char buf[40];
    for (const auto &t : obs.terms()) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.coefficient);
        os << buf << " " << t.string.str() << " " << (t.trainable ? 1 : 0) << "\n";
    }
}

inline PauliObservable load_observable(std::istream &in) {
    std::string tag;
    int n_qubits = 0;
    std::size_t n_terms = 0;
    in >> tag >> n_qubits >> n_terms;
    if (tag != "observable") {
        throw Error("expected observable block, found: " + tag);
    }
    PauliObservable obs(n_qubits);
    for (std::size_t t = 0; t < n_terms; ++t) {
        double coeff = 0.0;
        std::string text;
        int trainable = 0;
        in >> coeff >> text >> trainable;
        obs.add_term({coeff, PauliString::parse(text), trainable != 0});
    }
    return obs;
}

/**
 * @brief Writes a trained model as a text document: circuit spec, theta,
 * observable coefficients and free-form config lines. Theta and coefficients
 * round-trip bit-exactly (17 significant digits).
 */
inline void save_qnn_model(std::ostream &os, const QnnModel &model,
                           const std::map<std::string, std::string> &config = {}) {
    os << "qnn-model v1\n";
    os << model.circuit().to_text();
    os << "observables " << model.observables().size() << "\n";
    for (const auto &obs : model.observables()) {
        save_observable(os, obs);
    }
    char buf[40];
    os << "theta " << model.theta().size() << "\n";
    for (const double t : model.theta()) {
        std::snprintf(buf, sizeof(buf), "%.17g", t);
        os << buf << "\n";
    }
    os << "config " << config.size() << "\n";
    for (const auto &[key, value] : config) {
        os << key << " " << value << "\n";
    }
}

inline QnnModel load_qnn_model(std::istream &in,
                               std::map<std::string, std::string> *config = nullptr) {
    std::string header;
    std::getline(in, header);
    if (header != "qnn-model v1") {
        throw Error("unrecognized model header: " + header);
    }
    EncodingCircuit circuit = EncodingCircuit::from_text(in);
    std::string tag;
    std::size_t count = 0;
    in >> tag >> count;
    if (tag != "observables") {
        throw Error("expected observables block");
    }
    std::vector<PauliObservable> observables;
    for (std::size_t i = 0; i < count; ++i) {
        observables.push_back(load_observable(in));
    }
    QnnModel model(std::move(circuit), std::move(observables));
    in >> tag >> count;
    if (tag != "theta") {
        throw Error("expected theta block");
    }
    std::vector<double> theta(count);
    for (auto &t : theta) {
        in >> t;
    }
    model.set_theta(theta);
    in >> tag >> count;
    if (tag == "config") {
        for (std::size_t i = 0; i < count; ++i) {
            std::string key;
            std::string value;
            in >> key >> value;
            if (config != nullptr) {
                (*config)[key] = value;
            }
        }
    }
    return model;
}

} // namespace qmlkit
