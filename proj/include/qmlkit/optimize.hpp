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
 * Gradient-descent optimizers used for QNN and kernel training.
 */

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qmlkit {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerConfig adam(double lr) {
        OptimizerConfig c;
        c.kind = OptimizerKind::Adam;
        c.lr = lr;
        return c;
    }

    static OptimizerConfig sgd(double lr) {
        OptimizerConfig c;
        c.kind = OptimizerKind::Sgd;
        c.lr = lr;
        return c;
    }
};

/// First-order stepper over a flat parameter vector.
class GradientStepper {
  public:
    GradientStepper(OptimizerConfig config, std::size_t n_params)
        : config_(config), m_(n_params, 0.0), v_(n_params, 0.0) {
        if (!(config.lr > 0.0)) {
            throw ConfigError("optimizer learning rate must be positive");
        }
    }

    void step(std::span<double> params, std::span<const double> grad) {
        if (params.size() != m_.size() || grad.size() != m_.size()) {
            throw Error("optimizer dimension mismatch");
        }
        if (config_.kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= config_.lr * grad[i];
            }
            return;
        }
        ++t_;
        const double b1t = 1.0 - std::pow(config_.beta1, t_);
        const double b2t = 1.0 - std::pow(config_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
            v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
            const double m_hat = m_[i] / b1t;
            const double v_hat = v_[i] / b2t;
            params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }

  private:
    OptimizerConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    int t_ = 0;
};

} // namespace qmlkit
