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
 * Estimator and transformer interfaces with string-keyed hyperparameters,
 * the glue that lets pipelines and grid search drive every model uniformly.
 */

#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "errors.hpp"

namespace qmlkit {

using ParamValue = std::variant<long long, double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

inline std::string param_to_string(const ParamValue &v) {
    if (std::holds_alternative<long long>(v)) {
        return std::to_string(std::get<long long>(v));
    }
    if (std::holds_alternative<double>(v)) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(v));
        return buf;
    }
    return std::get<std::string>(v);
}

inline long long param_int(const ParamValue &v) {
    if (std::holds_alternative<long long>(v)) {
        return std::get<long long>(v);
    }
    if (std::holds_alternative<double>(v)) {
        return static_cast<long long>(std::get<double>(v));
    }
    throw ConfigError("expected an integer hyperparameter value");
}

inline double param_double(const ParamValue &v) {
    if (std::holds_alternative<double>(v)) {
        return std::get<double>(v);
    }
    if (std::holds_alternative<long long>(v)) {
        return static_cast<double>(std::get<long long>(v));
    }
    throw ConfigError("expected a numeric hyperparameter value");
}

inline std::string param_string(const ParamValue &v) {
    if (!std::holds_alternative<std::string>(v)) {
        throw ConfigError("expected a string hyperparameter value");
    }
    return std::get<std::string>(v);
}

/// Fit/transform preprocessing step.
class Transformer {
  public:
    virtual ~Transformer() = default;

    virtual void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd *y = nullptr) = 0;
    [[nodiscard]] virtual Eigen::MatrixXd transform(const Eigen::MatrixXd &X) const = 0;
    [[nodiscard]] virtual std::unique_ptr<Transformer> clone() const = 0;

    [[nodiscard]] virtual ParamMap get_params() const { return {}; }
    virtual void set_params(const ParamMap &params) {
        if (!params.empty()) {
            throw ConfigError("unknown hyperparameter \"" + params.begin()->first + "\"");
        }
    }

    Eigen::MatrixXd fit_transform(const Eigen::MatrixXd &X,
                                  const Eigen::VectorXd *y = nullptr) {
        fit(X, y);
        return transform(X);
    }
};

/**
 * @brief Fit/predict estimator with flat string-keyed hyperparameters.
 *
 * set_params on structural keys (circuit layout, qubit or layer counts)
 * invalidates any fitted state; predict before fit throws NotFittedError.
 */
class Estimator {
  public:
    virtual ~Estimator() = default;

    virtual void fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) = 0;
    [[nodiscard]] virtual Eigen::VectorXd predict(const Eigen::MatrixXd &X) const = 0;
    [[nodiscard]] virtual std::unique_ptr<Estimator> clone() const = 0;
    [[nodiscard]] virtual bool is_classifier() const = 0;
    [[nodiscard]] virtual bool is_fitted() const = 0;

    [[nodiscard]] virtual ParamMap get_params() const = 0;
    virtual void set_params(const ParamMap &params) = 0;
};

} // namespace qmlkit
