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
 * SMO solver for SVM duals on precomputed Gram matrices.
 *
 * Both classification and epsilon-insensitive regression reduce to
 *
 *     min_z  1/2 z^T Q z + p^T z   s.t.  u^T z = 0,  0 <= z_i <= C,
 *
 * solved by maximal-violating-pair SMO with incremental gradient updates.
 * For SVC: Q_ij = y_i y_j K_ij, p = -1, u = y. For SVR the problem doubles
 * to z = [alpha; alpha*] with Q_ij = u_i u_j K_ij and p = [eps - y; eps + y].
 */

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace qmlkit {

struct SmoResult {
    Eigen::VectorXd z;
    double bias = 0.0;
    double objective = 0.0; // 1/2 z^T Q z + p^T z at the solution
    long long iterations = 0;
};

/// Generic box-and-equality-constrained SMO; throws NumericError when the
/// duality gap has not reached `tol` within `max_iterations` pair updates.
inline SmoResult solve_smo(const Eigen::MatrixXd &Q, const Eigen::VectorXd &p,
                           const Eigen::VectorXd &u, double C, double tol,
                           long long max_iterations) {
    const Eigen::Index m = p.size();
    SmoResult result;
    result.z = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = p; // gradient Q z + p at z = 0
    auto &z = result.z;

    const auto in_up = [&](Eigen::Index t) {
        return (u(t) > 0 && z(t) < C) || (u(t) < 0 && z(t) > 0);
    };
    const auto in_low = [&](Eigen::Index t) {
        return (u(t) > 0 && z(t) > 0) || (u(t) < 0 && z(t) < C);
    };

    double m_up = 0.0;
    double m_low = 0.0;
    for (long long iter = 0;; ++iter) {
        // Maximal violating pair.
        Eigen::Index i = -1;
        Eigen::Index j = -1;
        m_up = -std::numeric_limits<double>::infinity();
        m_low = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < m; ++t) {
            const double v = -u(t) * g(t);
            if (in_up(t) && v > m_up) {
                m_up = v;
                i = t;
            }
            if (in_low(t) && v < m_low) {
                m_low = v;
                j = t;
            }
        }
        if (i < 0 || j < 0 || m_up - m_low <= tol) {
            break;
        }
        if (iter >= max_iterations) {
            throw NumericError("SMO did not converge within " +
                               std::to_string(max_iterations) + " pair updates");
        }
        ++result.iterations;

        // Step along d_i = u_i t, d_j = -u_j t, exactly minimizing the
        // two-variable subproblem and clipping at the box.
        double a = Q(i, i) + Q(j, j) - 2.0 * u(i) * u(j) * Q(i, j);
        if (a <= 1e-12) {
            a = 1e-12;
        }
        double t_step = (m_up - m_low) / a;
        t_step = std::min(t_step, u(i) > 0 ? C - z(i) : z(i));
        t_step = std::min(t_step, u(j) > 0 ? z(j) : C - z(j));
        if (t_step <= 0.0) {
            break; // numerically stuck at a box corner
        }
        const double dz_i = u(i) * t_step;
        const double dz_j = -u(j) * t_step;
        z(i) += dz_i;
        z(j) += dz_j;
        g += Q.col(i) * dz_i + Q.col(j) * dz_j;
    }

    // Bias from free variables; midpoint of the violating bounds otherwise.
    double sum = 0.0;
    int free_count = 0;
    for (Eigen::Index t = 0; t < m; ++t) {
        if (z(t) > 1e-12 && z(t) < C - 1e-12) {
            sum += -u(t) * g(t);
            ++free_count;
        }
    }
    if (free_count > 0) {
        result.bias = sum / free_count;
    } else {
        result.bias = 0.5 * (m_up + m_low);
    }
    result.objective = 0.5 * z.dot(g + p);
    return result;
}

struct SvcSolution {
    Eigen::VectorXd alpha; // box-constrained dual coefficients, >= 0
    double bias = 0.0;
    double objective = 0.0;
    std::vector<int> support;
};

/// Classification dual on a precomputed Gram; labels must be +-1.
inline SvcSolution solve_svc_dual(const Eigen::MatrixXd &K, const Eigen::VectorXd &y,
                                  double C, double tol = 1e-3, int max_passes = 200) {
    const Eigen::Index m = y.size();
    Eigen::MatrixXd Q(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            Q(i, j) = y(i) * y(j) * K(i, j);
        }
    }
    const Eigen::VectorXd p = Eigen::VectorXd::Constant(m, -1.0);
    const auto result =
        solve_smo(Q, p, y, C, tol, static_cast<long long>(max_passes) * std::max<Eigen::Index>(m, 8));
    SvcSolution solution;
    solution.alpha = result.z;
    solution.bias = result.bias;
    solution.objective = result.objective;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (solution.alpha(i) > 1e-12) {
            solution.support.push_back(static_cast<int>(i));
        }
    }
    return solution;
}

struct SvrSolution {
    Eigen::VectorXd beta; // alpha - alpha*, signed coefficients
    double bias = 0.0;
    double objective = 0.0;
    std::vector<int> support;
};

/// Epsilon-insensitive regression dual on a precomputed Gram.
inline SvrSolution solve_svr_dual(const Eigen::MatrixXd &K, const Eigen::VectorXd &y,
                                  double C, double epsilon, double tol = 1e-3,
                                  int max_passes = 200) {
    const Eigen::Index m = y.size();
    const Eigen::Index n = 2 * m;
    Eigen::VectorXd u(n);
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < m; ++i) {
        u(i) = 1.0;
        u(m + i) = -1.0;
        p(i) = epsilon - y(i);
        p(m + i) = epsilon + y(i);
    }
    Eigen::MatrixXd Q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            Q(i, j) = u(i) * u(j) * K(i % m, j % m);
        }
    }
    const auto result =
        solve_smo(Q, p, u, C, tol, static_cast<long long>(max_passes) * std::max<Eigen::Index>(n, 8));
    SvrSolution solution;
    solution.beta = result.z.head(m) - result.z.tail(m);
    solution.bias = result.bias;
    solution.objective = result.objective;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (std::abs(solution.beta(i)) > 1e-12) {
            solution.support.push_back(static_cast<int>(i));
        }
    }
    return solution;
}

} // namespace qmlkit
