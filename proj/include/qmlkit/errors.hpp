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
 * Exception hierarchy shared by all qmlkit components.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace qmlkit {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// An argument violated a mathematical domain (e.g. arccos of |v| > 1).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Invalid user-facing configuration (bad flag value, unknown key, ...).
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// predict() or transform() was called before fit().
class NotFittedError : public Error {
  public:
    NotFittedError() : Error("estimator is not fitted; call fit() first") {}
    using Error::Error;
};

/// Numerical breakdown: diverged training loss, failed factorization, ...
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Transient execution failure; the executor retries these.
class TransientError : public Error {
  public:
    using Error::Error;
};

} // namespace qmlkit
