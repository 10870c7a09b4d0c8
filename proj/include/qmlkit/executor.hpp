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
 * Central execution authority for every quantum evaluation.
 *
 * The Executor owns backend selection (exact, shot-sampled, depolarizing),
 * deterministic per-job seeding, result caching in memory or on disk, retry
 * handling for transient failures and event logging. Call sites submit an
 * EvalRequest and never talk to the simulator directly, so switching the
 * ExecutionPlan changes behaviour without touching any call site.
 *
 * Per-job seeds are derived from the base seed and the job content, which
 * makes results independent of submission order and thread scheduling.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "circuit.hpp"
#include "errors.hpp"
#include "observable.hpp"
#include "rng.hpp"
#include "state.hpp"

namespace qmlkit {

enum class Backend { Exact, Sampled, Depolarizing };
enum class CacheMode { Off, Memory, Disk };

inline const char *backend_name(Backend b) {
    switch (b) {
    case Backend::Exact:
        return "exact";
    case Backend::Sampled:
        return "sampled";
    case Backend::Depolarizing:
        return "depolarizing";
    }
    return "?";
}

inline Backend parse_backend(const std::string &name) {
    if (name == "exact") {
        return Backend::Exact;
    }
    if (name == "sampled") {
        return Backend::Sampled;
    }
    if (name == "depolarizing") {
        return Backend::Depolarizing;
    }
    throw ConfigError("unknown backend \"" + name + "\"");
}

/// Environment variable consulted for the default disk-cache directory.
inline constexpr const char *kCacheDirEnvVar = "QMLKIT_CACHE_DIR";

struct ExecutionPlan {
    Backend backend = Backend::Exact;
    long long shots = 0;
    double depol_p = 0.0;
    std::uint64_t base_seed = 0;
    CacheMode cache = CacheMode::Memory;
    std::string cache_path;
    int log_level = 0;

    void validate() const {
        if (backend != Backend::Exact && shots < 1) {
            throw ConfigError("sampled backends require shots >= 1");
        }
        if (depol_p < 0.0 || depol_p > 1.0) {
            throw ConfigError("depolarizing probability must lie in [0, 1]");
        }
        if (cache == CacheMode::Disk && cache_path.empty()) {
            throw ConfigError("disk cache requires a cache path");
        }
    }

    static ExecutionPlan exact(std::uint64_t seed = 0) {
        ExecutionPlan p;
        p.backend = Backend::Exact;
        p.base_seed = seed;
        return p;
    }

    static ExecutionPlan sampled(long long shots, std::uint64_t seed = 0) {
        ExecutionPlan p;
        p.backend = Backend::Sampled;
        p.shots = shots;
        p.base_seed = seed;
        return p;
    }

    static ExecutionPlan depolarizing(long long shots, double depol_p,
                                      std::uint64_t seed = 0) {
        ExecutionPlan p;
        p.backend = Backend::Depolarizing;
        p.shots = shots;
        p.depol_p = depol_p;
        p.base_seed = seed;
        return p;
    }
};

/**
 * @brief One quantum evaluation: a bound program plus what to measure.
 *
 * Either a list of Pauli observables (one result per observable), the
 * probability of the all-zeros outcome (`zero_prob`), or the raw final
 * statevector (`return_state`, exact backend only; results are interleaved
 * re/im pairs).
 */
struct EvalRequest {
    BoundProgram program;
    std::vector<PauliObservable> observables;
    bool zero_prob = false;
    bool return_state = false;
    std::optional<long long> shots_override{};
};

struct ExecutorCounters {
    std::uint64_t simulations = 0;    ///< state preparations executed
    std::uint64_t sampling_passes = 0; ///< shot-sampled measurement passes
    std::uint64_t cache_hits = 0;
    std::uint64_t retries = 0;
};

namespace detail {

/// Append-only checksummed record log with an in-memory index.
class DiskCache {
  public:
    void open(const std::string &path) {
        path_ = path;
        index_.clear();
        load();
    }

    [[nodiscard]] bool enabled() const { return !path_.empty(); }

    bool lookup(const std::string &key, std::vector<double> &out) const {
        const auto it = index_.find(key);
        if (it == index_.end()) {
            return false;
        }
        out = it->second;
        return true;
    }

    void store(const std::string &key, const std::vector<double> &value) {
        if (index_.contains(key)) {
            return;
        }
        index_.emplace(key, value);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) {
            throw Error("cannot open cache file " + path_);
        }
        std::string payload;
        const std::uint32_t key_len = static_cast<std::uint32_t>(key.size());
        const std::uint32_t val_len = static_cast<std::uint32_t>(value.size());
        payload.append(reinterpret_cast<const char *>(&key_len), sizeof(key_len));
        payload.append(reinterpret_cast<const char *>(&val_len), sizeof(val_len));
        payload.append(key);
        payload.append(reinterpret_cast<const char *>(value.data()),
                       value.size() * sizeof(double));
        const std::uint64_t checksum = fnv1a64(payload);
        payload.append(reinterpret_cast<const char *>(&checksum), sizeof(checksum));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.flush();
    }

  private:
    // Corrupted records fail their checksum and are skipped: a damaged entry
    // is a cache miss, never wrong data.
    void load() {
        std::ifstream in(path_, std::ios::binary);
        if (!in) {
            return;
        }
        while (true) {
            std::uint32_t key_len = 0;
            std::uint32_t val_len = 0;
            if (!in.read(reinterpret_cast<char *>(&key_len), sizeof(key_len))) {
                break;
            }
            if (!in.read(reinterpret_cast<char *>(&val_len), sizeof(val_len))) {
                break;
            }
            std::string key(key_len, '\0');
            if (!in.read(key.data(), key_len)) {
                break;
            }
            std::vector<double> value(val_len);
            if (!in.read(reinterpret_cast<char *>(value.data()),
                         static_cast<std::streamsize>(val_len * sizeof(double)))) {
                break;
            }
            std::uint64_t checksum = 0;
            if (!in.read(reinterpret_cast<char *>(&checksum), sizeof(checksum))) {
                break;
            }
            std::string payload;
            payload.append(reinterpret_cast<const char *>(&key_len), sizeof(key_len));
            payload.append(reinterpret_cast<const char *>(&val_len), sizeof(val_len));
            payload.append(key);
            payload.append(reinterpret_cast<const char *>(value.data()),
                           value.size() * sizeof(double));
            if (fnv1a64(payload) != checksum) {
                continue;
            }
            index_[key] = std::move(value);
        }
    }

    std::string path_;
    std::unordered_map<std::string, std::vector<double>> index_;
};

/// Greedy qubit-wise-commuting grouping of Pauli terms.
struct MeasurementBasis {
    std::vector<Pauli> letters; // per qubit; I means unconstrained

    explicit MeasurementBasis(int n) : letters(static_cast<std::size_t>(n), Pauli::I) {}

    [[nodiscard]] bool fits(const PauliString &s) const {
        for (std::size_t q = 0; q < letters.size(); ++q) {
            const Pauli p = s.letters[q];
            if (p == Pauli::I) {
                continue;
            }
            if (letters[q] != Pauli::I && letters[q] != p) {
                return false;
            }
        }
        return true;
    }

    void absorb(const PauliString &s) {
        for (std::size_t q = 0; q < letters.size(); ++q) {
            if (s.letters[q] != Pauli::I) {
                letters[q] = s.letters[q];
            }
        }
    }

    [[nodiscard]] std::string str() const {
        std::string out(letters.size(), 'Z');
        for (std::size_t q = 0; q < letters.size(); ++q) {
            out[letters.size() - 1 - q] = pauli_char(letters[q] == Pauli::I ? Pauli::Z
                                                                            : letters[q]);
        }
        return out;
    }

    /// Rotation gates bringing this basis to the computational one.
    [[nodiscard]] std::vector<Gate> rotation_gates() const {
        std::vector<Gate> gates;
        constexpr double half_pi = 1.5707963267948966;
        for (std::size_t q = 0; q < letters.size(); ++q) {
            const int qubit = static_cast<int>(q);
            if (letters[q] == Pauli::X) {
                gates.emplace_back(GateKind::H, qubit);
            } else if (letters[q] == Pauli::Y) {
                gates.emplace_back(GateKind::RZ, qubit, -half_pi); // S^dagger up to phase
                gates.emplace_back(GateKind::H, qubit);
            }
        }
        return gates;
    }
};

} // namespace detail

/**
 * @brief Runs quantum evaluation jobs with caching, retries and logging.
 *
 * Thread-safe: concurrent run() calls are allowed; caches are protected and
 * per-job seeds depend only on job content, so parallel and serial execution
 * produce identical results.
 */
class Executor {
  public:
    explicit Executor(ExecutionPlan plan) { set_plan(std::move(plan)); }

    Executor() : Executor(ExecutionPlan::exact()) {}

    void set_plan(ExecutionPlan plan) {
        plan.validate();
        std::lock_guard lock(mutex_);
        plan_ = std::move(plan);
        if (plan_.cache == CacheMode::Disk) {
            disk_.open(plan_.cache_path);
        }
    }

    [[nodiscard]] const ExecutionPlan &plan() const { return plan_; }

    [[nodiscard]] ExecutorCounters counters() const {
        std::lock_guard lock(mutex_);
        return counters_;
    }

    void reset_counters() {
        std::lock_guard lock(mutex_);
        counters_ = {};
    }

    void clear_memory_cache() {
        std::lock_guard lock(mutex_);
        memory_.clear();
    }

    /// Test hook: invoked before every simulation attempt; returning true
    /// injects a transient failure.
    void set_failure_hook(std::function<bool()> hook) {
        std::lock_guard lock(mutex_);
        failure_hook_ = std::move(hook);
    }

    void set_log(std::ostream *stream, int level = 1) {
        std::lock_guard lock(mutex_);
        log_stream_ = stream;
        plan_.log_level = level;
    }

    [[nodiscard]] std::uint64_t derive_job_seed(std::span<const std::uint64_t> path) const {
        return derive_seed(plan_.base_seed, path);
    }

    std::vector<double> run(const EvalRequest &request) {
        if (request.zero_prob && !request.observables.empty()) {
            throw Error("zero_prob requests cannot carry observables");
        }
        if (request.return_state) {
            if (plan_.backend != Backend::Exact) {
                throw Error("statevector requests require the exact backend");
            }
            return run_state(request);
        }
        for (const auto &obs : request.observables) {
            if (obs.num_qubits() != request.program.n_qubits) {
                throw Error("observable qubit count does not match the program");
            }
        }
        if (plan_.backend == Backend::Exact) {
            return run_exact(request);
        }
        return run_sampled(request);
    }

  private:
    static std::string observables_key(const EvalRequest &request) {
        std::string k;
        for (const auto &obs : request.observables) {
            k += obs.key();
            k += '|';
        }
        if (request.zero_prob) {
            k += "P0|";
        }
        return k;
    }

    std::vector<double> run_state(const EvalRequest &request) {
        const std::string key = "V|" + request.program.key();
        std::vector<double> value;
        if (cache_lookup(key, value)) {
            return value;
        }
        const StateVector psi = simulate_with_retry(request.program, key);
        value.reserve(psi.size() * 2);
        for (const auto &amp : psi.amplitudes()) {
            value.push_back(amp.real());
            value.push_back(amp.imag());
        }
        cache_store(key, value);
        return value;
    }

    std::vector<double> run_exact(const EvalRequest &request) {
        const std::string key = "E|" + request.program.key() + observables_key(request);
        std::vector<double> value;
        if (cache_lookup(key, value)) {
            return value;
        }
        const StateVector psi = simulate_with_retry(request.program, key);
        if (request.zero_prob) {
            value.push_back(std::norm(psi.amplitude(0)));
        } else {
            value.reserve(request.observables.size());
            for (const auto &obs : request.observables) {
                value.push_back(expectation(psi, obs));
            }
        }
        cache_store(key, value);
        return value;
    }

    std::vector<double> run_sampled(const EvalRequest &request) {
        const long long shots = request.shots_override.value_or(plan_.shots);
        if (shots < 1) {
            throw Error("sampled execution requires shots >= 1");
        }
        const int n = request.program.n_qubits;
        if (request.zero_prob) {
            detail::MeasurementBasis basis(n);
            const auto counts = counts_for_basis(request.program, basis, shots);
            return {counts[0] / static_cast<double>(shots)};
        }
        // Group all terms of all observables into measurement bases, then
        // assemble every expectation from the shared sampling passes.
        std::vector<detail::MeasurementBasis> bases;
        struct TermRef {
            std::size_t obs;
            std::size_t term;
            std::size_t basis;
        };
        std::vector<TermRef> refs;
        for (std::size_t o = 0; o < request.observables.size(); ++o) {
            const auto &terms = request.observables[o].terms();
            for (std::size_t t = 0; t < terms.size(); ++t) {
                if (terms[t].string.is_identity()) {
                    refs.push_back({o, t, static_cast<std::size_t>(-1)});
                    continue;
                }
                std::size_t assigned = bases.size();
                for (std::size_t b = 0; b < bases.size(); ++b) {
                    if (bases[b].fits(terms[t].string)) {
                        assigned = b;
                        break;
                    }
                }
                if (assigned == bases.size()) {
                    bases.emplace_back(n);
                }
                bases[assigned].absorb(terms[t].string);
                refs.push_back({o, t, assigned});
            }
        }
        std::vector<std::vector<double>> counts(bases.size());
        for (std::size_t b = 0; b < bases.size(); ++b) {
            counts[b] = counts_for_basis(request.program, bases[b], shots);
        }
        std::vector<double> value(request.observables.size(), 0.0);
        for (const auto &ref : refs) {
            const auto &term = request.observables[ref.obs].terms()[ref.term];
            if (ref.basis == static_cast<std::size_t>(-1)) {
                value[ref.obs] += term.coefficient;
                continue;
            }
            const auto &cnt = counts[ref.basis];
            double acc = 0.0;
            for (std::size_t outcome = 0; outcome < cnt.size(); ++outcome) {
                if (cnt[outcome] != 0.0) {
                    acc += cnt[outcome] *
                           pauli_outcome_eigenvalue(term.string, outcome);
                }
            }
            value[ref.obs] += term.coefficient * acc / static_cast<double>(shots);
        }
        return value;
    }

    /// One shot-sampling pass in a fixed measurement basis; the cacheable unit.
    std::vector<double> counts_for_basis(const BoundProgram &program,
                                         const detail::MeasurementBasis &basis,
                                         long long shots) {
        const std::string program_key = program.key();
        const std::string basis_key = basis.str();
        const std::uint64_t seed =
            derive_seed(plan_.base_seed, {fnv1a64(program_key), fnv1a64(basis_key)});
        char head[96];
        std::snprintf(head, sizeof(head), "S|%s|p=%.17g|shots=%lld|seed=%llu|",
                      backend_name(plan_.backend), plan_.depol_p, shots,
                      static_cast<unsigned long long>(seed));
        const std::string key = std::string(head) + program_key + "B:" + basis_key;
        std::vector<double> value;
        if (cache_lookup(key, value)) {
            return value;
        }
        StateVector psi = simulate_with_retry(program, key);
        for (const auto &g : basis.rotation_gates()) {
            psi.apply(g);
        }
        std::vector<double> probs = psi.probabilities();
        if (plan_.backend == Backend::Depolarizing) {
            probs = mix_depolarizing(probs, plan_.depol_p);
        }
        const ShotResult result = sample_probabilities(probs, program.n_qubits, shots, seed);
        value.assign(probs.size(), 0.0);
        for (const auto &[outcome, count] : result.counts) {
            value[outcome] = static_cast<double>(count);
        }
        {
            std::lock_guard lock(mutex_);
            ++counters_.sampling_passes;
        }
        cache_store(key, value);
        return value;
    }

    StateVector simulate_with_retry(const BoundProgram &program, const std::string &key) {
        const int max_retries = 3;
        for (int attempt = 0;; ++attempt) {
            try {
                maybe_inject_failure();
                StateVector psi = simulate(program);
                {
                    std::lock_guard lock(mutex_);
                    ++counters_.simulations;
                }
                log_event(attempt == 0 ? "completed" : "completed-after-retry", key);
                return psi;
            } catch (const TransientError &err) {
                if (attempt >= max_retries) {
                    log_event("failed", key);
                    throw Error("job failed after " + std::to_string(max_retries) +
                                " retries: " + err.what() + " [key " +
                                std::to_string(fnv1a64(key)) + "]");
                }
                {
                    std::lock_guard lock(mutex_);
                    ++counters_.retries;
                }
                log_event("retry", key);
            }
        }
    }

    void maybe_inject_failure() {
        std::function<bool()> hook;
        {
            std::lock_guard lock(mutex_);
            hook = failure_hook_;
        }
        if (hook && hook()) {
            throw TransientError("injected transient failure");
        }
    }

    bool cache_lookup(const std::string &key, std::vector<double> &out) {
        if (plan_.cache == CacheMode::Off) {
            return false;
        }
        std::lock_guard lock(mutex_);
        const auto it = memory_.find(key);
        if (it != memory_.end()) {
            ++counters_.cache_hits;
            log_event_locked("cache-hit", key);
            return (out = it->second, true);
        }
        if (plan_.cache == CacheMode::Disk && disk_.lookup(key, out)) {
            ++counters_.cache_hits;
            memory_[key] = out;
            log_event_locked("cache-hit", key);
            return true;
        }
        log_event_locked("submitted", key);
        return false;
    }

    void cache_store(const std::string &key, const std::vector<double> &value) {
        if (plan_.cache == CacheMode::Off) {
            return;
        }
        std::lock_guard lock(mutex_);
        memory_[key] = value;
        if (plan_.cache == CacheMode::Disk) {
            disk_.store(key, value);
        }
    }

    void log_event(const char *event, const std::string &key) {
        if (plan_.log_level < 1 || log_stream_ == nullptr) {
            return;
        }
        std::lock_guard lock(mutex_);
        log_event_locked(event, key);
    }

    void log_event_locked(const char *event, const std::string &key) {
        if (plan_.log_level < 1 || log_stream_ == nullptr) {
            return;
        }
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
        char line[160];
        std::snprintf(line, sizeof(line), "[qmlkit] t=%s event=%s job=%016llx\n", stamp,
                      event, static_cast<unsigned long long>(fnv1a64(key)));
        (*log_stream_) << line;
    }

    ExecutionPlan plan_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::vector<double>> memory_;
    detail::DiskCache disk_;
    ExecutorCounters counters_;
    std::function<bool()> failure_hook_;
    std::ostream *log_stream_ = nullptr;
};

/// Reconstructs a StateVector from a return_state result.
inline StateVector state_from_result(int n_qubits, const std::vector<double> &packed) {
    std::vector<complex_t> amps(packed.size() / 2);
    for (std::size_t i = 0; i < amps.size(); ++i) {
        amps[i] = complex_t{packed[2 * i], packed[2 * i + 1]};
    }
    return StateVector(n_qubits, std::move(amps));
}

/// Static partition of [0, n) over up to n_threads workers; fn(i) must be
/// safe to call concurrently for distinct i.
inline void parallel_for(std::size_t n, int n_threads,
                         const std::function<void(std::size_t)> &fn) {
    if (n == 0) {
        return;
    }
    if (n_threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n);
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

} // namespace qmlkit
