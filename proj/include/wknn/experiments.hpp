#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wknn/core.hpp"
#include "wknn/estimators.hpp"
#include "wknn/random.hpp"
#include "wknn/theory.hpp"

/**
 * @file experiments.hpp
 *
 * Named scenarios and the Monte Carlo harness. Replication r of every
 * experiment draws its evaluation inputs, training inputs and model noise
 * from replication_stream(base_seed, r, ...), so the same replication sees
 * the same random numbers at every m and every s_corr, and no emitted number
 * depends on the thread count.
 */

namespace wknn {

using Overrides = std::map<std::string, std::string>;

struct Scenario {
    std::string name;
    std::size_t d = 1;
    /// Resolved parameter values, including defaults.
    std::map<std::string, double> params;
    /// Overrides as given, replayed when a parameter sweep rebuilds the scenario.
    Overrides overrides;

    std::function<void(Rng&, std::span<double>)> draw_x;
    std::function<void(Rng&, std::span<double>)> draw_x_train;
    std::function<double(std::span<const double>)> log_density_train;

    Model model;
    Observable phi;
    /// psi(x) = E[phi(f(x, Theta))]
    std::function<double(std::span<const double>)> psi;
    /// Var(phi(f(x, Theta)))
    std::function<double(std::span<const double>)> noise_variance;
    /// r(x) = E[f(x, Theta)], first output coordinate
    std::function<double(std::span<const double>)> regression;
    /// E[phi(f(X, Theta))] when known in closed form.
    std::optional<double> qi;
    bool noiseless = false;

    double param(const std::string& key) const { return params.at(key); }

    Sample sample_x(Rng& rng, std::size_t n) const;
    Sample sample_x_train(Rng& rng, std::size_t m) const;
    /// Training inputs from `rng_x`, model noise from `rng_noise`.
    LabeledSample sample_training(Rng& rng_x, Rng& rng_noise, std::size_t m) const;
    RegressionProblem regression_problem() const;
};

/// Names accepted by builtin_scenario.
std::vector<std::string> builtin_scenario_names();

/**
 * diag_uniform_gauss: X = (U, U), U ~ U[0,1]; X' ~ N((mu, mu), sigma^2 [[1, s],[s, 1]]);
 *     f(x, theta) = sin(2 pi x1) sin(2 pi x2) (1 + theta), theta ~ U[-1, 1]. Keys: mu, sigma, scorr, noiseless, phi.
 * atom_demo: X = (x0, x0) almost surely, X' and f as above. Keys: x0, mu, sigma, scorr, noiseless, phi.
 * identity_1d_uniform: X, X' ~ U[0,1], f(x, theta) = x. Keys: phi.
 * gauss_gauss: X ~ N(0, sigma^2 I_d), X' ~ N(0, sigma_prime^2 I_d), f(x, theta) = cos(x1) (1 + theta).
 *     Keys: d, sigma, sigma_prime, noiseless, phi.
 * phi is "identity" or "one"; noiseless is 0 or 1.
 */
Scenario builtin_scenario(std::string_view name, const Overrides& overrides = {});

/// Rebuild a scenario with one more override.
Scenario with_override(const Scenario& base, const std::string& key, const std::string& value);

/// Advisory checks of the theoretical assumptions for a scenario.
std::vector<Diagnostic> scenario_diagnostics(const Scenario& scenario, double q);

/// k as a function of m: a constant, or ceil(m^exponent); clamped to [1, m].
struct KRule {
    enum class Kind { Constant, Power };
    Kind kind = Kind::Constant;
    std::size_t k = 1;
    double exponent = 0.0;

    static KRule constant(std::size_t k) { return {Kind::Constant, k, 0.0}; }
    static KRule power(double exponent) { return {Kind::Power, 0, exponent}; }
    /// "4" or "pow:0.5"
    static KRule parse(std::string_view text);

    std::size_t operator()(std::size_t m) const;
    std::string describe() const;
};

struct RunRecord {
    std::string scenario;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    double q = 0.0;
    double s_corr = 0.0;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    double statistic = 0.0;
    double seconds = 0.0;
    /// Which computation produced `statistic`.
    std::string method;
};

struct SummaryRow {
    double abscissa = 0.0;  // m or s_corr
    McEstimate estimate;
};

struct RateFit {
    std::vector<std::pair<double, double>> points;  // (log m, log statistic)
    double slope = 0.0;
    double intercept = 0.0;
    double rms = 0.0;
};

/// Ordinary least squares on (log m, log statistic).
RateFit fit_loglog(std::span<const std::pair<double, double>> m_and_statistic);

struct HarnessOptions {
    std::size_t replications = 200;
    std::uint64_t base_seed = 1;
    std::size_t threads = 1;
    /// Cross-check every 100th replication against the exact LP.
    bool certify = false;
    /// Record wall time per run; off by default so outputs are byte-reproducible.
    bool timing = false;
};

struct ExperimentResult {
    std::vector<RunRecord> runs;
    std::vector<SummaryRow> summary;
    std::optional<RateFit> fit;
};

/**
 * E[W_q^q(mu_hat_{X_n}, k-NN reweighted X'_m)] across m. k = 1 uses the exact
 * closed form, k > 1 the k-NN average-cost upper bound. The fit is taken on
 * the per-m means.
 */
ExperimentResult wasserstein_rate_experiment(const Scenario& scenario, std::span<const std::size_t> m_grid,
                                             std::size_t n, const KRule& k_rule, double q, Norm norm,
                                             const HarnessOptions& options);

/// Mean |QI_hat - QI|^2 at each s_corr, with common random numbers across the grid.
ExperimentResult qi_experiment(const Scenario& scenario, std::size_t m, std::size_t n, std::size_t k,
                               std::span<const double> s_corr_grid, Norm norm, const HarnessOptions& options);

struct AtomRow {
    std::size_t m = 0;
    std::size_t k_growing = 0;
    McEstimate error_1nn;      // |QI_hat^(1) - QI|
    McEstimate error_growing;  // |QI_hat^(ceil sqrt m) - QI|
};

struct AtomResult {
    std::vector<RunRecord> runs;
    std::vector<AtomRow> rows;
    /// Noise variance of phi(f(x0, Theta)).
    double noise_variance = 0.0;
    /// 0.5 * sqrt(noise_variance): lower floor expected for the 1-NN error.
    double floor = 0.0;
};

AtomResult atom_consistency_experiment(const Scenario& atom, std::span<const std::size_t> m_grid, std::size_t n,
                                       Norm norm, const HarnessOptions& options);

/**
 * Mean |QI_hat^(k_m) - (1/n) sum_i psi(X_i)|^2 across m: the part of the L2
 * error that depends on m. The fit is taken on the RMS values (square roots
 * of the means).
 */
ExperimentResult noisy_rate_experiment(const Scenario& scenario, std::span<const std::size_t> m_grid, std::size_t n,
                                       const KRule& k_rule, Norm norm, const HarnessOptions& options);

/// k_m = ceil(m^{2/(d+2)})
KRule noisy_optimal_k_rule(std::size_t d);

}  // namespace wknn
