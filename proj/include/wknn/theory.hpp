#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wknn/core.hpp"
#include "wknn/estimators.hpp"
#include "wknn/random.hpp"

/**
 * @file theory.hpp
 *
 * Asymptotic constants of the 1-NN and k-NN Wasserstein rates and the
 * moment conditions they rely on.
 */

namespace wknn {

/// Gamma function by the Lanczos approximation (g = 7, 9 terms).
double lanczos_gamma(double x);

/// Volume of the unit ball of R^d for the given norm.
double unit_ball_volume(std::size_t d, Norm norm);

/// Limit of m^{q/d} E[W_q^q] for the 1-NN weights:
/// Gamma(1 + q/d) / v_d^{q/d} * E[1 / p_{X'}(X)^{q/d}].
struct RateConstant {
    double q;
    std::size_t d;
    double unit_ball_volume;
    double inv_density_moment;
    double value;
};

RateConstant rate_constant(double q, std::size_t d, Norm norm, double inv_density_moment);

/**
 * Constant c_{d,q} of the k-NN rate. For finite k:
 *     (2^{q/d+1} / k) sum_{l=1}^k (l/k)^{q/d};
 * with no k (the k -> infinity limit): 2^{q/d+1} / (q/d + 1).
 */
double cdq(double q, std::size_t d, std::optional<std::size_t> k_limit);

/// Moment condition for centred Gaussians N(0, sigma^2 I) vs N(0, sigma'^2 I): sigma'^2 > sigma^2 q/d.
bool gaussian_moment_check(double sigma, double sigma_prime, double q, std::size_t d);

/// d / (q + d): the exponent in p_{X'} proportional to p_X^{d/(q+d)} that minimises the rate constant.
double zador_exponent(double q, std::size_t d);

/**
 * Monte Carlo estimate of E[1 / p_{X'}(X)^{q/d}] from the log-density of X'.
 * Draw i comes from stream (seed, i / 4096) so the estimate is reproducible.
 * Throws NumericalFailure on a non-finite density evaluation.
 */
McEstimate inv_density_moment(const std::function<void(Rng&, std::span<double>)>& draw_x,
                              const std::function<double(std::span<const double>)>& log_density_train, double q,
                              std::size_t d, std::size_t n_draws, std::uint64_t seed);

/// One advisory line about a theoretical assumption; never a hard failure.
struct Diagnostic {
    std::string assumption;
    bool satisfied;
    std::string detail;
};

}  // namespace wknn
