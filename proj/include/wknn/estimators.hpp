#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wknn/core.hpp"
#include "wknn/random.hpp"
#include "wknn/weights.hpp"

namespace wknn {

/// Scalar observable phi of a model output, with an optional declared sup-norm bound.
struct Observable {
    std::function<double(std::span<const double>)> fn;
    std::optional<double> sup_bound;
    std::string name = "custom";

    /// Evaluates phi; throws InvalidInput when a declared bound is exceeded.
    double operator()(std::span<const double> y) const;
};

/// Built-in observables: "identity" (first output coordinate) and "one".
Observable observable_by_name(std::string_view name);

/// Y = f(X, Theta) with a sampler for Theta. f must be deterministic given (x, theta).
struct Model {
    std::function<std::vector<double>(std::span<const double> x, std::span<const double> theta)> f;
    std::function<std::vector<double>(Rng&)> sample_theta;
    std::size_t output_dim = 1;

    std::vector<double> operator()(std::span<const double> x, Rng& rng) const { return f(x, sample_theta(rng)); }
};

/// phi applied to every output row.
std::vector<double> apply_observable(const Sample& outputs, const Observable& phi);

/// (1/m) sum_j w_j phi(Y'_j)
double qi_hat(const WeightVector& wv, std::span<const double> phi_values);
double qi_hat(const WeightVector& wv, const Sample& outputs, const Observable& phi);

/// (1/m) sum_j w_j psi(X'_j), the noise-free counterpart of qi_hat.
double qi_tilde(const WeightVector& wv, std::span<const double> psi_values);

/// Average output of the k nearest training inputs (ties to the lowest index).
std::vector<double> knn_regress(std::span<const double> x, const LabeledSample& train, std::size_t k, Norm norm);

/// (1/n) sum_i (1/k) sum_l phi(Y'_{j_i^(l)}), computed directly from the neighbour lists.
double qi_knn(const Sample& eval, const LabeledSample& train, std::size_t k, const Observable& phi, Norm norm);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Mean and standard error of the mean; summation is compensated and in index order.
McEstimate summarize(std::span<const double> values);

/// Everything needed to measure the L2 generalization error of k-NN regression.
struct RegressionProblem {
    Model model;
    /// Draws one point of mu_X (resp. mu_X') into the span.
    std::function<void(Rng&, std::span<double>)> draw_x;
    std::function<void(Rng&, std::span<double>)> draw_x_train;
    /// r(x) = E[f(x, Theta)], first output coordinate.
    std::function<double(std::span<const double>)> regression;
    std::size_t dim = 1;
};

/**
 * Monte Carlo estimate of E[(r(X) - r_hat^(k)_m(X))^2] with a fresh training
 * sample per replication. Replication r draws from Rng streams derived from
 * (seed, r), so the result does not depend on `threads`.
 */
McEstimate generalization_error_mc(const RegressionProblem& problem, std::size_t m, std::size_t k,
                                   std::size_t n_test, std::size_t replications, Norm norm, std::uint64_t seed,
                                   std::size_t threads = 1);

}  // namespace wknn
