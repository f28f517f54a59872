#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wknn/core.hpp"

/**
 * @file ot.hpp
 *
 * Wasserstein costs between discrete measures. Every routine returns
 * W_q^q, the q-th power of the distance, never W_q itself.
 */

namespace wknn {

struct TransportEntry {
    std::size_t source;
    std::size_t target;
    double mass;
};

/// Sparse plan; only strictly positive entries are listed.
struct TransportPlan {
    std::vector<TransportEntry> entries;
    double cost = 0.0;
};

/// Optimal value of a transportation LP together with its optimality certificate.
struct ExactTransport {
    double value = 0.0;
    TransportPlan plan;
    /// Objective of the dual solution obtained from the final basis.
    double dual_value = 0.0;
    /// value - dual_value; certified when within kCertificateTolerance relative.
    double duality_gap = 0.0;
    std::size_t pivots = 0;
};

inline constexpr double kCertificateTolerance = 1e-9;

/**
 * Transportation simplex on the bipartite spanning-tree basis.
 *
 * `cost` is row-major supply.size() x demand.size(). The initial basis is
 * the northwest corner; the entering cell is the most negative reduced cost
 * (lowest (i, j) on ties) and the leaving cell the lowest (i, j) among the
 * blocking ones. After a run of degenerate pivots the solver switches to
 * Bland's rule, which cannot cycle.
 *
 * Throws InvalidInput when the masses are negative or their totals differ by
 * more than 1e-9, and NumericalFailure when the final basis cannot be
 * certified optimal.
 */
ExactTransport solve_transportation(std::span<const double> supply, std::span<const double> demand,
                                    std::span<const double> cost);

/// W_q^q between two discrete measures by exact LP. Zero-mass points are dropped before solving.
ExactTransport exact_wq(const DiscreteMeasure& source, const DiscreteMeasure& target, double q, Norm norm);

/// (1/n) sum_i |X_i - NN(X_i)|^q: W_q^q between the evaluation sample and the 1-NN reweighted training sample.
double wq_1nn(const Sample& eval, const Sample& train, double q, Norm norm);

/// (1/(k n)) sum_i sum_{l<=k} |X_i - NN^(l)(X_i)|^q, an upper bound on W_q^q for the k-NN weights.
double wq_knn_bound(const Sample& eval, const Sample& train, std::size_t k, double q, Norm norm);

/// Monotone coupling of two equal-size uniform measures on the line.
double wq_1d_uniform_oracle(std::vector<double> a, std::vector<double> b, double q);

}  // namespace wknn
