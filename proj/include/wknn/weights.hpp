#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wknn/core.hpp"
#include "wknn/knn.hpp"

namespace wknn {

/**
 * k-NN weight vector w^(k) on a training sample of size m built from n
 * evaluation points.
 *
 * Each weight is an integer count (the number of (i, l) pairs whose l-th
 * neighbour is j) times the common factor m / (k n). The counts are kept so
 * the weights can be audited exactly.
 */
class WeightVector {
public:
    WeightVector(std::size_t k, std::size_t n, std::vector<std::size_t> counts);

    std::size_t k() const { return k_; }
    std::size_t n() const { return n_; }
    std::size_t m() const { return counts_.size(); }

    /// m / (k n)
    double unit() const { return unit_; }
    std::span<const double> values() const { return w_; }
    std::span<const std::size_t> counts() const { return counts_; }
    double operator[](std::size_t j) const { return w_[j]; }

private:
    std::size_t k_;
    std::size_t n_;
    double unit_;
    std::vector<std::size_t> counts_;
    std::vector<double> w_;
};

WeightVector knn_weights(const NeighborTable& table, std::size_t m);

/// (1/m) sum_j w_j delta_{X'_j}
DiscreteMeasure weighted_measure(const Sample& train, const WeightVector& wv);

/// Same measure for an arbitrary nonnegative vector summing to m.
DiscreteMeasure weighted_measure(const Sample& train, std::span<const double> weights);

}  // namespace wknn
