#include "wknn/weights.hpp"

#include <numeric>
#include <string>

namespace wknn {

WeightVector::WeightVector(std::size_t k, std::size_t n, std::vector<std::size_t> counts)
    : k_(k), n_(n), counts_(std::move(counts)) {
    if (k_ == 0 || n_ == 0 || counts_.empty()) throw InvalidInput("weight vector needs k, n, m >= 1");
    const std::size_t total = std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
    if (total != k_ * n_) {
        throw InvalidInput("neighbor counts sum to " + std::to_string(total) + ", expected k*n = " +
                           std::to_string(k_ * n_));
    }
    unit_ = static_cast<double>(counts_.size()) / (static_cast<double>(k_) * static_cast<double>(n_));
    w_.reserve(counts_.size());
    for (std::size_t c : counts_) w_.push_back(static_cast<double>(c) * unit_);
}

WeightVector knn_weights(const NeighborTable& table, std::size_t m) {
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t j : table.all_indices()) {
        if (j >= m) {
            throw InvalidInput("neighbor index " + std::to_string(j) + " outside training sample of size " +
                               std::to_string(m));
        }
        ++counts[j];
    }
    return WeightVector(table.k(), table.rows(), std::move(counts));
}

DiscreteMeasure weighted_measure(const Sample& train, std::span<const double> weights) {
    if (weights.size() != train.size()) {
        throw InvalidInput("weight vector has length " + std::to_string(weights.size()) +
                           " but training sample has " + std::to_string(train.size()) + " points");
    }
    const double m = static_cast<double>(train.size());
    std::vector<double> masses;
    masses.reserve(weights.size());
    for (double w : weights) masses.push_back(w / m);
    return validate_measure(train, std::move(masses));
}

DiscreteMeasure weighted_measure(const Sample& train, const WeightVector& wv) {
    return weighted_measure(train, wv.values());
}

}  // namespace wknn
