#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wknn/core.hpp"

namespace wknn {

struct Neighbor {
    std::size_t index;
    double distance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/**
 * For each evaluation point i, its k nearest training indices ordered by
 * (distance, index). Row-major n x k.
 */
class NeighborTable {
public:
    NeighborTable(std::size_t k, std::size_t train_size, std::vector<std::size_t> indices,
                  std::vector<double> distances);

    std::size_t k() const { return k_; }
    std::size_t rows() const { return indices_.size() / k_; }
    /// Size m of the training sample the indices refer to.
    std::size_t train_size() const { return train_size_; }

    std::span<const std::size_t> indices(std::size_t row) const { return {indices_.data() + row * k_, k_}; }
    std::span<const double> distances(std::size_t row) const { return {distances_.data() + row * k_, k_}; }
    std::span<const std::size_t> all_indices() const { return indices_; }

    friend bool operator==(const NeighborTable&, const NeighborTable&) = default;

private:
    std::size_t k_;
    std::size_t train_size_;
    std::vector<std::size_t> indices_;
    std::vector<double> distances_;
};

/**
 * Exhaustive k-NN query. Ties in distance go to the lowest training index,
 * so the result is fully determined by the inputs.
 */
std::vector<Neighbor> knn_query(std::span<const double> query, const Sample& train, std::size_t k, Norm norm);
std::vector<Neighbor> knn_query(const Point& query, const Sample& train, std::size_t k, Norm norm);

/**
 * Exact k-d tree over a training sample.
 *
 * Query results are identical to knn_query, ties included: a subtree is
 * skipped only when its bounding-box key is strictly larger than the
 * current k-th key, and box keys are accumulated in the same order as point
 * keys, so they never exceed the key of any point inside the box.
 */
class KdTree {
public:
    KdTree(const Sample& train, Norm norm, std::size_t leaf_size = 16);

    std::vector<Neighbor> query(std::span<const double> query, std::size_t k) const;

    std::size_t size() const { return size_; }
    std::size_t dim() const { return dim_; }
    Norm norm() const { return norm_; }

private:
    struct Node {
        std::size_t begin;
        std::size_t end;
        std::size_t left = 0;
        std::size_t right = 0;
        bool leaf = true;
    };

    struct Candidates;

    std::size_t build(std::size_t begin, std::size_t end, std::size_t leaf_size);
    double box_key(std::size_t node, std::span<const double> query) const;
    void search(std::size_t node, std::span<const double> query, Candidates& best) const;

    std::size_t dim_;
    std::size_t size_;
    Norm norm_;
    std::vector<double> points_;      // reordered copy, row-major
    std::vector<std::size_t> order_;  // original index of each reordered point
    std::vector<Node> nodes_;
    std::vector<double> lo_;          // per-node bounding boxes, nodes_.size() x dim_
    std::vector<double> hi_;
};

KdTree build_index(const Sample& train, Norm norm);

/// Batched queries through a k-d tree; rows are independent of `threads`.
NeighborTable neighbor_table(const Sample& eval, const Sample& train, std::size_t k, Norm norm,
                             std::size_t threads = 1);
NeighborTable neighbor_table(const Sample& eval, const KdTree& index, std::size_t k, std::size_t threads = 1);

/// Same table computed by exhaustive search.
NeighborTable neighbor_table_brute(const Sample& eval, const Sample& train, std::size_t k, Norm norm);

}  // namespace wknn
