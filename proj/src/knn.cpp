#include "wknn/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace wknn {

namespace {

void check_k(std::size_t k, std::size_t m) {
    if (k == 0 || k > m) {
        throw InvalidInput("k = " + std::to_string(k) + " out of range [1, " + std::to_string(m) + "]");
    }
}

void check_dim(std::size_t query_dim, std::size_t train_dim) {
    if (query_dim != train_dim) {
        throw InvalidInput("dimension mismatch: query has " + std::to_string(query_dim) +
                           " coordinates, training sample has " + std::to_string(train_dim));
    }
}

struct KeyedIndex {
    double key;
    std::size_t index;
};

bool before(const KeyedIndex& a, const KeyedIndex& b) {
    return a.key < b.key || (a.key == b.key && a.index < b.index);
}

std::vector<Neighbor> to_neighbors(const std::vector<KeyedIndex>& keyed, Norm norm) {
    std::vector<Neighbor> out;
    out.reserve(keyed.size());
    for (const auto& c : keyed) out.push_back({c.index, key_to_distance(c.key, norm)});
    return out;
}

}  // namespace

NeighborTable::NeighborTable(std::size_t k, std::size_t train_size, std::vector<std::size_t> indices,
                             std::vector<double> distances)
    : k_(k), train_size_(train_size), indices_(std::move(indices)), distances_(std::move(distances)) {
    if (k_ == 0) throw InvalidInput("neighbor table needs k >= 1");
    if (indices_.size() != distances_.size() || indices_.size() % k_ != 0) {
        throw InvalidInput("neighbor table shape is inconsistent");
    }
}

std::vector<Neighbor> knn_query(std::span<const double> query, const Sample& train, std::size_t k, Norm norm) {
    check_k(k, train.size());
    check_dim(query.size(), train.dim());
    std::vector<KeyedIndex> all(train.size());
    for (std::size_t j = 0; j < train.size(); ++j) all[j] = {distance_key(query, train.point(j), norm), j};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
    all.resize(k);
    return to_neighbors(all, norm);
}

std::vector<Neighbor> knn_query(const Point& query, const Sample& train, std::size_t k, Norm norm) {
    return knn_query(query.coords(), train, k, norm);
}

// Sorted list of the k best (key, index) pairs seen so far.
// Max-heap on (key, index): the front is the current k-th best.
struct KdTree::Candidates {
    explicit Candidates(std::size_t k) : capacity(k) { items.reserve(k); }

    bool full() const { return items.size() == capacity; }
    double worst_key() const { return items.front().key; }

    void offer(double key, std::size_t index) {
        const KeyedIndex c{key, index};
        if (!full()) {
            items.push_back(c);
            std::push_heap(items.begin(), items.end(), before);
        } else if (before(c, items.front())) {
            std::pop_heap(items.begin(), items.end(), before);
            items.back() = c;
            std::push_heap(items.begin(), items.end(), before);
        }
    }

    std::vector<KeyedIndex> sorted() && {
        std::sort_heap(items.begin(), items.end(), before);
        return std::move(items);
    }

    std::size_t capacity;
    std::vector<KeyedIndex> items;
};

KdTree::KdTree(const Sample& train, Norm norm, std::size_t leaf_size)
    : dim_(train.dim()), size_(train.size()), norm_(norm), order_(train.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    points_.assign(train.data().begin(), train.data().end());
    nodes_.reserve(2 * size_ / std::max<std::size_t>(leaf_size, 1) + 2);
    build(0, size_, std::max<std::size_t>(leaf_size, 1));

    // Reorder the point copy to match order_ so leaves scan contiguous memory.
    std::vector<double> reordered(points_.size());
    for (std::size_t r = 0; r < size_; ++r) {
        std::copy_n(train.point(order_[r]).begin(), dim_, reordered.begin() + static_cast<std::ptrdiff_t>(r * dim_));
    }
    points_ = std::move(reordered);
}

std::size_t KdTree::build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    lo_.resize((id + 1) * dim_);
    hi_.resize((id + 1) * dim_);

    // points_ still holds the original layout here; index it through order_.
    auto coord = [&](std::size_t slot, std::size_t t) { return points_[order_[slot] * dim_ + t]; };

    std::size_t split_dim = 0;
    double widest = -1.0;
    for (std::size_t t = 0; t < dim_; ++t) {
        double lo = coord(begin, t);
        double hi = lo;
        for (std::size_t s = begin + 1; s < end; ++s) {
            lo = std::min(lo, coord(s, t));
            hi = std::max(hi, coord(s, t));
        }
        lo_[id * dim_ + t] = lo;
        hi_[id * dim_ + t] = hi;
        if (hi - lo > widest) {
            widest = hi - lo;
            split_dim = t;
        }
    }

    if (end - begin <= leaf_size || widest <= 0.0) return id;

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                         const double ca = points_[a * dim_ + split_dim];
                         const double cb = points_[b * dim_ + split_dim];
                         return ca < cb || (ca == cb && a < b);
                     });
    const std::size_t left = build(begin, mid, leaf_size);
    const std::size_t right = build(mid, end, leaf_size);
    nodes_[id].leaf = false;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

double KdTree::box_key(std::size_t node, std::span<const double> query) const {
    const double* lo = lo_.data() + node * dim_;
    const double* hi = hi_.data() + node * dim_;
    double acc = 0.0;
    for (std::size_t t = 0; t < dim_; ++t) {
        double gap = 0.0;
        if (query[t] < lo[t]) {
            gap = lo[t] - query[t];
        } else if (query[t] > hi[t]) {
            gap = query[t] - hi[t];
        }
        switch (norm_) {
            case Norm::L2: acc += gap * gap; break;
            case Norm::L1: acc += gap; break;
            case Norm::LInf: acc = std::max(acc, gap); break;
        }
    }
    return acc;
}

void KdTree::search(std::size_t node_id, std::span<const double> query, Candidates& best) const {
    const Node& node = nodes_[node_id];
    if (node.leaf) {
        for (std::size_t s = node.begin; s < node.end; ++s) {
            const std::span<const double> p{points_.data() + s * dim_, dim_};
            best.offer(distance_key(query, p, norm_), order_[s]);
        }
        return;
    }
    const double key_left = box_key(node.left, query);
    const double key_right = box_key(node.right, query);
    const std::size_t first = key_left <= key_right ? node.left : node.right;
    const std::size_t second = first == node.left ? node.right : node.left;
    const double key_first = std::min(key_left, key_right);
    const double key_second = std::max(key_left, key_right);

    if (!best.full() || key_first <= best.worst_key()) search(first, query, best);
    if (!best.full() || key_second <= best.worst_key()) search(second, query, best);
}

std::vector<Neighbor> KdTree::query(std::span<const double> query, std::size_t k) const {
    check_k(k, size_);
    check_dim(query.size(), dim_);
    Candidates best(k);
    search(0, query, best);
    return to_neighbors(std::move(best).sorted(), norm_);
}

KdTree build_index(const Sample& train, Norm norm) { return KdTree(train, norm); }

NeighborTable neighbor_table(const Sample& eval, const KdTree& index, std::size_t k, std::size_t threads) {
    check_k(k, index.size());
    check_dim(eval.dim(), index.dim());
    const std::size_t n = eval.size();
    std::vector<std::size_t> indices(n * k);
    std::vector<double> distances(n * k);
    // Consecutive duplicate queries (e.g. an evaluation law with an atom) reuse the previous row.
    std::vector<std::size_t> source(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool repeat = i > 0 && std::ranges::equal(eval.point(i), eval.point(i - 1));
        source[i] = repeat ? source[i - 1] : i;
    }
    parallel_for(n, threads, [&](std::size_t i) {
        if (source[i] != i) return;
        const auto row = index.query(eval.point(i), k);
        for (std::size_t l = 0; l < k; ++l) {
            indices[i * k + l] = row[l].index;
            distances[i * k + l] = row[l].distance;
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (source[i] == i) continue;
        std::copy_n(indices.begin() + static_cast<std::ptrdiff_t>(source[i] * k), k,
                    indices.begin() + static_cast<std::ptrdiff_t>(i * k));
        std::copy_n(distances.begin() + static_cast<std::ptrdiff_t>(source[i] * k), k,
                    distances.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
    return NeighborTable(k, index.size(), std::move(indices), std::move(distances));
}

NeighborTable neighbor_table(const Sample& eval, const Sample& train, std::size_t k, Norm norm,
                             std::size_t threads) {
    check_k(k, train.size());
    check_dim(eval.dim(), train.dim());
    return neighbor_table(eval, KdTree(train, norm), k, threads);
}

NeighborTable neighbor_table_brute(const Sample& eval, const Sample& train, std::size_t k, Norm norm) {
    check_k(k, train.size());
    check_dim(eval.dim(), train.dim());
    const std::size_t n = eval.size();
    std::vector<std::size_t> indices;
    std::vector<double> distances;
    indices.reserve(n * k);
    distances.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& nb : knn_query(eval.point(i), train, k, norm)) {
            indices.push_back(nb.index);
            distances.push_back(nb.distance);
        }
    }
    return NeighborTable(k, train.size(), std::move(indices), std::move(distances));
}

}  // namespace wknn
