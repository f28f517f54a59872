#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "wknn/knn.hpp"
#include "wknn/random.hpp"

using namespace wknn;

namespace {

// Exhaustive oracle: sort all training points by (distance, index).
std::vector<Neighbor> sort_all(std::span<const double> q, const Sample& train, std::size_t k, Norm norm) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> dist(train.size());
    for (std::size_t j = 0; j < train.size(); ++j) dist[j] = distance(q, train.point(j), norm);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::vector<Neighbor> out;
    for (std::size_t l = 0; l < k; ++l) out.push_back({idx[l], dist[idx[l]]});
    return out;
}

// Coordinates on a coarse grid so exact distance ties are common.
Sample grid_sample(Rng& rng, std::size_t n, std::size_t d, int levels) {
    std::vector<double> v(n * d);
    for (double& x : v) x = static_cast<double>(static_cast<int>(rng.uniform() * levels)) / levels;
    return Sample(d, std::move(v));
}

Sample uniform_sample(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<double> v(n * d);
    for (double& x : v) x = rng.uniform();
    return Sample(d, std::move(v));
}

}  // namespace

TEST_CASE("knn_query examples") {
    const Sample train = Sample::from_scalars({0.0, 10.0});
    const std::vector<double> q1{1.0};
    const auto two = knn_query(q1, train, 2, Norm::L2);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == Neighbor{0, 1.0});
    CHECK(two[1] == Neighbor{1, 9.0});

    const std::vector<double> tie{5.0};
    CHECK(knn_query(tie, train, 1, Norm::L2)[0].index == 0);

    CHECK_THROWS_AS(knn_query(q1, train, 3, Norm::L2), InvalidInput);
    CHECK_THROWS_AS(knn_query(q1, train, 0, Norm::L2), InvalidInput);
    const std::vector<double> wrong{1.0, 2.0};
    CHECK_THROWS_AS(knn_query(wrong, train, 1, Norm::L2), InvalidInput);
}

TEST_CASE("knn_query matches the exhaustive sort in R^3") {
    Rng rng(3, 0);
    const Sample train = uniform_sample(rng, 20, 3);
    const Sample queries = uniform_sample(rng, 10, 3);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        CHECK(knn_query(queries.point(i), train, 5, Norm::L2) == sort_all(queries.point(i), train, 5, Norm::L2));
    }
}

TEST_CASE("neighbor table examples") {
    const Sample eval = Sample::from_scalars({1.0, 2.0, 9.0});
    const Sample train = Sample::from_scalars({0.0, 10.0});
    const NeighborTable t = neighbor_table(eval, train, 1, Norm::L2);
    CHECK(t.rows() == 3);
    CHECK(t.indices(0)[0] == 0);
    CHECK(t.indices(1)[0] == 0);
    CHECK(t.indices(2)[0] == 1);

    Rng rng(4, 0);
    const Sample pts = uniform_sample(rng, 50, 2);
    const NeighborTable self = neighbor_table(pts, pts, 1, Norm::L2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(self.indices(i)[0] == i);
        CHECK(self.distances(i)[0] == 0.0);
    }
}

TEST_CASE("k-d tree on degenerate inputs") {
    const Sample one = Sample::from_scalars({3.0});
    const KdTree tree(one, Norm::L2);
    for (double q : {-1.0, 3.0, 100.0}) {
        const std::vector<double> qq{q};
        CHECK(tree.query(qq, 1)[0].index == 0);
    }

    const Sample dup(2, {1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0});
    const KdTree dtree(dup, Norm::L2, 1);
    const std::vector<double> q{1.0, 1.0};
    const auto nb = dtree.query(q, 3);
    CHECK(nb[0].index == 0);
    CHECK(nb[1].index == 2);
    CHECK(nb[2].index == 3);

    // All points identical: no split is possible.
    const Sample same(1, std::vector<double>(100, 0.5));
    const KdTree stree(same, Norm::L1, 4);
    const std::vector<double> q2{0.0};
    const auto all = stree.query(q2, 100);
    for (std::size_t l = 0; l < all.size(); ++l) CHECK(all[l].index == l);
}

TEST_CASE("k-d tree equals brute force on 1000 uniform points") {
    Rng rng(5, 0);
    const Sample train = uniform_sample(rng, 1000, 3);
    const Sample eval = uniform_sample(rng, 1000, 3);
    CHECK(neighbor_table(eval, train, 3, Norm::L2) == neighbor_table_brute(eval, train, 3, Norm::L2));
}

TEST_CASE("k-d tree equals brute force on random instances with ties") {
    Rng rng(6, 0);
    for (int t = 0; t < 300; ++t) {
        const std::size_t d = 1 + rng() % 5;
        const std::size_t m = 1 + rng() % 200;
        const std::size_t n = 1 + rng() % 200;
        const std::size_t k = 1 + rng() % m;
        const Norm norm = static_cast<Norm>(rng() % 3);
        const bool ties = t % 2 == 0;
        const Sample train = ties ? grid_sample(rng, m, d, 4) : uniform_sample(rng, m, d);
        const Sample eval = ties ? grid_sample(rng, n, d, 4) : uniform_sample(rng, n, d);
        const std::size_t leaf = 1 + rng() % 8;
        const NeighborTable fast = neighbor_table(eval, KdTree(train, norm, leaf), k, 1 + t % 3);
        REQUIRE(fast == neighbor_table_brute(eval, train, k, norm));
    }
}

TEST_CASE("neighbor table rejects bad k") {
    const Sample s = Sample::from_scalars({0.0, 1.0});
    CHECK_THROWS_AS(neighbor_table(s, s, 3, Norm::L2), InvalidInput);
    CHECK_THROWS_AS(neighbor_table(s, s, 0, Norm::L2), InvalidInput);
    CHECK_THROWS_AS(neighbor_table(Sample(2, {0.0, 0.0}), s, 1, Norm::L2), InvalidInput);
}
