#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file core.hpp
 *
 * Domain types shared by every part of the library: points, samples,
 * norms and discrete probability measures.
 *
 * All indices are 0-based. Coordinates are 64-bit floats.
 */

namespace wknn {

/// Malformed or inconsistent input (CLI exit code 2).
class InvalidInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A computation that could not be completed or certified (CLI exit code 3).
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Norm { L1, L2, LInf };

Norm parse_norm(std::string_view name);
std::string_view norm_name(Norm norm);

/// A single point of R^d with finite coordinates, d >= 1.
class Point {
public:
    explicit Point(std::vector<double> coords);
    Point(std::initializer_list<double> coords) : Point(std::vector<double>(coords)) {}

    std::size_t dim() const { return coords_.size(); }
    std::span<const double> coords() const { return coords_; }
    double operator[](std::size_t i) const { return coords_[i]; }

private:
    std::vector<double> coords_;
};

/**
 * Nonempty ordered list of points sharing a common dimension, stored
 * row-major.
 */
class Sample {
public:
    Sample(std::size_t dim, std::vector<double> row_major);
    explicit Sample(const std::vector<Point>& points);

    /// Convenience for d = 1.
    static Sample from_scalars(std::vector<double> values);

    std::size_t size() const { return data_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> point(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> data() const { return data_; }

    friend bool operator==(const Sample&, const Sample&) = default;

private:
    std::size_t dim_;
    std::vector<double> data_;
};

/// Inputs X'_j paired with outputs Y'_j (one output row per input).
struct LabeledSample {
    LabeledSample(Sample inputs, Sample outputs);

    std::size_t size() const { return inputs.size(); }

    Sample inputs;
    Sample outputs;
};

/// Points with nonnegative masses summing to one.
class DiscreteMeasure {
public:
    const Sample& points() const { return points_; }
    std::span<const double> masses() const { return masses_; }
    std::size_t size() const { return masses_.size(); }
    std::size_t dim() const { return points_.dim(); }

private:
    DiscreteMeasure(Sample points, std::vector<double> masses)
        : points_(std::move(points)), masses_(std::move(masses)) {}
    friend DiscreteMeasure validate_measure(Sample points, std::vector<double> masses);

    Sample points_;
    std::vector<double> masses_;
};

/// Tolerance on |sum of masses - 1| accepted by validate_measure.
inline constexpr double kMassTolerance = 1e-12;

DiscreteMeasure validate_measure(Sample points, std::vector<double> masses);

/// Uniform measure 1/n on the points of a sample.
DiscreteMeasure empirical_measure(const Sample& sample);

/**
 * Monotone surrogate of the distance used for every comparison in the
 * library: the squared Euclidean norm for L2, the norm itself otherwise.
 * Coordinates are accumulated in index order so that bounds computed the
 * same way are exact lower bounds.
 */
double distance_key(std::span<const double> a, std::span<const double> b, Norm norm);
double key_to_distance(double key, Norm norm);

double distance(std::span<const double> a, std::span<const double> b, Norm norm);
double distance(const Point& a, const Point& b, Norm norm);

/// dist^q with exact fast paths for q = 1 and q = 2.
double cost_from_distance(double dist, double q);

/// |a - b|^q, the transport cost used by every W_q routine.
double transport_cost(std::span<const double> a, std::span<const double> b, double q, Norm norm);

void require_order(double q);

/// Runs body(r) for r in [0, count) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Neumaier-compensated sum, order as given.
double compensated_sum(std::span<const double> values);

}  // namespace wknn
