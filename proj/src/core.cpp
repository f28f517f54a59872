#include "wknn/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace wknn {

Norm parse_norm(std::string_view name) {
    if (name == "l2" || name == "L2") return Norm::L2;
    if (name == "l1" || name == "L1") return Norm::L1;
    if (name == "linf" || name == "LInf" || name == "Linf") return Norm::LInf;
    throw InvalidInput("unknown norm '" + std::string(name) + "' (expected l1, l2 or linf)");
}

std::string_view norm_name(Norm norm) {
    switch (norm) {
        case Norm::L1: return "l1";
        case Norm::L2: return "l2";
        case Norm::LInf: return "linf";
    }
    return "l2";
}

Point::Point(std::vector<double> coords) : coords_(std::move(coords)) {
    if (coords_.empty()) throw InvalidInput("point must have dimension >= 1");
    for (double c : coords_) {
        if (!std::isfinite(c)) throw InvalidInput("point coordinate is not finite");
    }
}

Sample::Sample(std::size_t dim, std::vector<double> row_major) : dim_(dim), data_(std::move(row_major)) {
    if (dim_ == 0) throw InvalidInput("sample dimension must be >= 1");
    if (data_.empty()) throw InvalidInput("sample must be nonempty");
    if (data_.size() % dim_ != 0) throw InvalidInput("sample data length is not a multiple of its dimension");
    for (double c : data_) {
        if (!std::isfinite(c)) throw InvalidInput("sample coordinate is not finite");
    }
}

namespace {
std::vector<double> flatten(const std::vector<Point>& points) {
    if (points.empty()) throw InvalidInput("sample must be nonempty");
    const std::size_t d = points.front().dim();
    std::vector<double> out;
    out.reserve(points.size() * d);
    for (const auto& p : points) {
        if (p.dim() != d) throw InvalidInput("sample points have inconsistent dimensions");
        out.insert(out.end(), p.coords().begin(), p.coords().end());
    }
    return out;
}
}  // namespace

Sample::Sample(const std::vector<Point>& points)
    : Sample(points.empty() ? 1 : points.front().dim(), flatten(points)) {}

Sample Sample::from_scalars(std::vector<double> values) { return Sample(1, std::move(values)); }

LabeledSample::LabeledSample(Sample in, Sample out) : inputs(std::move(in)), outputs(std::move(out)) {
    if (inputs.size() != outputs.size()) {
        throw InvalidInput("labeled sample has " + std::to_string(inputs.size()) + " inputs but " +
                           std::to_string(outputs.size()) + " output rows");
    }
}

double compensated_sum(std::span<const double> values) {
    double sum = 0.0;
    double c = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    return sum + c;
}

DiscreteMeasure validate_measure(Sample points, std::vector<double> masses) {
    if (masses.size() != points.size()) {
        throw InvalidInput("measure has " + std::to_string(points.size()) + " points but " +
                           std::to_string(masses.size()) + " masses");
    }
    for (double w : masses) {
        if (!std::isfinite(w)) throw InvalidInput("mass is not finite");
        if (w < 0.0) throw InvalidInput("negative mass in discrete measure");
    }
    const double total = compensated_sum(masses);
    if (std::abs(total - 1.0) > kMassTolerance) {
        throw InvalidInput("masses sum to " + std::to_string(total) + ", expected 1");
    }
    return DiscreteMeasure(std::move(points), std::move(masses));
}

DiscreteMeasure empirical_measure(const Sample& sample) {
    const std::size_t n = sample.size();
    return validate_measure(sample, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double distance_key(std::span<const double> a, std::span<const double> b, Norm norm) {
    if (a.size() != b.size()) {
        throw InvalidInput("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    switch (norm) {
        case Norm::L2:
            for (std::size_t t = 0; t < a.size(); ++t) {
                const double diff = a[t] - b[t];
                acc += diff * diff;
            }
            break;
        case Norm::L1:
            for (std::size_t t = 0; t < a.size(); ++t) acc += std::abs(a[t] - b[t]);
            break;
        case Norm::LInf:
            for (std::size_t t = 0; t < a.size(); ++t) acc = std::max(acc, std::abs(a[t] - b[t]));
            break;
    }
    return acc;
}

double key_to_distance(double key, Norm norm) { return norm == Norm::L2 ? std::sqrt(key) : key; }

double distance(std::span<const double> a, std::span<const double> b, Norm norm) {
    return key_to_distance(distance_key(a, b, norm), norm);
}

double distance(const Point& a, const Point& b, Norm norm) { return distance(a.coords(), b.coords(), norm); }

void require_order(double q) {
    if (!(q >= 1.0) || !std::isfinite(q)) throw InvalidInput("transport order q must be finite and >= 1");
}

double transport_cost(std::span<const double> a, std::span<const double> b, double q, Norm norm) {
    return cost_from_distance(distance(a, b, norm), q);
}

double cost_from_distance(double dist, double q) {
    if (q == 1.0) return dist;
    if (q == 2.0) return dist * dist;
    return std::pow(dist, q);
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t r = 0; r < count; ++r) body(r);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < count; r = next++) {
                    try {
                        body(r);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next = count;
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace wknn
