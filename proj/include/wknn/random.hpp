#pragma once

#include <cstdint>
#include <limits>

namespace wknn {

/**
 * Counter-based 64-bit generator.
 *
 * The i-th output of stream (seed, stream_id) is
 *     mix64(key + (i + 1) * 0x9E3779B97F4A7C15),   key = mix64(seed ^ mix64(stream_id + C)),
 * where mix64 is the SplitMix64 finalizer. Any output can be recomputed from
 * (seed, stream_id, i) alone, so replications seeded by their index produce
 * the same numbers whatever the thread layout.
 *
 * Satisfies UniformRandomBitGenerator.
 */
class Rng {
public:
    using result_type = std::uint64_t;

    Rng(std::uint64_t seed, std::uint64_t stream_id);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via inverse CDF.
    double normal();

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Independent sub-streams of one replication.
enum class Purpose : std::uint64_t { EvalInputs = 0, TrainInputs = 1, TrainNoise = 2, Extra = 3 };

/// Stream (seed, 16 * replication + purpose).
Rng replication_stream(std::uint64_t seed, std::uint64_t replication, Purpose purpose);

/**
 * Inverse of the standard normal CDF on (0, 1): Acklam's rational
 * approximation followed by one Halley step against erfc.
 */
double normal_quantile(double p);

double normal_cdf(double x);

}  // namespace wknn
