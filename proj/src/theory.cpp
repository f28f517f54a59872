#include "wknn/theory.hpp"

#include <cmath>
#include <numbers>

namespace wknn {

double lanczos_gamma(double x) {
    static constexpr double g = 7.0;
    static constexpr double coef[] = {0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                                      771.32342877765313,   -176.61502916214059,   12.507343278686905,
                                      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x < 0.5) {
        // reflection
        return std::numbers::pi / (std::sin(std::numbers::pi * x) * lanczos_gamma(1.0 - x));
    }
    x -= 1.0;
    double a = coef[0];
    const double t = x + g + 0.5;
    for (int i = 1; i < 9; ++i) a += coef[i] / (x + static_cast<double>(i));
    return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

double unit_ball_volume(std::size_t d, Norm norm) {
    if (d == 0) throw InvalidInput("dimension must be >= 1");
    const double dd = static_cast<double>(d);
    switch (norm) {
        case Norm::L2: return std::pow(std::numbers::pi, dd / 2.0) / lanczos_gamma(dd / 2.0 + 1.0);
        case Norm::L1: return std::pow(2.0, dd) / lanczos_gamma(dd + 1.0);
        case Norm::LInf: return std::pow(2.0, dd);
    }
    return 0.0;
}

RateConstant rate_constant(double q, std::size_t d, Norm norm, double inv_density_moment) {
    require_order(q);
    if (!(inv_density_moment > 0.0)) throw InvalidInput("inverse density moment must be positive");
    const double ratio = q / static_cast<double>(d);
    const double vd = unit_ball_volume(d, norm);
    const double value = lanczos_gamma(1.0 + ratio) / std::pow(vd, ratio) * inv_density_moment;
    return {q, d, vd, inv_density_moment, value};
}

double cdq(double q, std::size_t d, std::optional<std::size_t> k_limit) {
    require_order(q);
    if (d == 0) throw InvalidInput("dimension must be >= 1");
    const double ratio = q / static_cast<double>(d);
    const double lead = std::pow(2.0, ratio + 1.0);
    if (!k_limit) return lead / (ratio + 1.0);
    const std::size_t k = *k_limit;
    if (k == 0) throw InvalidInput("k must be >= 1");
    std::vector<double> terms(k);
    const double kk = static_cast<double>(k);
    for (std::size_t l = 1; l <= k; ++l) terms[l - 1] = std::pow(static_cast<double>(l) / kk, ratio);
    return lead / kk * compensated_sum(terms);
}

bool gaussian_moment_check(double sigma, double sigma_prime, double q, std::size_t d) {
    if (!(sigma > 0.0) || !(sigma_prime > 0.0)) throw InvalidInput("Gaussian scales must be positive");
    return sigma_prime * sigma_prime > sigma * sigma * q / static_cast<double>(d);
}

double zador_exponent(double q, std::size_t d) {
    require_order(q);
    const double dd = static_cast<double>(d);
    return dd / (q + dd);
}

McEstimate inv_density_moment(const std::function<void(Rng&, std::span<double>)>& draw_x,
                              const std::function<double(std::span<const double>)>& log_density_train, double q,
                              std::size_t d, std::size_t n_draws, std::uint64_t seed) {
    require_order(q);
    if (n_draws == 0) throw InvalidInput("need at least one draw");
    constexpr std::size_t kBlock = 4096;
    const double ratio = q / static_cast<double>(d);
    std::vector<double> values(n_draws);
    std::vector<double> x(d);
    for (std::size_t block = 0; block * kBlock < n_draws; ++block) {
        Rng rng(seed, block);
        const std::size_t end = std::min(n_draws, (block + 1) * kBlock);
        for (std::size_t i = block * kBlock; i < end; ++i) {
            draw_x(rng, x);
            const double log_p = log_density_train(x);
            const double v = std::exp(-ratio * log_p);
            if (!std::isfinite(log_p) || !std::isfinite(v)) {
                throw NumericalFailure("non-finite training density at a draw of X");
            }
            values[i] = v;
        }
    }
    return summarize(values);
}

}  // namespace wknn
