#include "wknn/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numbers>
#include <set>

#include "wknn/knn.hpp"
#include "wknn/ot.hpp"
#include "wknn/weights.hpp"

namespace wknn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double parse_double(const std::string& key, const std::string& text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw InvalidInput("override " + key + "=" + text + " is not a finite number");
    }
    return value;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

// Resolves numeric parameters and the observable name from the overrides.
struct ParamReader {
    const Overrides& overrides;
    std::set<std::string> allowed;
    std::map<std::string, double> params;

    double number(const std::string& key, double fallback) {
        allowed.insert(key);
        auto it = overrides.find(key);
        const double v = it == overrides.end() ? fallback : parse_double(key, it->second);
        params[key] = v;
        return v;
    }

    bool flag(const std::string& key) {
        const double v = number(key, 0.0);
        if (v != 0.0 && v != 1.0) throw InvalidInput("override " + key + " must be 0 or 1");
        return v == 1.0;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        allowed.insert(key);
        auto it = overrides.find(key);
        return it == overrides.end() ? fallback : it->second;
    }

    void reject_unknown(std::string_view scenario) const {
        for (const auto& [key, value] : overrides) {
            if (!allowed.contains(key)) {
                throw InvalidInput("scenario " + std::string(scenario) + " has no parameter '" + key + "'");
            }
        }
    }
};

double sine_product(std::span<const double> x) { return std::sin(kTwoPi * x[0]) * std::sin(kTwoPi * x[1]); }

// theta ~ U[-1, 1]; Var(theta) = 1/3.
std::vector<double> draw_symmetric_uniform(Rng& rng) { return {rng.uniform(-1.0, 1.0)}; }

struct GaussianPair {
    double mu;
    double sigma;
    double s;

    void draw(Rng& rng, std::span<double> x) const {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        x[0] = mu + sigma * z1;
        x[1] = mu + sigma * (s * z1 + std::sqrt(1.0 - s * s) * z2);
    }

    double log_density(std::span<const double> x) const {
        const double a = x[0] - mu;
        const double b = x[1] - mu;
        const double one_minus = 1.0 - s * s;
        const double quad = (a * a - 2.0 * s * a * b + b * b) / (sigma * sigma * one_minus);
        return -std::log(kTwoPi) - 2.0 * std::log(sigma) - 0.5 * std::log(one_minus) - 0.5 * quad;
    }
};

GaussianPair read_gaussian_pair(ParamReader& reader) {
    GaussianPair g{reader.number("mu", 0.5), reader.number("sigma", 0.3), reader.number("scorr", 0.0)};
    if (!(g.sigma > 0.0)) throw InvalidInput("sigma must be positive");
    if (!(g.s > -1.0 && g.s < 1.0)) throw InvalidInput("scorr must lie in (-1, 1)");
    return g;
}

// Sets phi, psi, noise variance and QI for the scalar model
// f(x, theta) = g(x) (1 + theta) (or g(x) when noiseless), theta ~ U[-1, 1].
void attach_observable(Scenario& sc, const std::string& phi_name, std::function<double(std::span<const double>)> g,
                       double mean_g) {
    sc.phi = observable_by_name(phi_name);
    sc.regression = g;
    if (phi_name == "one") {
        sc.psi = [](std::span<const double>) { return 1.0; };
        sc.noise_variance = [](std::span<const double>) { return 0.0; };
        sc.qi = 1.0;
        return;
    }
    sc.psi = g;
    if (sc.noiseless) {
        sc.noise_variance = [](std::span<const double>) { return 0.0; };
    } else {
        sc.noise_variance = [g](std::span<const double> x) {
            const double v = g(x);
            return v * v / 3.0;
        };
    }
    sc.qi = mean_g;
}

Model multiplicative_noise_model(std::function<double(std::span<const double>)> g, bool noiseless) {
    Model model;
    model.output_dim = 1;
    model.sample_theta = draw_symmetric_uniform;
    model.f = [g, noiseless](std::span<const double> x, std::span<const double> theta) {
        const double base = g(x);
        return std::vector<double>{noiseless ? base : base * (1.0 + theta[0])};
    };
    return model;
}

Scenario make_diag_uniform_gauss(const Overrides& overrides, bool atom) {
    ParamReader reader{overrides, {}, {}};
    Scenario sc;
    sc.name = atom ? "atom_demo" : "diag_uniform_gauss";
    sc.d = 2;
    sc.overrides = overrides;
    const double x0 = atom ? reader.number("x0", 0.25) : 0.0;
    const GaussianPair gauss = read_gaussian_pair(reader);
    sc.noiseless = reader.flag("noiseless");
    const std::string phi_name = reader.text("phi", "identity");
    reader.reject_unknown(sc.name);
    sc.params = reader.params;

    if (atom) {
        sc.draw_x = [x0](Rng&, std::span<double> x) {
            x[0] = x0;
            x[1] = x0;
        };
    } else {
        sc.draw_x = [](Rng& rng, std::span<double> x) {
            const double u = rng.uniform();
            x[0] = u;
            x[1] = u;
        };
    }
    sc.draw_x_train = [gauss](Rng& rng, std::span<double> x) { gauss.draw(rng, x); };
    sc.log_density_train = [gauss](std::span<const double> x) { return gauss.log_density(x); };
    sc.model = multiplicative_noise_model(sine_product, sc.noiseless);
    // E[sin^2(2 pi U)] = 1/2 on the diagonal; the atom sits at a single point.
    const double s0 = std::sin(kTwoPi * x0);
    attach_observable(sc, phi_name, sine_product, atom ? s0 * s0 : 0.5);
    return sc;
}

Scenario make_identity_1d_uniform(const Overrides& overrides) {
    ParamReader reader{overrides, {}, {}};
    Scenario sc;
    sc.name = "identity_1d_uniform";
    sc.d = 1;
    sc.overrides = overrides;
    const std::string phi_name = reader.text("phi", "identity");
    reader.reject_unknown(sc.name);
    sc.params = reader.params;
    sc.noiseless = true;
    sc.draw_x = [](Rng& rng, std::span<double> x) { x[0] = rng.uniform(); };
    sc.draw_x_train = sc.draw_x;
    sc.log_density_train = [](std::span<const double> x) {
        return (x[0] >= 0.0 && x[0] <= 1.0) ? 0.0 : -std::numeric_limits<double>::infinity();
    };
    sc.model.output_dim = 1;
    sc.model.sample_theta = [](Rng&) { return std::vector<double>{}; };
    sc.model.f = [](std::span<const double> x, std::span<const double>) { return std::vector<double>{x[0]}; };
    attach_observable(sc, phi_name, [](std::span<const double> x) { return x[0]; }, 0.5);
    return sc;
}

Scenario make_gauss_gauss(const Overrides& overrides) {
    ParamReader reader{overrides, {}, {}};
    Scenario sc;
    sc.name = "gauss_gauss";
    sc.overrides = overrides;
    const double d_value = reader.number("d", 2.0);
    const double sigma = reader.number("sigma", 1.0);
    const double sigma_prime = reader.number("sigma_prime", 1.5);
    sc.noiseless = reader.flag("noiseless");
    const std::string phi_name = reader.text("phi", "identity");
    reader.reject_unknown(sc.name);
    sc.params = reader.params;
    if (d_value < 1.0 || d_value != std::floor(d_value) || d_value > 64.0) {
        throw InvalidInput("gauss_gauss dimension must be an integer in [1, 64]");
    }
    if (!(sigma > 0.0) || !(sigma_prime > 0.0)) throw InvalidInput("Gaussian scales must be positive");
    const auto d = static_cast<std::size_t>(d_value);
    sc.d = d;
    sc.draw_x = [sigma](Rng& rng, std::span<double> x) {
        for (double& c : x) c = sigma * rng.normal();
    };
    sc.draw_x_train = [sigma_prime](Rng& rng, std::span<double> x) {
        for (double& c : x) c = sigma_prime * rng.normal();
    };
    sc.log_density_train = [sigma_prime, d](std::span<const double> x) {
        double sq = 0.0;
        for (double c : x) sq += c * c;
        return -0.5 * static_cast<double>(d) * std::log(kTwoPi * sigma_prime * sigma_prime) -
               0.5 * sq / (sigma_prime * sigma_prime);
    };
    auto g = [](std::span<const double> x) { return std::cos(x[0]); };
    sc.model = multiplicative_noise_model(g, sc.noiseless);
    // E[cos(sigma Z)] = exp(-sigma^2 / 2)
    attach_observable(sc, phi_name, g, std::exp(-0.5 * sigma * sigma));
    return sc;
}

void check_grid(std::span<const std::size_t> m_grid) {
    if (m_grid.empty()) throw InvalidInput("m grid is empty");
    for (std::size_t a = 0; a < m_grid.size(); ++a) {
        if (m_grid[a] == 0) throw InvalidInput("m grid entries must be positive");
        if (a > 0 && m_grid[a] <= m_grid[a - 1]) throw InvalidInput("m grid must be strictly increasing");
    }
}

struct Stopwatch {
    bool enabled;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        if (!enabled) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::vector<SummaryRow> summarize_by_block(const std::vector<RunRecord>& runs, std::size_t block,
                                           const std::vector<double>& abscissae) {
    std::vector<SummaryRow> out;
    std::vector<double> values(block);
    for (std::size_t a = 0; a < abscissae.size(); ++a) {
        for (std::size_t r = 0; r < block; ++r) values[r] = runs[a * block + r].statistic;
        out.push_back({abscissae[a], summarize(values)});
    }
    return out;
}

}  // namespace

Sample Scenario::sample_x(Rng& rng, std::size_t n) const {
    std::vector<double> data(n * d);
    for (std::size_t i = 0; i < n; ++i) draw_x(rng, {data.data() + i * d, d});
    return Sample(d, std::move(data));
}

Sample Scenario::sample_x_train(Rng& rng, std::size_t m) const {
    std::vector<double> data(m * d);
    for (std::size_t j = 0; j < m; ++j) draw_x_train(rng, {data.data() + j * d, d});
    return Sample(d, std::move(data));
}

LabeledSample Scenario::sample_training(Rng& rng_x, Rng& rng_noise, std::size_t m) const {
    Sample inputs = sample_x_train(rng_x, m);
    std::vector<double> outputs;
    outputs.reserve(m * model.output_dim);
    for (std::size_t j = 0; j < m; ++j) {
        const auto y = model(inputs.point(j), rng_noise);
        outputs.insert(outputs.end(), y.begin(), y.end());
    }
    return LabeledSample(std::move(inputs), Sample(model.output_dim, std::move(outputs)));
}

RegressionProblem Scenario::regression_problem() const {
    return {model, draw_x, draw_x_train, regression, d};
}

std::vector<std::string> builtin_scenario_names() {
    return {"diag_uniform_gauss", "atom_demo", "identity_1d_uniform", "gauss_gauss"};
}

Scenario builtin_scenario(std::string_view name, const Overrides& overrides) {
    if (name == "diag_uniform_gauss") return make_diag_uniform_gauss(overrides, false);
    if (name == "atom_demo") return make_diag_uniform_gauss(overrides, true);
    if (name == "identity_1d_uniform") return make_identity_1d_uniform(overrides);
    if (name == "gauss_gauss") return make_gauss_gauss(overrides);
    throw InvalidInput("unknown scenario '" + std::string(name) + "'");
}

Scenario with_override(const Scenario& base, const std::string& key, const std::string& value) {
    Overrides next = base.overrides;
    next[key] = value;
    return builtin_scenario(base.name, next);
}

std::vector<Diagnostic> scenario_diagnostics(const Scenario& scenario, double q) {
    std::vector<Diagnostic> out;
    const double ratio = q / static_cast<double>(scenario.d);
    if (scenario.name == "gauss_gauss") {
        const double sigma = scenario.param("sigma");
        const double sigma_prime = scenario.param("sigma_prime");
        const bool ok = gaussian_moment_check(sigma, sigma_prime, q, scenario.d);
        out.push_back({"moments", ok,
                       "sigma'^2 = " + format_double(sigma_prime * sigma_prime) + " vs sigma^2 q/d = " +
                           format_double(sigma * sigma * ratio)});
    } else if (scenario.name == "identity_1d_uniform") {
        out.push_back({"moments", true, "X and X' share the uniform law on [0,1]"});
    } else {
        out.push_back({"moments", true, "X has compact support inside the support of the Gaussian X'"});
    }
    out.push_back({"strong_support", true, "not checked computationally (kappa, r_kappa)"});
    return out;
}

KRule KRule::parse(std::string_view text) {
    const std::string s(text);
    if (s.rfind("pow:", 0) == 0) {
        const double e = parse_double("k", s.substr(4));
        if (!(e > 0.0 && e <= 1.0)) throw InvalidInput("k exponent must lie in (0, 1]");
        return power(e);
    }
    if (s == "sqrt") return power(0.5);
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
    if (ec != std::errc() || ptr != s.data() + s.size() || k == 0) {
        throw InvalidInput("k must be a positive integer, 'sqrt' or 'pow:<exponent>', got '" + s + "'");
    }
    return constant(k);
}

std::size_t KRule::operator()(std::size_t m) const {
    std::size_t value = k;
    if (kind == Kind::Power) {
        // Round before ceil so exact powers like 100^0.5 are not pushed up by pow's last bit.
        const double raw = std::pow(static_cast<double>(m), exponent);
        value = static_cast<std::size_t>(std::ceil(raw - 1e-9 * raw));
    }
    return std::clamp<std::size_t>(value, 1, m);
}

std::string KRule::describe() const {
    return kind == Kind::Constant ? std::to_string(k) : "pow:" + format_double(exponent);
}

KRule noisy_optimal_k_rule(std::size_t d) { return KRule::power(2.0 / (static_cast<double>(d) + 2.0)); }

RateFit fit_loglog(std::span<const std::pair<double, double>> m_and_statistic) {
    RateFit fit;
    for (const auto& [m, stat] : m_and_statistic) {
        if (!(m > 0.0)) throw InvalidInput("log-log fit needs positive abscissae");
        if (!(stat > 0.0) || !std::isfinite(stat)) throw InvalidInput("log-log fit needs positive statistics");
        fit.points.emplace_back(std::log(m), std::log(stat));
    }
    std::set<double> distinct;
    for (const auto& p : fit.points) distinct.insert(p.first);
    if (distinct.size() < 2) throw InvalidInput("log-log fit needs at least two distinct abscissae");

    const double count = static_cast<double>(fit.points.size());
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [x, y] : fit.points) {
        xs.push_back(x);
        ys.push_back(y);
    }
    const double x_mean = compensated_sum(xs) / count;
    const double y_mean = compensated_sum(ys) / count;
    std::vector<double> sxy;
    std::vector<double> sxx;
    for (const auto& [x, y] : fit.points) {
        sxy.push_back((x - x_mean) * (y - y_mean));
        sxx.push_back((x - x_mean) * (x - x_mean));
    }
    fit.slope = compensated_sum(sxy) / compensated_sum(sxx);
    fit.intercept = y_mean - fit.slope * x_mean;
    std::vector<double> res2;
    for (const auto& [x, y] : fit.points) {
        const double r = y - (fit.intercept + fit.slope * x);
        res2.push_back(r * r);
    }
    fit.rms = std::sqrt(compensated_sum(res2) / count);
    return fit;
}

ExperimentResult wasserstein_rate_experiment(const Scenario& scenario, std::span<const std::size_t> m_grid,
                                             std::size_t n, const KRule& k_rule, double q, Norm norm,
                                             const HarnessOptions& options) {
    check_grid(m_grid);
    require_order(q);
    if (n == 0 || options.replications == 0) throw InvalidInput("n and replications must be positive");
    const std::size_t reps = options.replications;
    const double s_corr = scenario.params.contains("scorr") ? scenario.param("scorr") : 0.0;
    std::vector<RunRecord> runs(m_grid.size() * reps);

    parallel_for(runs.size(), options.threads, [&](std::size_t task) {
        const std::size_t a = task / reps;
        const std::size_t rep = task % reps;
        const std::size_t m = m_grid[a];
        const std::size_t k = k_rule(m);
        const Stopwatch watch{options.timing};

        Rng rng_eval = replication_stream(options.base_seed, rep, Purpose::EvalInputs);
        Rng rng_train = replication_stream(options.base_seed, rep, Purpose::TrainInputs);
        const Sample eval = scenario.sample_x(rng_eval, n);
        const Sample train = scenario.sample_x_train(rng_train, m);

        const NeighborTable table = neighbor_table(eval, train, k, norm);
        std::vector<double> costs;
        costs.reserve(n * k);
        for (std::size_t i = 0; i < n; ++i) {
            for (double dist : table.distances(i)) costs.push_back(cost_from_distance(dist, q));
        }
        const double statistic = compensated_sum(costs) / static_cast<double>(costs.size());
        std::string method = k == 1 ? "closed_form_1nn" : "knn_bound";

        if (options.certify && rep % 100 == 0) {
            const WeightVector wv = knn_weights(table, m);
            const ExactTransport exact = exact_wq(empirical_measure(eval), weighted_measure(train, wv), q, norm);
            const double tol = 1e-9 * std::max(1.0, statistic);
            if (k == 1 ? std::abs(exact.value - statistic) > tol : exact.value > statistic + tol) {
                throw NumericalFailure("closed form " + format_double(statistic) + " disagrees with exact LP " +
                                       format_double(exact.value) + " at m=" + std::to_string(m) +
                                       ", rep=" + std::to_string(rep));
            }
            method += "+lp_certified";
        }

        runs[task] = RunRecord{scenario.name, m,         n,       k, q, s_corr, rep, options.base_seed, statistic,
                               watch.seconds(), method};
    });

    ExperimentResult result;
    std::vector<double> abscissae(m_grid.begin(), m_grid.end());
    result.summary = summarize_by_block(runs, reps, abscissae);
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : result.summary) pts.emplace_back(row.abscissa, row.estimate.mean);
    if (pts.size() >= 2) result.fit = fit_loglog(pts);
    result.runs = std::move(runs);
    return result;
}

ExperimentResult qi_experiment(const Scenario& scenario, std::size_t m, std::size_t n, std::size_t k,
                               std::span<const double> s_corr_grid, Norm norm, const HarnessOptions& options) {
    if (!scenario.qi) throw InvalidInput("scenario " + scenario.name + " has no closed-form QI");
    if (!scenario.params.contains("scorr")) throw InvalidInput("scenario " + scenario.name + " has no s_corr parameter");
    if (s_corr_grid.empty()) throw InvalidInput("s_corr grid is empty");
    if (m == 0 || n == 0 || options.replications == 0) throw InvalidInput("m, n and replications must be positive");
    if (k == 0 || k > m) throw InvalidInput("k out of range [1, m]");

    std::vector<Scenario> variants;
    for (double s : s_corr_grid) variants.push_back(with_override(scenario, "scorr", format_double(s)));

    const std::size_t reps = options.replications;
    std::vector<RunRecord> runs(variants.size() * reps);
    parallel_for(runs.size(), options.threads, [&](std::size_t task) {
        const std::size_t a = task / reps;
        const std::size_t rep = task % reps;
        const Scenario& sc = variants[a];
        const Stopwatch watch{options.timing};

        Rng rng_eval = replication_stream(options.base_seed, rep, Purpose::EvalInputs);
        Rng rng_train = replication_stream(options.base_seed, rep, Purpose::TrainInputs);
        Rng rng_noise = replication_stream(options.base_seed, rep, Purpose::TrainNoise);
        const Sample eval = sc.sample_x(rng_eval, n);
        const LabeledSample train = sc.sample_training(rng_train, rng_noise, m);
        const WeightVector wv = knn_weights(neighbor_table(eval, train.inputs, k, norm), m);
        const double err = qi_hat(wv, train.outputs, sc.phi) - *sc.qi;

        runs[task] = RunRecord{sc.name, m, n, k, 1.0, s_corr_grid[a], rep, options.base_seed, err * err,
                               watch.seconds(), "qi_sq_error"};
    });

    ExperimentResult result;
    result.summary = summarize_by_block(runs, reps, std::vector<double>(s_corr_grid.begin(), s_corr_grid.end()));
    result.runs = std::move(runs);
    return result;
}

AtomResult atom_consistency_experiment(const Scenario& atom, std::span<const std::size_t> m_grid, std::size_t n,
                                       Norm norm, const HarnessOptions& options) {
    check_grid(m_grid);
    if (!atom.qi) throw InvalidInput("atom scenario needs a closed-form QI");
    if (n == 0 || options.replications == 0) throw InvalidInput("n and replications must be positive");

    // Every evaluation point sits on the atom.
    Rng probe(options.base_seed, 0);
    const Sample atom_points = atom.sample_x(probe, 2);
    if (atom_points.point(0)[0] != atom_points.point(1)[0]) {
        throw InvalidInput("scenario " + atom.name + " does not put X on a single atom");
    }
    AtomResult result;
    result.noise_variance = atom.noise_variance(atom_points.point(0));
    // sin(2 pi x0)^2 is ~1e-32 rather than 0 at x0 = 0.5; treat that as no noise.
    if (!atom.noiseless && !(result.noise_variance > 1e-12)) {
        throw InvalidInput("noise variance at the atom is zero; choose x0 with sin(2 pi x0) != 0");
    }
    result.floor = 0.5 * std::sqrt(result.noise_variance);

    const std::size_t reps = options.replications;
    std::vector<double> err_1nn(m_grid.size() * reps);
    std::vector<double> err_growing(m_grid.size() * reps);
    std::vector<RunRecord> runs(2 * m_grid.size() * reps);
    parallel_for(m_grid.size() * reps, options.threads, [&](std::size_t task) {
        const std::size_t a = task / reps;
        const std::size_t rep = task % reps;
        const std::size_t m = m_grid[a];
        const std::size_t k_growing = KRule::power(0.5)(m);
        const Stopwatch watch{options.timing};

        Rng rng_eval = replication_stream(options.base_seed, rep, Purpose::EvalInputs);
        Rng rng_train = replication_stream(options.base_seed, rep, Purpose::TrainInputs);
        Rng rng_noise = replication_stream(options.base_seed, rep, Purpose::TrainNoise);
        const Sample eval = atom.sample_x(rng_eval, n);
        const LabeledSample train = atom.sample_training(rng_train, rng_noise, m);
        const std::vector<double> phi_values = apply_observable(train.outputs, atom.phi);

        const KdTree index(train.inputs, norm);
        const double e1 = std::abs(qi_hat(knn_weights(neighbor_table(eval, index, 1), m), phi_values) - *atom.qi);
        const double eg =
            std::abs(qi_hat(knn_weights(neighbor_table(eval, index, k_growing), m), phi_values) - *atom.qi);
        err_1nn[task] = e1;
        err_growing[task] = eg;
        const double secs = watch.seconds();
        runs[2 * task] = RunRecord{atom.name, m, n, 1, 1.0, 0.0, rep, options.base_seed, e1, secs, "abs_error_k1"};
        runs[2 * task + 1] =
            RunRecord{atom.name, m, n, k_growing, 1.0, 0.0, rep, options.base_seed, eg, secs, "abs_error_ksqrt"};
    });

    for (std::size_t a = 0; a < m_grid.size(); ++a) {
        const auto first = static_cast<std::ptrdiff_t>(a * reps);
        const auto last = static_cast<std::ptrdiff_t>((a + 1) * reps);
        AtomRow row;
        row.m = m_grid[a];
        row.k_growing = KRule::power(0.5)(m_grid[a]);
        row.error_1nn = summarize(std::vector<double>(err_1nn.begin() + first, err_1nn.begin() + last));
        row.error_growing = summarize(std::vector<double>(err_growing.begin() + first, err_growing.begin() + last));
        result.rows.push_back(row);
    }
    result.runs = std::move(runs);
    return result;
}

ExperimentResult noisy_rate_experiment(const Scenario& scenario, std::span<const std::size_t> m_grid, std::size_t n,
                                       const KRule& k_rule, Norm norm, const HarnessOptions& options) {
    check_grid(m_grid);
    if (!scenario.psi) throw InvalidInput("scenario " + scenario.name + " has no closed-form psi");
    if (n == 0 || options.replications == 0) throw InvalidInput("n and replications must be positive");
    const std::size_t reps = options.replications;
    const double s_corr = scenario.params.contains("scorr") ? scenario.param("scorr") : 0.0;
    std::vector<RunRecord> runs(m_grid.size() * reps);

    parallel_for(runs.size(), options.threads, [&](std::size_t task) {
        const std::size_t a = task / reps;
        const std::size_t rep = task % reps;
        const std::size_t m = m_grid[a];
        const std::size_t k = k_rule(m);
        const Stopwatch watch{options.timing};

        Rng rng_eval = replication_stream(options.base_seed, rep, Purpose::EvalInputs);
        Rng rng_train = replication_stream(options.base_seed, rep, Purpose::TrainInputs);
        Rng rng_noise = replication_stream(options.base_seed, rep, Purpose::TrainNoise);
        const Sample eval = scenario.sample_x(rng_eval, n);
        const LabeledSample train = scenario.sample_training(rng_train, rng_noise, m);
        const WeightVector wv = knn_weights(neighbor_table(eval, train.inputs, k, norm), m);

        std::vector<double> psi_eval(n);
        for (std::size_t i = 0; i < n; ++i) psi_eval[i] = scenario.psi(eval.point(i));
        const double target = compensated_sum(psi_eval) / static_cast<double>(n);
        const double err = qi_hat(wv, train.outputs, scenario.phi) - target;

        runs[task] = RunRecord{scenario.name, m, n, k, 2.0, s_corr, rep, options.base_seed, err * err,
                               watch.seconds(), "qi_sq_error_vs_empirical_qi"};
    });

    ExperimentResult result;
    result.summary = summarize_by_block(runs, reps, std::vector<double>(m_grid.begin(), m_grid.end()));
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : result.summary) pts.emplace_back(row.abscissa, std::sqrt(row.estimate.mean));
    if (pts.size() >= 2) result.fit = fit_loglog(pts);
    result.runs = std::move(runs);
    return result;
}

}  // namespace wknn
