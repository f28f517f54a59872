#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "wknn/experiments.hpp"

using namespace wknn;

namespace {

constexpr double kPi = std::numbers::pi;

template <typename F>
double trapezoid(F f, double a, double b, std::size_t nodes) {
    const double h = (b - a) / static_cast<double>(nodes - 1);
    double s = 0.5 * (f(a) + f(b));
    for (std::size_t i = 1; i + 1 < nodes; ++i) s += f(a + h * static_cast<double>(i));
    return s * h;
}

// E[phi(f(x, Theta))] and Var[phi(f(x, Theta))] for Theta ~ U[-1, 1], by quadrature over theta.
std::pair<double, double> theta_moments(const Scenario& sc, std::span<const double> x) {
    auto value = [&](double t) {
        const std::vector<double> th{t};
        return sc.phi(sc.model.f(x, th));
    };
    const double mean = 0.5 * trapezoid(value, -1.0, 1.0, 4001);
    const double second = 0.5 * trapezoid([&](double t) { return value(t) * value(t); }, -1.0, 1.0, 4001);
    return {mean, second - mean * mean};
}

HarnessOptions opts(std::size_t reps, std::size_t threads = 1) {
    HarnessOptions o;
    o.replications = reps;
    o.threads = threads;
    o.base_seed = 17;
    return o;
}

}  // namespace

TEST_CASE("scenario registry") {
    for (const auto& name : builtin_scenario_names()) CHECK(builtin_scenario(name).name == name);
    CHECK_THROWS_AS(builtin_scenario("nope"), InvalidInput);
    CHECK_THROWS_AS(builtin_scenario("diag_uniform_gauss", {{"bogus", "1"}}), InvalidInput);
    CHECK_THROWS_AS(builtin_scenario("diag_uniform_gauss", {{"scorr", "1"}}), InvalidInput);
    CHECK_THROWS_AS(builtin_scenario("diag_uniform_gauss", {{"sigma", "abc"}}), InvalidInput);
    CHECK_THROWS_AS(builtin_scenario("identity_1d_uniform", {{"sigma", "1"}}), InvalidInput);
    CHECK_THROWS_AS(builtin_scenario("gauss_gauss", {{"d", "2.5"}}), InvalidInput);

    const Scenario sc = builtin_scenario("diag_uniform_gauss");
    CHECK(sc.param("mu") == 0.5);
    CHECK(sc.param("sigma") == 0.3);
    CHECK(sc.param("scorr") == 0.0);
    CHECK(with_override(sc, "scorr", "0.9").param("scorr") == 0.9);
}

TEST_CASE("diagonal scenario QI equals quadrature") {
    const Scenario sc = builtin_scenario("diag_uniform_gauss");
    REQUIRE(sc.qi.has_value());
    const double oracle = trapezoid(
        [&](double u) {
            const std::vector<double> x{u, u};
            return theta_moments(sc, x).first;
        },
        0.0, 1.0, 2001);
    CHECK(*sc.qi == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(*sc.qi == 0.5);

    const Scenario one = builtin_scenario("diag_uniform_gauss", {{"phi", "one"}});
    CHECK(*one.qi == 1.0);
}

TEST_CASE("psi and noise variance agree with quadrature over theta") {
    for (const char* name : {"diag_uniform_gauss", "atom_demo", "gauss_gauss"}) {
        const Scenario sc = builtin_scenario(name);
        for (double u : {0.1, 0.25, 0.4, 0.77}) {
            const std::vector<double> x(sc.d, u);
            const auto [mean, var] = theta_moments(sc, x);
            CHECK(sc.psi(x) == doctest::Approx(mean).epsilon(1e-9));
            CHECK(sc.noise_variance(x) == doctest::Approx(var).epsilon(1e-6));
        }
    }
}

TEST_CASE("atom scenario has positive noise at the atom") {
    const Scenario atom = builtin_scenario("atom_demo");
    const double x0 = atom.param("x0");
    const std::vector<double> p0{x0, x0};
    CHECK(theta_moments(atom, p0).second > 0.1);
    CHECK(*atom.qi == doctest::Approx(theta_moments(atom, p0).first).epsilon(1e-9));
    Rng rng(1, 0);
    const Sample xs = atom.sample_x(rng, 10);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(xs.point(i)[0] == x0);
        CHECK(xs.point(i)[1] == x0);
    }
    // At (0.5, 0.5) the sine product vanishes, so there is no noise to exploit.
    const Scenario centre = builtin_scenario("atom_demo", {{"x0", "0.5"}});
    const std::vector<double> c{0.5, 0.5};
    CHECK(centre.noise_variance(c) < 1e-30);
}

TEST_CASE("gauss_gauss QI equals quadrature") {
    const Scenario sc = builtin_scenario("gauss_gauss", {{"sigma", "0.8"}});
    const double oracle = trapezoid(
        [](double z) { return std::cos(0.8 * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }, -12.0, 12.0,
        20001);
    CHECK(*sc.qi == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("training samples") {
    const Scenario sc = builtin_scenario("diag_uniform_gauss", {{"scorr", "0.5"}});
    Rng rx(3, 1), rn(3, 2);
    const LabeledSample train = sc.sample_training(rx, rn, 20000);
    double mx = 0, my = 0, cxy = 0, vx = 0;
    for (std::size_t j = 0; j < train.size(); ++j) {
        mx += train.inputs.point(j)[0];
        my += train.inputs.point(j)[1];
    }
    mx /= 20000;
    my /= 20000;
    for (std::size_t j = 0; j < train.size(); ++j) {
        const double a = train.inputs.point(j)[0] - mx;
        const double b = train.inputs.point(j)[1] - my;
        cxy += a * b;
        vx += a * a;
    }
    CHECK(mx == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::sqrt(vx / 20000) == doctest::Approx(0.3).epsilon(0.03));
    CHECK(cxy / vx == doctest::Approx(0.5).epsilon(0.05));
    CHECK(train.outputs.dim() == 1);
}

TEST_CASE("k rules") {
    CHECK(KRule::parse("4")(100) == 4);
    CHECK(KRule::parse("4")(2) == 2);
    CHECK(KRule::parse("sqrt")(100) == 10);
    CHECK(KRule::parse("sqrt")(101) == 11);
    CHECK(KRule::parse("pow:0.5")(10000) == 100);
    CHECK(noisy_optimal_k_rule(2)(10000) == 100);
    CHECK(KRule::parse("pow:0.1")(2) == 2);
    CHECK_THROWS_AS(KRule::parse("pow:0"), InvalidInput);
    CHECK_THROWS_AS(KRule::parse("0"), InvalidInput);
    CHECK_THROWS_AS(KRule::parse("pow:x"), InvalidInput);
    CHECK_THROWS_AS(KRule::parse("pow:1.5"), InvalidInput);
}

TEST_CASE("log-log fit recovers an exact power law") {
    std::vector<std::pair<double, double>> pts;
    for (double m : {100.0, 200.0, 400.0, 800.0}) pts.emplace_back(m, 3.0 * std::pow(m, -0.75));
    const RateFit fit = fit_loglog(pts);
    CHECK(fit.slope == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(fit.rms < 1e-12);
    const std::vector<std::pair<double, double>> one{{1.0, 1.0}};
    CHECK_THROWS_AS(fit_loglog(one), InvalidInput);
    const std::vector<std::pair<double, double>> neg{{1.0, 1.0}, {2.0, -1.0}};
    CHECK_THROWS_AS(fit_loglog(neg), InvalidInput);
}

TEST_CASE("1-D rate experiment matches the exact expected nearest-neighbour distance") {
    const Scenario sc = builtin_scenario("identity_1d_uniform");
    const std::vector<std::size_t> grid{50, 200};
    const auto res = wasserstein_rate_experiment(sc, grid, 100, KRule::constant(1), 1.0, Norm::L2, opts(400));
    REQUIRE(res.summary.size() == 2);
    for (const auto& row : res.summary) {
        const double m = row.abscissa;
        const double exact = (1.0 + 1.0 / (m + 2.0)) / (2.0 * (m + 1.0));
        CHECK(std::abs(row.estimate.mean - exact) <= 4.0 * row.estimate.std_error);
    }
    REQUIRE(res.fit.has_value());
    CHECK(res.fit->slope == doctest::Approx(-1.0).epsilon(0.1));
}

TEST_CASE("rate experiment is independent of the thread count and certifies against the LP") {
    const Scenario sc = builtin_scenario("diag_uniform_gauss", {{"scorr", "0.9"}});
    const std::vector<std::size_t> grid{20, 40};
    HarnessOptions a = opts(101, 1);
    HarnessOptions b = opts(101, 3);
    a.certify = true;
    b.certify = true;
    const auto ra = wasserstein_rate_experiment(sc, grid, 15, KRule::constant(1), 2.0, Norm::L2, a);
    const auto rb = wasserstein_rate_experiment(sc, grid, 15, KRule::constant(1), 2.0, Norm::L2, b);
    REQUIRE(ra.runs.size() == 202);
    for (std::size_t i = 0; i < ra.runs.size(); ++i) CHECK(ra.runs[i].statistic == rb.runs[i].statistic);
    CHECK(ra.runs[0].method == "closed_form_1nn+lp_certified");
    CHECK(ra.runs[100].method == "closed_form_1nn+lp_certified");
    CHECK(ra.runs[1].method == "closed_form_1nn");

    const auto rk = wasserstein_rate_experiment(sc, grid, 15, KRule::constant(3), 2.0, Norm::L2, a);
    CHECK(rk.runs[0].method == "knn_bound+lp_certified");
}

TEST_CASE("common random numbers across s_corr") {
    const std::vector<std::size_t> grid{30};
    const auto lo = wasserstein_rate_experiment(builtin_scenario("diag_uniform_gauss", {{"scorr", "-0.5"}}), grid, 10,
                                                KRule::constant(1), 2.0, Norm::L2, opts(5));
    const auto hi = wasserstein_rate_experiment(builtin_scenario("diag_uniform_gauss", {{"scorr", "-0.5"}}), grid, 10,
                                                KRule::constant(1), 2.0, Norm::L2, opts(5, 2));
    for (std::size_t i = 0; i < lo.runs.size(); ++i) CHECK(lo.runs[i].statistic == hi.runs[i].statistic);
}

TEST_CASE("noiseless QI error decreases with s_corr") {
    const Scenario sc = builtin_scenario("diag_uniform_gauss", {{"noiseless", "1"}});
    const std::vector<double> scorr{-0.9, 0.0, 0.9};
    const auto res = qi_experiment(sc, 300, 300, 1, scorr, Norm::L2, opts(150));
    REQUIRE(res.summary.size() == 3);
    CHECK(res.summary[0].estimate.mean > res.summary[1].estimate.mean);
    CHECK(res.summary[1].estimate.mean > res.summary[2].estimate.mean);
    CHECK(res.runs.front().s_corr == -0.9);
}

TEST_CASE("atom experiment") {
    const Scenario atom = builtin_scenario("atom_demo");
    const std::vector<std::size_t> grid{100, 400};
    const auto res = atom_consistency_experiment(atom, grid, 20, Norm::L2, opts(100));
    REQUIRE(res.rows.size() == 2);
    CHECK(res.noise_variance == doctest::Approx(1.0 / 3.0));
    CHECK(res.floor == doctest::Approx(0.5 * std::sqrt(1.0 / 3.0)));
    CHECK(res.rows[0].k_growing == 10);
    CHECK(res.rows[1].k_growing == 20);
    CHECK(res.rows[1].error_growing.mean < res.rows[1].error_1nn.mean);

    const Scenario quiet = builtin_scenario("atom_demo", {{"x0", "0.5"}});
    CHECK_THROWS_AS(atom_consistency_experiment(quiet, grid, 20, Norm::L2, opts(5)), InvalidInput);
}

TEST_CASE("noisy rate experiment") {
    const Scenario atom = builtin_scenario("atom_demo");
    const std::vector<std::size_t> grid{100, 400, 1600};
    const auto res = noisy_rate_experiment(atom, grid, 50, noisy_optimal_k_rule(2), Norm::L2, opts(100));
    REQUIRE(res.fit.has_value());
    CHECK(res.fit->slope < 0.0);
    CHECK(res.runs[0].k == 10);
    CHECK(res.runs.back().k == 40);
}

TEST_CASE("harness rejects bad grids") {
    const Scenario sc = builtin_scenario("identity_1d_uniform");
    const std::vector<std::size_t> unsorted{200, 100};
    CHECK_THROWS_AS(wasserstein_rate_experiment(sc, unsorted, 10, KRule::constant(1), 1.0, Norm::L2, opts(2)),
                    InvalidInput);
    const std::vector<std::size_t> empty;
    CHECK_THROWS_AS(wasserstein_rate_experiment(sc, empty, 10, KRule::constant(1), 1.0, Norm::L2, opts(2)),
                    InvalidInput);
    // k is clamped to m.
    const std::vector<std::size_t> small{5};
    CHECK(wasserstein_rate_experiment(sc, small, 10, KRule::constant(6), 1.0, Norm::L2, opts(2)).runs[0].k == 5);
}
