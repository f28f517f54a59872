// Acceptance suite: one PASS/FAIL line per criterion.
// `--expect-fail 6,...` lists criteria known to fail; the exit status counts only the others.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wknn/experiments.hpp"
#include "wknn/knn.hpp"
#include "wknn/ot.hpp"
#include "wknn/weights.hpp"

using namespace wknn;

namespace {

// Tolerances and sizes for each criterion.
constexpr double kClosedFormTol = 1e-9;      // 1
constexpr double kOptimalityTol = 1e-12;     // 2
constexpr double kOrderingTol = 1e-12;       // 3
constexpr double kAssignmentTol = 1e-9;      // 4
constexpr double kRateConstantRelTol = 0.05; // 5
constexpr double kSlopeLo = -1.15;           // 6
constexpr double kSlopeHi = -0.85;
constexpr double kNoiseBoundSe = 3.0;        // 8
constexpr double kWeightSumTol = 1e-9;       // 9
constexpr double kNoisySlope = -0.25;        // 12
constexpr double kNoisySlopeTol = 0.10;

const std::size_t kThreads = std::max(1u, std::thread::hardware_concurrency());

struct Instance {
    Sample eval;
    Sample train;
    double q;
    Norm norm;
};

Sample uniform_sample(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<double> v(n * d);
    for (double& x : v) x = rng.uniform();
    return Sample(d, std::move(v));
}

std::vector<Instance> random_instances(std::uint64_t seed, std::size_t count, std::size_t min_m) {
    Rng rng(seed, 0);
    std::vector<Instance> out;
    for (std::size_t t = 0; t < count; ++t) {
        const std::size_t n = 1 + rng() % 12;
        const std::size_t m = min_m + rng() % (13 - min_m);
        const std::size_t d = 1 + rng() % 3;
        const double q = 1.0 + static_cast<double>(t % 3);
        const Norm norm = static_cast<Norm>(rng() % 3);
        out.push_back({uniform_sample(rng, n, d), uniform_sample(rng, m, d), q, norm});
    }
    return out;
}

double lp_value(const Instance& in, const DiscreteMeasure& target) {
    return exact_wq(empirical_measure(in.eval), target, in.q, in.norm).value;
}

double lp_knn(const Instance& in, std::size_t k) {
    const WeightVector w = knn_weights(neighbor_table(in.eval, in.train, k, in.norm), in.train.size());
    return lp_value(in, weighted_measure(in.train, w));
}

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;
int expected_failures = 0;
std::set<int> expect_fail;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool known = expect_fail.contains(id);
    if (!o.pass) ++(known ? expected_failures : failures);
    std::printf("criterion %2d %s: %s (%s; %.1fs)%s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                secs, known ? (o.pass ? " [listed as expected failure]" : " [expected failure]") : "");
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

HarnessOptions harness(std::size_t reps, std::uint64_t seed) {
    HarnessOptions o;
    o.replications = reps;
    o.base_seed = seed;
    o.threads = kThreads;
    return o;
}

Outcome closed_form_exactness() {
    double worst = 0.0;
    for (const auto& in : random_instances(101, 200, 1)) {
        const double lp = lp_knn(in, 1);
        worst = std::max(worst, std::abs(lp - wq_1nn(in.eval, in.train, in.q, in.norm)));
    }
    return {worst <= kClosedFormTol, fmt("200 instances, max |closed form - LP| = %.3g <= %.0e", worst, kClosedFormTol)};
}

// Random feasible weights: Dirichlet on a random support, or a small perturbation of the 1-NN weights.
std::vector<double> random_weights(Rng& rng, const WeightVector& w1, int r) {
    const std::size_t m = w1.m();
    std::vector<double> w(m, 0.0);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t support = 1 + rng() % m;
    double s = 0.0;
    for (std::size_t a = 0; a < support; ++a) s += (w[idx[a]] = -std::log(rng.uniform()));
    for (double& x : w) x *= static_cast<double>(m) / s;
    if (r % 2 == 1) {
        const double eps = std::pow(10.0, -1.0 - static_cast<double>(r % 6));
        for (std::size_t j = 0; j < m; ++j) w[j] = (1.0 - eps) * w1[j] + eps * w[j];
    }
    return w;
}

Outcome optimality() {
    const auto instances = random_instances(101, 200, 1);
    std::vector<std::size_t> violations(instances.size(), 0);
    std::vector<double> margin(instances.size(), INFINITY);
    parallel_for(instances.size(), kThreads, [&](std::size_t t) {
        const auto& in = instances[t];
        Rng rng(202, t);
        const WeightVector w1 = knn_weights(neighbor_table(in.eval, in.train, 1, in.norm), in.train.size());
        const double best = lp_value(in, weighted_measure(in.train, w1));
        for (int r = 0; r < 500; ++r) {
            const double other = lp_value(in, weighted_measure(in.train, random_weights(rng, w1, r)));
            margin[t] = std::min(margin[t], other - best);
            if (best > other + kOptimalityTol) ++violations[t];
        }
    });
    const std::size_t total = std::accumulate(violations.begin(), violations.end(), std::size_t{0});
    return {total == 0, fmt("200 instances x 500 weight vectors, violations beyond %.0e: %zu, min margin %.3g",
                            kOptimalityTol, total, *std::min_element(margin.begin(), margin.end()))};
}

Outcome bound_and_monotonicity() {
    std::size_t bad = 0;
    for (const auto& in : random_instances(303, 100, 5)) {
        const double lp1 = lp_knn(in, 1);
        for (std::size_t k : {1u, 2u, 3u, 5u}) {
            const double lpk = lp_knn(in, k);
            const double bound = wq_knn_bound(in.eval, in.train, k, in.q, in.norm);
            if (bound < lpk - kOrderingTol || lpk < lp1 - kOrderingTol) ++bad;
        }
    }
    return {bad == 0, fmt("100 instances x k in {1,2,3,5}, ordering violations: %zu", bad)};
}

double brute_assignment(const Sample& a, const Sample& b, double q, Norm norm) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) c += transport_cost(a.point(i), b.point(perm[i]), q, norm);
        best = std::min(best, c / static_cast<double>(perm.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Outcome assignment_oracle() {
    Rng rng(404, 0);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng() % 7;
        const std::size_t d = 1 + rng() % 3;
        const double q = 1.0 + static_cast<double>(t % 3);
        const Sample a = uniform_sample(rng, n, d);
        const Sample b = uniform_sample(rng, n, d);
        const double lp = exact_wq(empirical_measure(a), empirical_measure(b), q, Norm::L2).value;
        worst = std::max(worst, std::abs(lp - brute_assignment(a, b, q, Norm::L2)));
    }
    return {worst <= kAssignmentTol, fmt("50 instances n=m<=7, max |LP - permutation minimum| = %.3g", worst)};
}

Outcome one_d_rate_constant() {
    const Scenario sc = builtin_scenario("identity_1d_uniform");
    const std::vector<std::size_t> grid{2000};
    const auto res = wasserstein_rate_experiment(sc, grid, 100, KRule::constant(1), 1.0, Norm::L2, harness(2000, 5));
    const double m = 2000.0;
    const double scaled = m * res.summary[0].estimate.mean;
    const double scaled_se = m * res.summary[0].estimate.std_error;
    // E min_j |X - X'_j| for X, X'_1..X'_m iid uniform on [0,1].
    const double exact = m * (1.0 + 1.0 / (m + 2.0)) / (2.0 * (m + 1.0));
    const double constant = rate_constant(1.0, 1, Norm::L2, 1.0).value;
    const bool ok = std::abs(scaled - constant) <= kRateConstantRelTol * constant &&
                    std::abs(exact - constant) <= kRateConstantRelTol * constant &&
                    std::abs(scaled - exact) <= 4.0 * scaled_se;
    return {ok, fmt("m * mean W1 = %.5f +- %.5f, exact integral %.5f, constant %.5f, tolerance 5%%", scaled, scaled_se,
                    exact, constant)};
}

Outcome figure4() {
    const std::vector<std::size_t> grid{100, 200, 400, 800, 1600, 3200};
    std::string detail;
    bool ok = true;
    double prev_intercept = INFINITY;
    std::vector<double> prev_means(grid.size(), INFINITY);
    bool means_ordered = true;
    for (double s : {-0.9, 0.0, 0.9}) {
        const Scenario sc = builtin_scenario("diag_uniform_gauss", {{"scorr", fmt("%.17g", s)}});
        const auto res = wasserstein_rate_experiment(sc, grid, 100, KRule::constant(1), 2.0, Norm::L2, harness(200, 6));
        const RateFit& fit = *res.fit;
        ok = ok && fit.slope >= kSlopeLo && fit.slope <= kSlopeHi && fit.intercept < prev_intercept;
        prev_intercept = fit.intercept;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            means_ordered = means_ordered && res.summary[a].estimate.mean < prev_means[a];
            prev_means[a] = res.summary[a].estimate.mean;
        }
        detail += fmt("%ss=%+.1f slope %.3f intercept %.3f", detail.empty() ? "" : ", ", s, fit.slope, fit.intercept);
    }
    // Reported only: whether E W2^2 itself decreases in s_corr at every m.
    return {ok, detail + fmt("; slopes in [%.2f, %.2f], intercepts decreasing; means decreasing in s_corr at every m: %s",
                             kSlopeLo, kSlopeHi, means_ordered ? "yes" : "no")};
}

Outcome figure5() {
    const Scenario sc = builtin_scenario("diag_uniform_gauss");
    const std::vector<double> scorr{-0.9, 0.9};
    const auto res = qi_experiment(sc, 900, 900, 4, scorr, Norm::L2, harness(500, 7));
    const McEstimate lo = res.summary[0].estimate;
    const McEstimate hi = res.summary[1].estimate;
    const bool ok = hi.mean < lo.mean && hi.mean + 2.0 * hi.std_error < lo.mean - 2.0 * lo.std_error;
    return {ok, fmt("500 reps: s=-0.9 %.4g +- %.2g, s=+0.9 %.4g +- %.2g (2 se intervals disjoint)", lo.mean,
                    lo.std_error, hi.mean, hi.std_error)};
}

Outcome noise_variance_bound() {
    const Scenario sc = builtin_scenario("diag_uniform_gauss");
    const double phi_sup = 2.0;  // |sin sin (1 + theta)| <= 2
    const std::size_t n = 900, m = 900, reps = 200;
    std::string detail;
    bool ok = true;
    for (std::size_t k : {1u, 4u, 16u, 64u}) {
        std::vector<double> sq(reps);
        parallel_for(reps, kThreads, [&](std::size_t r) {
            Rng re = replication_stream(8, r, Purpose::EvalInputs);
            Rng rt = replication_stream(8, r, Purpose::TrainInputs);
            Rng rn = replication_stream(8, r, Purpose::TrainNoise);
            const Sample eval = sc.sample_x(re, n);
            const LabeledSample train = sc.sample_training(rt, rn, m);
            const WeightVector w = knn_weights(neighbor_table(eval, train.inputs, k, Norm::L2), m);
            std::vector<double> psi(m);
            for (std::size_t j = 0; j < m; ++j) psi[j] = sc.psi(train.inputs.point(j));
            const double diff = qi_hat(w, train.outputs, sc.phi) - qi_tilde(w, psi);
            sq[r] = diff * diff;
        });
        const McEstimate e = summarize(sq);
        const double bound = 4.0 * phi_sup * phi_sup / static_cast<double>(k);
        ok = ok && e.mean <= bound + kNoiseBoundSe * e.std_error;
        detail += fmt("%sk=%zu %.3g <= %.3g", detail.empty() ? "" : ", ", k, e.mean, bound);
    }
    return {ok, detail};
}

Outcome weight_invariants() {
    Rng rng(909, 0);
    std::size_t bad = 0;
    std::vector<std::size_t> all;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t m = 1 + rng() % 40;
        const std::size_t n = 1 + rng() % 40;
        const std::size_t k = 1 + rng() % m;
        all.resize(m);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i) {
            std::iota(all.begin(), all.end(), std::size_t{0});
            std::shuffle(all.begin(), all.end(), rng);
            idx.insert(idx.end(), all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
        }
        const WeightVector w = knn_weights(NeighborTable(k, m, idx, std::vector<double>(n * k, 0.0)), m);
        double sum = 0.0, sq = 0.0;
        for (double x : w.values()) {
            sum += x;
            sq += x * x;
        }
        const double md = static_cast<double>(m);
        if (std::abs(sum - md) > kWeightSumTol || sq > md * md / static_cast<double>(k) * (1.0 + 1e-12)) ++bad;
    }
    return {bad == 0, fmt("10000 random tables, violations: %zu", bad)};
}

Outcome atom_phenomenon() {
    const Scenario atom = builtin_scenario("atom_demo");
    const std::vector<std::size_t> grid{100, 1000, 10000};
    const AtomResult res = atom_consistency_experiment(atom, grid, 100, Norm::L2, harness(200, 10));
    bool ok = res.rows.back().error_growing.mean < 0.5 * res.rows.front().error_growing.mean;
    std::string detail = fmt("floor %.3f; 1-NN error", res.floor);
    for (const auto& row : res.rows) {
        ok = ok && row.error_1nn.mean > res.floor;
        detail += fmt(" %.3f", row.error_1nn.mean);
    }
    detail += fmt("; ceil(sqrt m)-NN error %.3f -> %.3f", res.rows.front().error_growing.mean,
                  res.rows.back().error_growing.mean);
    return {ok, detail};
}

Outcome index_correctness() {
    Rng rng(1111, 0);
    std::size_t mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = 1 + rng() % 5;
        const std::size_t m = 1 + rng() % 200;
        const std::size_t n = 1 + rng() % 200;
        const std::size_t k = 1 + rng() % std::min<std::size_t>(m, 20);
        const Norm norm = static_cast<Norm>(rng() % 3);
        // Every other instance sits on a coarse grid so distance ties are frequent.
        const int levels = t % 2 == 0 ? 3 : 0;
        auto draw = [&](std::size_t count) {
            std::vector<double> v(count * d);
            for (double& x : v) x = levels ? std::floor(rng.uniform() * levels) / levels : rng.uniform();
            return Sample(d, std::move(v));
        };
        const Sample train = draw(m);
        const Sample eval = draw(n);
        if (!(neighbor_table(eval, train, k, norm) == neighbor_table_brute(eval, train, k, norm))) ++mismatches;
    }
    return {mismatches == 0, fmt("1000 instances (half with ties), mismatching tables: %zu", mismatches)};
}

Outcome noisy_rate() {
    const Scenario atom = builtin_scenario("atom_demo");
    const std::vector<std::size_t> grid{16000, 32000, 64000, 128000, 256000, 512000};
    const auto res = noisy_rate_experiment(atom, grid, 10000, noisy_optimal_k_rule(2), Norm::L2, harness(200, 12));
    const double slope = res.fit->slope;
    return {std::abs(slope - kNoisySlope) <= kNoisySlopeTol,
            fmt("atom_demo, n=10000, k=ceil(m^0.5), m=16000..512000: RMS slope %.3f, target %.2f +- %.2f", slope,
                kNoisySlope, kNoisySlopeTol)};
}

}  // namespace

int main(int argc, char** argv) {
    for (int a = 1; a + 1 < argc; a += 2) {
        if (std::string(argv[a]) != "--expect-fail") {
            std::fprintf(stderr, "usage: acceptance [--expect-fail N,...]\n");
            return 2;
        }
        std::stringstream ids(argv[a + 1]);
        std::string id;
        while (std::getline(ids, id, ',')) expect_fail.insert(std::stoi(id));
    }
    report(1, "closed form equals exact LP", closed_form_exactness);
    report(2, "1-NN weights are optimal", optimality);
    report(3, "k-NN bound and monotonicity", bound_and_monotonicity);
    report(4, "assignment oracle", assignment_oracle);
    report(5, "1-D rate constant", one_d_rate_constant);
    report(6, "W2 rate m^-1 and ordering in s_corr", figure4);
    report(7, "QI error ordering in s_corr", figure5);
    report(8, "noisy-case variance bound", noise_variance_bound);
    report(9, "weight-vector invariants", weight_invariants);
    report(10, "atom phenomenon", atom_phenomenon);
    report(11, "k-d tree equals brute force", index_correctness);
    report(12, "noisy rate exponent", noisy_rate);
    std::printf("%d of 12 criteria failed (%d of them listed as expected failures)\n", failures + expected_failures,
                expected_failures);
    return failures;
}
