#include "wknn/estimators.hpp"

#include <cmath>

#include "wknn/knn.hpp"

namespace wknn {

double Observable::operator()(std::span<const double> y) const {
    const double value = fn(y);
    if (sup_bound && std::abs(value) > *sup_bound) {
        throw InvalidInput("observable '" + name + "' returned " + std::to_string(value) +
                           ", above its declared bound " + std::to_string(*sup_bound));
    }
    return value;
}

Observable observable_by_name(std::string_view name) {
    if (name == "identity") {
        return {[](std::span<const double> y) { return y[0]; }, std::nullopt, "identity"};
    }
    if (name == "one") {
        return {[](std::span<const double>) { return 1.0; }, 1.0, "one"};
    }
    throw InvalidInput("unknown observable '" + std::string(name) + "' (expected identity or one)");
}

std::vector<double> apply_observable(const Sample& outputs, const Observable& phi) {
    std::vector<double> values;
    values.reserve(outputs.size());
    for (std::size_t j = 0; j < outputs.size(); ++j) values.push_back(phi(outputs.point(j)));
    return values;
}

namespace {
double weighted_mean(const WeightVector& wv, std::span<const double> values, const char* what) {
    if (values.size() != wv.m()) {
        throw InvalidInput(std::string(what) + ": " + std::to_string(values.size()) + " values for " +
                           std::to_string(wv.m()) + " weights");
    }
    std::vector<double> terms(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) terms[j] = wv[j] * values[j];
    return compensated_sum(terms) / static_cast<double>(wv.m());
}
}  // namespace

double qi_hat(const WeightVector& wv, std::span<const double> phi_values) {
    return weighted_mean(wv, phi_values, "qi_hat");
}

double qi_hat(const WeightVector& wv, const Sample& outputs, const Observable& phi) {
    if (outputs.size() != wv.m()) {
        throw InvalidInput("qi_hat: " + std::to_string(outputs.size()) + " output rows for " +
                           std::to_string(wv.m()) + " weights");
    }
    return qi_hat(wv, apply_observable(outputs, phi));
}

double qi_tilde(const WeightVector& wv, std::span<const double> psi_values) {
    return weighted_mean(wv, psi_values, "qi_tilde");
}

std::vector<double> knn_regress(std::span<const double> x, const LabeledSample& train, std::size_t k, Norm norm) {
    const auto neighbors = knn_query(x, train.inputs, k, norm);
    const std::size_t e = train.outputs.dim();
    std::vector<double> out(e, 0.0);
    std::vector<double> column(k);
    for (std::size_t c = 0; c < e; ++c) {
        for (std::size_t l = 0; l < k; ++l) column[l] = train.outputs.point(neighbors[l].index)[c];
        out[c] = compensated_sum(column) / static_cast<double>(k);
    }
    return out;
}

double qi_knn(const Sample& eval, const LabeledSample& train, std::size_t k, const Observable& phi, Norm norm) {
    const NeighborTable table = neighbor_table(eval, train.inputs, k, norm);
    const std::vector<double> phi_values = apply_observable(train.outputs, phi);
    std::vector<double> per_point(table.rows());
    std::vector<double> row(k);
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto idx = table.indices(i);
        for (std::size_t l = 0; l < k; ++l) row[l] = phi_values[idx[l]];
        per_point[i] = compensated_sum(row) / static_cast<double>(k);
    }
    return compensated_sum(per_point) / static_cast<double>(table.rows());
}

McEstimate summarize(std::span<const double> values) {
    McEstimate est;
    est.count = values.size();
    if (values.empty()) return est;
    const double n = static_cast<double>(values.size());
    est.mean = compensated_sum(values) / n;
    if (values.size() > 1) {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double dev = values[i] - est.mean;
            sq[i] = dev * dev;
        }
        const double var = compensated_sum(sq) / (n - 1.0);
        est.std_error = std::sqrt(var / n);
    }
    return est;
}

McEstimate generalization_error_mc(const RegressionProblem& problem, std::size_t m, std::size_t k,
                                   std::size_t n_test, std::size_t replications, Norm norm, std::uint64_t seed,
                                   std::size_t threads) {
    if (m == 0 || n_test == 0 || replications == 0) throw InvalidInput("generalization error needs positive sizes");
    if (k == 0 || k > m) throw InvalidInput("k out of range [1, m]");
    const std::size_t d = problem.dim;
    std::vector<double> per_rep(replications);
    parallel_for(replications, threads, [&](std::size_t rep) {
        Rng rng_train = replication_stream(seed, rep, Purpose::TrainInputs);
        Rng rng_noise = replication_stream(seed, rep, Purpose::TrainNoise);
        Rng rng_test = replication_stream(seed, rep, Purpose::EvalInputs);

        std::vector<double> xs(m * d);
        std::vector<double> ys;
        ys.reserve(m * problem.model.output_dim);
        for (std::size_t j = 0; j < m; ++j) {
            const std::span<double> x{xs.data() + j * d, d};
            problem.draw_x_train(rng_train, x);
            const auto y = problem.model(x, rng_noise);
            ys.insert(ys.end(), y.begin(), y.end());
        }
        const Sample train_x(d, std::move(xs));
        const Sample train_y(problem.model.output_dim, std::move(ys));

        std::vector<double> xt(n_test * d);
        for (std::size_t i = 0; i < n_test; ++i) problem.draw_x(rng_test, {xt.data() + i * d, d});
        const Sample test(d, std::move(xt));

        const NeighborTable table = neighbor_table(test, train_x, k, norm);
        std::vector<double> sq(n_test);
        std::vector<double> row(k);
        for (std::size_t i = 0; i < n_test; ++i) {
            const auto idx = table.indices(i);
            for (std::size_t l = 0; l < k; ++l) row[l] = train_y.point(idx[l])[0];
            const double r_hat = compensated_sum(row) / static_cast<double>(k);
            const double err = problem.regression(test.point(i)) - r_hat;
            sq[i] = err * err;
        }
        per_rep[rep] = compensated_sum(sq) / static_cast<double>(n_test);
    });
    return summarize(per_rep);
}

}  // namespace wknn
