#include "wknn/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wknn/knn.hpp"

namespace wknn {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Cell {
    std::size_t i;
    std::size_t j;
    double flow;
};

bool cell_before(const Cell& a, const Cell& b) { return a.i < b.i || (a.i == b.i && a.j < b.j); }

// Rows are nodes [0, R), columns are nodes [R, R + C). The basis is a
// spanning tree of R + C - 1 cells.
class TransportSimplex {
public:
    TransportSimplex(std::span<const double> supply, std::span<const double> demand, std::span<const double> cost)
        : rows_(supply.size()),
          cols_(demand.size()),
          supply_(supply),
          demand_(demand),
          cost_(cost),
          adj_(rows_ + cols_),
          basic_(rows_ * cols_, 0),
          u_(rows_, 0.0),
          v_(cols_, 0.0) {
        cmax_ = 0.0;
        for (double c : cost_) cmax_ = std::max(cmax_, c);
        eps_ = 1e-12 * cmax_;
        northwest_corner();
    }

    std::size_t run() {
        const std::size_t max_pivots = 100 * rows_ * cols_ + 10000;
        std::size_t degenerate_streak = 0;
        bool bland = false;
        std::size_t pivots = 0;
        if (cmax_ == 0.0) return 0;

        for (; pivots < max_pivots; ++pivots) {
            compute_potentials();
            std::size_t ei = kNone;
            std::size_t ej = kNone;
            double best = -eps_;
            for (std::size_t i = 0; i < rows_ && !(bland && ei != kNone); ++i) {
                for (std::size_t j = 0; j < cols_; ++j) {
                    if (basic_[i * cols_ + j]) continue;
                    const double rc = cost_[i * cols_ + j] - u_[i] - v_[j];
                    if (rc < best) {
                        best = rc;
                        ei = i;
                        ej = j;
                        if (bland) break;
                    }
                }
            }
            if (ei == kNone) return pivots;

            const auto path = cycle_path(ei, ej);
            // path[0] touches column ej and loses flow; signs alternate from there.
            std::size_t leaving = kNone;
            double theta = std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < path.size(); p += 2) {
                const Cell& c = cells_[path[p]];
                if (c.flow < theta || (c.flow == theta && cell_before(c, cells_[leaving]))) {
                    theta = c.flow;
                    leaving = path[p];
                }
            }
            for (std::size_t p = 0; p < path.size(); ++p) {
                cells_[path[p]].flow += (p % 2 == 0) ? -theta : theta;
            }

            if (theta == 0.0) {
                if (++degenerate_streak > rows_ + cols_) bland = true;
            } else {
                degenerate_streak = 0;
            }
            replace_cell(leaving, {ei, ej, theta});
        }
        throw NumericalFailure("transportation simplex did not converge within " + std::to_string(max_pivots) +
                               " pivots");
    }

    ExactTransport certify(std::size_t pivots) {
        compute_potentials();

        // Row and column feasibility of the primal plan.
        std::vector<double> row_sum(rows_, 0.0);
        std::vector<double> col_sum(cols_, 0.0);
        for (auto& c : cells_) {
            if (c.flow < 0.0) {
                if (c.flow < -1e-12) throw NumericalFailure("negative transport flow " + std::to_string(c.flow));
                c.flow = 0.0;
            }
            row_sum[c.i] += c.flow;
            col_sum[c.j] += c.flow;
        }
        for (std::size_t i = 0; i < rows_; ++i) {
            if (std::abs(row_sum[i] - supply_[i]) > kCertificateTolerance) {
                throw NumericalFailure("transport plan violates source marginal at " + std::to_string(i));
            }
        }
        for (std::size_t j = 0; j < cols_; ++j) {
            if (std::abs(col_sum[j] - demand_[j]) > kCertificateTolerance) {
                throw NumericalFailure("transport plan violates target marginal at " + std::to_string(j));
            }
        }

        // Tighten column potentials so the dual is feasible by construction.
        std::vector<double> v_feasible(cols_, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                v_feasible[j] = std::min(v_feasible[j], cost_[i * cols_ + j] - u_[i]);
            }
        }

        std::vector<double> terms;
        terms.reserve(rows_ + cols_);
        for (std::size_t i = 0; i < rows_; ++i) terms.push_back(supply_[i] * u_[i]);
        for (std::size_t j = 0; j < cols_; ++j) terms.push_back(demand_[j] * v_feasible[j]);
        const double dual = compensated_sum(terms);

        std::vector<Cell> sorted = cells_;
        std::sort(sorted.begin(), sorted.end(), cell_before);
        terms.clear();
        ExactTransport out;
        for (const auto& c : sorted) {
            if (c.flow <= 0.0) continue;
            out.plan.entries.push_back({c.i, c.j, c.flow});
            terms.push_back(c.flow * cost_[c.i * cols_ + c.j]);
        }
        const double primal = compensated_sum(terms);

        out.value = primal;
        out.plan.cost = primal;
        out.dual_value = dual;
        out.duality_gap = primal - dual;
        out.pivots = pivots;
        const double tol = kCertificateTolerance * std::max(std::abs(primal), std::abs(dual)) + 1e-12 * cmax_;
        if (!(std::abs(out.duality_gap) <= tol)) {
            throw NumericalFailure("could not certify transport optimality: duality gap " +
                                   std::to_string(out.duality_gap));
        }
        return out;
    }

private:
    void northwest_corner() {
        std::vector<double> ra(supply_.begin(), supply_.end());
        std::vector<double> rb(demand_.begin(), demand_.end());
        std::size_t i = 0;
        std::size_t j = 0;
        while (true) {
            const double x = std::max(0.0, std::min(ra[i], rb[j]));
            add_cell({i, j, x});
            ra[i] -= x;
            rb[j] -= x;
            if (i + 1 == rows_ && j + 1 == cols_) break;
            if (j + 1 == cols_ || (i + 1 < rows_ && ra[i] <= rb[j])) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    void add_cell(const Cell& c) {
        const std::size_t id = cells_.size();
        cells_.push_back(c);
        link(id);
    }

    void link(std::size_t id) {
        const Cell& c = cells_[id];
        adj_[c.i].push_back(id);
        adj_[rows_ + c.j].push_back(id);
        basic_[c.i * cols_ + c.j] = 1;
    }

    void unlink(std::size_t id) {
        const Cell& c = cells_[id];
        std::erase(adj_[c.i], id);
        std::erase(adj_[rows_ + c.j], id);
        basic_[c.i * cols_ + c.j] = 0;
    }

    void replace_cell(std::size_t id, const Cell& entering) {
        unlink(id);
        cells_[id] = entering;
        link(id);
    }

    std::size_t other_end(std::size_t node, std::size_t id) const {
        const Cell& c = cells_[id];
        return node < rows_ ? rows_ + c.j : c.i;
    }

    void compute_potentials() {
        std::vector<char> seen(rows_ + cols_, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        u_[0] = 0.0;
        std::size_t visited = 1;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t id : adj_[node]) {
                const std::size_t next = other_end(node, id);
                if (seen[next]) continue;
                seen[next] = 1;
                ++visited;
                const Cell& c = cells_[id];
                const double cij = cost_[c.i * cols_ + c.j];
                if (next >= rows_) {
                    v_[c.j] = cij - u_[c.i];
                } else {
                    u_[c.i] = cij - v_[c.j];
                }
                stack.push_back(next);
            }
        }
        if (visited != rows_ + cols_) throw NumericalFailure("transportation basis is not a spanning tree");
    }

    // Basic cells on the tree path from column node `col` to row node `row`.
    std::vector<std::size_t> cycle_path(std::size_t row, std::size_t col) const {
        std::vector<std::size_t> via(rows_ + cols_, kNone);
        std::vector<char> seen(rows_ + cols_, 0);
        std::vector<std::size_t> stack{row};
        seen[row] = 1;
        const std::size_t target = rows_ + col;
        while (!stack.empty() && !seen[target]) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t id : adj_[node]) {
                const std::size_t next = other_end(node, id);
                if (seen[next]) continue;
                seen[next] = 1;
                via[next] = id;
                stack.push_back(next);
            }
        }
        std::vector<std::size_t> path;
        for (std::size_t node = target; node != row; node = other_end(node, via[node])) path.push_back(via[node]);
        return path;
    }

    std::size_t rows_;
    std::size_t cols_;
    std::span<const double> supply_;
    std::span<const double> demand_;
    std::span<const double> cost_;
    std::vector<Cell> cells_;
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<char> basic_;
    std::vector<double> u_;
    std::vector<double> v_;
    double cmax_ = 0.0;
    double eps_ = 0.0;
};

void check_masses(std::span<const double> masses, const char* what) {
    if (masses.empty()) throw InvalidInput(std::string(what) + " has empty support");
    for (double w : masses) {
        if (!std::isfinite(w) || w < 0.0) throw InvalidInput(std::string(what) + " has a negative or non-finite mass");
    }
}

}  // namespace

ExactTransport solve_transportation(std::span<const double> supply, std::span<const double> demand,
                                    std::span<const double> cost) {
    check_masses(supply, "source");
    check_masses(demand, "target");
    if (cost.size() != supply.size() * demand.size()) throw InvalidInput("cost matrix shape does not match the masses");
    for (double c : cost) {
        if (!std::isfinite(c) || c < 0.0) throw InvalidInput("transport costs must be finite and nonnegative");
    }
    const double total_a = compensated_sum(supply);
    const double total_b = compensated_sum(demand);
    if (std::abs(total_a - total_b) > 1e-9) {
        throw InvalidInput("mass mismatch: source sums to " + std::to_string(total_a) + ", target to " +
                           std::to_string(total_b));
    }
    TransportSimplex simplex(supply, demand, cost);
    const std::size_t pivots = simplex.run();
    return simplex.certify(pivots);
}

ExactTransport exact_wq(const DiscreteMeasure& source, const DiscreteMeasure& target, double q, Norm norm) {
    require_order(q);
    if (source.dim() != target.dim()) {
        throw InvalidInput("dimension mismatch between measures: " + std::to_string(source.dim()) + " vs " +
                           std::to_string(target.dim()));
    }
    std::vector<std::size_t> src_idx;
    std::vector<std::size_t> tgt_idx;
    std::vector<double> supply;
    std::vector<double> demand;
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source.masses()[i] > 0.0) {
            src_idx.push_back(i);
            supply.push_back(source.masses()[i]);
        }
    }
    for (std::size_t j = 0; j < target.size(); ++j) {
        if (target.masses()[j] > 0.0) {
            tgt_idx.push_back(j);
            demand.push_back(target.masses()[j]);
        }
    }
    std::vector<double> cost(supply.size() * demand.size());
    for (std::size_t a = 0; a < src_idx.size(); ++a) {
        for (std::size_t b = 0; b < tgt_idx.size(); ++b) {
            cost[a * tgt_idx.size() + b] =
                transport_cost(source.points().point(src_idx[a]), target.points().point(tgt_idx[b]), q, norm);
        }
    }
    ExactTransport out = solve_transportation(supply, demand, cost);
    for (auto& e : out.plan.entries) {
        e.source = src_idx[e.source];
        e.target = tgt_idx[e.target];
    }
    return out;
}

double wq_knn_bound(const Sample& eval, const Sample& train, std::size_t k, double q, Norm norm) {
    require_order(q);
    const NeighborTable table = neighbor_table(eval, train, k, norm);
    std::vector<double> costs;
    costs.reserve(table.rows() * k);
    for (std::size_t i = 0; i < table.rows(); ++i) {
        for (double dist : table.distances(i)) costs.push_back(cost_from_distance(dist, q));
    }
    return compensated_sum(costs) / static_cast<double>(costs.size());
}

double wq_1nn(const Sample& eval, const Sample& train, double q, Norm norm) {
    return wq_knn_bound(eval, train, 1, q, norm);
}

double wq_1d_uniform_oracle(std::vector<double> a, std::vector<double> b, double q) {
    require_order(q);
    if (a.size() != b.size()) {
        throw InvalidInput("1-D oracle needs equal sizes, got " + std::to_string(a.size()) + " and " +
                           std::to_string(b.size()));
    }
    if (a.empty()) throw InvalidInput("1-D oracle needs nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<double> costs(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) costs[i] = cost_from_distance(std::abs(a[i] - b[i]), q);
    return compensated_sum(costs) / static_cast<double>(a.size());
}

}  // namespace wknn
