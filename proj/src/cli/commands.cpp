#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "cli/csv_io.hpp"
#include "wknn/experiments.hpp"
#include "wknn/knn.hpp"
#include "wknn/ot.hpp"
#include "wknn/theory.hpp"
#include "wknn/weights.hpp"

namespace wknn::cli {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw InvalidInput(what + ": '" + item + "' is not a nonnegative integer");
        }
        out.push_back(v);
    }
    if (out.empty()) throw InvalidInput(what + " is empty");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw InvalidInput(what + ": '" + item + "' is not a number");
        }
        out.push_back(v);
    }
    if (out.empty()) throw InvalidInput(what + " is empty");
    return out;
}

Overrides parse_overrides(const std::vector<std::string>& pairs) {
    Overrides out;
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidInput("--set expects key=value, got '" + p + "'");
        out[trim(p.substr(0, eq))] = trim(p.substr(eq + 1));
    }
    return out;
}

std::uint64_t default_seed() {
    const char* env = std::getenv("WKNN_SEED");
    if (env == nullptr || *env == '\0') return 1;
    std::uint64_t v = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw InvalidInput("WKNN_SEED='" + s + "' is not an unsigned integer");
    }
    return v;
}

// Options shared by the experiment subcommands.
struct HarnessFlags {
    std::uint64_t seed = 1;
    std::size_t reps = 200;
    std::size_t threads = 1;
    std::string out_dir = ".";
    bool certify = false;
    bool timing = false;
    std::string norm = "l2";
    std::string scenario;
    std::vector<std::string> set;

    HarnessOptions options() const { return {reps, seed, threads, certify, timing}; }
};

CLI::Option* take_last(CLI::Option* opt) { return opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast); }

void add_harness_flags(CLI::App* sub, HarnessFlags& flags, std::size_t default_reps, const std::string& scenario,
                       std::uint64_t seed, std::size_t threads) {
    flags.reps = default_reps;
    flags.seed = seed;
    flags.threads = threads;
    flags.scenario = scenario;
    take_last(sub->add_option("--scenario", flags.scenario, "built-in scenario name")->capture_default_str());
    sub->add_option("--set", flags.set, "scenario parameter override key=value (repeatable)");
    take_last(sub->add_option("--reps", flags.reps, "Monte Carlo replications")->capture_default_str());
    take_last(sub->add_option("--seed", flags.seed, "base seed (default: $WKNN_SEED or 1)")->capture_default_str());
    take_last(sub->add_option("--threads", flags.threads, "worker threads; never changes the output")
                  ->capture_default_str());
    take_last(sub->add_option("--out", flags.out_dir, "output directory")->capture_default_str());
    take_last(sub->add_option("--norm", flags.norm, "l1, l2 or linf")->capture_default_str());
    take_last(sub->add_flag("--timing", flags.timing, "record wall time per run (breaks byte reproducibility)"));
}

std::string option_value(const CLI::Option* opt) {
    if (opt->count() == 0) return opt->get_items_expected_max() == 0 ? "false" : opt->get_default_str();
    if (opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeLast) return opt->results().back();
    std::string joined;
    for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ";") + r;
    return joined;
}

void write_manifest(const fs::path& dir, const CLI::App* sub) {
    std::ofstream out(dir / "manifest.txt");
    out << "tool=wknn " << kVersion << '\n';
    out << "command=" << sub->get_name() << '\n';
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string& name = opt->get_lnames().front();
        // Neither changes any emitted number.
        if (name == "help" || name == "threads" || name == "out") continue;
        out << opt->get_lnames().front() << '=' << option_value(opt) << '\n';
    }
}

fs::path prepare_out_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw InvalidInput("cannot create output directory " + dir);
    return p;
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    writer(out);
}

// Splices `key = value` lines from a config file in front of the command-line
// flags of the subcommand; TakeLast then lets explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
    std::vector<std::string> rest;
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw InvalidInput("--config needs a file");
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config_path.empty()) return rest;
    if (rest.empty() || rest.front().starts_with("-")) throw InvalidInput("--config requires a subcommand");
    CLI::App* sub = app.get_subcommand_no_throw(rest.front());
    if (sub == nullptr) throw InvalidInput("unknown subcommand '" + rest.front() + "'");

    std::ifstream in(config_path);
    if (!in) throw InvalidInput("cannot open config file " + config_path);
    std::vector<std::string> injected;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidInput(config_path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.starts_with("--")) key = key.substr(2);
        const CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "help") {
            throw InvalidInput(config_path + ":" + std::to_string(line_no) + ": unknown key '" + key + "' for " +
                               sub->get_name());
        }
        if (opt->get_items_expected_max() == 0) {
            if (value == "true" || value == "1") {
                injected.push_back("--" + key);
            } else if (value != "false" && value != "0") {
                throw InvalidInput(config_path + ":" + std::to_string(line_no) + ": flag " + key +
                                   " expects true or false");
            }
        } else {
            injected.push_back("--" + key);
            injected.push_back(value);
        }
    }
    std::vector<std::string> out{rest.front()};
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
}

Scenario load_scenario(const HarnessFlags& flags, const std::map<std::string, std::string>& extra = {}) {
    Overrides ov = parse_overrides(flags.set);
    for (const auto& [k, v] : extra) ov[k] = v;
    return builtin_scenario(flags.scenario, ov);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Wasserstein-optimal k-NN reweighting under covariate shift", "wknn"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    const std::size_t hw_threads = std::max(1u, std::thread::hardware_concurrency());
    std::uint64_t seed0 = 1;
    try {
        seed0 = default_seed();
    } catch (const InvalidInput& e) {
        err << "wknn: invalid input: " << e.what() << '\n';
        return kExitInvalidInput;
    }

    // weights
    std::string w_eval, w_train, w_norm = "l2";
    std::size_t w_k = 1;
    auto* weights_cmd = app.add_subcommand("weights", "k-NN weight vector of the training sample");
    weights_cmd->add_option("eval", w_eval, "evaluation sample CSV")->required();
    weights_cmd->add_option("train", w_train, "training sample CSV")->required();
    take_last(weights_cmd->add_option("--k", w_k, "number of neighbours")->capture_default_str());
    take_last(weights_cmd->add_option("--norm", w_norm, "l1, l2 or linf")->capture_default_str());

    // distance
    std::string d_eval, d_train, d_norm = "l2";
    std::size_t d_k = 1;
    double d_q = 2.0;
    bool d_exact = false;
    auto* distance_cmd = app.add_subcommand("distance", "W_q^q between the evaluation sample and the reweighted training sample");
    distance_cmd->add_option("eval", d_eval, "evaluation sample CSV")->required();
    distance_cmd->add_option("train", d_train, "training sample CSV")->required();
    take_last(distance_cmd->add_option("--q", d_q, "transport order q >= 1")->capture_default_str());
    take_last(distance_cmd->add_option("--k", d_k, "number of neighbours")->capture_default_str());
    take_last(distance_cmd->add_option("--norm", d_norm, "l1, l2 or linf")->capture_default_str());
    take_last(distance_cmd->add_flag("--exact", d_exact, "solve and certify the transportation LP"));

    // rate-exp
    HarnessFlags rate_flags;
    std::string rate_grid = "100,200,400,800,1600,3200";
    std::string rate_k = "auto";
    std::string rate_statistic = "wasserstein";
    std::size_t rate_n = 100;
    double rate_q = 2.0;
    std::optional<double> rate_scorr;
    auto* rate_cmd = app.add_subcommand("rate-exp", "convergence rate in m of W_q^q or of the QI error");
    add_harness_flags(rate_cmd, rate_flags, 200, "diag_uniform_gauss", seed0, hw_threads);
    take_last(rate_cmd->add_option("--m-grid", rate_grid, "increasing training sizes")->capture_default_str());
    take_last(rate_cmd->add_option("--n", rate_n, "evaluation sample size")->capture_default_str());
    take_last(rate_cmd->add_option("--k", rate_k, "k, 'sqrt', 'pow:<e>' or 'auto'")->capture_default_str());
    take_last(rate_cmd->add_option("--q", rate_q, "transport order")->capture_default_str());
    take_last(rate_cmd->add_option("--scorr", rate_scorr, "correlation of the Gaussian training law"));
    take_last(rate_cmd->add_option("--statistic", rate_statistic, "wasserstein or qi_error")->capture_default_str());
    take_last(rate_cmd->add_flag("--certify", rate_flags.certify, "check every 100th replication by exact LP"));

    // qi-exp
    HarnessFlags qi_flags;
    std::string qi_grid = "-0.9,-0.6,-0.3,0,0.3,0.6,0.9";
    std::size_t qi_m = 900, qi_n = 900, qi_k = 4;
    auto* qi_cmd = app.add_subcommand("qi-exp", "L2 error of the QI estimator across s_corr");
    add_harness_flags(qi_cmd, qi_flags, 500, "diag_uniform_gauss", seed0, hw_threads);
    take_last(qi_cmd->add_option("--scorr-grid", qi_grid, "s_corr values")->capture_default_str());
    take_last(qi_cmd->add_option("--m", qi_m, "training sample size")->capture_default_str());
    take_last(qi_cmd->add_option("--n", qi_n, "evaluation sample size")->capture_default_str());
    take_last(qi_cmd->add_option("--k", qi_k, "number of neighbours")->capture_default_str());

    // atom-demo
    HarnessFlags atom_flags;
    std::string atom_grid = "100,1000,10000";
    std::size_t atom_n = 100;
    auto* atom_cmd = app.add_subcommand("atom-demo", "1-NN vs ceil(sqrt m)-NN QI error when X has an atom");
    add_harness_flags(atom_cmd, atom_flags, 200, "atom_demo", seed0, hw_threads);
    take_last(atom_cmd->add_option("--m-grid", atom_grid, "increasing training sizes")->capture_default_str());
    take_last(atom_cmd->add_option("--n", atom_n, "evaluation sample size")->capture_default_str());

    // regress-exp
    HarnessFlags reg_flags;
    std::size_t reg_m = 1000, reg_n_test = 100;
    std::string reg_k = "1";
    auto* reg_cmd = app.add_subcommand("regress-exp", "L2 generalization error of k-NN regression");
    add_harness_flags(reg_cmd, reg_flags, 200, "identity_1d_uniform", seed0, hw_threads);
    take_last(reg_cmd->add_option("--m", reg_m, "training sample size")->capture_default_str());
    take_last(reg_cmd->add_option("--k", reg_k, "k, 'sqrt' or 'pow:<e>'")->capture_default_str());
    take_last(reg_cmd->add_option("--n-test", reg_n_test, "test points per replication")->capture_default_str());

    // constants
    std::string c_scenario = "diag_uniform_gauss", c_norm = "l2", c_k = "1";
    std::vector<std::string> c_set;
    double c_q = 2.0;
    std::size_t c_draws = 100000;
    std::uint64_t c_seed = seed0;
    auto* const_cmd = app.add_subcommand("constants", "asymptotic rate constants for a scenario");
    take_last(const_cmd->add_option("--scenario", c_scenario, "built-in scenario name")->capture_default_str());
    const_cmd->add_option("--set", c_set, "scenario parameter override key=value (repeatable)");
    take_last(const_cmd->add_option("--q", c_q, "transport order")->capture_default_str());
    take_last(const_cmd->add_option("--norm", c_norm, "l1, l2 or linf")->capture_default_str());
    take_last(const_cmd->add_option("--k", c_k, "k for c_{d,q}")->capture_default_str());
    take_last(const_cmd->add_option("--draws", c_draws, "Monte Carlo draws for the density moment")
                  ->capture_default_str());
    take_last(const_cmd->add_option("--seed", c_seed, "seed (default: $WKNN_SEED or 1)")->capture_default_str());

    try {
        std::vector<std::string> argv = expand_config(args, app);
        std::reverse(argv.begin(), argv.end());
        try {
            app.parse(argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::CallForVersion&) {
            out << kVersion << '\n';
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) {
                out << app.help();
                return kExitOk;
            }
            err << "wknn: " << e.what() << '\n';
            return kExitInvalidInput;
        }

        if (weights_cmd->parsed()) {
            const Norm norm = parse_norm(w_norm);
            const SampleFile eval = read_sample_csv(fs::path(w_eval));
            const SampleFile train = read_sample_csv(fs::path(w_train));
            const WeightVector wv =
                knn_weights(neighbor_table(eval.inputs, train.inputs, w_k, norm), train.inputs.size());
            out << "index,weight\n";
            for (std::size_t j = 0; j < wv.m(); ++j) out << j << ',' << format_number(wv[j]) << '\n';
            return kExitOk;
        }

        if (distance_cmd->parsed()) {
            const Norm norm = parse_norm(d_norm);
            require_order(d_q);
            const SampleFile eval = read_sample_csv(fs::path(d_eval));
            const SampleFile train = read_sample_csv(fs::path(d_train));
            double value = 0.0;
            std::string method;
            if (d_exact) {
                const WeightVector wv =
                    knn_weights(neighbor_table(eval.inputs, train.inputs, d_k, norm), train.inputs.size());
                value = exact_wq(empirical_measure(eval.inputs), weighted_measure(train.inputs, wv), d_q, norm).value;
                method = "exact_lp";
            } else if (d_k == 1) {
                value = wq_1nn(eval.inputs, train.inputs, d_q, norm);
                method = "closed_form_1nn";
            } else {
                value = wq_knn_bound(eval.inputs, train.inputs, d_k, d_q, norm);
                method = "knn_bound";
            }
            out << "wq_q_power,method\n" << format_number(value) << ',' << method << '\n';
            return kExitOk;
        }

        if (rate_cmd->parsed()) {
            std::map<std::string, std::string> extra;
            if (rate_scorr) extra["scorr"] = format_number(*rate_scorr);
            const Scenario sc = load_scenario(rate_flags, extra);
            const Norm norm = parse_norm(rate_flags.norm);
            const auto grid = parse_size_list(rate_grid, "--m-grid");
            const fs::path dir = prepare_out_dir(rate_flags.out_dir);
            ExperimentResult result;
            if (rate_statistic == "wasserstein") {
                const KRule rule = rate_k == "auto" ? KRule::constant(1) : KRule::parse(rate_k);
                result = wasserstein_rate_experiment(sc, grid, rate_n, rule, rate_q, norm, rate_flags.options());
            } else if (rate_statistic == "qi_error") {
                const KRule rule = rate_k == "auto" ? noisy_optimal_k_rule(sc.d) : KRule::parse(rate_k);
                result = noisy_rate_experiment(sc, grid, rate_n, rule, norm, rate_flags.options());
            } else {
                throw InvalidInput("--statistic must be wasserstein or qi_error");
            }
            write_file(dir / "runs.csv", [&](std::ostream& o) { write_runs_csv(o, result.runs); });
            write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, "m", result.summary); });
            if (result.fit) write_file(dir / "ratefit.csv", [&](std::ostream& o) { write_ratefit_csv(o, *result.fit); });
            write_manifest(dir, rate_cmd);
            write_summary_csv(out, "m", result.summary);
            if (result.fit) write_ratefit_csv(out, *result.fit);
            return kExitOk;
        }

        if (qi_cmd->parsed()) {
            const Scenario sc = load_scenario(qi_flags);
            const Norm norm = parse_norm(qi_flags.norm);
            const auto grid = parse_double_list(qi_grid, "--scorr-grid");
            const fs::path dir = prepare_out_dir(qi_flags.out_dir);
            const ExperimentResult result = qi_experiment(sc, qi_m, qi_n, qi_k, grid, norm, qi_flags.options());
            write_file(dir / "runs.csv", [&](std::ostream& o) { write_runs_csv(o, result.runs); });
            write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, "s_corr", result.summary); });
            write_manifest(dir, qi_cmd);
            write_summary_csv(out, "s_corr", result.summary);
            return kExitOk;
        }

        if (atom_cmd->parsed()) {
            const Scenario sc = load_scenario(atom_flags);
            const Norm norm = parse_norm(atom_flags.norm);
            const auto grid = parse_size_list(atom_grid, "--m-grid");
            const fs::path dir = prepare_out_dir(atom_flags.out_dir);
            const AtomResult result = atom_consistency_experiment(sc, grid, atom_n, norm, atom_flags.options());
            auto summary = [&](std::ostream& o) {
                o << "m,k_growing,mean_error_k1,stderr_k1,mean_error_kgrowing,stderr_kgrowing,floor\n";
                for (const auto& row : result.rows) {
                    o << row.m << ',' << row.k_growing << ',' << format_number(row.error_1nn.mean) << ','
                      << format_number(row.error_1nn.std_error) << ',' << format_number(row.error_growing.mean) << ','
                      << format_number(row.error_growing.std_error) << ',' << format_number(result.floor) << '\n';
                }
            };
            write_file(dir / "runs.csv", [&](std::ostream& o) { write_runs_csv(o, result.runs); });
            write_file(dir / "summary.csv", summary);
            write_manifest(dir, atom_cmd);
            summary(out);
            return kExitOk;
        }

        if (reg_cmd->parsed()) {
            const Scenario sc = load_scenario(reg_flags);
            const Norm norm = parse_norm(reg_flags.norm);
            const std::size_t k = KRule::parse(reg_k)(reg_m);
            const fs::path dir = prepare_out_dir(reg_flags.out_dir);
            const McEstimate est = generalization_error_mc(sc.regression_problem(), reg_m, k, reg_n_test,
                                                           reg_flags.reps, norm, reg_flags.seed, reg_flags.threads);
            auto summary = [&](std::ostream& o) {
                o << "scenario,m,k,n_test,reps,mse,stderr\n";
                o << sc.name << ',' << reg_m << ',' << k << ',' << reg_n_test << ',' << reg_flags.reps << ','
                  << format_number(est.mean) << ',' << format_number(est.std_error) << '\n';
            };
            write_file(dir / "summary.csv", summary);
            write_manifest(dir, reg_cmd);
            summary(out);
            return kExitOk;
        }

        if (const_cmd->parsed()) {
            const Scenario sc = builtin_scenario(c_scenario, parse_overrides(c_set));
            const Norm norm = parse_norm(c_norm);
            const McEstimate moment = inv_density_moment(sc.draw_x, sc.log_density_train, c_q, sc.d, c_draws, c_seed);
            const RateConstant rc = rate_constant(c_q, sc.d, norm, moment.mean);
            const KRule rule = KRule::parse(c_k);
            const std::size_t k = rule.kind == KRule::Kind::Constant ? rule.k : 0;
            if (k == 0) throw InvalidInput("constants --k must be a positive integer");
            out << "scenario,q,d,norm,unit_ball_volume,zador_exponent,gamma_factor,inv_density_moment,"
                   "inv_density_moment_stderr,rate_constant,cdq_k,cdq_inf\n";
            const double ratio = c_q / static_cast<double>(sc.d);
            out << sc.name << ',' << format_number(c_q) << ',' << sc.d << ',' << norm_name(norm) << ','
                << format_number(rc.unit_ball_volume) << ',' << format_number(zador_exponent(c_q, sc.d)) << ','
                << format_number(lanczos_gamma(1.0 + ratio) / std::pow(rc.unit_ball_volume, ratio)) << ','
                << format_number(moment.mean) << ',' << format_number(moment.std_error) << ','
                << format_number(rc.value) << ',' << format_number(cdq(c_q, sc.d, k)) << ','
                << format_number(cdq(c_q, sc.d, std::nullopt)) << '\n';
            for (const auto& diag : scenario_diagnostics(sc, c_q)) {
                err << "diagnostic " << diag.assumption << ": " << (diag.satisfied ? "ok" : "violated") << " ("
                    << diag.detail << ")\n";
            }
            return kExitOk;
        }
    } catch (const InvalidInput& e) {
        err << "wknn: invalid input: " << e.what() << '\n';
        return kExitInvalidInput;
    } catch (const NumericalFailure& e) {
        err << "wknn: numerical failure: " << e.what() << '\n';
        return kExitNumericalFailure;
    } catch (const std::exception& e) {
        err << "wknn: " << e.what() << '\n';
        return kExitInvalidInput;
    }
    return kExitInvalidInput;
}

}  // namespace wknn::cli
