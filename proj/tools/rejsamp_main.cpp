// Command-line front end: draw chains, estimate, replicate, enumerate, and
// print truncated-ball distribution tables.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "rejsamp/balance.hpp"
#include "rejsamp/config.hpp"
#include "rejsamp/errors.hpp"
#include "rejsamp/estimators.hpp"
#include "rejsamp/ldist.hpp"
#include "rejsamp/oracle.hpp"
#include "rejsamp/simulate.hpp"

using namespace rejsamp;

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_path;
    bool fast = false;
    bool keep_replicates = false;
    std::string frame_path;
    std::string x_cols, z_cols, y_col;
    double ridge = -1.0;
    bool approx_joint = false;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = parse_config_file(opts.config_path);
    if (opts.seed != 0) cfg.base_seed = opts.seed;
    if (opts.fast) cfg.fast = true;
    if (opts.keep_replicates) cfg.keep_replicates = true;
    if (!opts.frame_path.empty()) {
        cfg.population.source = PopulationConfig::Source::File;
        cfg.population.path = opts.frame_path;
    }
    if (!opts.x_cols.empty()) cfg.population.schema.x_cols = split_csv(opts.x_cols);
    if (!opts.z_cols.empty()) cfg.population.schema.z_cols = split_csv(opts.z_cols);
    if (!opts.y_col.empty()) cfg.population.schema.y_col = opts.y_col;
    if (opts.ridge >= 0.0) cfg.ridge = opts.ridge;
    if (opts.approx_joint) cfg.approx_joint = true;
    return cfg;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot open output file: " + out_path);
    out << text;
}

int cmd_sample(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts);
    ChainDump dump = draw_chain_dump(cfg, 0);
    std::ostringstream os;
    os.precision(10);
    for (std::size_t ph = 0; ph < dump.global_per_phase.size(); ++ph) {
        os << "phase " << ph + 1 << ": n=" << dump.global_per_phase[ph].size()
           << " draws=" << dump.draws[ph];
        if (std::isfinite(dump.accepted_q[ph])) os << " accepted_q=" << dump.accepted_q[ph];
        os << "\nindices:";
        for (int g : dump.global_per_phase[ph]) os << " " << g;
        os << "\n";
    }
    os << "pi_star (innermost):";
    for (double v : dump.pi_star_innermost) os << " " << v;
    os << "\n";
    emit(os.str(), opts.out_path);
    return 0;
}

int cmd_estimate(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts);
    cfg.n_replicates = 1;
    cfg.keep_replicates = true;
    ExperimentSummary summary = run_experiment(cfg);
    std::ostringstream os;
    if (!summary.replicates.empty() && !summary.replicates[0].failed) {
        os << "estimator\testimate\tvariance\tci_low\tci_high\n";
        os.precision(10);
        for (const auto& [name, rep] : summary.replicates[0].reports)
            os << name << "\t" << rep.estimate << "\t" << rep.variance << "\t" << rep.ci_low
               << "\t" << rep.ci_high << "\n";
    } else {
        os << "replicate failed: " << summary.replicates[0].error_message << "\n";
    }
    emit(os.str(), opts.out_path);
    return 0;
}

int cmd_simulate(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts);
    ExperimentSummary summary = run_experiment(cfg);
    std::ostringstream os;
    os << summary.render();
    if (cfg.keep_replicates) {
        os << "replicate\testimator\testimate\tvariance\tci_low\tci_high\tdraws\n";
        os.precision(10);
        for (const auto& rec : summary.replicates) {
            if (rec.failed) {
                os << rec.index << "\t<error:" << rec.error_kind << ">\n";
                continue;
            }
            for (const auto& [name, rep] : rec.reports)
                os << rec.index << "\t" << name << "\t" << rep.estimate << "\t" << rep.variance
                   << "\t" << rep.ci_low << "\t" << rep.ci_high << "\t" << rec.acceptance_draws
                   << "\n";
        }
    }
    emit(os.str(), opts.out_path);
    return 0;
}

int cmd_oracle(int n, int n1, int n2, const std::string& gamma_spec, std::uint64_t seed,
               const std::string& out_path) {
    FinitePopulation pop = generate_synthetic(seed == 0 ? 7 : seed, n, 1.0, 1.0);
    double gamma = resolve_gamma(gamma_spec, pop.p());
    TwoPhaseEnumeration oracle(pop, n1, n2, gamma);

    double ybar0 = pop.y_mean();
    auto mean_n_denom = [&](const std::vector<int>&, const std::vector<int>& b) {
        double acc = 0.0;
        for (int g : b) acc += pop.y(g);
        // pi* = (n1/N)(n2/n1) = n2/N, so the N-denominator estimator is the
        // plain phase-II mean.
        return acc / static_cast<double>(b.size());
    };
    double e_mean = oracle.expectation(mean_n_denom, false);

    std::ostringstream os;
    os.precision(15);
    os << "population mean: " << ybar0 << "\n";
    os << "E(phase-II mean), no rejection: " << e_mean << " (delta " << e_mean - ybar0
       << ")\n";
    os << "phase-I sets: " << oracle.phase1_sets().size()
       << ", phase-II subsets per set: " << oracle.phase2_positions().size() << "\n";
    if (!std::isinf(gamma)) {
        long dead = oracle.dead_phase1_count();
        os << "dead phase-I sets (no accepting subset): " << dead << "\n";
        if (dead == 0) {
            double cond = oracle.expectation(mean_n_denom, true);
            os << "E(phase-II mean | accepted): " << cond << "\n";
        } else {
            os << "conditional moments undefined: the rejection loop would not"
                  " terminate for some phase-I sets at this threshold\n";
        }
    }
    emit(os.str(), out_path);
    return 0;
}

int cmd_ldist(int p, const std::string& gammas, const std::string& alphas, long draws,
              std::uint64_t seed, const std::string& out_path) {
    std::ostringstream os;
    os.precision(6);
    std::vector<double> gs;
    {
        std::stringstream ss(gammas);
        std::string tok;
        while (std::getline(ss, tok, ','))
            gs.push_back(tok == "inf" ? kInfGamma : std::stod(tok));
    }
    os << "p=" << p << "\n";
    os << "gamma_sq";
    for (double g : gs) os << "\t" << g;
    os << "\nv_p_gamma";
    for (double g : gs) os << "\t" << v_pgamma(p, g);
    os << "\n";
    if (!alphas.empty()) {
        std::stringstream ss(alphas);
        std::string tok;
        std::vector<double> as;
        while (std::getline(ss, tok, ',')) as.push_back(std::stod(tok));
        for (double g : gs) {
            MixtureSpec spec;
            spec.l_terms.push_back({1.0, p, g});
            auto qs = mixture_quantiles(spec, as, draws, seed);
            os << "quantiles gamma_sq=" << g << ":";
            for (std::size_t i = 0; i < as.size(); ++i)
                os << " q" << as[i] << "=" << qs[i];
            os << "\n";
        }
    }
    emit(os.str(), out_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"design-based two- and three-phase rejective sampling toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    int o_n = 6, o_n1 = 4, o_n2 = 2;
    std::string o_gamma = "inf";
    int l_p = 1;
    std::string l_gammas = "0.01,0.05,0.1";
    std::string l_alphas;
    long l_draws = 1000000;
    std::uint64_t l_seed = 20240601;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "experiment config file")->required();
        sub->add_option("--seed", opts.seed, "override base_seed");
        sub->add_option("--out", opts.out_path, "write output to file");
        sub->add_flag("--fast", opts.fast, "desk-scale defaults");
        sub->add_option("--frame", opts.frame_path, "delimited frame file (overrides source)");
        sub->add_option("--x-cols", opts.x_cols, "comma list of x columns for --frame");
        sub->add_option("--z-cols", opts.z_cols, "comma list of z columns for --frame");
        sub->add_option("--y-col", opts.y_col, "y column for --frame");
        sub->add_option("--ridge", opts.ridge, "add lambda*I to balance normalizers");
        sub->add_flag("--approx-joint", opts.approx_joint,
                      "allow the product approximation for joint inclusion probabilities");
    };

    CLI::App* sample = app.add_subcommand("sample", "draw one chain and report diagnostics");
    add_common(sample);
    CLI::App* estimate = app.add_subcommand("estimate", "one chain plus estimators");
    add_common(estimate);
    CLI::App* simulate = app.add_subcommand("simulate", "full Monte Carlo replication");
    add_common(simulate);
    simulate->add_flag("--keep-replicates", opts.keep_replicates,
                       "emit per-replicate records");

    CLI::App* oracle = app.add_subcommand("oracle", "exact small-population enumeration checks");
    oracle->add_option("--n", o_n, "population size (<= 14)");
    oracle->add_option("--n1", o_n1, "phase-I size");
    oracle->add_option("--n2", o_n2, "phase-II size");
    oracle->add_option("--gamma-sq", o_gamma, "threshold (number | inf | chisq_quantile:p)");
    oracle->add_option("--seed", l_seed, "frame seed");
    oracle->add_option("--out", opts.out_path, "write output to file");

    CLI::App* ldist = app.add_subcommand("ldist", "truncated-ball distribution tables");
    ldist->add_option("--p", l_p, "dimension");
    ldist->add_option("--gamma-sq", l_gammas, "comma list of thresholds (inf allowed)");
    ldist->add_option("--alpha", l_alphas, "comma list of quantile levels");
    ldist->add_option("--draws", l_draws, "Monte Carlo draws");
    ldist->add_option("--seed", l_seed, "Monte Carlo seed");
    ldist->add_option("--out", opts.out_path, "write output to file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sample->parsed()) return cmd_sample(opts);
        if (estimate->parsed()) return cmd_estimate(opts);
        if (simulate->parsed()) return cmd_simulate(opts);
        if (oracle->parsed())
            return cmd_oracle(o_n, o_n1, o_n2, o_gamma, l_seed, opts.out_path);
        if (ldist->parsed())
            return cmd_ldist(l_p, l_gammas, l_alphas, l_draws, l_seed, opts.out_path);
    } catch (const Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
