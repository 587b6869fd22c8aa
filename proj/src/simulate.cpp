#include "rejsamp/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "rejsamp/balance.hpp"
#include "rejsamp/designs.hpp"
#include "rejsamp/errors.hpp"
#include "rejsamp/estequ.hpp"
#include "rejsamp/ldist.hpp"
#include "rejsamp/variance.hpp"

namespace rejsamp {

double theoretical_varred(double f_II_I, double f_I_0, int p, double gamma_sq, double r_sq) {
    if (f_II_I * f_I_0 >= 1.0) return 0.0;  // census: no reduction
    double v = v_pgamma(std::max(p, 1), gamma_sq);
    return 100.0 * (1.0 - f_II_I) / (1.0 - f_II_I * f_I_0) * (1.0 - v) * r_sq;
}

FinitePopulation make_api_style_frame(std::uint64_t seed, int n_units) {
    RandomStream rng(seed);
    FinitePopulation pop;
    pop.x.resize(n_units, 1);
    pop.z.resize(n_units, 3);
    pop.y.resize(n_units);
    auto clamp = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };
    for (int i = 0; i < n_units; ++i) {
        double t = rng.normal();
        double x = clamp(600.0 + 120.0 * t + 15.0 * rng.normal(), 100.0, 1100.0);
        double z1 = clamp(50.0 - 25.0 * t + 10.0 * rng.normal(), 1.0, 100.0);
        double z2 = clamp(55.0 - 28.0 * t + 12.0 * rng.normal(), 1.0, 100.0);
        double z3 = clamp(15.0 - 4.0 * t + 5.0 * rng.normal(), 1.0, 100.0);
        pop.x(i, 0) = x;
        pop.z(i, 0) = z1;
        pop.z(i, 1) = z2;
        pop.z(i, 2) = z3;
        pop.y(i) = 20.0 + 0.95 * x - 0.10 * z1 - 0.06 * z2 + 8.0 * rng.normal();
    }
    pop.x_names = {"x1"};
    pop.z_names = {"z1", "z2", "z3"};
    pop.validate();
    return pop;
}

FinitePopulation build_population(const ExperimentConfig& config) {
    const auto& pc = config.population;
    std::uint64_t seed = pc.seed != 0
                             ? pc.seed
                             : RandomStream::derive(config.base_seed, 0xF0F0F0F0ULL).next_u64();
    switch (pc.source) {
        case PopulationConfig::Source::Synthetic:
            return generate_synthetic(seed, static_cast<int>(pc.n_units), pc.beta, pc.noise_sd);
        case PopulationConfig::Source::ApiStyle:
            return make_api_style_frame(seed, static_cast<int>(pc.n_units));
        case PopulationConfig::Source::File:
            return load_population(pc.path, pc.schema);
    }
    throw ConfigError("unknown population source");
}

namespace {

Eigen::VectorXd column_values(const FinitePopulation& pop, const std::string& name) {
    if (name == "sum_z") {
        if (pop.q() == 0) throw ConfigError("probs_from sum_z: frame has no z columns");
        return pop.z.rowwise().sum();
    }
    for (int c = 0; c < pop.p(); ++c)
        if (pop.x_names.size() > static_cast<std::size_t>(c) &&
            pop.x_names[static_cast<std::size_t>(c)] == name)
            return pop.x.col(c);
    for (int c = 0; c < pop.q(); ++c)
        if (pop.z_names.size() > static_cast<std::size_t>(c) &&
            pop.z_names[static_cast<std::size_t>(c)] == name)
            return pop.z.col(c);
    if (name == pop.y_name && pop.y_observed) return pop.y;
    throw ConfigError("probs_from: unknown column '" + name + "'");
}

std::vector<int> stratum_labels(const FinitePopulation& pop, const std::string& column) {
    Eigen::VectorXd vals = column_values(pop, column);
    std::vector<double> uniq(vals.data(), vals.data() + vals.size());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<int> out(static_cast<std::size_t>(vals.size()));
    for (int i = 0; i < vals.size(); ++i) {
        auto it = std::lower_bound(uniq.begin(), uniq.end(), vals(i));
        out[static_cast<std::size_t>(i)] = static_cast<int>(it - uniq.begin());
    }
    return out;
}

Design make_phase1_design(const ExperimentConfig& cfg, const FinitePopulation& pop) {
    const auto& p1 = cfg.phase1;
    if (p1.design == "srswor") {
        if (p1.n < 1) throw ConfigError("phase1.n must be set for srswor");
        return Design::srswor(pop.n_units(), static_cast<int>(p1.n));
    }
    if (p1.design == "poisson") {
        Eigen::VectorXd sizes = column_values(pop, p1.probs_from);
        return Design::poisson(proportional_probs(sizes, p1.expected_n));
    }
    StratumPlan plan;
    plan.stratum_of = stratum_labels(pop, p1.strata_from);
    plan.take = p1.take;
    return Design::stratified(plan);
}

DesignFactory make_phase_factory(const PhaseDesignConfig& pc, const FinitePopulation& pop,
                                 const std::string& which) {
    if (pc.design == "srswor") {
        if (pc.n < 1) throw ConfigError(which + ".n must be set for srswor");
        return srswor_factory(static_cast<int>(pc.n));
    }
    if (pc.design == "poisson") {
        Eigen::VectorXd sizes = column_values(pop, pc.probs_from);
        return poisson_prop_factory(sizes, pc.expected_n);
    }
    std::vector<int> labels = stratum_labels(pop, pc.strata_from);
    std::vector<int> take = pc.take;
    return [labels, take](const FinitePopulation&, const std::vector<int>& parent) {
        StratumPlan plan;
        plan.take = take;
        plan.stratum_of.reserve(parent.size());
        std::vector<int> seen;
        for (int g : parent) plan.stratum_of.push_back(labels[static_cast<std::size_t>(g)]);
        return Design::stratified(plan);
    };
}

int tier_column_index(const FinitePopulation& pop, const std::string& name) {
    for (int c = 0; c < pop.p(); ++c)
        if (pop.x_names[static_cast<std::size_t>(c)] == name) return c;
    throw ConfigError("tier column '" + name + "' is not an x column");
}

struct RunContext {
    ExperimentConfig cfg;
    FinitePopulation pop;
    Design d1;
    DesignFactory f2;
    std::optional<DesignFactory> f3;
    BalanceCriterion crit2;
    double gamma3 = kInfGamma;
    double true_mean = 0.0;
    bool three_phase = false;
    bool sequential = false;
    std::optional<std::vector<int>> strata;  // for ree
    std::optional<MixturePool> pool2;        // two-phase mean CI components
    std::optional<MixturePool> pool3;        // three-phase mean CI components
    VarianceStyle style = VarianceStyle::SrsClosedForm;
    std::optional<EstimatingFunction> ee_func;
    double ee_truth = 0.0;
    std::vector<std::string> estimator_names;  // cfg list plus "ee" when set
};

// Frame-level value of the estimating-equation target, the coverage truth.
double ee_frame_truth(const FinitePopulation& pop, const EstimatingFunction& f) {
    const Eigen::VectorXd& y = pop.y;
    switch (f.kind) {
        case EstimatingFunction::Kind::Mean:
            return y.mean();
        case EstimatingFunction::Kind::ProportionBelow: {
            double c = 0.0;
            for (int i = 0; i < y.size(); ++i) c += y(i) < f.c ? 1.0 : 0.0;
            return c / static_cast<double>(y.size());
        }
        case EstimatingFunction::Kind::Variance: {
            double m = y.mean();
            return (y.array() - m).square().sum() / static_cast<double>(y.size());
        }
        case EstimatingFunction::Kind::Quantile: {
            std::vector<double> sorted(y.data(), y.data() + y.size());
            std::sort(sorted.begin(), sorted.end());
            double n = static_cast<double>(sorted.size());
            for (std::size_t k = 0; k < sorted.size(); ++k)
                if (static_cast<double>(k + 1) / n >= f.tau) return sorted[k];
            return sorted.back();
        }
        case EstimatingFunction::Kind::Custom:
            break;
    }
    throw ConfigError("no frame truth available for a custom estimating function");
}

EstimatingFunction parse_ee_parameter(const std::string& spec) {
    if (spec == "mean") return EstimatingFunction::mean();
    if (spec == "variance") return EstimatingFunction::variance();
    auto num_after = [&](const std::string& prefix) {
        return std::stod(spec.substr(prefix.size()));
    };
    if (spec.rfind("proportion:c=", 0) == 0)
        return EstimatingFunction::proportion_below(num_after("proportion:c="));
    if (spec.rfind("quantile:tau=", 0) == 0)
        return EstimatingFunction::quantile(num_after("quantile:tau="));
    throw ConfigError("unknown estimating-equation parameter: " + spec);
}

VarianceStyle parse_style(const std::string& s) {
    if (s == "srs") return VarianceStyle::SrsClosedForm;
    if (s == "ht") return VarianceStyle::HT;
    if (s == "syg") return VarianceStyle::SYG;
    throw ConfigError("variance_style must be srs, ht, or syg");
}

RunContext make_context(const ExperimentConfig& config) {
    RunContext ctx;
    ctx.cfg = config;
    apply_fast_defaults(ctx.cfg);
    ctx.pop = build_population(ctx.cfg);
    if (!ctx.pop.y_observed)
        throw ConfigError("simulation requires an observed y column");
    ctx.true_mean = ctx.pop.y_mean();
    ctx.style = parse_style(ctx.cfg.variance_style);

    ctx.d1 = make_phase1_design(ctx.cfg, ctx.pop);
    ctx.f2 = make_phase_factory(ctx.cfg.phase2, ctx.pop, "phase2");
    ctx.three_phase = ctx.cfg.phase3.has_value();
    if (ctx.three_phase)
        ctx.f3 = make_phase_factory(*ctx.cfg.phase3, ctx.pop, "phase3");

    const int p = ctx.pop.p();
    ctx.crit2.gamma_sq = resolve_gamma(ctx.cfg.phase2.gamma_spec, p);
    ctx.crit2.max_draws = ctx.cfg.phase2.max_draws;
    ctx.crit2.ridge = ctx.cfg.ridge;
    if (ctx.cfg.normalizer == "srs")
        ctx.crit2.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    else if (ctx.cfg.normalizer == "design")
        ctx.crit2.normalizer = BalanceCriterion::Normalizer::DesignCov;
    else
        ctx.crit2.normalizer = (ctx.cfg.phase1.design == "srswor" &&
                                ctx.cfg.phase2.design == "srswor")
                                   ? BalanceCriterion::Normalizer::SrsClosedForm
                                   : BalanceCriterion::Normalizer::DesignCov;
    if (!ctx.cfg.phase2.tiers.empty()) {
        ctx.sequential = true;
        for (const auto& block : ctx.cfg.phase2.tiers) {
            std::vector<int> cols;
            for (const auto& name : block) cols.push_back(tier_column_index(ctx.pop, name));
            ctx.crit2.tiers.push_back(cols);
        }
        ctx.crit2.tier_weights = ctx.cfg.phase2.tier_weights;
    }

    if (ctx.three_phase) {
        const int pc = p + ctx.pop.q();
        ctx.gamma3 = resolve_gamma(ctx.cfg.phase3->gamma_spec, pc);
    }

    bool wants_ree = std::find(ctx.cfg.estimators.begin(), ctx.cfg.estimators.end(), "ree") !=
                     ctx.cfg.estimators.end();
    if (wants_ree) {
        if (ctx.cfg.phase2.design != "stratified")
            throw ConfigError("ree requires a stratified phase-II design");
        ctx.strata = stratum_labels(ctx.pop, ctx.cfg.phase2.strata_from);
    }

    for (const auto& name : ctx.cfg.estimators) {
        if (name == "reg3" && !ctx.three_phase)
            throw ConfigError("reg3 requires a [phase3] section");
        if (name == "reg2" && ctx.three_phase)
            throw ConfigError("reg2 is a two-phase estimator; use reg3 here");
        if (name == "ree" && ctx.three_phase)
            throw ConfigError("ree is a two-phase estimator");
    }

    ctx.estimator_names = ctx.cfg.estimators;
    if (!ctx.cfg.ee_parameter.empty()) {
        if (ctx.three_phase)
            throw ConfigError("estimating-equation parameters need a two-phase design");
        ctx.ee_func = parse_ee_parameter(ctx.cfg.ee_parameter);
        ctx.ee_truth = ee_frame_truth(ctx.pop, *ctx.ee_func);
        ctx.estimator_names.push_back("ee");
    }

    // Component pools for the mixture CIs, shared across replicates.
    std::uint64_t pool_seed = RandomStream::derive(ctx.cfg.base_seed, 0xC001C001ULL).next_u64();
    if (!ctx.three_phase) {
        if (!std::isinf(ctx.crit2.gamma_sq))
            ctx.pool2.emplace(std::vector<int>{std::max(p, 1)},
                              std::vector<double>{ctx.crit2.gamma_sq}, 2,
                              ctx.cfg.quantile_draws, pool_seed);
    } else {
        const int pc = p + ctx.pop.q();
        if (!std::isinf(ctx.gamma3) || !std::isinf(ctx.crit2.gamma_sq))
            ctx.pool3.emplace(std::vector<int>{pc, std::max(p, 1)},
                              std::vector<double>{ctx.gamma3, ctx.crit2.gamma_sq}, 3,
                              ctx.cfg.quantile_draws, pool_seed);
    }
    return ctx;
}

std::pair<double, double> mixture_ci(const RunContext& ctx, const PhaseChain& chain,
                                     double estimate, const VarianceComponents& comps) {
    const auto& pool = ctx.three_phase ? ctx.pool3 : ctx.pool2;
    if (comps.ci_mixture.all_l_unbounded() || !pool.has_value()) {
        double sd = comps.ci_mixture.sd();
        double z = normal_quantile(1.0 - ctx.cfg.alpha / 2.0);
        return {estimate - z * sd, estimate + z * sd};
    }
    (void)chain;
    return confidence_interval(estimate, comps, ctx.cfg.alpha, *pool);
}

EstimateReport report_pi_star(const RunContext& ctx, const PhaseChain& chain) {
    EstimateReport rep;
    rep.method = ctx.three_phase ? "pi_star3" : "pi_star";
    rep.estimate = pi_star_mean(chain, ctx.pop.y);
    VarianceComponents comps;
    if (ctx.three_phase) {
        comps = vhat_three_phase_mean(chain, ctx.pop.y);
    } else {
        Eigen::VectorXd w(chain.phase(1).pi_star.size());
        for (int t = 0; t < w.size(); ++t) w(t) = 1.0 / chain.phase(1).pi_star(t);
        RegressionFit fit =
            fit_regression(w, chain.x_at_phase(1), chain.values_at_phase(1, ctx.pop.y));
        if (ctx.style == VarianceStyle::SrsClosedForm)
            comps = vhat_srs_mean(chain, fit, ctx.pop.y);
        else
            comps = finalize_general_mean(
                vhat_general(chain, fit, ctx.pop.y, ctx.style, ctx.cfg.approx_joint), chain);
    }
    rep.variance = comps.variance;
    std::tie(rep.ci_low, rep.ci_high) = mixture_ci(ctx, chain, rep.estimate, comps);
    for (const auto& [k, v] : comps.diagnostics) rep.diagnostics[k] = v;
    return rep;
}

EstimateReport report_reg(const RunContext& ctx, const PhaseChain& chain) {
    EstimateReport rep;
    if (ctx.three_phase) {
        rep.method = "reg3";
        auto [est, fit] = regression_estimate_three_phase(chain, ctx.pop.y);
        rep.estimate = est;
        VarianceComponents comps = vhat_three_phase_reg(chain, ctx.pop.y);
        rep.variance = comps.variance;
        double z = normal_quantile(1.0 - ctx.cfg.alpha / 2.0);
        double sd = std::sqrt(std::max(rep.variance, 0.0));
        rep.ci_low = rep.estimate - z * sd;
        rep.ci_high = rep.estimate + z * sd;
    } else {
        rep.method = "reg2";
        auto [est, fit] = regression_estimate_two_phase(chain, ctx.pop.y);
        rep.estimate = est;
        VarianceComponents comps;
        if (ctx.style == VarianceStyle::SrsClosedForm)
            comps = vhat_srs_reg(chain, fit, ctx.pop.y);
        else
            comps = finalize_general_reg(
                vhat_general(chain, fit, ctx.pop.y, ctx.style, ctx.cfg.approx_joint), chain);
        rep.variance = comps.variance;
        double z = normal_quantile(1.0 - ctx.cfg.alpha / 2.0);
        double sd = std::sqrt(std::max(rep.variance, 0.0));
        rep.ci_low = rep.estimate - z * sd;
        rep.ci_high = rep.estimate + z * sd;
        RegressionWeights w = regression_weights(chain);
        rep.diagnostics["negative_weights"] = w.negative_count;
    }
    return rep;
}

EstimateReport report_hajek(const RunContext& ctx, const PhaseChain& chain) {
    // Phase-I benchmark estimator; closed-form variance under SRSWOR phase I.
    EstimateReport rep;
    rep.method = "hajek";
    const auto& ph1 = chain.phase(0);
    Eigen::VectorXd y1 = chain.values_at_phase(0, ctx.pop.y);
    rep.estimate = hajek_mean(y1, ph1.pi_star);
    if (chain.phase(0).sample.design.tag() == DesignTag::Srswor) {
        const int n1 = static_cast<int>(y1.size());
        double mean = y1.mean();
        double v = (y1.array() - mean).square().sum() / (n1 - 1.0);
        rep.variance = (1.0 / n1 - 1.0 / ctx.pop.n_units()) * v;
        double z = normal_quantile(1.0 - ctx.cfg.alpha / 2.0);
        double sd = std::sqrt(std::max(rep.variance, 0.0));
        rep.ci_low = rep.estimate - z * sd;
        rep.ci_high = rep.estimate + z * sd;
    } else {
        rep.variance = std::numeric_limits<double>::quiet_NaN();
        rep.ci_low = rep.ci_high = std::numeric_limits<double>::quiet_NaN();
        rep.diagnostics["variance_unavailable"] = 1.0;
    }
    return rep;
}

EstimateReport report_ree(const RunContext& ctx, const PhaseChain& chain) {
    EstimateReport rep;
    rep.method = "ree";
    rep.estimate = ree(chain, *ctx.strata, ctx.pop.y);
    rep.variance = std::numeric_limits<double>::quiet_NaN();
    rep.ci_low = rep.ci_high = std::numeric_limits<double>::quiet_NaN();
    rep.diagnostics["variance_unavailable"] = 1.0;
    return rep;
}

EstimateReport report_ee(const RunContext& ctx, const PhaseChain& chain) {
    EstimateReport rep;
    rep.method = "ee:" + ctx.cfg.ee_parameter;
    EEFit fit = solve_ee(chain, *ctx.ee_func);
    VarianceComponents comps = ee_variance(chain, *ctx.ee_func, fit, VarianceStyle::HT);
    rep.estimate = fit.xi_hat(0);
    rep.variance = comps.variance;
    if (ctx.ee_func->dimension == 1) {
        std::tie(rep.ci_low, rep.ci_high) = mixture_ci(ctx, chain, rep.estimate, comps);
    } else {
        rep.ci_low = rep.ci_high = std::numeric_limits<double>::quiet_NaN();
    }
    if (fit.bandwidth > 0.0) rep.diagnostics["bandwidth"] = fit.bandwidth;
    rep.diagnostics["newton_iterations"] = fit.newton_iterations;
    return rep;
}

std::map<std::string, EstimateReport> estimate_all(const RunContext& ctx,
                                                   const PhaseChain& chain) {
    std::map<std::string, EstimateReport> out;
    for (const auto& name : ctx.estimator_names) {
        if (name == "pi_star") out[name] = report_pi_star(ctx, chain);
        else if (name == "reg2" || name == "reg3") out[name] = report_reg(ctx, chain);
        else if (name == "hajek") out[name] = report_hajek(ctx, chain);
        else if (name == "ree") out[name] = report_ree(ctx, chain);
        else if (name == "ee") out[name] = report_ee(ctx, chain);
    }
    return out;
}

PhaseChain draw_chain(const RunContext& ctx, RandomStream& rng, bool plain) {
    if (ctx.three_phase) {
        ThreePhaseCriterion crit;
        crit.gamma1_sq = plain ? kInfGamma : ctx.crit2.gamma_sq;
        crit.gamma2_sq = plain ? kInfGamma : ctx.gamma3;
        crit.max_draws = ctx.crit2.max_draws;
        crit.ridge = ctx.crit2.ridge;
        return draw_three_phase(rng, ctx.pop, ctx.d1, ctx.f2, *ctx.f3, crit);
    }
    BalanceCriterion crit = ctx.crit2;
    if (plain) crit.gamma_sq = kInfGamma;
    if (ctx.sequential) return draw_sequential_tprs(rng, ctx.pop, ctx.d1, ctx.f2, crit);
    return draw_tprs(rng, ctx.pop, ctx.d1, ctx.f2, crit);
}

bool coupling_active(const RunContext& ctx) {
    if (ctx.three_phase)
        return !std::isinf(ctx.crit2.gamma_sq) || !std::isinf(ctx.gamma3);
    return !std::isinf(ctx.crit2.gamma_sq);
}

ReplicateRecord run_one(const RunContext& ctx, long k) {
    ReplicateRecord rec;
    rec.index = k;
    auto t0 = std::chrono::steady_clock::now();
    try {
        RandomStream rng = RandomStream::derive(ctx.cfg.base_seed, static_cast<std::uint64_t>(k));
        PhaseChain chain = draw_chain(ctx, rng, false);
        long draws = 0;
        for (const auto& ph : chain.phases) draws += ph.draws_attempted;
        rec.acceptance_draws = draws;
        rec.reports = estimate_all(ctx, chain);
        if (coupling_active(ctx)) {
            // Identical stream: the plain run re-draws the same phase-I
            // sample and keeps the first candidate each rejective phase saw.
            RandomStream rng_plain =
                RandomStream::derive(ctx.cfg.base_seed, static_cast<std::uint64_t>(k));
            PhaseChain plain = draw_chain(ctx, rng_plain, true);
            rec.reports_plain = estimate_all(ctx, plain);
        }
    } catch (const Error& e) {
        rec.failed = true;
        rec.error_kind = e.kind();
        rec.error_message = e.what();
    }
    rec.elapsed_us = std::chrono::duration<double, std::micro>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return rec;
}

EstimatorRow summarize(const std::string& name, const std::vector<double>& est,
                       const std::vector<double>& ve, const std::vector<char>& covered,
                       double true_mean) {
    EstimatorRow row;
    row.name = name;
    row.n_ok = static_cast<long>(est.size());
    if (est.empty()) return row;
    double n = static_cast<double>(est.size());
    double mean = 0.0;
    for (double e : est) mean += e;
    mean /= n;
    double var = 0.0, mse = 0.0;
    for (double e : est) {
        var += (e - mean) * (e - mean);
        mse += (e - true_mean) * (e - true_mean);
    }
    row.bias = mean - true_mean;
    row.var = est.size() > 1 ? var / (n - 1.0) : 0.0;
    row.mse = mse / n;
    double ve_sum = 0.0;
    long ve_n = 0;
    for (double v : ve)
        if (std::isfinite(v)) {
            ve_sum += v;
            ++ve_n;
        }
    row.has_ve = ve_n > 0;
    row.mean_ve = ve_n > 0 ? ve_sum / static_cast<double>(ve_n) : 0.0;
    long cov = 0, cov_n = 0;
    for (char c : covered)
        if (c >= 0) {
            cov += c;
            ++cov_n;
        }
    row.has_coverage = cov_n > 0;
    row.coverage_pct = cov_n > 0 ? 100.0 * static_cast<double>(cov) / cov_n : 0.0;
    return row;
}

}  // namespace

const EstimatorRow& ExperimentSummary::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw LookupError("summary has no estimator row named " + name);
}

std::string ExperimentSummary::render() const {
    std::ostringstream os;
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(6);
    os << "# replicates=" << n_replicates << " errors=" << error_count
       << " true_mean=" << true_mean << "\n";
    for (const auto& [k, v] : diagnostics) os << "# " << k << "=" << v << "\n";
    os << "estimator\tn_ok\tbias\tvar\tmse\tmean_ve\tcvg_pct\tvarred_pct\n";
    auto cell = [&](double v, bool present) {
        std::ostringstream c;
        c.precision(6);
        if (present) c << v;
        else c << "-";
        return c.str();
    };
    for (const auto& r : rows) {
        os << r.name << "\t" << r.n_ok << "\t" << cell(r.bias, true) << "\t"
           << cell(r.var, true) << "\t" << cell(r.mse, true) << "\t"
           << cell(r.mean_ve, r.has_ve) << "\t" << cell(r.coverage_pct, r.has_coverage)
           << "\t" << cell(r.varred_pct, r.has_varred) << "\n";
    }
    return os.str();
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
    RunContext ctx = make_context(config);
    const long R = ctx.cfg.n_replicates;

    std::vector<ReplicateRecord> records(static_cast<std::size_t>(R));
    unsigned hw = std::thread::hardware_concurrency();
    unsigned n_threads = std::max(1u, std::min(hw, 16u));
    if (R < 32) n_threads = 1;
    if (n_threads == 1) {
        for (long k = 0; k < R; ++k) records[static_cast<std::size_t>(k)] = run_one(ctx, k);
    } else {
        std::vector<std::thread> workers;
        for (unsigned w = 0; w < n_threads; ++w)
            workers.emplace_back([&, w]() {
                for (long k = w; k < R; k += n_threads)
                    records[static_cast<std::size_t>(k)] = run_one(ctx, k);
            });
        for (auto& t : workers) t.join();
    }

    ExperimentSummary summary;
    summary.n_replicates = R;
    summary.true_mean = ctx.true_mean;
    long errors = 0;
    double draws_total = 0.0;
    for (const auto& rec : records) {
        if (rec.failed) ++errors;
        else draws_total += static_cast<double>(rec.acceptance_draws);
    }
    summary.error_count = errors;
    if (errors * 100 > R)
        throw EstimationError("more than 1% of replicates failed (" + std::to_string(errors) +
                              " of " + std::to_string(R) + ")");
    if (R > errors)
        summary.diagnostics["acceptance_draws_mean"] =
            draws_total / static_cast<double>(R - errors);
    if (errors > 0) summary.diagnostics["error_replicates"] = static_cast<double>(errors);

    const bool coupled = coupling_active(ctx);
    for (const auto& name : ctx.estimator_names) {
        const double truth = name == "ee" ? ctx.ee_truth : ctx.true_mean;
        std::vector<double> est, ve, est_plain;
        std::vector<char> covered, covered_plain;
        std::vector<double> ve_plain;
        double neg_rej = 0.0, neg_plain = 0.0;
        for (const auto& rec : records) {
            if (rec.failed) continue;
            auto it = rec.reports.find(name);
            if (it == rec.reports.end()) continue;
            const auto& rep = it->second;
            est.push_back(rep.estimate);
            ve.push_back(rep.variance);
            if (std::isfinite(rep.ci_low) && std::isfinite(rep.ci_high))
                covered.push_back(rep.ci_low <= truth && truth <= rep.ci_high ? 1 : 0);
            else
                covered.push_back(-1);
            if (auto d = rep.diagnostics.find("negative_weights"); d != rep.diagnostics.end())
                neg_rej += d->second > 0 ? 1.0 : 0.0;
            if (coupled) {
                auto ip = rec.reports_plain.find(name);
                if (ip != rec.reports_plain.end()) {
                    est_plain.push_back(ip->second.estimate);
                    ve_plain.push_back(ip->second.variance);
                    if (std::isfinite(ip->second.ci_low) && std::isfinite(ip->second.ci_high))
                        covered_plain.push_back(ip->second.ci_low <= truth &&
                                                        truth <= ip->second.ci_high
                                                    ? 1
                                                    : 0);
                    else
                        covered_plain.push_back(-1);
                    if (auto d = ip->second.diagnostics.find("negative_weights");
                        d != ip->second.diagnostics.end())
                        neg_plain += d->second > 0 ? 1.0 : 0.0;
                }
            }
        }
        EstimatorRow row = summarize(name, est, ve, covered, truth);
        if (coupled && est_plain.size() > 1) {
            EstimatorRow plain = summarize(name + "[nonrej]", est_plain, ve_plain,
                                           covered_plain, truth);
            if (plain.var > 0.0) {
                row.varred_pct = 100.0 * (1.0 - row.var / plain.var);
                row.has_varred = true;
            }
            if (name == "reg2" || name == "reg3") {
                summary.diagnostics["negative_weight_replicates_" + name] = neg_rej;
                summary.diagnostics["negative_weight_replicates_" + name + "_nonrej"] =
                    neg_plain;
            }
            summary.rows.push_back(row);
            summary.rows.push_back(plain);
        } else {
            if (name == "reg2" || name == "reg3")
                summary.diagnostics["negative_weight_replicates_" + name] = neg_rej;
            summary.rows.push_back(row);
        }
    }
    if (ctx.cfg.keep_replicates) summary.replicates = std::move(records);
    return summary;
}

ChainDump draw_chain_dump(const ExperimentConfig& config, std::uint64_t replicate) {
    RunContext ctx = make_context(config);
    RandomStream rng = RandomStream::derive(ctx.cfg.base_seed, replicate);
    PhaseChain chain = draw_chain(ctx, rng, false);
    ChainDump dump;
    for (const auto& ph : chain.phases) {
        dump.global_per_phase.push_back(ph.global);
        dump.accepted_q.push_back(ph.accepted_q);
        dump.draws.push_back(ph.draws_attempted);
    }
    const auto& inner = chain.innermost();
    for (int t = 0; t < inner.pi_star.size(); ++t)
        dump.pi_star_innermost.push_back(inner.pi_star(t));
    return dump;
}

std::string ThreePhaseStudy::render() const {
    std::ostringstream os;
    os << "== with rejection ==\n" << rejective.render();
    os << "== without rejection ==\n" << plain.render();
    return os.str();
}

ThreePhaseStudy run_api_style_three_phase(const ExperimentConfig& config) {
    if (!config.phase3.has_value())
        throw ConfigError("run_api_style_three_phase requires a [phase3] section");
    ThreePhaseStudy study;
    study.rejective = run_experiment(config);
    ExperimentConfig plain_cfg = config;
    plain_cfg.phase2.gamma_spec = "inf";
    plain_cfg.phase3->gamma_spec = "inf";
    study.plain = run_experiment(plain_cfg);
    return study;
}

}  // namespace rejsamp
