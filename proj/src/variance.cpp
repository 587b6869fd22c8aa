#include "rejsamp/variance.hpp"

#include <cmath>

#include "rejsamp/errors.hpp"

namespace rejsamp {

std::string to_string(VarianceStyle s) {
    switch (s) {
        case VarianceStyle::SrsClosedForm: return "srs";
        case VarianceStyle::HT: return "ht";
        case VarianceStyle::SYG: return "syg";
    }
    return "?";
}

namespace {

struct SrsPieces {
    double v_xx_quad;  // beta' V_xx beta, phase-II sample covariance
    double v_ee;       // residual variance on n_II - p - 1 df
    double v_yy;       // decomposition estimate
    double r2;         // clamped to [0, 1]
    bool clamped;
};

SrsPieces srs_pieces(const PhaseChain& chain, const RegressionFit& fit,
                     const Eigen::VectorXd& values_pop) {
    const auto& ph2 = chain.phase(1);
    const int n2 = static_cast<int>(ph2.global.size());
    const int p = chain.pop->p();
    if (n2 <= p + 1)
        throw DfError("variance: phase-II sample too small for the residual degrees of freedom");

    Eigen::MatrixXd xb = chain.x_at_phase(1);
    Eigen::VectorXd yb = chain.values_at_phase(1, values_pop);
    Eigen::RowVectorXd xmean = xb.colwise().mean();
    Eigen::MatrixXd xc = xb.rowwise() - xmean;
    Eigen::MatrixXd v_xx = (xc.transpose() * xc) / static_cast<double>(n2 - 1);

    Eigen::VectorXd beta = fit.beta();
    Eigen::VectorXd ehat = yb - xb * beta;
    double emean = ehat.mean();
    double ss = (ehat.array() - emean).square().sum();

    SrsPieces out;
    out.v_xx_quad = beta.dot(v_xx * beta);
    out.v_ee = ss / static_cast<double>(n2 - p - 1);
    out.v_yy = out.v_xx_quad + out.v_ee;
    double r2 = out.v_yy > 0.0 ? out.v_xx_quad / out.v_yy : 0.0;
    out.clamped = r2 < 0.0 || r2 > 1.0;
    out.r2 = std::min(1.0, std::max(0.0, r2));
    return out;
}

struct Fractions {
    double f21;   // n_II / n_I
    double f10;   // n_I / N
    int n1, n2, n_pop;
};

Fractions fractions(const PhaseChain& chain) {
    Fractions f;
    f.n1 = static_cast<int>(chain.phase(0).global.size());
    f.n2 = static_cast<int>(chain.phase(1).global.size());
    f.n_pop = chain.population_size();
    f.f21 = static_cast<double>(f.n2) / f.n1;
    f.f10 = static_cast<double>(f.n1) / f.n_pop;
    return f;
}

}  // namespace

VarianceComponents vhat_srs_mean(const PhaseChain& chain, const RegressionFit& fit,
                                 const Eigen::VectorXd& values_pop) {
    SrsPieces s = srs_pieces(chain, fit, values_pop);
    Fractions f = fractions(chain);
    double v = v_pgamma(std::max(chain.balance_p_phase2, 1), chain.gamma_sq_phase2);

    VarianceComponents out;
    out.style = VarianceStyle::SrsClosedForm;
    out.v_factor = v;
    out.extra["v_yy"] = s.v_yy;
    out.extra["v_ee"] = s.v_ee;
    out.extra["r2"] = s.r2;
    if (s.clamped) out.diagnostics["r2_clamped"] = 1.0;
    out.variance = ((1.0 - f.f21) * (1.0 - (1.0 - v) * s.r2) +
                    f.f21 * (1.0 - f.f10)) *
                   s.v_yy / f.n2;

    MixtureSpec mix;
    mix.l_terms.push_back({std::sqrt((1.0 - f.f21) * s.v_yy * s.r2 / f.n2),
                           std::max(chain.balance_p_phase2, 1), chain.gamma_sq_phase2});
    mix.normal_scales.push_back(std::sqrt((1.0 - f.f21) * s.v_yy * (1.0 - s.r2) / f.n2));
    mix.normal_scales.push_back(std::sqrt(f.f21 * (1.0 - f.f10) * s.v_yy / f.n2));
    out.ci_mixture = std::move(mix);
    return out;
}

VarianceComponents vhat_srs_reg(const PhaseChain& chain, const RegressionFit& fit,
                                const Eigen::VectorXd& values_pop) {
    SrsPieces s = srs_pieces(chain, fit, values_pop);
    Fractions f = fractions(chain);

    VarianceComponents out;
    out.style = VarianceStyle::SrsClosedForm;
    out.extra["v_yy"] = s.v_yy;
    out.extra["v_ee"] = s.v_ee;
    out.variance =
        (f.f21 * (1.0 - f.f10) * s.v_yy + (1.0 - f.f21) * s.v_ee) / f.n2;
    out.ci_mixture.normal_scales.push_back(std::sqrt(std::max(out.variance, 0.0)));
    return out;
}

namespace {

// Requires the chain's phase-II balance metric; it doubles as V_xx,I in V1.
const Eigen::MatrixXd& require_metric(const PhaseChain& chain) {
    if (chain.v_xx_phase1.rows() == 0)
        throw CapabilityError(
            "variance: chain carries no phase-II balance metric (V_xx,I unavailable)");
    return chain.v_xx_phase1;
}

}  // namespace

VarianceComponents vhat_general(const PhaseChain& chain, const RegressionFit& fit,
                                const Eigen::VectorXd& values_pop, VarianceStyle style,
                                bool approx_joint) {
    if (style == VarianceStyle::SrsClosedForm)
        throw ConfigError("vhat_general expects the HT or SYG style");
    const auto& ph1 = chain.phase(0);
    const auto& ph2 = chain.phase(1);
    const Design& d1 = ph1.sample.design;
    const Design& d2 = ph2.sample.design;
    if (!d1.has_pairwise() || !d2.has_pairwise()) {
        if (!approx_joint)
            throw CapabilityError(
                "variance: joint inclusion probabilities unavailable; "
                "rerun with approx_joint to use the product approximation");
    }
    const int n2 = static_cast<int>(ph2.global.size());
    const double n_pop = chain.population_size();
    const double scale = static_cast<double>(n2) / (n_pop * n_pop);

    Eigen::MatrixXd xb = chain.x_at_phase(1);
    Eigen::VectorXd yb = chain.values_at_phase(1, values_pop);
    Eigen::VectorXd beta = fit.beta();
    Eigen::VectorXd ehat = yb - xb * beta;
    double ebar = hajek_mean(ehat, ph2.pi_star);
    double ybar = hajek_mean(yb, ph2.pi_star);

    const Eigen::MatrixXd& v_xx = require_metric(chain);

    VarianceComponents out;
    out.style = style;
    out.v1 = n2 * beta.dot(v_xx * beta);

    // Unit t of the phase-II sample: position in the phase-I ordering and in
    // the population.
    const auto& posA = ph2.sample.indices;
    const auto& global = ph2.global;

    double v2 = 0.0, v3 = 0.0;
    const bool poisson2 = d2.tag() == DesignTag::Poisson;
    for (int s = 0; s < n2; ++s) {
        double e_s = ehat(s) - ebar;
        double y_s = yb(s) - ybar;
        double pi2_s = ph2.pi_cond(s);
        double pistar_s = ph2.pi_star(s);
        double pi1_s = d1.first_order(global[s]);
        for (int t = 0; t < n2; ++t) {
            double pi2_t = ph2.pi_cond(t);
            double pi2_st = d2.pairwise(posA[s], posA[t]);
            double pi1_st = d1.pairwise(global[s], global[t]);
            double delta2 = pi2_st - pi2_s * pi2_t;
            double delta1 = pi1_st - pi1_s * d1.first_order(global[t]);

            if (style == VarianceStyle::HT) {
                if (!(poisson2 && s != t) && delta2 != 0.0) {
                    double e_t = ehat(t) - ebar;
                    v2 += delta2 / (pistar_s * ph2.pi_star(t)) * e_s * e_t / pi2_st;
                }
                if (delta1 != 0.0) {
                    double y_t = yb(t) - ybar;
                    v3 += delta1 / (pi1_s * d1.first_order(global[t])) * y_s * y_t /
                          (pi1_st * pi2_st);
                }
            } else {  // SYG squared contrasts
                if (s != t) {
                    if (delta2 != 0.0) {
                        double c2 = e_s / pistar_s - (ehat(t) - ebar) / ph2.pi_star(t);
                        v2 += -0.5 * delta2 / pi2_st * c2 * c2;
                    }
                    if (delta1 != 0.0) {
                        double c3 = y_s / pi1_s - (yb(t) - ybar) / d1.first_order(global[t]);
                        v3 += -0.5 * delta1 * c3 * c3 / (pi1_st * pi2_st);
                    }
                }
            }
        }
    }
    out.v2 = scale * v2;
    out.v3 = scale * v3;
    return out;
}

namespace {

double nonneg(double x, VarianceComponents& comps) {
    if (x < 0.0) {
        comps.diagnostics["negative_component_clamped"] += 1.0;
        return 0.0;
    }
    return x;
}

}  // namespace

VarianceComponents finalize_general_mean(VarianceComponents comps, const PhaseChain& chain) {
    const int n2 = static_cast<int>(chain.phase(1).global.size());
    const int p = std::max(chain.balance_p_phase2, 1);
    comps.v_factor = v_pgamma(p, chain.gamma_sq_phase2);
    comps.variance = (comps.v1 * comps.v_factor + comps.v2 + comps.v3) / n2;

    MixtureSpec mix;
    mix.l_terms.push_back(
        {std::sqrt(nonneg(comps.v1, comps) / n2), p, chain.gamma_sq_phase2});
    mix.normal_scales.push_back(std::sqrt(nonneg(comps.v2, comps) / n2));
    mix.normal_scales.push_back(std::sqrt(nonneg(comps.v3, comps) / n2));
    comps.ci_mixture = std::move(mix);
    return comps;
}

VarianceComponents finalize_general_reg(VarianceComponents comps, const PhaseChain& chain) {
    const int n2 = static_cast<int>(chain.phase(1).global.size());
    comps.v_factor = 1.0;
    comps.variance = (comps.v2 + comps.v3) / n2;
    comps.ci_mixture = MixtureSpec{};
    comps.ci_mixture.normal_scales.push_back(std::sqrt(std::max(comps.variance, 0.0)));
    return comps;
}

namespace {

struct ThreePhasePieces {
    double t_cc;    // beta_yc' V_cc,II beta_yc
    double t_xx;    // beta_yx' V_xx,I beta_yx
    double v_eyc;   // phase-III residual component
    double v_eyx;   // phase-II residual component
    double v_yy0;   // phase-I outcome component
};

ThreePhasePieces three_phase_pieces(const PhaseChain& chain,
                                    const Eigen::VectorXd& values_pop) {
    if (chain.n_phases() < 3) throw ConfigError("three-phase variance: chain has no phase III");
    const auto& ph1 = chain.phase(0);
    const auto& ph2 = chain.phase(1);
    const auto& ph3 = chain.phase(2);
    const Design& d1 = ph1.sample.design;
    const Design& d2 = ph2.sample.design;
    const Design& d3 = ph3.sample.design;
    const int n3 = static_cast<int>(ph3.global.size());
    const double n_pop = chain.population_size();
    const double inv_n2pop = 1.0 / (n_pop * n_pop);

    Eigen::MatrixXd cb = chain.c_at_phase3();
    Eigen::MatrixXd xb = chain.x_at_phase(2);
    Eigen::VectorXd yb = chain.values_at_phase(2, values_pop);
    Eigen::VectorXd w3(n3);
    for (int t = 0; t < n3; ++t) w3(t) = 1.0 / ph3.pi_star(t);

    RegressionFit fit_yc = fit_regression(w3, cb, yb);
    RegressionFit fit_yx = fit_regression(w3, xb, yb);

    if (chain.v_cc_phase2.rows() == 0 || chain.v_xx_phase1.rows() == 0)
        throw CapabilityError("three-phase variance: chain metrics unavailable");

    const int p_c = static_cast<int>(cb.cols());
    const int p_x = static_cast<int>(xb.cols());
    if (n3 <= p_c + 1)
        throw DfError("three-phase variance: phase-III sample too small for the residual fit");

    ThreePhasePieces out;
    out.t_cc = fit_yc.beta().dot(chain.v_cc_phase2 * fit_yc.beta());
    out.t_xx = fit_yx.beta().dot(chain.v_xx_phase1 * fit_yx.beta());

    Eigen::VectorXd e_yc = yb - cb * fit_yc.beta();
    Eigen::VectorXd e_yx = yb - xb * fit_yx.beta();
    double eyc_bar = hajek_mean(e_yc, ph3.pi_star);
    double eyx_bar = hajek_mean(e_yx, ph3.pi_star);
    double ybar = hajek_mean(yb, ph3.pi_star);

    double v_eyc = 0.0, v_eyx = 0.0, v_yy0 = 0.0;
    for (int s = 0; s < n3; ++s) {
        int posB_s = ph3.sample.indices[s];
        int posA_s = ph2.sample.indices[posB_s];
        int g_s = ph3.global[s];
        double pi3_s = ph3.pi_cond(s);
        double pi2_s = ph2.pi_cond(posB_s);
        double pi1_s = d1.first_order(g_s);
        double pistar2_s = ph2.pi_star(posB_s);
        double pistar3_s = ph3.pi_star(s);
        double eyc_s = e_yc(s) - eyc_bar;
        double eyx_s = e_yx(s) - eyx_bar;
        double yy_s = yb(s) - ybar;
        for (int t = 0; t < n3; ++t) {
            int posB_t = ph3.sample.indices[t];
            int posA_t = ph2.sample.indices[posB_t];
            int g_t = ph3.global[t];
            double pi3_t = ph3.pi_cond(t);
            double pi2_t = ph2.pi_cond(posB_t);
            double pi1_t = d1.first_order(g_t);
            double pi3_st = d3.pairwise(posB_s, posB_t);
            double pi2_st = d2.pairwise(posA_s, posA_t);
            double pi1_st = d1.pairwise(g_s, g_t);

            double delta3 = pi3_st - pi3_s * pi3_t;
            if (delta3 != 0.0)
                v_eyc += delta3 / (pistar3_s * ph3.pi_star(t)) * eyc_s *
                         (e_yc(t) - eyc_bar) / pi3_st;
            double delta2 = pi2_st - pi2_s * pi2_t;
            if (delta2 != 0.0)
                v_eyx += delta2 / (pistar2_s * ph2.pi_star(posB_t)) * eyx_s *
                         (e_yx(t) - eyx_bar) / (pi2_st * pi3_st);
            double delta1 = pi1_st - pi1_s * pi1_t;
            if (delta1 != 0.0)
                v_yy0 += delta1 / (pi1_s * pi1_t) * yy_s * (yb(t) - ybar) /
                         (pi1_st * pi2_st * pi3_st);
        }
    }
    // Residual components absorb the degrees of freedom spent on the fitted
    // slopes, in the spirit of the two-phase n - p - 1 divisor.
    out.v_eyc = v_eyc * inv_n2pop * (static_cast<double>(n3) / (n3 - p_c - 1));
    out.v_eyx = v_eyx * inv_n2pop * (static_cast<double>(n3) / (n3 - p_x - 1));
    out.v_yy0 = v_yy0 * inv_n2pop;
    return out;
}

}  // namespace

VarianceComponents vhat_three_phase_mean(const PhaseChain& chain,
                                         const Eigen::VectorXd& values_pop) {
    ThreePhasePieces p = three_phase_pieces(chain, values_pop);
    const int p_cc = std::max(chain.balance_p_phase3, 1);
    const int p_xx = std::max(chain.balance_p_phase2, 1);
    double v_cc = v_pgamma(p_cc, chain.gamma_sq_phase3);
    double v_xx = v_pgamma(p_xx, chain.gamma_sq_phase2);

    VarianceComponents out;
    out.style = VarianceStyle::HT;
    out.extra = {{"t_cc", p.t_cc},   {"t_xx", p.t_xx},   {"v_eyc", p.v_eyc},
                 {"v_eyx", p.v_eyx}, {"v_yy0", p.v_yy0}, {"v_factor_cc", v_cc},
                 {"v_factor_xx", v_xx}};
    out.variance = p.t_cc * v_cc + p.t_xx * v_xx + p.v_eyc + p.v_eyx + p.v_yy0;

    MixtureSpec mix;
    mix.l_terms.push_back(
        {std::sqrt(nonneg(p.t_cc, out)), p_cc, chain.gamma_sq_phase3});
    mix.l_terms.push_back(
        {std::sqrt(nonneg(p.t_xx, out)), p_xx, chain.gamma_sq_phase2});
    mix.normal_scales.push_back(std::sqrt(nonneg(p.v_eyc, out)));
    mix.normal_scales.push_back(std::sqrt(nonneg(p.v_eyx, out)));
    mix.normal_scales.push_back(std::sqrt(nonneg(p.v_yy0, out)));
    out.ci_mixture = std::move(mix);
    return out;
}

VarianceComponents vhat_three_phase_reg(const PhaseChain& chain,
                                        const Eigen::VectorXd& values_pop) {
    ThreePhasePieces p = three_phase_pieces(chain, values_pop);
    VarianceComponents out;
    out.style = VarianceStyle::HT;
    out.extra = {{"v_eyc", p.v_eyc}, {"v_eyx", p.v_eyx}, {"v_yy0", p.v_yy0}};
    out.variance = p.v_yy0 + p.v_eyx + p.v_eyc;
    out.ci_mixture.normal_scales.push_back(std::sqrt(std::max(out.variance, 0.0)));
    return out;
}

std::pair<double, double> confidence_interval(double estimate,
                                              const VarianceComponents& comps, double alpha,
                                              long n_draws, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("confidence_interval: alpha in (0,1)");
    auto q = mixture_quantiles(comps.ci_mixture, {alpha / 2.0, 1.0 - alpha / 2.0}, n_draws,
                               seed);
    return {estimate - q[1], estimate - q[0]};
}

std::pair<double, double> confidence_interval(double estimate,
                                              const VarianceComponents& comps, double alpha,
                                              const MixturePool& pool) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("confidence_interval: alpha in (0,1)");
    const auto& mix = comps.ci_mixture;
    if (mix.all_l_unbounded()) {
        double sd = mix.sd();
        double z = normal_quantile(1.0 - alpha / 2.0);
        return {estimate - z * sd, estimate + z * sd};
    }
    if (mix.l_terms.size() != pool.l_dims().size())
        throw ConfigError("confidence_interval: pool L-term layout mismatch");
    std::vector<double> l_scales, z_scales;
    for (std::size_t k = 0; k < mix.l_terms.size(); ++k) {
        const auto& t = mix.l_terms[k];
        if (t.dim != pool.l_dims()[k] || t.gamma_sq != pool.l_gammas()[k])
            throw ConfigError("confidence_interval: pool L-term layout mismatch");
        l_scales.push_back(t.scale);
    }
    for (double s : mix.normal_scales) z_scales.push_back(s);
    auto q = pool.quantiles(l_scales, z_scales, {alpha / 2.0, 1.0 - alpha / 2.0});
    return {estimate - q[1], estimate - q[0]};
}

}  // namespace rejsamp
