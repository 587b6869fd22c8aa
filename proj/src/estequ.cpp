#include "rejsamp/estequ.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rejsamp/errors.hpp"

namespace rejsamp {

EstimatingFunction EstimatingFunction::mean() {
    EstimatingFunction f;
    f.kind = Kind::Mean;
    f.dimension = 1;
    f.differentiable = true;
    return f;
}

EstimatingFunction EstimatingFunction::proportion_below(double c) {
    EstimatingFunction f;
    f.kind = Kind::ProportionBelow;
    f.c = c;
    f.dimension = 1;
    f.differentiable = true;  // identity in xi
    return f;
}

EstimatingFunction EstimatingFunction::variance() {
    EstimatingFunction f;
    f.kind = Kind::Variance;
    f.dimension = 2;
    f.differentiable = true;
    return f;
}

EstimatingFunction EstimatingFunction::quantile(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("quantile kind: tau must be in (0,1)");
    EstimatingFunction f;
    f.kind = Kind::Quantile;
    f.tau = tau;
    f.dimension = 1;
    f.differentiable = false;
    return f;
}

EstimatingFunction EstimatingFunction::custom(
    int dimension, std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> score,
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> jacobian) {
    EstimatingFunction f;
    f.kind = Kind::Custom;
    f.dimension = dimension;
    f.differentiable = true;
    f.score = std::move(score);
    f.score_jacobian = std::move(jacobian);
    return f;
}

Eigen::VectorXd EstimatingFunction::eval(double y, const Eigen::VectorXd& xi) const {
    Eigen::VectorXd s(dimension);
    switch (kind) {
        case Kind::Mean:
            s(0) = y - xi(0);
            break;
        case Kind::ProportionBelow:
            s(0) = (y < c ? 1.0 : 0.0) - xi(0);
            break;
        case Kind::Variance: {
            double d = y - xi(0);
            s(0) = d;
            s(1) = d * d - xi(1);
            break;
        }
        case Kind::Quantile:
            s(0) = (y <= xi(0) ? 1.0 : 0.0) - tau;
            break;
        case Kind::Custom:
            return score(y, xi);
    }
    return s;
}

bool EstimatingFunction::has_jacobian() const {
    switch (kind) {
        case Kind::Mean:
        case Kind::ProportionBelow:
        case Kind::Variance:
            return true;
        case Kind::Custom:
            return static_cast<bool>(score_jacobian);
        case Kind::Quantile:
            return false;
    }
    return false;
}

Eigen::MatrixXd EstimatingFunction::jacobian(double y, const Eigen::VectorXd& xi) const {
    Eigen::MatrixXd j(dimension, dimension);
    switch (kind) {
        case Kind::Mean:
        case Kind::ProportionBelow:
            j(0, 0) = -1.0;
            return j;
        case Kind::Variance:
            j << -1.0, 0.0, -2.0 * (y - xi(0)), -1.0;
            return j;
        case Kind::Custom:
            if (score_jacobian) return score_jacobian(y, xi);
            break;
        case Kind::Quantile:
            break;
    }
    throw SolverError("estimating function has no analytic jacobian");
}

namespace {

struct InnerSample {
    Eigen::VectorXd y;
    Eigen::VectorXd w;  // design weights 1/pi*
    double wsum;
};

InnerSample inner_sample(const PhaseChain& chain) {
    if (chain.n_phases() < 2) throw ConfigError("solve_ee: chain has fewer than two phases");
    const auto& inner = chain.innermost();
    if (inner.global.empty()) throw EstimationError("solve_ee: empty innermost sample");
    if (!chain.pop->y_observed) throw EstimationError("solve_ee: y is unobserved");
    InnerSample s;
    s.y = chain.values_at_phase(chain.n_phases() - 1, chain.pop->y);
    s.w.resize(s.y.size());
    for (int t = 0; t < s.y.size(); ++t) s.w(t) = 1.0 / inner.pi_star(t);
    s.wsum = s.w.sum();
    return s;
}

Eigen::VectorXd weighted_score(const InnerSample& smp, const EstimatingFunction& f,
                               const Eigen::VectorXd& xi) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.dimension);
    for (int t = 0; t < smp.y.size(); ++t) acc += smp.w(t) * f.eval(smp.y(t), xi);
    return acc / smp.wsum;
}

Eigen::MatrixXd weighted_jacobian(const InnerSample& smp, const EstimatingFunction& f,
                                  const Eigen::VectorXd& xi) {
    if (f.has_jacobian()) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(f.dimension, f.dimension);
        for (int t = 0; t < smp.y.size(); ++t) acc += smp.w(t) * f.jacobian(smp.y(t), xi);
        return acc / smp.wsum;
    }
    // Central difference fallback on the averaged score.
    Eigen::MatrixXd j(f.dimension, f.dimension);
    for (int k = 0; k < f.dimension; ++k) {
        double h = 1e-6 * (1.0 + std::fabs(xi(k)));
        Eigen::VectorXd hi = xi, lo = xi;
        hi(k) += h;
        lo(k) -= h;
        j.col(k) = (weighted_score(smp, f, hi) - weighted_score(smp, f, lo)) / (2.0 * h);
    }
    return j;
}

Eigen::VectorXd newton_start(const InnerSample& smp, const EstimatingFunction& f) {
    double mean = smp.y.dot(smp.w) / smp.wsum;
    switch (f.kind) {
        case EstimatingFunction::Kind::Mean:
            return Eigen::VectorXd::Constant(1, mean);
        case EstimatingFunction::Kind::ProportionBelow: {
            double p = 0.0;
            for (int t = 0; t < smp.y.size(); ++t)
                if (smp.y(t) < f.c) p += smp.w(t);
            return Eigen::VectorXd::Constant(1, p / smp.wsum);
        }
        case EstimatingFunction::Kind::Variance: {
            double v = 0.0;
            for (int t = 0; t < smp.y.size(); ++t) {
                double d = smp.y(t) - mean;
                v += smp.w(t) * d * d;
            }
            Eigen::VectorXd xi(2);
            xi << mean, v / smp.wsum;
            return xi;
        }
        default:
            return Eigen::VectorXd::Zero(f.dimension);
    }
}

// Weighted ECDF value F(x) = sum_{y_i <= x} w_i / sum w_i.
double weighted_ecdf(const std::vector<std::pair<double, double>>& sorted_yw, double wsum,
                     double x) {
    double acc = 0.0;
    for (const auto& [yv, wv] : sorted_yw) {
        if (yv > x) break;
        acc += wv;
    }
    return acc / wsum;
}

}  // namespace

EEFit solve_ee(const PhaseChain& chain, const EstimatingFunction& func) {
    InnerSample smp = inner_sample(chain);
    EEFit fit;

    if (func.kind == EstimatingFunction::Kind::Quantile) {
        // xi = inf{ xi : weighted ECDF(xi) >= tau }, attained at an observed y.
        std::vector<std::pair<double, double>> yw(static_cast<std::size_t>(smp.y.size()));
        for (int t = 0; t < smp.y.size(); ++t) yw[static_cast<std::size_t>(t)] = {smp.y(t), smp.w(t)};
        std::sort(yw.begin(), yw.end());
        double acc = 0.0;
        double root = yw.back().first;
        for (const auto& [yv, wv] : yw) {
            acc += wv;
            if (acc / smp.wsum >= func.tau) {
                root = yv;
                break;
            }
        }
        fit.xi_hat = Eigen::VectorXd::Constant(1, root);
        fit.sbar_at_root = weighted_score(smp, func, fit.xi_hat);

        // Density at the root by a difference quotient of the weighted ECDF;
        // Silverman-style bandwidth, logged on the fit.
        double mean = smp.y.dot(smp.w) / smp.wsum;
        double var = 0.0;
        for (int t = 0; t < smp.y.size(); ++t) {
            double d = smp.y(t) - mean;
            var += smp.w(t) * d * d;
        }
        var /= smp.wsum;
        double n_eff = static_cast<double>(smp.y.size());
        double h = 1.06 * std::sqrt(std::max(var, 1e-300)) * std::pow(n_eff, -0.2);
        fit.bandwidth = h;
        double f_hat = (weighted_ecdf(yw, smp.wsum, root + h) -
                        weighted_ecdf(yw, smp.wsum, root - h)) /
                       (2.0 * h);
        fit.gamma_s_hat = Eigen::MatrixXd::Constant(1, 1, f_hat);
        return fit;
    }

    Eigen::VectorXd xi = newton_start(smp, func);
    Eigen::VectorXd sbar = weighted_score(smp, func, xi);
    double norm = sbar.norm();
    int iter = 0;
    while (norm > 1e-10 && iter < 100) {
        ++iter;
        Eigen::MatrixXd j = weighted_jacobian(smp, func, xi);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(j);
        Eigen::VectorXd step = lu.solve(-sbar);
        if (!step.allFinite())
            throw SolverError("solve_ee: singular jacobian at iteration " + std::to_string(iter));
        double lambda = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            Eigen::VectorXd trial = xi + lambda * step;
            Eigen::VectorXd strial = weighted_score(smp, func, trial);
            if (strial.norm() < norm) {
                xi = trial;
                sbar = strial;
                norm = sbar.norm();
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!improved)
            throw SolverError("solve_ee: no decrease after 30 halvings at iteration " +
                              std::to_string(iter) + ", |sbar| = " + std::to_string(norm));
    }
    if (norm > 1e-10)
        throw SolverError("solve_ee: Newton did not converge in 100 iterations, |sbar| = " +
                          std::to_string(norm));

    fit.xi_hat = xi;
    fit.sbar_at_root = sbar;
    fit.newton_iterations = iter;
    fit.gamma_s_hat = weighted_jacobian(smp, func, xi);
    return fit;
}

VarianceComponents ee_variance(const PhaseChain& chain, const EstimatingFunction& func,
                               const EEFit& fit, VarianceStyle style) {
    if (style == VarianceStyle::SrsClosedForm)
        throw ConfigError("ee_variance expects the HT or SYG style");
    InnerSample smp = inner_sample(chain);
    const auto& ph1 = chain.phase(0);
    const auto& ph2 = chain.phase(1);
    const Design& d1 = ph1.sample.design;
    const Design& d2 = ph2.sample.design;
    const int n2 = static_cast<int>(ph2.global.size());
    const int q = func.dimension;
    const double n_pop = chain.population_size();
    const double scale = static_cast<double>(n2) / (n_pop * n_pop);

    // Score values at the root.
    Eigen::MatrixXd svals(n2, q);
    for (int t = 0; t < n2; ++t) svals.row(t) = func.eval(smp.y(t), fit.xi_hat).transpose();

    // Multiresponse slope of s on x and the score residuals.
    Eigen::MatrixXd xb = chain.x_at_phase(1);
    RegressionFit breg = fit_regression(smp.w, xb, svals);
    Eigen::MatrixXd b_hat = breg.coefficients;  // p x q
    Eigen::MatrixXd resid = svals - xb * b_hat;

    if (chain.v_xx_phase1.rows() == 0)
        throw CapabilityError("ee_variance: chain carries no phase-II balance metric");
    Eigen::MatrixXd v1s = static_cast<double>(n2) *
                          (b_hat.transpose() * chain.v_xx_phase1 * b_hat);

    // Hajek centers of the residuals and raw scores.
    Eigen::VectorXd rbar = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd sbar = Eigen::VectorXd::Zero(q);
    for (int t = 0; t < n2; ++t) {
        rbar += smp.w(t) * resid.row(t).transpose();
        sbar += smp.w(t) * svals.row(t).transpose();
    }
    rbar /= smp.wsum;
    sbar /= smp.wsum;

    const auto& posA = ph2.sample.indices;
    const auto& global = ph2.global;
    Eigen::MatrixXd v2s = Eigen::MatrixXd::Zero(q, q);
    Eigen::MatrixXd v3s = Eigen::MatrixXd::Zero(q, q);
    for (int s = 0; s < n2; ++s) {
        Eigen::VectorXd r_s = resid.row(s).transpose() - rbar;
        Eigen::VectorXd s_s = svals.row(s).transpose() - sbar;
        double pi2_s = ph2.pi_cond(s);
        double pistar_s = ph2.pi_star(s);
        double pi1_s = d1.first_order(global[s]);
        for (int t = 0; t < n2; ++t) {
            double pi2_st = d2.pairwise(posA[s], posA[t]);
            double pi1_st = d1.pairwise(global[s], global[t]);
            double delta2 = pi2_st - pi2_s * ph2.pi_cond(t);
            double delta1 = pi1_st - pi1_s * d1.first_order(global[t]);
            if (style == VarianceStyle::HT) {
                if (delta2 != 0.0) {
                    Eigen::VectorXd r_t = resid.row(t).transpose() - rbar;
                    v2s.noalias() += (delta2 / (pistar_s * ph2.pi_star(t) * pi2_st)) *
                                     (r_s * r_t.transpose());
                }
                if (delta1 != 0.0) {
                    Eigen::VectorXd s_t = svals.row(t).transpose() - sbar;
                    v3s.noalias() +=
                        (delta1 / (pi1_s * d1.first_order(global[t]) * pi1_st * pi2_st)) *
                        (s_s * s_t.transpose());
                }
            } else if (s != t) {
                if (delta2 != 0.0) {
                    Eigen::VectorXd c2 = r_s / pistar_s -
                                         (resid.row(t).transpose() - rbar) / ph2.pi_star(t);
                    v2s.noalias() += (-0.5 * delta2 / pi2_st) * (c2 * c2.transpose());
                }
                if (delta1 != 0.0) {
                    Eigen::VectorXd c3 =
                        s_s / pi1_s -
                        (svals.row(t).transpose() - sbar) / d1.first_order(global[t]);
                    v3s.noalias() +=
                        (-0.5 * delta1 / (pi1_st * pi2_st)) * (c3 * c3.transpose());
                }
            }
        }
    }
    v2s *= scale;
    v3s *= scale;

    const int p_bal = std::max(chain.balance_p_phase2, 1);
    double v_factor = v_pgamma(p_bal, chain.gamma_sq_phase2);
    Eigen::MatrixXd inner = v1s * v_factor + v2s + v3s;

    // Sandwich: Gamma^{-T} inner Gamma^{-1} / n_II.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(fit.gamma_s_hat.transpose());
    if (std::fabs(lu.determinant()) < 1e-14)
        throw NonIdentificationError("ee_variance: Gamma_s is singular");
    Eigen::MatrixXd half = lu.solve(inner);  // Gamma^{-T} inner
    Eigen::PartialPivLU<Eigen::MatrixXd> lu2(fit.gamma_s_hat);
    Eigen::MatrixXd sandwich = lu2.solve(half.transpose()).transpose() / n2;

    VarianceComponents out;
    out.style = style;
    out.v_factor = v_factor;
    out.v1 = v1s(0, 0);
    out.v2 = v2s(0, 0);
    out.v3 = v3s(0, 0);
    out.variance = sandwich(0, 0);
    for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b)
            out.extra["sandwich_" + std::to_string(a) + std::to_string(b)] = sandwich(a, b);

    if (q == 1) {
        double g = std::fabs(fit.gamma_s_hat(0, 0));
        MixtureSpec mix;
        mix.l_terms.push_back({std::sqrt(std::max(v1s(0, 0), 0.0) / n2) / g, p_bal,
                               chain.gamma_sq_phase2});
        mix.normal_scales.push_back(std::sqrt(std::max(v2s(0, 0), 0.0) / n2) / g);
        mix.normal_scales.push_back(std::sqrt(std::max(v3s(0, 0), 0.0) / n2) / g);
        out.ci_mixture = std::move(mix);
    }
    return out;
}

}  // namespace rejsamp
