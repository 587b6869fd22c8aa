#include "rejsamp/estimators.hpp"

#include <cmath>

#include "rejsamp/errors.hpp"

namespace rejsamp {

double hajek_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& pi) {
    if (values.size() == 0) throw EstimationError("hajek_mean: empty sample");
    if (values.size() != pi.size()) throw ConfigError("hajek_mean: length mismatch");
    double num = 0.0, denom = 0.0;
    for (int i = 0; i < values.size(); ++i) {
        if (!(pi(i) > 0.0)) throw EstimationError("hajek_mean: nonpositive inclusion probability");
        double w = 1.0 / pi(i);
        num += w * values(i);
        denom += w;
    }
    return num / denom;
}

double pi_star_mean(const PhaseChain& chain, const Eigen::VectorXd& values_pop,
                    PiStarDenominator denom) {
    if (chain.n_phases() < 2) throw ConfigError("pi_star_mean: chain has fewer than two phases");
    const auto& inner = chain.innermost();
    if (inner.global.empty()) throw EstimationError("pi_star_mean: empty innermost sample");
    Eigen::VectorXd vals = chain.values_at_phase(chain.n_phases() - 1, values_pop);
    if (denom == PiStarDenominator::Hajek) return hajek_mean(vals, inner.pi_star);
    double num = 0.0;
    for (int t = 0; t < vals.size(); ++t) num += vals(t) / inner.pi_star(t);
    return num / chain.population_size();
}

double ree(const PhaseChain& chain, const std::vector<int>& stratum_of_pop,
           const Eigen::VectorXd& values_pop) {
    if (chain.n_phases() < 2) throw ConfigError("ree: chain has fewer than two phases");
    const auto& ph1 = chain.phase(0);
    const auto& ph2 = chain.phase(1);
    if (ph2.global.empty()) throw EstimationError("ree: empty phase-II sample");

    int H = 0;
    for (int h : stratum_of_pop) H = std::max(H, h + 1);

    std::vector<double> phase1_expansion(static_cast<std::size_t>(H), 0.0);
    for (std::size_t t = 0; t < ph1.global.size(); ++t) {
        int h = stratum_of_pop[static_cast<std::size_t>(ph1.global[t])];
        phase1_expansion[static_cast<std::size_t>(h)] += 1.0 / ph1.pi_star(static_cast<int>(t));
    }

    std::vector<double> num(static_cast<std::size_t>(H), 0.0);
    std::vector<double> den(static_cast<std::size_t>(H), 0.0);
    for (std::size_t t = 0; t < ph2.global.size(); ++t) {
        int g = ph2.global[t];
        int h = stratum_of_pop[static_cast<std::size_t>(g)];
        double w = 1.0 / ph2.pi_star(static_cast<int>(t));
        num[static_cast<std::size_t>(h)] += w * values_pop(g);
        den[static_cast<std::size_t>(h)] += w;
    }

    double total = 0.0;
    for (int h = 0; h < H; ++h) {
        if (phase1_expansion[static_cast<std::size_t>(h)] == 0.0) continue;
        if (den[static_cast<std::size_t>(h)] == 0.0)
            throw UndefinedRatioError("ree: stratum " + std::to_string(h) +
                                      " has phase-I mass but no phase-II units");
        total += phase1_expansion[static_cast<std::size_t>(h)] *
                 (num[static_cast<std::size_t>(h)] / den[static_cast<std::size_t>(h)]);
    }
    return total / chain.population_size();
}

RegressionFit fit_regression(const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& responses) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (weights.size() != n || responses.rows() != n)
        throw ConfigError("fit_regression: dimension mismatch");
    if (n <= p)
        throw InsufficientDataError("fit_regression: sample size " + std::to_string(n) +
                                    " not larger than " + std::to_string(p) + " regressors");

    double wsum = weights.sum();
    if (!(wsum > 0.0)) throw EstimationError("fit_regression: nonpositive weight total");
    Eigen::VectorXd xbar = (x.transpose() * weights) / wsum;
    Eigen::VectorXd ybar = (responses.transpose() * weights) / wsum;
    Eigen::MatrixXd xc = x.rowwise() - xbar.transpose();
    Eigen::MatrixXd yc = responses.rowwise() - ybar.transpose();

    Eigen::MatrixXd gram = xc.transpose() * (weights.asDiagonal() * xc);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 0.0) ||
        d.minCoeff() < 1e-12 * d.maxCoeff())
        throw CollinearityError("fit_regression: weighted Gram matrix is singular");

    RegressionFit fit;
    fit.coefficients = ldlt.solve(xc.transpose() * (weights.asDiagonal() * yc));
    fit.center_x = xbar;
    fit.center_y = ybar;
    fit.weights_used = weights;
    return fit;
}

namespace {

Eigen::VectorXd design_weights(const PhaseSample& ph) {
    Eigen::VectorXd w(ph.pi_star.size());
    for (int t = 0; t < w.size(); ++t) w(t) = 1.0 / ph.pi_star(t);
    return w;
}

}  // namespace

RegressionEstimate regression_estimate_two_phase(const PhaseChain& chain,
                                                 const Eigen::VectorXd& values_pop) {
    if (chain.n_phases() < 2) throw ConfigError("regression estimate: chain has no phase II");
    const auto& ph2 = chain.phase(1);
    Eigen::MatrixXd xb = chain.x_at_phase(1);
    Eigen::VectorXd yb = chain.values_at_phase(1, values_pop);
    RegressionFit fit = fit_regression(design_weights(ph2), xb, yb);

    Eigen::VectorXd xbar1 = chain.hajek_mean_rows_at(0, chain.pop->x);
    double est = fit.center_y(0) - (fit.center_x - xbar1).dot(fit.beta());
    return {est, std::move(fit)};
}

RegressionEstimate regression_estimate_three_phase(const PhaseChain& chain,
                                                   const Eigen::VectorXd& values_pop) {
    if (chain.n_phases() < 3) throw ConfigError("regression estimate: chain has no phase III");
    if (chain.a_block.rows() == 0)
        throw ConfigError("regression estimate: chain is missing the derived a block");
    const auto& ph3 = chain.phase(2);
    Eigen::MatrixXd cb = chain.c_at_phase3();
    Eigen::VectorXd yb = chain.values_at_phase(2, values_pop);
    RegressionFit fit = fit_regression(design_weights(ph3), cb, yb);

    const int p = chain.pop->p();
    const int q = static_cast<int>(cb.cols()) - p;
    Eigen::VectorXd xbar1 = chain.hajek_mean_rows_at(0, chain.pop->x);
    // center_x holds (xbar_III, abar_III); abar_II = 0 by construction.
    Eigen::VectorXd shift(p + q);
    shift.head(p) = xbar1 - fit.center_x.head(p);
    shift.tail(q) = -fit.center_x.tail(q);
    double est = fit.center_y(0) + shift.dot(fit.coefficients.col(0));
    return {est, std::move(fit)};
}

RegressionWeights regression_weights(const PhaseChain& chain) {
    if (chain.n_phases() < 2) throw ConfigError("regression_weights: chain has no phase II");
    const auto& ph2 = chain.phase(1);
    Eigen::MatrixXd xb = chain.x_at_phase(1);
    const int n = static_cast<int>(xb.rows());
    Eigen::VectorXd h = design_weights(ph2);
    double hsum = h.sum();
    Eigen::VectorXd xbar2 = (xb.transpose() * h) / hsum;
    Eigen::MatrixXd xc = xb.rowwise() - xbar2.transpose();
    Eigen::MatrixXd gram = xc.transpose() * (h.asDiagonal() * xc);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 0.0) ||
        d.minCoeff() < 1e-12 * d.maxCoeff())
        throw CollinearityError("regression_weights: weighted Gram matrix is singular");

    Eigen::VectorXd xbar1 = chain.hajek_mean_rows_at(0, chain.pop->x);
    Eigen::VectorXd adj = ldlt.solve(xbar1 - xbar2);

    RegressionWeights out;
    out.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double w = h(i) / hsum + h(i) * xc.row(i).dot(adj);
        out.weights(i) = w;
        if (w < 0.0) ++out.negative_count;
    }
    return out;
}

}  // namespace rejsamp
