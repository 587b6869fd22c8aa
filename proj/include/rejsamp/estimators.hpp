#ifndef REJSAMP_ESTIMATORS_HPP
#define REJSAMP_ESTIMATORS_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "rejsamp/balance.hpp"

namespace rejsamp {

/// Weighted least squares fit with Hajek-weighted centers. For multiresponse
/// fits the Gram factorization is shared across responses.
struct RegressionFit {
    Eigen::MatrixXd coefficients;  // p x q
    Eigen::VectorXd center_x;      // Hajek mean of the regressors
    Eigen::VectorXd center_y;      // Hajek mean of the responses
    Eigen::VectorXd weights_used;  // per-unit design weights

    Eigen::VectorXd beta() const { return coefficients.col(0); }
};

struct EstimateReport {
    double estimate = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::string method;
    std::map<std::string, double> diagnostics;
};

/// Hajek ratio mean: sum(u_i/pi_i) / sum(1/pi_i) over the sampled units.
double hajek_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& pi);

enum class PiStarDenominator { Hajek, PopulationSize };

/// Double-expansion mean at the innermost phase; `values_pop` indexed by
/// population position. The PopulationSize variant divides by N instead of
/// the estimated sum of weights.
double pi_star_mean(const PhaseChain& chain, const Eigen::VectorXd& values_pop,
                    PiStarDenominator denom = PiStarDenominator::Hajek);

/// Reweighted expansion estimator for a stratified structure: phase-I
/// expansion of stratum counts times the phase-II within-stratum weighted
/// ratio. `stratum_of_pop` maps population position -> stratum.
double ree(const PhaseChain& chain, const std::vector<int>& stratum_of_pop,
           const Eigen::VectorXd& values_pop);

/// Weighted normal equations. `weights` are design weights (1/pi*);
/// responses may have several columns.
RegressionFit fit_regression(const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& responses);

struct RegressionEstimate {
    double estimate;
    RegressionFit fit;
};

/// ybar_II - (xbar_II - xbar_I)' beta_II with phase-appropriate Hajek means.
RegressionEstimate regression_estimate_two_phase(const PhaseChain& chain,
                                                 const Eigen::VectorXd& values_pop);

/// ybar_III + (xbar_I - xbar_III, -abar_III)' beta_yc,III.
RegressionEstimate regression_estimate_three_phase(const PhaseChain& chain,
                                                   const Eigen::VectorXd& values_pop);

/// Per-unit weights reproducing the two-phase regression estimate:
/// sum_i w_i y_i equals the estimate and sum_i w_i = 1.
struct RegressionWeights {
    Eigen::VectorXd weights;  // over the phase-II sample
    int negative_count = 0;
};
RegressionWeights regression_weights(const PhaseChain& chain);

}  // namespace rejsamp

#endif
