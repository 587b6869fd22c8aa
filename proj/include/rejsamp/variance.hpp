#ifndef REJSAMP_VARIANCE_HPP
#define REJSAMP_VARIANCE_HPP

#include <map>
#include <string>

#include "rejsamp/balance.hpp"
#include "rejsamp/estimators.hpp"
#include "rejsamp/ldist.hpp"

namespace rejsamp {

enum class VarianceStyle { SrsClosedForm, HT, SYG };

std::string to_string(VarianceStyle s);

/// Variance decomposition for one estimator. v1/v2/v3 follow the two-phase
/// convention (scaled by n_II, so variance = (v1*v_factor + v2 + v3)/n_II);
/// three-phase runs populate `extra` instead. `ci_mixture` carries the
/// component spec for the confidence interval on the scale of the estimator.
struct VarianceComponents {
    VarianceStyle style = VarianceStyle::HT;
    double v1 = 0.0;
    double v2 = 0.0;
    double v3 = 0.0;
    double v_factor = 1.0;  // v_{p,gamma^2} applied to the balance component
    double variance = 0.0;  // final variance estimate for the estimator
    std::map<std::string, double> extra;
    std::map<std::string, double> diagnostics;
    MixtureSpec ci_mixture;
};

/// Closed-form variance for the pi* mean under SRS phases:
///   n_II^{-1} [ (1 - n_II/n_I){1 - (1 - v) R^2} + (n_II/n_I)(1 - n_I/N) ] V_yy,
/// with V_yy = beta' V_xx beta + V_ee and V_ee on n_II - p - 1 degrees of
/// freedom. `fit` is the phase-II regression of the values on x.
VarianceComponents vhat_srs_mean(const PhaseChain& chain, const RegressionFit& fit,
                                 const Eigen::VectorXd& values_pop);

/// Closed-form variance for the two-phase regression estimator under SRS:
///   n_II^{-1} { (n_II/n_I)(1 - n_I/N) V_yy + (1 - n_II/n_I) V_ee }.
VarianceComponents vhat_srs_reg(const PhaseChain& chain, const RegressionFit& fit,
                                const Eigen::VectorXd& values_pop);

/// General-design components: V1 = n_II beta' V_xx,I beta plus the
/// Horvitz-Thompson or Sen-Yates-Grundy double sums for V2 (phase-II
/// residual) and V3 (phase-I outcome). Sums stream over sampled pairs only.
VarianceComponents vhat_general(const PhaseChain& chain, const RegressionFit& fit,
                                const Eigen::VectorXd& values_pop, VarianceStyle style,
                                bool approx_joint = false);

/// Assembles the final variance and CI mixture for the pi* mean from
/// general-design components.
VarianceComponents finalize_general_mean(VarianceComponents comps, const PhaseChain& chain);
/// Same for the regression estimator: variance (V2 + V3)/n_II, normal CI.
VarianceComponents finalize_general_reg(VarianceComponents comps, const PhaseChain& chain);

/// Three-phase variance for the pi* mean (five components, two of them
/// v-scaled) and for the regression estimator (residual components only).
VarianceComponents vhat_three_phase_mean(const PhaseChain& chain,
                                         const Eigen::VectorXd& values_pop);
VarianceComponents vhat_three_phase_reg(const PhaseChain& chain,
                                        const Eigen::VectorXd& values_pop);

/// (estimate - nu_{1-alpha/2}, estimate - nu_{alpha/2}) with nu the Monte
/// Carlo quantiles of the component mixture (exact normal quantiles when no
/// truncated component remains).
std::pair<double, double> confidence_interval(double estimate,
                                              const VarianceComponents& comps, double alpha,
                                              long n_draws, std::uint64_t seed);

/// Pool-backed variant for replication loops; the pool must carry the same
/// L-term layout as the mixture.
std::pair<double, double> confidence_interval(double estimate,
                                              const VarianceComponents& comps, double alpha,
                                              const MixturePool& pool);

}  // namespace rejsamp

#endif
