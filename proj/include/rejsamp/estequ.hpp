#ifndef REJSAMP_ESTEQU_HPP
#define REJSAMP_ESTEQU_HPP

#include <Eigen/Dense>
#include <functional>

#include "rejsamp/balance.hpp"
#include "rejsamp/variance.hpp"

namespace rejsamp {

/// Estimating function s(y; xi) defining a population parameter as the root
/// of its population average. Four built-ins plus a custom hook (library
/// surface only).
struct EstimatingFunction {
    enum class Kind { Mean, ProportionBelow, Variance, Quantile, Custom };

    Kind kind = Kind::Mean;
    double c = 0.0;    // ProportionBelow threshold
    double tau = 0.5;  // Quantile level
    int dimension = 1;
    bool differentiable = true;

    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> score;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> score_jacobian;

    static EstimatingFunction mean();
    static EstimatingFunction proportion_below(double c);
    static EstimatingFunction variance();
    static EstimatingFunction quantile(double tau);
    static EstimatingFunction custom(
        int dimension, std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> score,
        std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> jacobian = nullptr);

    Eigen::VectorXd eval(double y, const Eigen::VectorXd& xi) const;
    bool has_jacobian() const;
    Eigen::MatrixXd jacobian(double y, const Eigen::VectorXd& xi) const;
};

struct EEFit {
    Eigen::VectorXd xi_hat;
    Eigen::MatrixXd gamma_s_hat;    // q x q derivative of the limiting score
    Eigen::MatrixXd b_hat;          // p x q multiresponse slope of s on x
    Eigen::MatrixXd residual_block; // n x q, s_i - B' x_i
    Eigen::VectorXd sbar_at_root;
    double bandwidth = 0.0;         // density bandwidth for the quantile kind
    int newton_iterations = 0;
};

/// Root of the pi*-weighted score over the innermost sample. Differentiable
/// kinds use damped Newton (tolerance 1e-10, at most 100 steps, step halving
/// on non-decrease); the quantile kind is solved exactly by a weighted
/// order-statistic scan.
EEFit solve_ee(const PhaseChain& chain, const EstimatingFunction& func);

/// Sandwich variance per the general-design components evaluated on the
/// score residuals: Gamma^{-T} (V1^s v + V2^s + V3^s) Gamma^{-1} / n_II.
/// For scalar parameters the CI mixture is populated alongside.
VarianceComponents ee_variance(const PhaseChain& chain, const EstimatingFunction& func,
                               const EEFit& fit, VarianceStyle style = VarianceStyle::HT);

}  // namespace rejsamp

#endif
