#ifndef REJSAMP_LDIST_HPP
#define REJSAMP_LDIST_HPP

#include <cstdint>
#include <limits>
#include <vector>

#include "rejsamp/rng.hpp"

namespace rejsamp {

constexpr double kInfGamma = std::numeric_limits<double>::infinity();

/// Regularized lower incomplete gamma P(a, x).
double lower_reg_gamma(double a, double x);

/// P(chisq_dof <= x). Absolute accuracy better than 1e-12.
double chisq_cdf(int dof, double x);

/// 100p-th quantile of chisq_dof, by bisection on chisq_cdf.
double chisq_quantile(int dof, double p);

double normal_cdf(double x);
double normal_quantile(double p);

/// v_{p,gamma^2} = P(chisq_{p+2} <= g2) / P(chisq_p <= g2); the variance of
/// the truncated-ball law L_{p,g2}. Returns 1 for an infinite threshold.
double v_pgamma(int p, double gamma_sq);

/// One draw of L_{p,g2}: a chi_p radius conditioned on chi_p^2 <= g2 times the
/// first coordinate of a uniform vector on the unit sphere. With g2 infinite
/// this is exactly a standard normal.
double sample_L(RandomStream& rng, int p, double gamma_sq);

/// Mixture of independent truncated-ball and normal components,
///   sum_i scale_i * L_{p_i, g2_i}  +  sum_j scale_j * Z_j,
/// all scales on the standard-deviation scale of the final statistic.
struct MixtureSpec {
    struct LTerm {
        double scale = 0.0;
        int dim = 1;
        double gamma_sq = kInfGamma;
    };
    std::vector<LTerm> l_terms;
    std::vector<double> normal_scales;

    bool all_l_unbounded() const;
    /// Standard deviation of the mixture (components independent).
    double sd() const;
};

/// Monte Carlo 100alpha-th quantile of the mixture; deterministic given
/// (spec, alpha, n_draws, seed). Falls back to the exact normal quantile when
/// every truncated term is unbounded.
double mixture_quantile(const MixtureSpec& spec, double alpha, long n_draws,
                        std::uint64_t seed);

/// Same Monte Carlo sample reused for several quantile levels.
std::vector<double> mixture_quantiles(const MixtureSpec& spec,
                                      const std::vector<double>& alphas,
                                      long n_draws, std::uint64_t seed);

/// Pre-drawn component pool for confidence intervals inside the replication
/// loop: the (L, Z) draws are generated once and recombined with
/// per-replicate scales, so quantile evaluation is a linear pass plus a
/// selection. Column k of the L block corresponds to l_dims[k]/l_gammas[k].
class MixturePool {
public:
    MixturePool(std::vector<int> l_dims, std::vector<double> l_gammas,
                int n_normal, long n_draws, std::uint64_t seed);

    /// Quantiles of sum_k l_scales[k]*L_k + sum_j z_scales[j]*Z_j.
    std::vector<double> quantiles(const std::vector<double>& l_scales,
                                  const std::vector<double>& z_scales,
                                  const std::vector<double>& alphas) const;

    long n_draws() const { return n_draws_; }
    const std::vector<int>& l_dims() const { return l_dims_; }
    const std::vector<double>& l_gammas() const { return l_gammas_; }

private:
    std::vector<int> l_dims_;
    std::vector<double> l_gammas_;
    long n_draws_;
    std::vector<double> l_draws_;  // n_draws x l_dims, column-major
    std::vector<double> z_draws_;  // n_draws x n_normal, column-major
};

}  // namespace rejsamp

#endif
