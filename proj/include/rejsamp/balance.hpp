#ifndef REJSAMP_BALANCE_HPP
#define REJSAMP_BALANCE_HPP

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "rejsamp/designs.hpp"
#include "rejsamp/ldist.hpp"
#include "rejsamp/population.hpp"
#include "rejsamp/rng.hpp"

namespace rejsamp {

/// Acceptance rule for one rejective phase. gamma_sq = +infinity is the
/// explicit "no rejection" sentinel, so rejective and plain designs share a
/// single code path.
struct BalanceCriterion {
    enum class Normalizer {
        SrsClosedForm,  // (1/n_II - 1/n_I) V_xx,I with the phase-I sample covariance
        DesignCov,      // conditional design covariance of the Hajek mean difference
    };

    double gamma_sq = kInfGamma;
    Normalizer normalizer = Normalizer::DesignCov;
    std::vector<std::vector<int>> tiers;  // x-column indices per tier, priority order
    std::vector<double> tier_weights;     // omega_k > 0
    long max_draws = 0;                   // 0 -> automatic cap
    double ridge = 0.0;                   // optional lambda added to the normalizer diagonal

    long resolved_max_draws(double acceptance_prob) const;
    void validate_tiers(int p) const;
};

struct PhaseSample {
    DrawnSample sample;            // indices are positions in the parent phase
    std::vector<int> global;       // population indices, same order
    Eigen::VectorXd pi_cond;       // conditional inclusion probability per sampled unit
    Eigen::VectorXd pi_star;       // combined probability up to this phase
    double accepted_q = std::numeric_limits<double>::quiet_NaN();
    long draws_attempted = 1;
};

/// The nested record of accepted samples. Immutable once returned by a draw
/// routine; chains may be processed concurrently.
struct PhaseChain {
    const FinitePopulation* pop = nullptr;
    std::vector<PhaseSample> phases;  // I, II, optionally III

    BalanceCriterion::Normalizer normalizer_kind = BalanceCriterion::Normalizer::DesignCov;
    double gamma_sq_phase2 = kInfGamma;
    double gamma_sq_phase3 = kInfGamma;
    int balance_p_phase2 = 0;  // dimension behind gamma_sq_phase2
    int balance_p_phase3 = 0;

    /// Metric used for the phase-II criterion; also the V_xx,I of the
    /// variance estimators. Empty when no balance covariates are configured.
    Eigen::MatrixXd v_xx_phase1;
    /// Metric for the phase-III criterion (V_cc,II); empty for two-phase.
    Eigen::MatrixXd v_cc_phase2;

    std::vector<double> accepted_tier_q;  // sequential designs only

    Eigen::MatrixXd a_block;  // derived phase-II covariate rows (n_II x q)
    Eigen::MatrixXd beta_zx;  // p x q coefficient behind a_block

    int n_phases() const { return static_cast<int>(phases.size()); }
    const PhaseSample& phase(int k) const { return phases.at(static_cast<std::size_t>(k)); }
    const PhaseSample& innermost() const { return phases.back(); }
    int population_size() const { return pop->n_units(); }

    /// Values for one phase's units pulled from a population-length vector.
    Eigen::VectorXd values_at_phase(int k, const Eigen::VectorXd& values_pop) const;
    Eigen::MatrixXd rows_at_phase(int k, const Eigen::MatrixXd& values_pop) const;

    /// Hajek mean at phase k: weights 1/pi_star of that phase.
    double hajek_mean_at(int k, const Eigen::VectorXd& values_pop) const;
    Eigen::VectorXd hajek_mean_rows_at(int k, const Eigen::MatrixXd& values_pop) const;

    /// x block (and for phase three the (x, a) block) for the units of a phase.
    Eigen::MatrixXd x_at_phase(int k) const;
    /// Combined covariate c = (x, a) rows for phase-III units.
    Eigen::MatrixXd c_at_phase3() const;
    /// c rows for the phase-II units (x alongside the derived a block).
    Eigen::MatrixXd c_at_phase2() const;
};

/// diff' * normalizer^{-1} * diff via a symmetric factorization. Throws
/// SingularNormalizerError (carrying the smallest pivot) instead of silently
/// regularizing; pass ridge > 0 to add lambda*I for exploratory runs.
double mahalanobis_q(const Eigen::VectorXd& diff, const Eigen::MatrixXd& normalizer,
                     double ridge = 0.0);

/// (1/n_II - 1/n_I) V_xx,I with the phase-I sample covariance (divisor n_I-1).
Eigen::MatrixXd phase2_diff_covariance_srs(const Eigen::MatrixXd& x_over_phase1, int n_inner);

/// Conditional design covariance of the inner-phase Hajek mean difference
/// given the outer sample: the double sum over outer units of
///   (pi_ij - pi_i pi_j) / (pi*_i pi*_j) (u_i - u_bar)(v_j - v_bar)' / N^2,
/// with u_bar, v_bar the outer-phase Hajek means (weights 1/pi_outer).
/// Closed-form fast paths per design tag; Poisson reduces to a single sum.
Eigen::MatrixXd phase_cond_design_cov(const Design& inner_design,
                                      const Eigen::VectorXd& pi_star_inner,
                                      const Eigen::VectorXd& pi_outer,
                                      const Eigen::MatrixXd& u,
                                      const Eigen::MatrixXd& v, double n_population);

/// Spec wrapper for the phase-II case: u = v = x over the phase-I sample.
Eigen::MatrixXd phase2_diff_covariance_general(const Design& design_inner,
                                               const Eigen::VectorXd& pi_star_inner,
                                               const Eigen::VectorXd& pi_phase1,
                                               const Eigen::MatrixXd& x_over_phase1,
                                               double n_population);

/// Two-phase rejective sampling: phase I drawn once, phase II redrawn until
/// Q_I < gamma^2 (strict). The phase-II design is resolved once per accepted
/// phase-I sample and its balance normalizer is reused across candidates.
PhaseChain draw_tprs(RandomStream& rng, const FinitePopulation& pop, const Design& design1,
                     const DesignFactory& design2, const BalanceCriterion& criterion);

/// Block Gram-Schmidt of tiered covariate columns under a metric: g[1] = x[1],
/// g[k] = x[k] - V_{x[k] x[<k]} V_{x[<k] x[<k]}^{-1} x[<k]. Returns the
/// transformed columns in tier order plus the per-tier metric blocks.
struct GramSchmidtBlocks {
    Eigen::MatrixXd g;                         // n x p, tier-major column order
    std::vector<Eigen::MatrixXd> tier_metric;  // V_{g[k] g[k]} under the metric
    std::vector<int> source_column;            // tier-major -> original column index
    std::vector<int> tier_offset;              // start of tier k in g's columns
    std::vector<int> tier_dim;
};
GramSchmidtBlocks gram_schmidt_blocks(const Eigen::MatrixXd& x,
                                      const std::vector<std::vector<int>>& tiers,
                                      const Eigen::MatrixXd& metric_xx);

/// Sequential tiered rejection: a candidate passes only if every tier k
/// satisfies Q_I[k] < gamma^2 / omega_k on the orthogonalized blocks.
PhaseChain draw_sequential_tprs(RandomStream& rng, const FinitePopulation& pop,
                                const Design& design1, const DesignFactory& design2,
                                const BalanceCriterion& criterion);

/// Phase-II derived covariate a_i = z_i - z_bar_II - (x_i - x_bar_II)' beta,
/// with beta the pi*-weighted regression of z on x over the phase-II sample.
/// a has pi*-weighted mean zero by construction.
struct DerivedCovariate {
    Eigen::MatrixXd a;        // n_II x q
    Eigen::MatrixXd beta_zx;  // p x q
};
DerivedCovariate derive_phase2_covariate(const PhaseChain& chain, const Eigen::MatrixXd& z_pop);

struct ThreePhaseCriterion {
    double gamma1_sq = kInfGamma;
    double gamma2_sq = kInfGamma;
    long max_draws = 0;
    double ridge = 0.0;
};

/// Three-phase rejective sampling: phase II accepted under Q_{x,I} < gamma1^2,
/// then the derived covariate a is built from z, c = (x, a) assembled, and
/// phase III accepted under Q_{c,II} < gamma2^2 with the V_cc,II metric.
PhaseChain draw_three_phase(RandomStream& rng, const FinitePopulation& pop,
                            const Design& design1, const DesignFactory& design2,
                            const DesignFactory& design3, const ThreePhaseCriterion& criterion);

}  // namespace rejsamp

#endif
