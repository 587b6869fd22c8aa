#ifndef REJSAMP_DESIGNS_HPP
#define REJSAMP_DESIGNS_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rejsamp/population.hpp"
#include "rejsamp/rng.hpp"

namespace rejsamp {

enum class DesignTag { Srswor, Poisson, Stratified };

std::string to_string(DesignTag tag);

struct StratumPlan {
    std::vector<int> stratum_of;  // parent position -> stratum in [0, H)
    std::vector<int> take;        // r_h per stratum
};

/// A sampling design over a parent list of m units, carrying closed-form
/// first- and second-order inclusion probabilities. Pairwise probabilities
/// are never materialized as a matrix; variance double-sums call
/// pairwise(i, j) for sampled pairs only.
class Design {
public:
    Design() = default;  // empty placeholder; all probability queries throw

    static Design srswor(int parent_size, int n);
    /// Per-unit probabilities; values above 1 are clamped to 1 and counted.
    static Design poisson(Eigen::VectorXd probs);
    static Design stratified(StratumPlan plan);

    DesignTag tag() const { return tag_; }
    int parent_size() const { return parent_size_; }
    bool fixed_size() const { return tag_ != DesignTag::Poisson; }
    int fixed_n() const;  // srswor/stratified total take
    bool has_pairwise() const { return true; }
    int clamped_count() const { return clamped_; }

    double first_order(int i) const;
    Eigen::VectorXd first_order_all() const;
    /// pi_{ij}; pairwise(i, i) equals first_order(i).
    double pairwise(int i, int j) const;

    std::vector<int> draw(RandomStream& rng) const;

private:
    DesignTag tag_ = DesignTag::Srswor;
    int parent_size_ = 0;
    int n_ = 0;                      // srswor
    Eigen::VectorXd probs_;          // poisson
    int clamped_ = 0;                // poisson probs clamped to 1
    StratumPlan plan_;               // stratified
    std::vector<std::vector<int>> stratum_members_;
    std::vector<double> stratum_pi_;
};

/// One realized sample: positions into the parent list plus the design that
/// produced it (which carries the probability providers).
struct DrawnSample {
    std::vector<int> indices;  // ascending parent positions
    Design design;

    int size() const { return static_cast<int>(indices.size()); }
    double first_order(int i) const { return design.first_order(i); }
    double pairwise(int i, int j) const { return design.pairwise(i, j); }
    DesignTag tag() const { return design.tag(); }
};

DrawnSample draw_srswor(RandomStream& rng, int parent_size, int n);
DrawnSample draw_poisson(RandomStream& rng, const Eigen::VectorXd& probs);
DrawnSample draw_stratified(RandomStream& rng, const StratumPlan& plan);

/// Combined pi* across nested phases for one unit: the product of the
/// conditional inclusion probabilities along the chain. `conditional_pi` are
/// the per-phase factors already resolved for that unit.
double inclusion_product(const std::vector<double>& conditional_pi);

/// Poisson probabilities proportional to a positive size measure, scaled so
/// the expected sample size is expected_n; values above 1 are clamped by the
/// poisson design itself.
Eigen::VectorXd proportional_probs(const Eigen::VectorXd& sizes, double expected_n);

/// A design bound late to its parent: phase-II/III designs typically depend
/// on what the outer phase observed (e.g. probabilities proportional to a
/// covariate over the realized sample).
using DesignFactory =
    std::function<Design(const FinitePopulation&, const std::vector<int>& parent_global)>;

DesignFactory srswor_factory(int n);
/// Poisson with p_i proportional to `values[global i]`, sum over the parent
/// fixed to 1, pi_i = p_i * expected_n.
DesignFactory poisson_prop_factory(Eigen::VectorXd values_pop, double expected_n);

}  // namespace rejsamp

#endif
