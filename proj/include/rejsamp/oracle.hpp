#ifndef REJSAMP_ORACLE_HPP
#define REJSAMP_ORACLE_HPP

#include <functional>
#include <vector>

#include "rejsamp/balance.hpp"
#include "rejsamp/population.hpp"

namespace rejsamp {

/// Exhaustive enumeration of two-phase SRS: every phase-I subset of size n_I
/// paired with every phase-II subset of size n_II, with the acceptance mask
/// of the balance criterion. Exact design moments of any estimator follow by
/// summation. Deliberately brute force; sizes are capped.
class TwoPhaseEnumeration {
public:
    TwoPhaseEnumeration(const FinitePopulation& pop, int n1, int n2, double gamma_sq);

    const FinitePopulation& population() const { return *pop_; }
    int n1() const { return n1_; }
    int n2() const { return n2_; }

    const std::vector<std::vector<int>>& phase1_sets() const { return phase1_; }
    /// Phase-II subsets as positions into the phase-I set (shared layout).
    const std::vector<std::vector<int>>& phase2_positions() const { return phase2_; }
    bool accepted(std::size_t a, std::size_t b) const { return accept_[a][b] != 0; }
    /// Number of phase-I sets with no accepting phase-II subset (the
    /// rejection loop would never terminate there).
    long dead_phase1_count() const;

    std::vector<int> phase2_global(std::size_t a, std::size_t b) const;

    /// Exact expectation of f(A, B_global) over the joint design law;
    /// conditional=true renormalizes B within each A to the accepted subsets.
    double expectation(
        const std::function<double(const std::vector<int>&, const std::vector<int>&)>& f,
        bool conditional) const;

    /// Exact conditional expectation given phase-I set a.
    double expectation_given_phase1(
        std::size_t a, const std::function<double(const std::vector<int>&)>& f_of_b_global,
        bool conditional) const;

    /// Exact acceptance probability within phase-I set a.
    double acceptance_rate_given_phase1(std::size_t a) const;

private:
    const FinitePopulation* pop_;
    int n1_, n2_;
    double gamma_sq_;
    std::vector<std::vector<int>> phase1_;
    std::vector<std::vector<int>> phase2_;
    std::vector<std::vector<char>> accept_;
};

/// Budget-checked constructor wrapper per the harness contract.
TwoPhaseEnumeration enumerate_two_phase(const FinitePopulation& pop, int n1, int n2,
                                        double gamma_sq);

std::vector<std::vector<int>> combinations(int n, int k);

}  // namespace rejsamp

#endif
