#ifndef REJSAMP_TEST_HELPERS_HPP
#define REJSAMP_TEST_HELPERS_HPP

#include <string>
#include <vector>

#include "rejsamp/balance.hpp"
#include "rejsamp/population.hpp"
#include "rejsamp/rng.hpp"

namespace rejsamp_test {

inline rejsamp::FinitePopulation normal_xy_pop(std::uint64_t seed, int n, int p,
                                               double beta = 1.0, double noise = 1.0) {
    rejsamp::RandomStream rng(seed);
    rejsamp::FinitePopulation pop;
    pop.x.resize(n, p);
    pop.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < p; ++c) pop.x(i, c) = rng.normal();
        pop.y(i) = 1.0 + beta * pop.x.row(i).sum() + noise * rng.normal();
    }
    for (int c = 0; c < p; ++c) pop.x_names.push_back("x" + std::to_string(c + 1));
    pop.validate();
    return pop;
}

/// Chain assembled by hand from explicit index sets and designs; pi values
/// are pulled from the designs so pairwise providers stay consistent.
inline rejsamp::PhaseChain manual_chain(const rejsamp::FinitePopulation& pop,
                                        const std::vector<int>& a, rejsamp::Design d1,
                                        const std::vector<int>& b_pos, rejsamp::Design d2) {
    rejsamp::PhaseChain ch;
    ch.pop = &pop;
    rejsamp::PhaseSample p1;
    p1.sample.indices = a;
    p1.sample.design = d1;
    p1.global = a;
    p1.pi_cond.resize(static_cast<int>(a.size()));
    for (std::size_t t = 0; t < a.size(); ++t)
        p1.pi_cond(static_cast<int>(t)) = d1.first_order(a[t]);
    p1.pi_star = p1.pi_cond;

    rejsamp::PhaseSample p2;
    p2.sample.indices = b_pos;
    p2.sample.design = d2;
    p2.pi_cond.resize(static_cast<int>(b_pos.size()));
    p2.pi_star.resize(static_cast<int>(b_pos.size()));
    for (std::size_t t = 0; t < b_pos.size(); ++t) {
        p2.global.push_back(a[static_cast<std::size_t>(b_pos[t])]);
        p2.pi_cond(static_cast<int>(t)) = d2.first_order(b_pos[t]);
        p2.pi_star(static_cast<int>(t)) =
            p1.pi_star(b_pos[t]) * p2.pi_cond(static_cast<int>(t));
    }
    ch.phases.push_back(std::move(p1));
    ch.phases.push_back(std::move(p2));
    return ch;
}

}  // namespace rejsamp_test

#endif
