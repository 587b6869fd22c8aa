#include <doctest.h>

#include <map>
#include <set>

#include "rejsamp/designs.hpp"
#include "rejsamp/errors.hpp"
#include "rejsamp/oracle.hpp"

using namespace rejsamp;

TEST_SUITE("designs") {

TEST_CASE("srswor census and probability formulas") {
    RandomStream rng(1);
    DrawnSample s = draw_srswor(rng, 4, 4);
    CHECK(s.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(s.first_order(i) == 1.0);

    Design d = Design::srswor(5, 2);
    CHECK(d.first_order(3) == doctest::Approx(0.4));
    CHECK(d.pairwise(0, 1) == doctest::Approx(0.1));
    CHECK(d.pairwise(2, 2) == doctest::Approx(0.4));
    CHECK_THROWS_AS(Design::srswor(5, 6), DesignError);
    CHECK_THROWS_AS(Design::srswor(5, 0), DesignError);
}

TEST_CASE("srswor pairwise matches subset enumeration") {
    // Enumerate all C(5,2) = 10 equally likely subsets and count
    // co-inclusions of the pair (1, 3).
    auto subsets = combinations(5, 2);
    long both = 0;
    for (const auto& s : subsets) {
        bool has1 = false, has3 = false;
        for (int v : s) {
            has1 |= v == 1;
            has3 |= v == 3;
        }
        if (has1 && has3) ++both;
    }
    double exact = static_cast<double>(both) / static_cast<double>(subsets.size());
    CHECK(Design::srswor(5, 2).pairwise(1, 3) == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("srswor empirical inclusion frequency") {
    RandomStream rng(21);
    Design d = Design::srswor(10, 3);
    std::vector<long> counts(10, 0);
    const long reps = 100000;
    for (long r = 0; r < reps; ++r)
        for (int v : d.draw(rng)) ++counts[static_cast<std::size_t>(v)];
    for (int i = 0; i < 10; ++i)
        CHECK(std::fabs(static_cast<double>(counts[static_cast<std::size_t>(i)]) / reps - 0.3) <
              0.01);
}

TEST_CASE("srswor draws are uniform over subsets") {
    RandomStream rng(33);
    Design d = Design::srswor(5, 2);
    std::map<std::pair<int, int>, long> freq;
    const long reps = 50000;
    for (long r = 0; r < reps; ++r) {
        auto s = d.draw(rng);
        ++freq[{s[0], s[1]}];
    }
    CHECK(freq.size() == 10);
    for (const auto& [k, c] : freq)
        CHECK(std::fabs(static_cast<double>(c) / reps - 0.1) < 0.01);
}

TEST_CASE("poisson inclusion behavior") {
    RandomStream rng(2);
    DrawnSample all = draw_poisson(rng, Eigen::VectorXd::Constant(6, 1.0));
    CHECK(all.size() == 6);
    DrawnSample none = draw_poisson(rng, Eigen::VectorXd::Constant(6, 0.0));
    CHECK(none.size() == 0);

    Eigen::VectorXd neg(2);
    neg << 0.5, -0.1;
    CHECK_THROWS_AS(Design::poisson(neg), DesignError);

    Eigen::VectorXd over(2);
    over << 0.5, 1.5;
    Design clamped = Design::poisson(over);
    CHECK(clamped.clamped_count() == 1);
    CHECK(clamped.first_order(1) == 1.0);
}

TEST_CASE("poisson mean sample size") {
    RandomStream rng(3);
    Design d = Design::poisson(Eigen::VectorXd::Constant(20, 0.5));
    double total = 0.0;
    const long reps = 100000;
    for (long r = 0; r < reps; ++r) total += static_cast<double>(d.draw(rng).size());
    CHECK(std::fabs(total / reps - 10.0) < 0.1);
}

TEST_CASE("poisson pairwise factorizes exactly") {
    Eigen::VectorXd probs(4);
    probs << 0.2, 0.5, 0.9, 0.3;
    Design d = Design::poisson(probs);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j) CHECK(d.pairwise(i, j) == probs(i));
            else CHECK(d.pairwise(i, j) - probs(i) * probs(j) == 0.0);
        }
}

TEST_CASE("stratified: formulas and cross-stratum independence") {
    StratumPlan plan;
    plan.stratum_of = {0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    plan.take = {2, 3};
    Design d = Design::stratified(plan);
    CHECK(d.first_order(0) == doctest::Approx(0.5));
    CHECK(d.first_order(5) == doctest::Approx(0.5));
    CHECK(d.pairwise(0, 5) == doctest::Approx(0.25));
    // Inside stratum 1 of size 4 with take 2, SRSWOR pairwise applies.
    CHECK(d.pairwise(0, 1) == doctest::Approx(2.0 * 1.0 / (4.0 * 3.0)));
    CHECK(d.fixed_n() == 5);

    // Cross-stratum pairwise equals the product, verified by enumeration
    // over the joint subsets of the two strata.
    auto s1 = combinations(4, 2);
    auto s2 = combinations(6, 3);
    long hits = 0;
    for (const auto& a : s1)
        for (const auto& b : s2) {
            bool has0 = std::find(a.begin(), a.end(), 0) != a.end();
            bool has5 = std::find(b.begin(), b.end(), 1) != b.end();  // unit 5 = stratum pos 1
            if (has0 && has5) ++hits;
        }
    double exact = static_cast<double>(hits) / (s1.size() * s2.size());
    CHECK(d.pairwise(0, 5) == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("stratified: census and single-stratum cases") {
    StratumPlan census;
    census.stratum_of = {0, 0, 0, 1, 1, 1};
    census.take = {3, 3};
    RandomStream rng(4);
    DrawnSample s = draw_stratified(rng, census);
    CHECK(s.size() == 6);

    StratumPlan single;
    single.stratum_of = {0, 0, 0, 0, 0};
    single.take = {2};
    Design d = Design::stratified(single);
    Design srs = Design::srswor(5, 2);
    for (int i = 0; i < 5; ++i) {
        CHECK(d.first_order(i) == srs.first_order(i));
        for (int j = 0; j < 5; ++j) CHECK(d.pairwise(i, j) == srs.pairwise(i, j));
    }

    StratumPlan bad;
    bad.stratum_of = {0, 0};
    bad.take = {1, 1};  // stratum 1 is empty
    CHECK_THROWS_AS(Design::stratified(bad), DesignError);
}

TEST_CASE("inclusion_product") {
    CHECK(inclusion_product({0.5, 0.4}) == doctest::Approx(0.2));
    CHECK(inclusion_product({1.0, 0.4}) == doctest::Approx(0.4));
    CHECK(inclusion_product({0.5, 0.4, 0.5}) == doctest::Approx(0.1));
    CHECK_THROWS_AS(inclusion_product({0.5, 0.0}), DesignError);
}

TEST_CASE("sum of pairwise over the parent equals n times first order (SRSWOR)") {
    Design d = Design::srswor(7, 3);
    for (int i = 0; i < 7; ++i) {
        double total = 0.0;
        for (int j = 0; j < 7; ++j) total += d.pairwise(i, j);
        CHECK(total == doctest::Approx(3.0 * d.first_order(i)).epsilon(1e-12));
    }
}

TEST_CASE("fixed-size designs: first-order probabilities sum to n") {
    Design srs = Design::srswor(9, 4);
    CHECK(srs.first_order_all().sum() == doctest::Approx(4.0));
    StratumPlan plan;
    plan.stratum_of = {0, 0, 1, 1, 1};
    plan.take = {1, 2};
    Design st = Design::stratified(plan);
    CHECK(st.first_order_all().sum() == doctest::Approx(3.0));
}

TEST_CASE("proportional probability helper") {
    Eigen::VectorXd sizes(4);
    sizes << 1, 2, 3, 4;
    Eigen::VectorXd probs = proportional_probs(sizes, 2.0);
    CHECK(probs.sum() == doctest::Approx(2.0));
    CHECK(probs(3) == doctest::Approx(0.8));
    Eigen::VectorXd neg(2);
    neg << 1, -1;
    CHECK_THROWS_AS(proportional_probs(neg, 1.0), DesignError);
}

}  // TEST_SUITE
