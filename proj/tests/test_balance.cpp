#include <doctest.h>

#include <cmath>
#include <map>

#include "rejsamp/balance.hpp"
#include "rejsamp/errors.hpp"
#include "rejsamp/oracle.hpp"
#include "rejsamp/population.hpp"

using namespace rejsamp;

namespace {

FinitePopulation normal_pop(std::uint64_t seed, int n, int p) {
    RandomStream rng(seed);
    FinitePopulation pop;
    pop.x.resize(n, p);
    pop.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < p; ++c) pop.x(i, c) = rng.normal();
        pop.y(i) = pop.x.row(i).sum() + rng.normal();
    }
    for (int c = 0; c < p; ++c) pop.x_names.push_back("x" + std::to_string(c + 1));
    pop.validate();
    return pop;
}

PhaseChain manual_two_phase(const FinitePopulation& pop, std::vector<int> a,
                            Eigen::VectorXd pi1, std::vector<int> b_pos,
                            Eigen::VectorXd pi2cond) {
    PhaseChain ch;
    ch.pop = &pop;
    PhaseSample p1;
    p1.sample.indices = a;
    p1.global = a;
    p1.pi_cond = pi1;
    p1.pi_star = pi1;
    PhaseSample p2;
    p2.sample.indices = b_pos;
    for (int pos : b_pos) p2.global.push_back(a[static_cast<std::size_t>(pos)]);
    p2.pi_cond.resize(static_cast<int>(b_pos.size()));
    p2.pi_star.resize(static_cast<int>(b_pos.size()));
    for (std::size_t t = 0; t < b_pos.size(); ++t) {
        p2.pi_cond(static_cast<int>(t)) = pi2cond(static_cast<int>(t));
        p2.pi_star(static_cast<int>(t)) =
            pi1(b_pos[t]) * pi2cond(static_cast<int>(t));
    }
    ch.phases.push_back(std::move(p1));
    ch.phases.push_back(std::move(p2));
    return ch;
}

}  // namespace

TEST_SUITE("balance") {

TEST_CASE("mahalanobis_q basic values") {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    CHECK(mahalanobis_q(zero, Eigen::MatrixXd::Identity(3, 3)) == 0.0);

    double gamma = 0.7;
    Eigen::VectorXd diff(2);
    diff << gamma, 0.0;
    CHECK(mahalanobis_q(diff, Eigen::MatrixXd::Identity(2, 2)) ==
          doctest::Approx(gamma * gamma).epsilon(1e-14));

    Eigen::VectorXd d1(1);
    d1 << 2.0;
    Eigen::MatrixXd m1(1, 1);
    m1 << 4.0;
    CHECK(mahalanobis_q(d1, m1) == doctest::Approx(1.0).epsilon(1e-14));

    Eigen::MatrixXd sing(2, 2);
    sing << 1, 1, 1, 1;
    Eigen::VectorXd d2(2);
    d2 << 1, 0;
    CHECK_THROWS_AS(mahalanobis_q(d2, sing), SingularNormalizerError);
}

TEST_CASE("mahalanobis_q is invariant under invertible recoding") {
    RandomStream rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        int p = 3;
        Eigen::VectorXd diff(p);
        Eigen::MatrixXd a(p, p);
        for (int i = 0; i < p; ++i) {
            diff(i) = rng.normal();
            for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
        }
        Eigen::MatrixXd v = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);
        Eigen::MatrixXd t(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) t(i, j) = rng.normal();
        t += 3.0 * Eigen::MatrixXd::Identity(p, p);
        double q0 = mahalanobis_q(diff, v);
        double q1 = mahalanobis_q(t * diff, t * v * t.transpose());
        CHECK(std::fabs(q0 - q1) < 1e-9 * (1.0 + std::fabs(q0)));
    }
}

TEST_CASE("phase2_diff_covariance_srs hand value and scaling") {
    Eigen::MatrixXd x(4, 1);
    x << 0, 0, 1, 1;
    Eigen::MatrixXd v = phase2_diff_covariance_srs(x, 2);
    CHECK(v(0, 0) == doctest::Approx(1.0 / 12.0).epsilon(1e-14));

    CHECK_THROWS_AS(phase2_diff_covariance_srs(x, 4), ZeroVarianceError);

    // Doubling x scales the normalizer by four and leaves Q unchanged.
    Eigen::MatrixXd v2 = phase2_diff_covariance_srs(2.0 * x, 2);
    CHECK(v2(0, 0) == doctest::Approx(4.0 * v(0, 0)));
    Eigen::VectorXd diff(1), diff2(1);
    diff << 0.25;
    diff2 << 0.5;
    CHECK(mahalanobis_q(diff, v) == doctest::Approx(mahalanobis_q(diff2, v2)).epsilon(1e-12));
}

TEST_CASE("general design covariance reduces to the SRS closed form") {
    FinitePopulation pop = normal_pop(7, 60, 2);
    // Phase-I sample: first 20 units under SRS of 20 from 60.
    std::vector<int> a;
    for (int i = 0; i < 20; ++i) a.push_back(i * 3);
    Eigen::MatrixXd x_a(20, 2);
    for (int t = 0; t < 20; ++t) x_a.row(t) = pop.x.row(a[static_cast<std::size_t>(t)]);

    Design d2 = Design::srswor(20, 8);
    double pi1 = 20.0 / 60.0;
    Eigen::VectorXd pi_star = Eigen::VectorXd::Constant(20, pi1 * d2.first_order(0));
    Eigen::VectorXd pi_outer = Eigen::VectorXd::Constant(20, pi1);

    // Under two-phase SRS the double-sum formula collapses to
    // (1/n_II - 1/n_I) V_xx,I with pi* = n_II/N constant.
    Eigen::MatrixXd general =
        phase2_diff_covariance_general(d2, pi_star, pi_outer, x_a, 60.0);
    Eigen::MatrixXd closed = phase2_diff_covariance_srs(x_a, 8);
    CHECK((general - closed).norm() < 1e-10 * closed.norm());
}

TEST_CASE("general design covariance: Poisson census and brute force") {
    Eigen::MatrixXd x(3, 1);
    x << 0, 1, 2;
    Eigen::VectorXd pi_outer = Eigen::VectorXd::Constant(3, 0.5);

    Design census = Design::poisson(Eigen::VectorXd::Constant(3, 1.0));
    Eigen::VectorXd star_census = pi_outer;  // 0.5 * 1.0
    Eigen::MatrixXd vc =
        phase_cond_design_cov(census, star_census, pi_outer, x, x, 10.0);
    CHECK(vc.norm() == 0.0);

    Design pois = Design::poisson(Eigen::VectorXd::Constant(3, 0.5));
    Eigen::VectorXd star = Eigen::VectorXd::Constant(3, 0.25);
    Eigen::MatrixXd v = phase_cond_design_cov(pois, star, pi_outer, x, x, 10.0);

    // Independent brute-force double sum straight from the display.
    double xbar = 0.0, wsum = 0.0;
    for (int i = 0; i < 3; ++i) {
        xbar += x(i, 0) / pi_outer(i);
        wsum += 1.0 / pi_outer(i);
    }
    xbar /= wsum;
    double brute = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double pij = i == j ? 0.5 : 0.25;
            double delta = pij - 0.25;
            brute += delta / (star(i) * star(j)) * (x(i, 0) - xbar) * (x(j, 0) - xbar);
        }
    brute /= 100.0;
    CHECK(v(0, 0) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("stratified inner design covariance matches Monte Carlo") {
    // Empirical design covariance of the Hajek mean difference over many
    // stratified draws against the double-sum formula.
    FinitePopulation pop = normal_pop(40, 100, 1);
    std::vector<int> a;
    for (int i = 0; i < 100; i += 1) a.push_back(i);
    Eigen::MatrixXd x_a = pop.x;
    Eigen::VectorXd pi1 = Eigen::VectorXd::Constant(100, 1.0);  // census phase I

    StratumPlan plan;
    plan.stratum_of.resize(100);
    for (int i = 0; i < 100; ++i) plan.stratum_of[static_cast<std::size_t>(i)] = i < 60 ? 0 : 1;
    plan.take = {20, 10};
    Design d2 = Design::stratified(plan);
    Eigen::VectorXd pi_star(100);
    for (int i = 0; i < 100; ++i) pi_star(i) = d2.first_order(i);

    Eigen::MatrixXd formula = phase_cond_design_cov(d2, pi_star, pi1, x_a, x_a, 100.0);

    RandomStream rng(41);
    double xbar1 = x_a.col(0).mean();
    const long reps = 20000;
    double s = 0.0, s2 = 0.0;
    for (long r = 0; r < reps; ++r) {
        auto idx = d2.draw(rng);
        double num = 0.0, den = 0.0;
        for (int pos : idx) {
            double w = 1.0 / pi_star(pos);
            num += w * x_a(pos, 0);
            den += w;
        }
        double diff = num / den - xbar1;
        s += diff;
        s2 += diff * diff;
    }
    double mean = s / reps;
    double emp = s2 / reps - mean * mean;
    // The double sum is the linearized covariance, so agreement is up to
    // O(1/n) linearization error plus Monte Carlo noise.
    CHECK(std::fabs(emp / formula(0, 0) - 1.0) < 0.10);
}

TEST_CASE("draw_tprs: infinite threshold accepts the first candidate") {
    FinitePopulation pop = normal_pop(9, 200, 1);
    RandomStream rng(5);
    BalanceCriterion crit;  // gamma_sq defaults to infinity
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    PhaseChain chain = draw_tprs(rng, pop, Design::srswor(200, 50), srswor_factory(20), crit);
    CHECK(chain.phase(1).draws_attempted == 1);
    CHECK(chain.n_phases() == 2);
    CHECK(chain.phase(1).global.size() == 20);
    // Q is still recorded for diagnostics when the metric factorizes.
    CHECK(std::isfinite(chain.phase(1).accepted_q));
}

TEST_CASE("draw_tprs: accepted Q replays below the threshold") {
    FinitePopulation pop = normal_pop(10, 400, 2);
    BalanceCriterion crit;
    crit.gamma_sq = 0.4;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(6);
    for (int rep = 0; rep < 25; ++rep) {
        PhaseChain chain =
            draw_tprs(rng, pop, Design::srswor(400, 120), srswor_factory(30), crit);
        const auto& ph2 = chain.phase(1);
        REQUIRE(std::isfinite(ph2.accepted_q));
        CHECK(ph2.accepted_q < crit.gamma_sq);
        // Recompute Q from the stored samples and the stored metric.
        Eigen::MatrixXd x_a = chain.x_at_phase(0);
        Eigen::VectorXd xbar1 = x_a.colwise().mean();
        Eigen::MatrixXd x_b = chain.x_at_phase(1);
        Eigen::VectorXd xbar2 = x_b.colwise().mean();
        double q = mahalanobis_q(xbar2 - xbar1, chain.v_xx_phase1);
        CHECK(q == doctest::Approx(ph2.accepted_q).epsilon(1e-10));
    }
}

TEST_CASE("draw_tprs: acceptance rate approaches the chi-square mass") {
    FinitePopulation pop = generate_synthetic(77, 20000, 1.0, 1.0);
    BalanceCriterion crit;
    crit.gamma_sq = 0.01;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(8);
    long attempts = 0, chains = 0;
    while (attempts < 10000) {
        PhaseChain chain =
            draw_tprs(rng, pop, Design::srswor(20000, 5000), srswor_factory(200), crit);
        attempts += chain.phase(1).draws_attempted;
        ++chains;
    }
    double rate = static_cast<double>(chains) / static_cast<double>(attempts);
    CHECK(std::fabs(rate - 0.0797) < 0.01);
}

TEST_CASE("draw_tprs: the 0.001 chi-square quantile gives a 0.001 acceptance rate") {
    FinitePopulation pop = generate_synthetic(78, 20000, 1.0, 1.0);
    BalanceCriterion crit;
    crit.gamma_sq = chisq_quantile(1, 0.001);
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(9);
    long attempts = 0, chains = 0;
    while (attempts < 20000) {
        PhaseChain chain =
            draw_tprs(rng, pop, Design::srswor(20000, 5000), srswor_factory(200), crit);
        attempts += chain.phase(1).draws_attempted;
        ++chains;
    }
    double rate = static_cast<double>(chains) / static_cast<double>(attempts);
    CHECK(std::fabs(rate - 0.001) < 0.0007);
}

TEST_CASE("draw_tprs: draw cap raises an acceptance error") {
    FinitePopulation pop = normal_pop(11, 300, 1);
    BalanceCriterion crit;
    crit.gamma_sq = 1e-9;
    crit.max_draws = 5;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(10);
    CHECK_THROWS_AS(
        draw_tprs(rng, pop, Design::srswor(300, 100), srswor_factory(25), crit),
        AcceptanceError);
}

TEST_CASE("conditional law matches the enumeration oracle (census phase I)") {
    FinitePopulation pop = generate_synthetic(55, 6, 1.0, 1.0);
    const double gamma_sq = 0.3;
    TwoPhaseEnumeration oracle(pop, 6, 2, gamma_sq);
    REQUIRE(oracle.dead_phase1_count() == 0);

    // Exact conditional probability of each accepted phase-II subset.
    std::map<std::pair<int, int>, double> exact;
    {
        long n_acc = 0;
        for (std::size_t b = 0; b < oracle.phase2_positions().size(); ++b)
            if (oracle.accepted(0, b)) ++n_acc;
        for (std::size_t b = 0; b < oracle.phase2_positions().size(); ++b)
            if (oracle.accepted(0, b)) {
                auto g = oracle.phase2_global(0, b);
                exact[{g[0], g[1]}] = 1.0 / static_cast<double>(n_acc);
            }
    }

    BalanceCriterion crit;
    crit.gamma_sq = gamma_sq;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(12);
    std::map<std::pair<int, int>, long> freq;
    const long reps = 100000;
    for (long r = 0; r < reps; ++r) {
        PhaseChain chain = draw_tprs(rng, pop, Design::srswor(6, 6), srswor_factory(2), crit);
        const auto& g = chain.phase(1).global;
        ++freq[{g[0], g[1]}];
    }
    double tv = 0.0;
    for (const auto& [key, p] : exact) {
        double emp = freq.count(key) ? static_cast<double>(freq[key]) / reps : 0.0;
        tv += std::fabs(emp - p);
    }
    for (const auto& [key, c] : freq)
        if (!exact.count(key)) tv += static_cast<double>(c) / reps;
    tv *= 0.5;
    CHECK(tv < 0.02);
}

TEST_CASE("accepted draws shrink the balance variance by about v_p_gamma") {
    FinitePopulation pop = normal_pop(13, 2000, 1);
    const double gamma_sq = 0.05;
    BalanceCriterion rej, plain;
    rej.gamma_sq = gamma_sq;
    rej.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    plain.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;

    auto collect = [&](BalanceCriterion crit, long reps, std::uint64_t seed) {
        RandomStream rng(seed);
        double s = 0.0, s2 = 0.0;
        for (long r = 0; r < reps; ++r) {
            PhaseChain chain =
                draw_tprs(rng, pop, Design::srswor(2000, 2000), srswor_factory(100), crit);
            double d = chain.x_at_phase(1).col(0).mean() - pop.x.col(0).mean();
            s += d;
            s2 += d * d;
        }
        double mean = s / reps;
        return s2 / reps - mean * mean;
    };
    double var_rej = collect(rej, 4000, 14);
    double var_plain = collect(plain, 4000, 15);
    double ratio = var_rej / var_plain;
    double target = v_pgamma(1, gamma_sq);
    CHECK(std::fabs(ratio / target - 1.0) < 0.15);
}

TEST_CASE("gram_schmidt_blocks: identity, orthogonal, duplicated") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 1, -1, 1, 1, -1, -1, -1;
    Eigen::MatrixXd metric = (x.transpose() * x) / 3.0;  // sample covariance, means zero

    // Single tier: unchanged.
    GramSchmidtBlocks g1 = gram_schmidt_blocks(x, {{0, 1}}, metric);
    CHECK((g1.g - x).norm() == 0.0);

    // Orthogonal columns: projection is a no-op.
    GramSchmidtBlocks g2 = gram_schmidt_blocks(x, {{0}, {1}}, metric);
    CHECK((g2.g.col(1) - x.col(1)).norm() < 1e-12);

    // Duplicated column: all residual variation removed in tier 2.
    Eigen::MatrixXd xd(4, 2);
    xd.col(0) = x.col(0);
    xd.col(1) = x.col(0);
    Eigen::MatrixXd md = (xd.transpose() * xd) / 3.0;
    GramSchmidtBlocks g3 = gram_schmidt_blocks(xd, {{0}, {1}}, md);
    CHECK(g3.g.col(1).norm() < 1e-12);
    CHECK(g3.tier_metric[1](0, 0) < 1e-12);
}

TEST_CASE("sequential with one tier matches draw_tprs exactly") {
    FinitePopulation pop = normal_pop(16, 500, 2);
    BalanceCriterion crit;
    crit.gamma_sq = 0.2;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    BalanceCriterion seq = crit;
    seq.tiers = {{0, 1}};
    seq.tier_weights = {1.0};

    RandomStream r1(17), r2(17);
    PhaseChain a = draw_tprs(r1, pop, Design::srswor(500, 150), srswor_factory(40), crit);
    PhaseChain b =
        draw_sequential_tprs(r2, pop, Design::srswor(500, 150), srswor_factory(40), seq);
    CHECK(a.phase(1).global == b.phase(1).global);
    CHECK(a.phase(1).draws_attempted == b.phase(1).draws_attempted);
}

TEST_CASE("sequential: degenerate tier weight exhausts the draw budget") {
    FinitePopulation pop = normal_pop(18, 400, 2);
    BalanceCriterion crit;
    crit.gamma_sq = 0.2;
    crit.tiers = {{0}, {1}};
    crit.tier_weights = {1e12, 1.0};
    crit.max_draws = 50;
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(19);
    CHECK_THROWS_AS(
        draw_sequential_tprs(rng, pop, Design::srswor(400, 120), srswor_factory(30), crit),
        AcceptanceError);
}

TEST_CASE("sequential: two-tier acceptance rate is roughly the product") {
    FinitePopulation pop = normal_pop(20, 8000, 2);
    BalanceCriterion crit;
    crit.gamma_sq = 0.1;
    crit.tiers = {{0}, {1}};
    crit.tier_weights = {1.0, 1.0};
    crit.normalizer = BalanceCriterion::Normalizer::SrsClosedForm;
    RandomStream rng(21);
    long attempts = 0, chains = 0;
    while (attempts < 10000) {
        PhaseChain chain = draw_sequential_tprs(rng, pop, Design::srswor(8000, 2000),
                                               srswor_factory(100), crit);
        attempts += chain.phase(1).draws_attempted;
        ++chains;
        CHECK(chain.accepted_tier_q.size() == 2);
        CHECK(chain.accepted_tier_q[0] < 0.1);
        CHECK(chain.accepted_tier_q[1] < 0.1);
    }
    double rate = static_cast<double>(chains) / static_cast<double>(attempts);
    double target = chisq_cdf(1, 0.1) * chisq_cdf(1, 0.1);
    CHECK(std::fabs(rate - target) < 0.02);
}

TEST_CASE("derive_phase2_covariate: identities and a hand-solved fit") {
    // Four units, full census chain with unequal pi*.
    FinitePopulation pop;
    pop.x.resize(4, 1);
    pop.x << 0, 1, 2, 3;
    pop.z.resize(4, 1);
    pop.z << 1, 3, 2, 5;
    pop.y.resize(4);
    pop.y << 0, 0, 0, 0;
    pop.x_names = {"x1"};
    pop.z_names = {"z1"};
    pop.validate();

    Eigen::VectorXd pi1 = Eigen::VectorXd::Constant(4, 1.0);
    Eigen::VectorXd pi2(4);
    pi2 << 0.5, 0.25, 0.5, 0.25;
    PhaseChain chain = manual_two_phase(pop, {0, 1, 2, 3}, pi1, {0, 1, 2, 3}, pi2);

    DerivedCovariate d = derive_phase2_covariate(chain, pop.z);
    // Hand-solved 1x1 weighted normal equation with weights 1/pi*.
    Eigen::VectorXd w(4);
    for (int i = 0; i < 4; ++i) w(i) = 1.0 / pi2(i);
    double xbar = (pop.x.col(0).dot(w)) / w.sum();
    double zbar = (pop.z.col(0).dot(w)) / w.sum();
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 4; ++i) {
        num += w(i) * (pop.x(i, 0) - xbar) * (pop.z(i, 0) - zbar);
        den += w(i) * (pop.x(i, 0) - xbar) * (pop.x(i, 0) - xbar);
    }
    CHECK(d.beta_zx(0, 0) == doctest::Approx(num / den).epsilon(1e-12));
    // a has pi*-weighted mean zero.
    double abar = 0.0;
    for (int i = 0; i < 4; ++i) abar += w(i) * d.a(i, 0);
    CHECK(std::fabs(abar / w.sum()) < 1e-12);

    // z identical to x: a is the zero vector.
    FinitePopulation pop2 = pop;
    pop2.z = pop.x;
    PhaseChain chain2 = manual_two_phase(pop2, {0, 1, 2, 3}, pi1, {0, 1, 2, 3}, pi2);
    DerivedCovariate d2 = derive_phase2_covariate(chain2, pop2.z);
    CHECK(d2.a.norm() < 1e-12);
}

TEST_CASE("derive_phase2_covariate: orthogonal z leaves centered z") {
    FinitePopulation pop;
    pop.x.resize(4, 1);
    pop.x << 1, -1, 1, -1;
    pop.z.resize(4, 1);
    pop.z << 1, 1, -1, -1;
    pop.y.resize(4);
    pop.y.setZero();
    pop.x_names = {"x1"};
    pop.z_names = {"z1"};
    Eigen::VectorXd pi1 = Eigen::VectorXd::Constant(4, 1.0);
    Eigen::VectorXd pi2 = Eigen::VectorXd::Constant(4, 0.5);
    PhaseChain chain = manual_two_phase(pop, {0, 1, 2, 3}, pi1, {0, 1, 2, 3}, pi2);
    DerivedCovariate d = derive_phase2_covariate(chain, pop.z);
    CHECK(std::fabs(d.beta_zx(0, 0)) < 1e-12);
    CHECK((d.a - pop.z).norm() < 1e-12);  // z already has mean zero here
}

TEST_CASE("three-phase: plain sentinel, duplicate z, census reduction") {
    RandomStream rng(30);
    FinitePopulation pop = normal_pop(31, 600, 1);
    pop.z.resize(600, 1);
    RandomStream zr(32);
    for (int i = 0; i < 600; ++i) pop.z(i, 0) = 0.5 * pop.x(i, 0) + zr.normal();
    pop.z_names = {"z1"};

    ThreePhaseCriterion plain;  // both thresholds infinite
    PhaseChain chain = draw_three_phase(rng, pop, Design::srswor(600, 300),
                                        srswor_factory(120), srswor_factory(40), plain);
    CHECK(chain.n_phases() == 3);
    CHECK(chain.phase(1).draws_attempted == 1);
    CHECK(chain.phase(2).draws_attempted == 1);
    CHECK(chain.phase(2).global.size() == 40);
    CHECK(chain.a_block.rows() == 120);
    // pi* compounds three factors.
    CHECK(chain.phase(2).pi_star(0) ==
          doctest::Approx(0.5 * (120.0 / 300.0) * (40.0 / 120.0)));

    // Duplicated z makes a identically zero and V_cc,II singular.
    FinitePopulation dup = pop;
    dup.z = dup.x;
    RandomStream rng2(33);
    CHECK_THROWS_AS(draw_three_phase(rng2, dup, Design::srswor(600, 300),
                                     srswor_factory(120), srswor_factory(40), plain),
                    CollinearityError);

    // Census phase I: the chain reduces to rejective sampling in two phases
    // over the full frame; the phase-II pi* equals the conditional factor.
    ThreePhaseCriterion rej;
    rej.gamma1_sq = 0.5;
    rej.gamma2_sq = 1.0;
    RandomStream rng3(34);
    PhaseChain census = draw_three_phase(rng3, pop, Design::srswor(600, 600),
                                         srswor_factory(120), srswor_factory(40), rej);
    CHECK(census.phase(0).global.size() == 600);
    for (int t = 0; t < 5; ++t)
        CHECK(census.phase(1).pi_star(t) == doctest::Approx(census.phase(1).pi_cond(t)));
    CHECK(census.phase(1).accepted_q < rej.gamma1_sq);
    CHECK(census.phase(2).accepted_q < rej.gamma2_sq);
}

}  // TEST_SUITE
