#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rejsamp/errors.hpp"
#include "rejsamp/oracle.hpp"
#include "rejsamp/simulate.hpp"

using namespace rejsamp;

namespace {

ExperimentConfig small_two_phase(double gamma) {
    ExperimentConfig cfg;
    cfg.population.source = PopulationConfig::Source::Synthetic;
    cfg.population.n_units = 2000;
    cfg.population.beta = 1.0;
    cfg.population.noise_sd = 1.0;
    cfg.phase1.design = "srswor";
    cfg.phase1.n = 400;
    cfg.phase2.design = "srswor";
    cfg.phase2.n = 80;
    cfg.phase2.gamma_spec = gamma > 0 ? std::to_string(gamma) : "inf";
    cfg.estimators = {"pi_star", "reg2"};
    cfg.variance_style = "srs";
    cfg.n_replicates = 40;
    cfg.base_seed = 99;
    cfg.quantile_draws = 20000;
    return cfg;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("theoretical_varred formula and guards") {
    CHECK(theoretical_varred(0.04, 0.05, 1, 0.01, 0.0) == 0.0);
    CHECK(theoretical_varred(0.04, 0.05, 1, kInfGamma, 0.5) == 0.0);
    CHECK(theoretical_varred(1.0, 1.0, 1, 0.01, 0.5) == 0.0);  // census
    CHECK(theoretical_varred(0.04, 0.05, 1, 0.01, 0.5) ==
          doctest::Approx(47.94).epsilon(0.001));
}

TEST_CASE("summary output is byte-identical across runs") {
    ExperimentConfig cfg = small_two_phase(0.05);
    std::string a = run_experiment(cfg).render();
    std::string b = run_experiment(cfg).render();
    CHECK(a == b);
    CHECK(a.find("pi_star[nonrej]") != std::string::npos);
}

TEST_CASE("replicates depend only on (base_seed, index)") {
    ExperimentConfig cfg = small_two_phase(0.05);
    cfg.keep_replicates = true;
    cfg.n_replicates = 12;
    ExperimentSummary full = run_experiment(cfg);
    cfg.n_replicates = 5;
    ExperimentSummary prefix = run_experiment(cfg);
    for (int k = 0; k < 5; ++k) {
        const auto& a = full.replicates[static_cast<std::size_t>(k)];
        const auto& b = prefix.replicates[static_cast<std::size_t>(k)];
        REQUIRE_FALSE(a.failed);
        REQUIRE_FALSE(b.failed);
        CHECK(a.reports.at("pi_star").estimate == b.reports.at("pi_star").estimate);
        CHECK(a.reports.at("reg2").estimate == b.reports.at("reg2").estimate);
    }
}

TEST_CASE("single replicate without rejection has no varred column") {
    ExperimentConfig cfg = small_two_phase(-1.0);  // gamma = inf
    cfg.n_replicates = 1;
    ExperimentSummary s = run_experiment(cfg);
    CHECK(s.rows.size() == 2);
    for (const auto& r : s.rows) CHECK_FALSE(r.has_varred);
}

TEST_CASE("Monte Carlo means agree with the enumeration oracle") {
    // Tiny frame where exact conditional moments are enumerable.
    ExperimentConfig cfg;
    cfg.population.n_units = 8;
    cfg.population.beta = 1.0;
    cfg.population.seed = 301;
    cfg.phase1.design = "srswor";
    cfg.phase1.n = 5;
    cfg.phase2.design = "srswor";
    cfg.phase2.n = 3;
    cfg.phase2.gamma_spec = "0.8";
    cfg.estimators = {"pi_star"};
    cfg.variance_style = "srs";
    cfg.normalizer = "srs";
    cfg.n_replicates = 4000;
    cfg.base_seed = 5;
    cfg.quantile_draws = 20000;
    cfg.keep_replicates = true;
    ExperimentSummary s = run_experiment(cfg);

    FinitePopulation pop = build_population(cfg);
    TwoPhaseEnumeration oracle(pop, 5, 3, 0.8);
    REQUIRE(oracle.dead_phase1_count() == 0);
    double exact = oracle.expectation(
        [&](const std::vector<int>&, const std::vector<int>& b) {
            double acc = 0.0;
            for (int g : b) acc += pop.y(g);
            return acc / static_cast<double>(b.size());
        },
        true);

    double mc_mean = s.row("pi_star").bias + s.true_mean;
    double mc_se = std::sqrt(s.row("pi_star").var / static_cast<double>(s.row("pi_star").n_ok));
    CHECK(std::fabs(mc_mean - exact) < 3.0 * mc_se);
}

TEST_CASE("failure tally aborts past one percent") {
    ExperimentConfig cfg = small_two_phase(-1.0);
    cfg.phase2.design = "poisson";
    cfg.phase2.probs_from = "x1";
    cfg.phase2.expected_n = 0.02;  // nearly always an empty sample
    cfg.estimators = {"pi_star"};
    cfg.variance_style = "ht";
    // x can be negative in the synthetic frame; use the api-style frame
    // whose x column is positive.
    cfg.population.source = PopulationConfig::Source::ApiStyle;
    cfg.population.n_units = 2000;
    CHECK_THROWS_AS(run_experiment(cfg), Error);
}

TEST_CASE("api-style frame has the study correlation structure") {
    FinitePopulation pop = make_api_style_frame(11, 6000);
    CHECK(pop.n_units() == 6000);
    CHECK(pop.p() == 1);
    CHECK(pop.q() == 3);
    CHECK(pop.x.minCoeff() > 0.0);
    CHECK(pop.z.minCoeff() >= 1.0);
    // Strong x-y correlation, negative x-z1 correlation.
    MomentPair xy = population_moments(pop.x, pop.y);
    MomentPair xx = population_moments(pop.x, pop.x);
    MomentPair yy = population_moments(pop.y, pop.y);
    double r = xy.cov_uv(0, 0) / std::sqrt(xx.cov_uv(0, 0) * yy.cov_uv(0, 0));
    CHECK(r > 0.9);
    MomentPair xz = population_moments(pop.x, pop.z);
    CHECK(xz.cov_uv(0, 0) < 0.0);
}

TEST_CASE("three-phase run produces reports for both estimators") {
    ExperimentConfig cfg;
    cfg.population.source = PopulationConfig::Source::ApiStyle;
    cfg.population.n_units = 1500;
    cfg.phase1.design = "srswor";
    cfg.phase1.n = 600;
    cfg.phase2.design = "poisson";
    cfg.phase2.probs_from = "x1";
    cfg.phase2.expected_n = 200;
    cfg.phase2.gamma_spec = "0.1";
    PhaseDesignConfig p3;
    p3.design = "poisson";
    p3.probs_from = "sum_z";
    p3.expected_n = 60;
    p3.gamma_spec = "1.0";
    cfg.phase3 = p3;
    cfg.estimators = {"pi_star", "reg3"};
    cfg.variance_style = "ht";
    cfg.n_replicates = 40;
    cfg.base_seed = 17;
    cfg.quantile_draws = 20000;
    ExperimentSummary s = run_experiment(cfg);
    CHECK(s.rows.size() == 4);  // pi_star, pi_star[nonrej], reg3, reg3[nonrej]
    CHECK(s.row("pi_star").n_ok > 35);
    CHECK(s.row("reg3").coverage_pct >= 0.0);
    CHECK(s.row("reg3").coverage_pct <= 100.0);
    CHECK(s.error_count == 0);

    ThreePhaseStudy study = run_api_style_three_phase(cfg);
    CHECK(study.plain.rows.size() == 2);
    CHECK(study.rejective.rows.size() == 4);
}

TEST_CASE("hajek benchmark estimator and estimator/phase validation") {
    ExperimentConfig cfg = small_two_phase(-1.0);
    cfg.estimators = {"pi_star", "hajek"};
    cfg.n_replicates = 30;
    ExperimentSummary s = run_experiment(cfg);
    CHECK(s.row("hajek").n_ok == 30);
    CHECK(s.row("hajek").has_ve);
    CHECK(std::fabs(s.row("hajek").bias) < 0.1);
    // The phase-I estimator averages 400 units, so it beats the phase-II one.
    CHECK(s.row("hajek").var < s.row("pi_star").var);

    ExperimentConfig bad = small_two_phase(-1.0);
    bad.estimators = {"reg3"};
    CHECK_THROWS_AS(run_experiment(bad), ConfigError);
}

TEST_CASE("rejection suppresses negative regression weights on matched seeds") {
    // High-leverage phase-II samples make plain draws produce negative
    // weights; matched TPRS draws should produce no more.
    ExperimentConfig cfg;
    cfg.population.source = PopulationConfig::Source::Synthetic;
    cfg.population.n_units = 20000;
    cfg.population.beta = 2.0;
    cfg.population.seed = 424220;
    cfg.phase1.design = "srswor";
    cfg.phase1.n = 2000;
    cfg.phase2.design = "srswor";
    cfg.phase2.n = 25;
    cfg.phase2.gamma_spec = "0.01";
    cfg.estimators = {"reg2"};
    cfg.variance_style = "srs";
    cfg.normalizer = "srs";
    cfg.n_replicates = 300;
    cfg.base_seed = 999;
    cfg.quantile_draws = 20000;
    ExperimentSummary s = run_experiment(cfg);
    double rej = s.diagnostics.at("negative_weight_replicates_reg2");
    double plain = s.diagnostics.at("negative_weight_replicates_reg2_nonrej");
    CHECK(plain > 0.0);
    CHECK(rej <= plain);
}

TEST_CASE("chain dump exposes per-phase indices and diagnostics") {
    ExperimentConfig cfg = small_two_phase(0.1);
    ChainDump dump = draw_chain_dump(cfg, 3);
    REQUIRE(dump.global_per_phase.size() == 2);
    CHECK(dump.global_per_phase[0].size() == 400);
    CHECK(dump.global_per_phase[1].size() == 80);
    CHECK(dump.draws[1] >= 1);
    CHECK(std::isfinite(dump.accepted_q[1]));
    CHECK(dump.pi_star_innermost.size() == 80);
}

TEST_CASE("stratified phase-II config with the ree estimator") {
    // Frame with a discrete stratifier column s alongside x1.
    std::string path = "rejsamp_t_strat.csv";
    {
        std::ofstream out(path);
        out << "x1,s,y\n";
        for (int i = 0; i < 40; ++i)
            out << i / 10.0 << "," << i % 2 << "," << 1.0 + 0.5 * i + (i % 3) << "\n";
    }
    ExperimentConfig cfg;
    cfg.population.source = PopulationConfig::Source::File;
    cfg.population.path = path;
    cfg.population.schema.x_cols = {"x1", "s"};
    cfg.population.schema.y_col = "y";
    cfg.phase1.design = "srswor";
    cfg.phase1.n = 20;
    cfg.phase2.design = "stratified";
    cfg.phase2.strata_from = "s";
    cfg.phase2.take = {4, 4};
    cfg.estimators = {"ree", "pi_star"};
    cfg.variance_style = "ht";
    cfg.n_replicates = 20;
    cfg.base_seed = 31;
    cfg.quantile_draws = 20000;
    ExperimentSummary s = run_experiment(cfg);
    CHECK(s.row("ree").n_ok == 20);
    CHECK(std::isfinite(s.row("ree").bias));
    CHECK_FALSE(s.row("ree").has_ve);
    CHECK(s.row("pi_star").n_ok == 20);
    std::remove(path.c_str());

    // A continuous stratifier makes one stratum per value, so the take
    // vector cannot match.
    ExperimentConfig bad = cfg;
    bad.phase2.strata_from = "x1";
    CHECK_THROWS_AS(run_experiment(bad), Error);
}

}  // TEST_SUITE
