#ifndef REJSAMP_SIMULATE_HPP
#define REJSAMP_SIMULATE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rejsamp/config.hpp"
#include "rejsamp/estimators.hpp"
#include "rejsamp/population.hpp"

namespace rejsamp {

struct ReplicateRecord {
    long index = 0;
    bool failed = false;
    std::string error_kind;
    std::string error_message;
    std::map<std::string, EstimateReport> reports;      // estimator -> report
    std::map<std::string, EstimateReport> reports_plain; // matched no-rejection run
    long acceptance_draws = 0;
    double elapsed_us = 0.0;
};

struct EstimatorRow {
    std::string name;
    long n_ok = 0;
    double bias = 0.0;
    double var = 0.0;
    double mse = 0.0;
    double mean_ve = 0.0;
    double coverage_pct = 0.0;
    double varred_pct = 0.0;
    bool has_varred = false;
    bool has_ve = true;
    bool has_coverage = true;
};

struct ExperimentSummary {
    std::vector<EstimatorRow> rows;
    long n_replicates = 0;
    long error_count = 0;
    double true_mean = 0.0;
    std::map<std::string, double> diagnostics;
    std::vector<ReplicateRecord> replicates;  // populated when keep_replicates

    const EstimatorRow& row(const std::string& name) const;
    /// Deterministic tab-separated rendering (no timing data).
    std::string render() const;
};

/// Percentage reduction in asymptotic design variance of the pi* mean under
/// rejective sampling; zero in the census case.
double theoretical_varred(double f_II_I, double f_I_0, int p, double gamma_sq, double r_sq);

/// Synthetic school-performance-style frame: positive x, three bounded z
/// components negatively tied to x, and a y strongly predicted by x.
FinitePopulation make_api_style_frame(std::uint64_t seed, int n_units);

FinitePopulation build_population(const ExperimentConfig& config);

/// Full Monte Carlo run. When the configuration has a finite threshold, each
/// replicate also runs the matched no-rejection chain on an identical stream
/// (same phase-I sample, first candidate as the accepted plain draw), which
/// is what the variance-reduction column compares against; those rows appear
/// with a [nonrej] suffix. Replicate k always uses the stream derived from
/// (base_seed, k), so results are independent of execution order. Failed
/// replicates are excluded with a tally; the run aborts if more than 1% fail.
ExperimentSummary run_experiment(const ExperimentConfig& config);

/// Per-phase view of one drawn chain, for the `sample` CLI subcommand.
struct ChainDump {
    std::vector<std::vector<int>> global_per_phase;
    std::vector<double> accepted_q;
    std::vector<long> draws;
    std::vector<double> pi_star_innermost;
};
ChainDump draw_chain_dump(const ExperimentConfig& config, std::uint64_t replicate);

struct ThreePhaseStudy {
    ExperimentSummary rejective;
    ExperimentSummary plain;
    std::string render() const;
};

/// The three-phase study design: the configured run with its thresholds and
/// the matched run with both thresholds infinite (simple3/reg3 baselines).
ThreePhaseStudy run_api_style_three_phase(const ExperimentConfig& config);

}  // namespace rejsamp

#endif
