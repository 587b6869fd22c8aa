#ifndef REJSAMP_CONFIG_HPP
#define REJSAMP_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rejsamp/population.hpp"

namespace rejsamp {

struct PopulationConfig {
    enum class Source { Synthetic, ApiStyle, File };
    Source source = Source::Synthetic;
    // synthetic / api_style
    long n_units = 20000;
    double beta = 1.0;
    double noise_sd = 1.0;
    std::uint64_t seed = 0;  // 0 -> derived from base_seed
    // file
    std::string path;
    ColumnSchema schema;
};

struct PhaseDesignConfig {
    std::string design = "srswor";  // srswor | poisson | stratified
    long n = 0;                     // srswor sample size
    std::string probs_from;         // poisson: column name, "x1", "sum_z", ...
    double expected_n = 0.0;        // poisson expected size
    std::string strata_from;        // stratified: column with stratum labels
    std::vector<int> take;          // stratified per-stratum takes
    std::string gamma_spec = "inf"; // number | inf | chisq_quantile:<p>
    std::vector<std::vector<std::string>> tiers;  // column names per tier
    std::vector<double> tier_weights;
    long max_draws = 0;
};

struct ExperimentConfig {
    PopulationConfig population;
    PhaseDesignConfig phase1;
    PhaseDesignConfig phase2;
    std::optional<PhaseDesignConfig> phase3;
    std::vector<std::string> estimators = {"pi_star", "reg2"};
    /// Estimating-equation target: "", "mean", "proportion:c=<v>",
    /// "variance", or "quantile:tau=<v>"; adds an `ee` report per replicate.
    std::string ee_parameter;
    std::string variance_style = "srs";  // srs | ht | syg
    std::string normalizer = "auto";     // srs | design | auto
    bool approx_joint = false;
    double alpha = 0.05;
    long n_replicates = 1;
    std::uint64_t base_seed = 20240601;
    long quantile_draws = 100000;
    bool fast = false;
    bool keep_replicates = false;
    double ridge = 0.0;
};

/// INI-style text: [section] headers, key = value lines, # comments. One
/// config fully specifies a run.
ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// gamma spec -> threshold: a number, "inf", or "chisq_quantile:<prob>"
/// resolved against the chi-square with `p` degrees of freedom.
double resolve_gamma(const std::string& spec, int p);

/// Applies the desk-scale shrink when fast is set.
void apply_fast_defaults(ExperimentConfig& config);

}  // namespace rejsamp

#endif
