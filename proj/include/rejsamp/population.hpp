#ifndef REJSAMP_POPULATION_HPP
#define REJSAMP_POPULATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rejsamp {

/// The fixed finite frame. Immutable after construction; safe to share
/// read-only across concurrent workers.
struct FinitePopulation {
    Eigen::MatrixXd x;                 // N x p phase-I covariates
    Eigen::MatrixXd z;                 // N x q phase-II covariates (0 columns if none)
    Eigen::VectorXd y;                 // study values; empty if unobserved
    bool y_observed = true;
    std::vector<std::string> unit_ids; // stable identifiers, size N
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;
    std::string y_name = "y";

    int n_units() const { return static_cast<int>(x.rows()); }
    int p() const { return static_cast<int>(x.cols()); }
    int q() const { return static_cast<int>(z.cols()); }

    double y_mean() const;

    /// Checks the frame invariants: consistent row counts, no non-finite
    /// values anywhere. Throws ConfigError on violation.
    void validate() const;
};

struct MomentPair {
    Eigen::VectorXd mean_u;
    Eigen::VectorXd mean_v;
    Eigen::MatrixXd cov_uv;  // divisor N-1
};

/// Synthetic frame: x_i = sqrt(0.5)(chisq_1 - 1), y_i = 1 + beta x_i + e_i
/// with e_i ~ N(0, noise_sd^2). Bit-reproducible for a fixed seed.
FinitePopulation generate_synthetic(std::uint64_t seed, int n_units, double beta,
                                    double noise_sd);

struct ColumnSchema {
    std::vector<std::string> x_cols;
    std::vector<std::string> z_cols;   // optional
    std::optional<std::string> y_col;  // absent -> design-only frame
    char delimiter = 0;                // 0 -> auto-detect comma/tab
};

/// Loads a delimited-text frame with a one-line header. Column order in the
/// result follows the schema, not the file.
FinitePopulation load_population(const std::string& path, const ColumnSchema& schema);

/// Means and the (N-1)-divisor covariance of two column blocks.
MomentPair population_moments(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v);

/// Column-selector convenience over one frame: u/v are column indices into
/// the stacked [x | z | y] block.
MomentPair population_moments(const FinitePopulation& pop,
                              const std::vector<int>& u_cols,
                              const std::vector<int>& v_cols);

/// Stacked data access used by the selector overload: columns of x, then z,
/// then y (when observed).
Eigen::MatrixXd stacked_columns(const FinitePopulation& pop, const std::vector<int>& cols);

}  // namespace rejsamp

#endif
