#ifndef REJSAMP_ERRORS_HPP
#define REJSAMP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rejsamp {

/// Base class for all toolkit errors. `kind()` is a stable machine tag,
/// `what()` the human message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error("schema", msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

struct DesignError : Error {
    explicit DesignError(const std::string& msg) : Error("design", msg) {}
};

struct EstimationError : Error {
    explicit EstimationError(const std::string& msg) : Error("estimation", msg) {}
};

struct DegeneratePopulationError : Error {
    explicit DegeneratePopulationError(const std::string& msg)
        : Error("degenerate-population", msg) {}
};

struct ZeroVarianceError : Error {
    explicit ZeroVarianceError(const std::string& msg) : Error("zero-variance", msg) {}
};

/// Symmetric factorization failed; carries the smallest pivot encountered.
struct SingularNormalizerError : Error {
    SingularNormalizerError(const std::string& msg, double pivot)
        : Error("singular-normalizer", msg), smallest_pivot(pivot) {}
    double smallest_pivot;
};

struct CollinearityError : Error {
    explicit CollinearityError(const std::string& msg) : Error("collinearity", msg) {}
};

struct TierCollinearityError : Error {
    TierCollinearityError(const std::string& msg, int tier)
        : Error("tier-collinearity", msg), tier(tier) {}
    int tier;
};

/// The rejection loop exhausted its draw budget; carries the acceptance rate
/// observed so far.
struct AcceptanceError : Error {
    AcceptanceError(const std::string& msg, long attempts, double rate)
        : Error("acceptance-failure", msg), attempts(attempts), empirical_rate(rate) {}
    long attempts;
    double empirical_rate;
};

struct InsufficientDataError : Error {
    explicit InsufficientDataError(const std::string& msg)
        : Error("insufficient-data", msg) {}
};

struct DfError : Error {
    explicit DfError(const std::string& msg) : Error("degrees-of-freedom", msg) {}
};

struct UndefinedRatioError : Error {
    explicit UndefinedRatioError(const std::string& msg) : Error("undefined-ratio", msg) {}
};

struct LookupError : Error {
    explicit LookupError(const std::string& msg) : Error("lookup", msg) {}
};

struct CapabilityError : Error {
    explicit CapabilityError(const std::string& msg) : Error("capability", msg) {}
};

struct SolverError : Error {
    explicit SolverError(const std::string& msg) : Error("solver", msg) {}
};

struct NonIdentificationError : Error {
    explicit NonIdentificationError(const std::string& msg)
        : Error("non-identification", msg) {}
};

struct DegenerateDistributionError : Error {
    explicit DegenerateDistributionError(const std::string& msg)
        : Error("degenerate-distribution", msg) {}
};

struct SizeError : Error {
    explicit SizeError(const std::string& msg) : Error("size", msg) {}
};

}  // namespace rejsamp

#endif
