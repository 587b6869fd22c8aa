#include "rejsamp/ldist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rejsamp/errors.hpp"

namespace rejsamp {

namespace {

// Series expansion of P(a,x), valid and fast for x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) = 1 - P(a,x), modified Lentz; for x >= a+1.
double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double lower_reg_gamma(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double chisq_cdf(int dof, double x) {
    if (dof < 1) throw ConfigError("chisq_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return lower_reg_gamma(0.5 * dof, 0.5 * x);
}

double chisq_quantile(int dof, double p) {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("chisq_quantile: p must be in (0,1)");
    double lo = 0.0;
    double hi = 1.0;
    while (chisq_cdf(dof, hi) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (chisq_cdf(dof, mid) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("normal_quantile: p must be in (0,1)");
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-14) break;
    }
    return 0.5 * (lo + hi);
}

double v_pgamma(int p, double gamma_sq) {
    if (p < 1) throw ConfigError("v_pgamma: p must be >= 1");
    if (std::isinf(gamma_sq)) return 1.0;
    if (gamma_sq <= 0.0) throw ConfigError("v_pgamma: gamma_sq must be positive");
    return chisq_cdf(p + 2, gamma_sq) / chisq_cdf(p, gamma_sq);
}

namespace {

// Truncated radius chi_{p,g2}: rejection when the acceptance mass is decent,
// inverse CDF by bisection otherwise.
double sample_truncated_chisq(RandomStream& rng, int p, double gamma_sq) {
    double mass = chisq_cdf(p, gamma_sq);
    if (mass >= 0.05) {
        for (;;) {
            double w = rng.chisq(p);
            if (w <= gamma_sq) return w;
        }
    }
    double target = rng.uniform_pos() * mass;
    double lo = 0.0, hi = gamma_sq;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        if (chisq_cdf(p, mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double sample_L(RandomStream& rng, int p, double gamma_sq) {
    if (p < 1) throw ConfigError("sample_L: p must be >= 1");
    if (std::isinf(gamma_sq)) return rng.normal();
    double chi = std::sqrt(sample_truncated_chisq(rng, p, gamma_sq));
    if (p == 1) {
        // Gamma_1 is degenerate at 1; only the sign is random.
        return rng.bernoulli(0.5) ? chi : -chi;
    }
    // First coordinate of a uniform point on the sphere.
    double z1 = rng.normal();
    double s2 = z1 * z1;
    for (int k = 1; k < p; ++k) {
        double z = rng.normal();
        s2 += z * z;
    }
    return chi * z1 / std::sqrt(s2);
}

bool MixtureSpec::all_l_unbounded() const {
    for (const auto& t : l_terms)
        if (!std::isinf(t.gamma_sq)) return false;
    return true;
}

double MixtureSpec::sd() const {
    double var = 0.0;
    for (const auto& t : l_terms) var += t.scale * t.scale * v_pgamma(t.dim, t.gamma_sq);
    for (double s : normal_scales) var += s * s;
    return std::sqrt(var);
}

namespace {

double select_quantile(std::vector<double>& draws, double alpha) {
    long n = static_cast<long>(draws.size());
    long k = static_cast<long>(std::ceil(alpha * static_cast<double>(n))) - 1;
    k = std::max(0L, std::min(n - 1, k));
    std::nth_element(draws.begin(), draws.begin() + k, draws.end());
    return draws[static_cast<std::size_t>(k)];
}

void check_spec(const MixtureSpec& spec) {
    double total = 0.0;
    for (const auto& t : spec.l_terms) {
        if (t.scale < 0.0) throw ConfigError("mixture: negative component scale");
        total += t.scale;
    }
    for (double s : spec.normal_scales) {
        if (s < 0.0) throw ConfigError("mixture: negative component scale");
        total += s;
    }
    if (total <= 0.0)
        throw DegenerateDistributionError("mixture: all component scales are zero");
}

}  // namespace

std::vector<double> mixture_quantiles(const MixtureSpec& spec,
                                      const std::vector<double>& alphas,
                                      long n_draws, std::uint64_t seed) {
    check_spec(spec);
    for (double a : alphas)
        if (a <= 0.0 || a >= 1.0) throw ConfigError("mixture: alpha must be in (0,1)");

    if (spec.all_l_unbounded()) {
        // Every L term is a plain normal, so the mixture is exactly normal.
        double sd = spec.sd();
        std::vector<double> out;
        out.reserve(alphas.size());
        for (double a : alphas) out.push_back(sd * normal_quantile(a));
        return out;
    }

    RandomStream rng(seed);
    std::vector<double> draws(static_cast<std::size_t>(n_draws));
    for (long k = 0; k < n_draws; ++k) {
        double c = 0.0;
        for (const auto& t : spec.l_terms)
            if (t.scale > 0.0) c += t.scale * sample_L(rng, t.dim, t.gamma_sq);
        for (double s : spec.normal_scales)
            if (s > 0.0) c += s * rng.normal();
        draws[static_cast<std::size_t>(k)] = c;
    }
    std::vector<double> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back(select_quantile(draws, a));
    return out;
}

double mixture_quantile(const MixtureSpec& spec, double alpha, long n_draws,
                        std::uint64_t seed) {
    return mixture_quantiles(spec, {alpha}, n_draws, seed)[0];
}

MixturePool::MixturePool(std::vector<int> l_dims, std::vector<double> l_gammas,
                         int n_normal, long n_draws, std::uint64_t seed)
    : l_dims_(std::move(l_dims)), l_gammas_(std::move(l_gammas)), n_draws_(n_draws) {
    if (l_dims_.size() != l_gammas_.size())
        throw ConfigError("MixturePool: dim/gamma lists differ in length");
    RandomStream rng(seed);
    const std::size_t n = static_cast<std::size_t>(n_draws_);
    l_draws_.resize(n * l_dims_.size());
    for (std::size_t c = 0; c < l_dims_.size(); ++c)
        for (std::size_t k = 0; k < n; ++k)
            l_draws_[c * n + k] = sample_L(rng, l_dims_[c], l_gammas_[c]);
    z_draws_.resize(n * static_cast<std::size_t>(n_normal));
    for (std::size_t c = 0; c < static_cast<std::size_t>(n_normal); ++c)
        for (std::size_t k = 0; k < n; ++k) z_draws_[c * n + k] = rng.normal();
}

std::vector<double> MixturePool::quantiles(const std::vector<double>& l_scales,
                                           const std::vector<double>& z_scales,
                                           const std::vector<double>& alphas) const {
    if (l_scales.size() != l_dims_.size())
        throw ConfigError("MixturePool: wrong number of L scales");
    if (z_scales.size() > z_draws_.size() / static_cast<std::size_t>(n_draws_))
        throw ConfigError("MixturePool: wrong number of normal scales");

    const std::size_t n = static_cast<std::size_t>(n_draws_);
    std::vector<double> combined(n, 0.0);
    for (std::size_t c = 0; c < l_scales.size(); ++c) {
        double s = l_scales[c];
        if (s == 0.0) continue;
        const double* col = &l_draws_[c * n];
        for (std::size_t k = 0; k < n; ++k) combined[k] += s * col[k];
    }
    for (std::size_t c = 0; c < z_scales.size(); ++c) {
        double s = z_scales[c];
        if (s == 0.0) continue;
        const double* col = &z_draws_[c * n];
        for (std::size_t k = 0; k < n; ++k) combined[k] += s * col[k];
    }
    std::vector<double> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back(select_quantile(combined, a));
    return out;
}

}  // namespace rejsamp
