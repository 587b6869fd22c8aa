#include "rejsamp/oracle.hpp"

#include <cmath>

#include "rejsamp/errors.hpp"

namespace rejsamp {

std::vector<std::vector<int>> combinations(int n, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
    for (;;) {
        out.push_back(cur);
        int i = k - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j)
            cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

namespace {

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

}  // namespace

TwoPhaseEnumeration::TwoPhaseEnumeration(const FinitePopulation& pop, int n1, int n2,
                                         double gamma_sq)
    : pop_(&pop), n1_(n1), n2_(n2), gamma_sq_(gamma_sq) {
    const int n = pop.n_units();
    if (n > 14) throw SizeError("enumeration oracle: population larger than 14 units");
    if (n1 < 1 || n1 > n || n2 < 1 || n2 > n1)
        throw SizeError("enumeration oracle: invalid phase sizes");
    if (binom(n, n1) * binom(n1, n2) > 1e7)
        throw SizeError("enumeration oracle: combinatorial budget exceeded");

    phase1_ = combinations(n, n1);
    phase2_ = combinations(n1, n2);

    const bool rejecting = !std::isinf(gamma_sq) && pop.p() > 0;
    accept_.assign(phase1_.size(), std::vector<char>(phase2_.size(), 1));
    if (!rejecting) return;

    const int p = pop.p();
    for (std::size_t a = 0; a < phase1_.size(); ++a) {
        Eigen::MatrixXd x_a(n1, p);
        for (int t = 0; t < n1; ++t) x_a.row(t) = pop.x.row(phase1_[a][static_cast<std::size_t>(t)]);
        Eigen::MatrixXd metric = phase2_diff_covariance_srs(x_a, n2);
        Eigen::VectorXd xbar1 = x_a.colwise().mean();
        for (std::size_t b = 0; b < phase2_.size(); ++b) {
            Eigen::VectorXd xbar2 = Eigen::VectorXd::Zero(p);
            for (int t = 0; t < n2; ++t)
                xbar2 += x_a.row(phase2_[b][static_cast<std::size_t>(t)]).transpose();
            xbar2 /= n2;
            double q = mahalanobis_q(xbar2 - xbar1, metric);
            accept_[a][b] = q < gamma_sq ? 1 : 0;
        }
    }
}

long TwoPhaseEnumeration::dead_phase1_count() const {
    long dead = 0;
    for (const auto& row : accept_) {
        bool any = false;
        for (char c : row)
            if (c) {
                any = true;
                break;
            }
        if (!any) ++dead;
    }
    return dead;
}

std::vector<int> TwoPhaseEnumeration::phase2_global(std::size_t a, std::size_t b) const {
    std::vector<int> out;
    out.reserve(phase2_[b].size());
    for (int pos : phase2_[b]) out.push_back(phase1_[a][static_cast<std::size_t>(pos)]);
    return out;
}

double TwoPhaseEnumeration::expectation(
    const std::function<double(const std::vector<int>&, const std::vector<int>&)>& f,
    bool conditional) const {
    double total = 0.0;
    const double pa = 1.0 / static_cast<double>(phase1_.size());
    for (std::size_t a = 0; a < phase1_.size(); ++a) {
        double cond = 0.0;
        long n_acc = 0;
        for (std::size_t b = 0; b < phase2_.size(); ++b) {
            if (conditional && !accept_[a][b]) continue;
            cond += f(phase1_[a], phase2_global(a, b));
            ++n_acc;
        }
        if (n_acc == 0)
            throw DegenerateDistributionError(
                "enumeration: a phase-I set has no accepting phase-II subset");
        total += pa * cond / static_cast<double>(n_acc);
    }
    return total;
}

double TwoPhaseEnumeration::expectation_given_phase1(
    std::size_t a, const std::function<double(const std::vector<int>&)>& f_of_b_global,
    bool conditional) const {
    double cond = 0.0;
    long n_acc = 0;
    for (std::size_t b = 0; b < phase2_.size(); ++b) {
        if (conditional && !accept_[a][b]) continue;
        cond += f_of_b_global(phase2_global(a, b));
        ++n_acc;
    }
    if (n_acc == 0)
        throw DegenerateDistributionError(
            "enumeration: the phase-I set has no accepting phase-II subset");
    return cond / static_cast<double>(n_acc);
}

double TwoPhaseEnumeration::acceptance_rate_given_phase1(std::size_t a) const {
    long n_acc = 0;
    for (char c : accept_[a])
        if (c) ++n_acc;
    return static_cast<double>(n_acc) / static_cast<double>(phase2_.size());
}

TwoPhaseEnumeration enumerate_two_phase(const FinitePopulation& pop, int n1, int n2,
                                        double gamma_sq) {
    return TwoPhaseEnumeration(pop, n1, n2, gamma_sq);
}

}  // namespace rejsamp
