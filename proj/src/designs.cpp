#include "rejsamp/designs.hpp"

#include <algorithm>
#include <numeric>

#include "rejsamp/errors.hpp"

namespace rejsamp {

std::string to_string(DesignTag tag) {
    switch (tag) {
        case DesignTag::Srswor: return "srswor";
        case DesignTag::Poisson: return "poisson";
        case DesignTag::Stratified: return "stratified";
    }
    return "?";
}

Design Design::srswor(int parent_size, int n) {
    if (parent_size < 1) throw DesignError("srswor: parent must be nonempty");
    if (n < 1 || n > parent_size)
        throw DesignError("srswor: n=" + std::to_string(n) + " out of range for parent " +
                          std::to_string(parent_size));
    Design d;
    d.tag_ = DesignTag::Srswor;
    d.parent_size_ = parent_size;
    d.n_ = n;
    return d;
}

Design Design::poisson(Eigen::VectorXd probs) {
    if (probs.size() < 1) throw DesignError("poisson: parent must be nonempty");
    Design d;
    d.tag_ = DesignTag::Poisson;
    d.parent_size_ = static_cast<int>(probs.size());
    for (int i = 0; i < probs.size(); ++i) {
        if (probs(i) < 0.0)
            throw DesignError("poisson: negative probability at position " + std::to_string(i));
        if (probs(i) > 1.0) {
            probs(i) = 1.0;
            ++d.clamped_;
        }
    }
    d.probs_ = std::move(probs);
    return d;
}

Design Design::stratified(StratumPlan plan) {
    if (plan.stratum_of.empty()) throw DesignError("stratified: parent must be nonempty");
    const int H = static_cast<int>(plan.take.size());
    Design d;
    d.tag_ = DesignTag::Stratified;
    d.parent_size_ = static_cast<int>(plan.stratum_of.size());
    d.stratum_members_.assign(H, {});
    for (int i = 0; i < d.parent_size_; ++i) {
        int h = plan.stratum_of[i];
        if (h < 0 || h >= H)
            throw DesignError("stratified: unit " + std::to_string(i) +
                              " assigned to unknown stratum " + std::to_string(h));
        d.stratum_members_[h].push_back(i);
    }
    d.stratum_pi_.resize(H);
    for (int h = 0; h < H; ++h) {
        const int m_h = static_cast<int>(d.stratum_members_[h].size());
        const int r_h = plan.take[h];
        if (r_h < 1 || r_h > m_h)
            throw DesignError("stratified: take " + std::to_string(r_h) + " invalid for stratum " +
                              std::to_string(h) + " of size " + std::to_string(m_h));
        d.stratum_pi_[h] = static_cast<double>(r_h) / m_h;
    }
    d.plan_ = std::move(plan);
    return d;
}

int Design::fixed_n() const {
    switch (tag_) {
        case DesignTag::Srswor: return n_;
        case DesignTag::Stratified:
            return std::accumulate(plan_.take.begin(), plan_.take.end(), 0);
        case DesignTag::Poisson:
            throw DesignError("poisson design has no fixed sample size");
    }
    return 0;
}

double Design::first_order(int i) const {
    switch (tag_) {
        case DesignTag::Srswor:
            return static_cast<double>(n_) / parent_size_;
        case DesignTag::Poisson:
            return probs_(i);
        case DesignTag::Stratified:
            return stratum_pi_[plan_.stratum_of[i]];
    }
    return 0.0;
}

Eigen::VectorXd Design::first_order_all() const {
    Eigen::VectorXd v(parent_size_);
    for (int i = 0; i < parent_size_; ++i) v(i) = first_order(i);
    return v;
}

double Design::pairwise(int i, int j) const {
    if (i == j) return first_order(i);
    switch (tag_) {
        case DesignTag::Srswor: {
            double m = parent_size_;
            return n_ * (n_ - 1.0) / (m * (m - 1.0));
        }
        case DesignTag::Poisson:
            return probs_(i) * probs_(j);
        case DesignTag::Stratified: {
            int hi = plan_.stratum_of[i], hj = plan_.stratum_of[j];
            if (hi != hj) return stratum_pi_[hi] * stratum_pi_[hj];
            double m = static_cast<double>(stratum_members_[hi].size());
            double r = static_cast<double>(plan_.take[hi]);
            if (m < 2.0) return first_order(i);  // singleton stratum, unreachable for i != j
            return r * (r - 1.0) / (m * (m - 1.0));
        }
    }
    return 0.0;
}

namespace {

// Partial Fisher-Yates over a persistent identity pool: the first n swaps are
// recorded and undone afterwards, so a draw costs O(n) regardless of the
// parent size once the pool exists.
void srswor_into(RandomStream& rng, int m, int n, std::vector<int>& out) {
    thread_local std::vector<int> pool;
    if (static_cast<int>(pool.size()) < m) {
        int old = static_cast<int>(pool.size());
        pool.resize(m);
        std::iota(pool.begin() + old, pool.end(), old);
    }
    out.resize(n);
    thread_local std::vector<std::pair<int, int>> swaps;
    swaps.clear();
    for (int k = 0; k < n; ++k) {
        int j = k + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m - k)));
        std::swap(pool[k], pool[j]);
        swaps.emplace_back(k, j);
        out[k] = pool[k];
    }
    for (auto it = swaps.rbegin(); it != swaps.rend(); ++it)
        std::swap(pool[it->first], pool[it->second]);
    std::sort(out.begin(), out.end());
}

}  // namespace

std::vector<int> Design::draw(RandomStream& rng) const {
    std::vector<int> out;
    switch (tag_) {
        case DesignTag::Srswor:
            if (n_ == parent_size_) {
                out.resize(parent_size_);
                std::iota(out.begin(), out.end(), 0);
            } else {
                srswor_into(rng, parent_size_, n_, out);
            }
            break;
        case DesignTag::Poisson:
            for (int i = 0; i < parent_size_; ++i)
                if (rng.uniform() < probs_(i)) out.push_back(i);
            break;
        case DesignTag::Stratified: {
            std::vector<int> local;
            for (std::size_t h = 0; h < stratum_members_.size(); ++h) {
                const auto& members = stratum_members_[h];
                const int m_h = static_cast<int>(members.size());
                const int r_h = plan_.take[h];
                if (r_h == m_h) {
                    for (int v : members) out.push_back(v);
                } else {
                    srswor_into(rng, m_h, r_h, local);
                    for (int v : local) out.push_back(members[v]);
                }
            }
            std::sort(out.begin(), out.end());
            break;
        }
    }
    return out;
}

DrawnSample draw_srswor(RandomStream& rng, int parent_size, int n) {
    Design d = Design::srswor(parent_size, n);
    return DrawnSample{d.draw(rng), d};
}

DrawnSample draw_poisson(RandomStream& rng, const Eigen::VectorXd& probs) {
    Design d = Design::poisson(probs);
    return DrawnSample{d.draw(rng), d};
}

DrawnSample draw_stratified(RandomStream& rng, const StratumPlan& plan) {
    Design d = Design::stratified(plan);
    return DrawnSample{d.draw(rng), d};
}

double inclusion_product(const std::vector<double>& conditional_pi) {
    double p = 1.0;
    for (double f : conditional_pi) {
        if (!(f > 0.0))
            throw DesignError("inclusion_product: nonpositive phase factor");
        p *= f;
    }
    return p;
}

Eigen::VectorXd proportional_probs(const Eigen::VectorXd& sizes, double expected_n) {
    if (sizes.size() == 0) throw DesignError("proportional_probs: empty size vector");
    double total = 0.0;
    for (int i = 0; i < sizes.size(); ++i) {
        if (sizes(i) < 0.0)
            throw DesignError("proportional_probs: negative size at position " +
                              std::to_string(i));
        total += sizes(i);
    }
    if (!(total > 0.0)) throw DesignError("proportional_probs: sizes sum to zero");
    return sizes * (expected_n / total);
}

DesignFactory srswor_factory(int n) {
    return [n](const FinitePopulation&, const std::vector<int>& parent) {
        return Design::srswor(static_cast<int>(parent.size()), n);
    };
}

DesignFactory poisson_prop_factory(Eigen::VectorXd values_pop, double expected_n) {
    return [values = std::move(values_pop), expected_n](
               const FinitePopulation&, const std::vector<int>& parent) {
        Eigen::VectorXd sizes(static_cast<int>(parent.size()));
        for (std::size_t k = 0; k < parent.size(); ++k)
            sizes(static_cast<int>(k)) = values(parent[k]);
        return Design::poisson(proportional_probs(sizes, expected_n));
    };
}

}  // namespace rejsamp
