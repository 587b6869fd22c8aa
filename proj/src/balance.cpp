#include "rejsamp/balance.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "rejsamp/errors.hpp"

namespace rejsamp {

namespace {

// Symmetric factorization with a relative pivot tolerance; declares the
// matrix singular instead of regularizing.
class SpdSolver {
public:
    SpdSolver(const Eigen::MatrixXd& m, double ridge) {
        Eigen::MatrixXd work = m;
        if (ridge > 0.0)
            work += ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols());
        ldlt_.compute(work);
        Eigen::VectorXd d = ldlt_.vectorD();
        min_pivot_ = d.minCoeff();
        double max_pivot = d.maxCoeff();
        ok_ = ldlt_.info() == Eigen::Success && min_pivot_ > 0.0 &&
              min_pivot_ >= 1e-12 * std::max(max_pivot, 0.0);
    }

    bool ok() const { return ok_; }
    double min_pivot() const { return min_pivot_; }

    double quadratic(const Eigen::VectorXd& diff) const {
        return diff.dot(ldlt_.solve(diff));
    }

    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return ldlt_.solve(rhs); }

private:
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
    bool ok_ = false;
    double min_pivot_ = 0.0;
};

Eigen::VectorXd hajek_rows(const Eigen::MatrixXd& u, const Eigen::VectorXd& pi) {
    double denom = 0.0;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(u.cols());
    for (int i = 0; i < u.rows(); ++i) {
        double w = 1.0 / pi(i);
        denom += w;
        num += w * u.row(i).transpose();
    }
    if (!(denom > 0.0)) throw EstimationError("hajek mean over empty or zero-weight sample");
    return num / denom;
}

}  // namespace

long BalanceCriterion::resolved_max_draws(double acceptance_prob) const {
    if (max_draws > 0) return max_draws;
    if (!(acceptance_prob > 1e-12)) return 2000000000L;
    double cap = 50.0 * std::ceil(1.0 / acceptance_prob);
    return static_cast<long>(std::max(1e6, cap));
}

void BalanceCriterion::validate_tiers(int p) const {
    if (tiers.empty()) return;
    if (tier_weights.size() != tiers.size())
        throw ConfigError("balance: tier_weights must match the number of tiers");
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    for (const auto& block : tiers) {
        if (block.empty()) throw ConfigError("balance: empty tier block");
        for (int c : block) {
            if (c < 0 || c >= p)
                throw ConfigError("balance: tier column " + std::to_string(c) + " out of range");
            if (seen[static_cast<std::size_t>(c)])
                throw ConfigError("balance: tier blocks must be disjoint");
            seen[static_cast<std::size_t>(c)] = 1;
        }
    }
    for (char s : seen)
        if (!s) throw ConfigError("balance: tier blocks must cover all balance columns");
    for (double w : tier_weights)
        if (!(w > 0.0)) throw ConfigError("balance: tier weights must be positive");
}

Eigen::VectorXd PhaseChain::values_at_phase(int k, const Eigen::VectorXd& values_pop) const {
    const auto& ph = phase(k);
    Eigen::VectorXd out(static_cast<int>(ph.global.size()));
    for (std::size_t t = 0; t < ph.global.size(); ++t)
        out(static_cast<int>(t)) = values_pop(ph.global[t]);
    return out;
}

Eigen::MatrixXd PhaseChain::rows_at_phase(int k, const Eigen::MatrixXd& values_pop) const {
    const auto& ph = phase(k);
    Eigen::MatrixXd out(static_cast<int>(ph.global.size()), values_pop.cols());
    for (std::size_t t = 0; t < ph.global.size(); ++t)
        out.row(static_cast<int>(t)) = values_pop.row(ph.global[t]);
    return out;
}

double PhaseChain::hajek_mean_at(int k, const Eigen::VectorXd& values_pop) const {
    return hajek_mean_rows_at(k, values_pop)(0);
}

Eigen::VectorXd PhaseChain::hajek_mean_rows_at(int k, const Eigen::MatrixXd& values_pop) const {
    return hajek_rows(rows_at_phase(k, values_pop), phase(k).pi_star);
}

Eigen::MatrixXd PhaseChain::x_at_phase(int k) const { return rows_at_phase(k, pop->x); }

Eigen::MatrixXd PhaseChain::c_at_phase2() const {
    if (a_block.rows() == 0) throw ConfigError("chain has no derived phase-II covariate");
    Eigen::MatrixXd x2 = x_at_phase(1);
    Eigen::MatrixXd c(x2.rows(), x2.cols() + a_block.cols());
    c << x2, a_block;
    return c;
}

Eigen::MatrixXd PhaseChain::c_at_phase3() const {
    if (n_phases() < 3) throw ConfigError("chain has no phase-III sample");
    Eigen::MatrixXd c2 = c_at_phase2();
    const auto& ph3 = phase(2);
    Eigen::MatrixXd out(static_cast<int>(ph3.sample.indices.size()), c2.cols());
    for (std::size_t t = 0; t < ph3.sample.indices.size(); ++t)
        out.row(static_cast<int>(t)) = c2.row(ph3.sample.indices[t]);
    return out;
}

double mahalanobis_q(const Eigen::VectorXd& diff, const Eigen::MatrixXd& normalizer,
                     double ridge) {
    if (diff.size() != normalizer.rows() || normalizer.rows() != normalizer.cols())
        throw ConfigError("mahalanobis_q: dimension mismatch");
    SpdSolver solver(normalizer, ridge);
    if (!solver.ok())
        throw SingularNormalizerError("mahalanobis_q: singular normalizer", solver.min_pivot());
    return solver.quadratic(diff);
}

Eigen::MatrixXd phase2_diff_covariance_srs(const Eigen::MatrixXd& x_over_phase1, int n_inner) {
    const int n_outer = static_cast<int>(x_over_phase1.rows());
    if (n_inner > n_outer)
        throw DesignError("phase-II size exceeds phase-I size");
    if (n_inner == n_outer)
        throw ZeroVarianceError(
            "phase-II census: the balance criterion normalizer is identically zero");
    Eigen::RowVectorXd mean = x_over_phase1.colwise().mean();
    Eigen::MatrixXd centered = x_over_phase1.rowwise() - mean;
    Eigen::MatrixXd v = (centered.transpose() * centered) / static_cast<double>(n_outer - 1);
    double factor = 1.0 / n_inner - 1.0 / n_outer;
    return factor * v;
}

Eigen::MatrixXd phase_cond_design_cov(const Design& inner_design,
                                      const Eigen::VectorXd& pi_star_inner,
                                      const Eigen::VectorXd& pi_outer,
                                      const Eigen::MatrixXd& u,
                                      const Eigen::MatrixXd& v, double n_population) {
    const int m = static_cast<int>(u.rows());
    if (inner_design.parent_size() != m || v.rows() != m || pi_star_inner.size() != m ||
        pi_outer.size() != m)
        throw ConfigError("phase_cond_design_cov: inconsistent parent dimensions");
    for (int i = 0; i < m; ++i)
        if (!(pi_star_inner(i) > 0.0))
            throw DesignError("phase_cond_design_cov: zero combined inclusion probability");

    Eigen::VectorXd ubar = hajek_rows(u, pi_outer);
    Eigen::VectorXd vbar = hajek_rows(v, pi_outer);
    Eigen::MatrixXd uc = u.rowwise() - ubar.transpose();
    Eigen::MatrixXd vc = v.rowwise() - vbar.transpose();
    const double n2 = n_population * n_population;

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.cols(), v.cols());
    switch (inner_design.tag()) {
        case DesignTag::Poisson: {
            for (int i = 0; i < m; ++i) {
                double pi = inner_design.first_order(i);
                double w2 = 1.0 / (pi_star_inner(i) * pi_star_inner(i));
                out.noalias() += (pi * (1.0 - pi) * w2) * (uc.row(i).transpose() * vc.row(i));
            }
            return out / n2;
        }
        case DesignTag::Srswor: {
            double f = inner_design.first_order(0);
            if (m == 1 || f >= 1.0) return out;  // census inner phase: zero covariance
            Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(u.cols(), v.cols());
            Eigen::VectorXd s1u = Eigen::VectorXd::Zero(u.cols());
            Eigen::VectorXd s1v = Eigen::VectorXd::Zero(v.cols());
            for (int i = 0; i < m; ++i) {
                double w = 1.0 / pi_star_inner(i);
                s2.noalias() += (w * w) * (uc.row(i).transpose() * vc.row(i));
                s1u += w * uc.row(i).transpose();
                s1v += w * vc.row(i).transpose();
            }
            double inv = 1.0 / (m - 1.0);
            out = f * (1.0 - f) * ((1.0 + inv) * s2 - inv * (s1u * s1v.transpose()));
            return out / n2;
        }
        case DesignTag::Stratified: {
            // Cross-stratum joint probabilities factorize, so only
            // within-stratum pairs contribute. Stratified inner phases stay
            // small here; the exact double sum is fine.
            for (int i = 0; i < m; ++i) {
                double wi = 1.0 / pi_star_inner(i);
                double pii = inner_design.first_order(i);
                for (int j = 0; j < m; ++j) {
                    double pij = inner_design.pairwise(i, j);
                    double delta = pij - pii * inner_design.first_order(j);
                    if (delta == 0.0) continue;
                    double wj = 1.0 / pi_star_inner(j);
                    out.noalias() +=
                        (delta * wi * wj) * (uc.row(i).transpose() * vc.row(j));
                }
            }
            return out / n2;
        }
    }
    return out;
}

Eigen::MatrixXd phase2_diff_covariance_general(const Design& design_inner,
                                               const Eigen::VectorXd& pi_star_inner,
                                               const Eigen::VectorXd& pi_phase1,
                                               const Eigen::MatrixXd& x_over_phase1,
                                               double n_population) {
    return phase_cond_design_cov(design_inner, pi_star_inner, pi_phase1, x_over_phase1,
                                 x_over_phase1, n_population);
}

namespace {

PhaseSample make_phase1(RandomStream& rng, const FinitePopulation& pop, const Design& d1) {
    if (d1.parent_size() != pop.n_units())
        throw DesignError("phase-I design parent size does not match the frame");
    PhaseSample ph;
    ph.sample.design = d1;
    ph.sample.indices = d1.draw(rng);
    if (ph.sample.indices.empty()) throw DesignError("empty phase-I sample");
    ph.global = ph.sample.indices;
    const int n = static_cast<int>(ph.global.size());
    ph.pi_cond.resize(n);
    for (int t = 0; t < n; ++t) ph.pi_cond(t) = d1.first_order(ph.global[t]);
    ph.pi_star = ph.pi_cond;
    return ph;
}

struct RejectiveState {
    Eigen::MatrixXd metric;            // balance normalizer over the parent
    std::unique_ptr<SpdSolver> solver; // factorized metric (single-block case)
    bool metric_ok = false;
};

// Candidate loop shared by the rejective phases: draws from `inner` until the
// supplied accept predicate passes or the cap fires.
template <typename Accept>
PhaseSample rejective_loop(RandomStream& rng, const Design& inner,
                           const PhaseSample& outer, const Eigen::VectorXd& pi_star_parent,
                           bool rejection_active, long cap, Accept&& accept) {
    long attempts = 0;
    std::vector<int> chosen;
    double chosen_q = std::numeric_limits<double>::quiet_NaN();
    for (;;) {
        ++attempts;
        std::vector<int> cand = inner.draw(rng);
        bool ok;
        double q;
        if (cand.empty()) {
            // No Q is defined for an empty candidate; with rejection active it
            // counts as a failed attempt, otherwise it is returned as drawn.
            ok = !rejection_active;
            q = std::numeric_limits<double>::quiet_NaN();
        } else {
            std::tie(ok, q) = accept(cand);
        }
        if (ok) {
            chosen = std::move(cand);
            chosen_q = q;
            break;
        }
        if (attempts >= cap)
            throw AcceptanceError("rejective sampling exceeded max_draws (" +
                                      std::to_string(cap) + " attempts)",
                                  attempts, 0.0);
    }
    PhaseSample ph;
    ph.sample.design = inner;
    ph.sample.indices = std::move(chosen);
    ph.draws_attempted = attempts;
    ph.accepted_q = chosen_q;
    const int n = static_cast<int>(ph.sample.indices.size());
    ph.global.resize(static_cast<std::size_t>(n));
    ph.pi_cond.resize(n);
    ph.pi_star.resize(n);
    for (int t = 0; t < n; ++t) {
        int pos = ph.sample.indices[static_cast<std::size_t>(t)];
        ph.global[static_cast<std::size_t>(t)] = outer.global[static_cast<std::size_t>(pos)];
        ph.pi_cond(t) = inner.first_order(pos);
        ph.pi_star(t) = pi_star_parent(pos);
    }
    return ph;
}

Eigen::VectorXd hajek_over_candidate(const Eigen::MatrixXd& cols,
                                     const Eigen::VectorXd& pi_star_parent,
                                     const std::vector<int>& cand) {
    double denom = 0.0;
    Eigen::VectorXd num = Eigen::VectorXd::Zero(cols.cols());
    for (int pos : cand) {
        double w = 1.0 / pi_star_parent(pos);
        denom += w;
        num += w * cols.row(pos).transpose();
    }
    return num / denom;
}

Eigen::MatrixXd balance_metric(const BalanceCriterion& crit, const Design& d2,
                               const Eigen::VectorXd& pi_star_parent,
                               const Eigen::VectorXd& pi_phase1,
                               const Eigen::MatrixXd& x_parent, double n_pop) {
    if (crit.normalizer == BalanceCriterion::Normalizer::SrsClosedForm) {
        if (d2.tag() != DesignTag::Srswor)
            throw ConfigError("SRS closed-form normalizer requires an SRSWOR inner design");
        return phase2_diff_covariance_srs(x_parent, d2.fixed_n());
    }
    return phase_cond_design_cov(d2, pi_star_parent, pi_phase1, x_parent, x_parent, n_pop);
}

}  // namespace

PhaseChain draw_tprs(RandomStream& rng, const FinitePopulation& pop, const Design& design1,
                     const DesignFactory& design2, const BalanceCriterion& criterion) {
    const int p = pop.p();
    const bool rejecting = !std::isinf(criterion.gamma_sq);
    if (rejecting && !(criterion.gamma_sq > 0.0))
        throw ConfigError("balance: gamma_sq must be positive");
    if (rejecting && p < 1)
        throw ConfigError("balance: no covariate columns configured for the criterion");

    PhaseChain chain;
    chain.pop = &pop;
    chain.normalizer_kind = criterion.normalizer;
    chain.gamma_sq_phase2 = criterion.gamma_sq;
    chain.balance_p_phase2 = p;

    PhaseSample ph1 = make_phase1(rng, pop, design1);
    Design d2 = design2(pop, ph1.global);
    const int n1 = static_cast<int>(ph1.global.size());
    if (d2.parent_size() != n1)
        throw DesignError("phase-II design parent size does not match the phase-I sample");

    Eigen::MatrixXd x_parent(n1, p);
    for (int t = 0; t < n1; ++t) x_parent.row(t) = pop.x.row(ph1.global[t]);
    Eigen::VectorXd pi_star_parent(n1);
    for (int t = 0; t < n1; ++t) pi_star_parent(t) = ph1.pi_star(t) * d2.first_order(t);

    RejectiveState st;
    if (p >= 1) {
        try {
            st.metric = balance_metric(criterion, d2, pi_star_parent, ph1.pi_star, x_parent,
                                       pop.n_units());
            st.solver = std::make_unique<SpdSolver>(st.metric, criterion.ridge);
            st.metric_ok = st.solver->ok();
        } catch (const Error&) {
            if (rejecting) throw;
            st.metric_ok = false;
        }
        if (rejecting && !st.metric_ok)
            throw SingularNormalizerError("balance normalizer is singular",
                                          st.solver ? st.solver->min_pivot() : 0.0);
    }

    Eigen::VectorXd xbar_outer;
    if (p >= 1) xbar_outer = hajek_rows(x_parent, ph1.pi_star);

    long cap = rejecting ? criterion.resolved_max_draws(chisq_cdf(std::max(p, 1),
                                                                  criterion.gamma_sq))
                         : 1;
    auto accept = [&](const std::vector<int>& cand) -> std::pair<bool, double> {
        if (!st.metric_ok) return {true, std::numeric_limits<double>::quiet_NaN()};
        Eigen::VectorXd diff = hajek_over_candidate(x_parent, pi_star_parent, cand) - xbar_outer;
        double q = st.solver->quadratic(diff);
        return {!rejecting || q < criterion.gamma_sq, q};
    };

    PhaseSample ph2 = rejective_loop(rng, d2, ph1, pi_star_parent, rejecting, cap, accept);
    chain.v_xx_phase1 = st.metric;
    chain.phases.push_back(std::move(ph1));
    chain.phases.push_back(std::move(ph2));
    return chain;
}

GramSchmidtBlocks gram_schmidt_blocks(const Eigen::MatrixXd& x,
                                      const std::vector<std::vector<int>>& tiers,
                                      const Eigen::MatrixXd& metric_xx) {
    const int p = static_cast<int>(x.cols());
    if (metric_xx.rows() != p || metric_xx.cols() != p)
        throw ConfigError("gram_schmidt_blocks: metric dimension mismatch");

    GramSchmidtBlocks out;
    for (const auto& block : tiers)
        for (int c : block) out.source_column.push_back(c);
    const int total = static_cast<int>(out.source_column.size());

    // Metric reordered to tier-major column order.
    Eigen::MatrixXd vf(total, total);
    for (int a = 0; a < total; ++a)
        for (int b = 0; b < total; ++b)
            vf(a, b) = metric_xx(out.source_column[a], out.source_column[b]);

    Eigen::MatrixXd xo(x.rows(), total);
    for (int a = 0; a < total; ++a) xo.col(a) = x.col(out.source_column[a]);

    out.g = xo;
    int offset = 0;
    for (std::size_t k = 0; k < tiers.size(); ++k) {
        const int pk = static_cast<int>(tiers[k].size());
        out.tier_offset.push_back(offset);
        out.tier_dim.push_back(pk);
        if (k == 0) {
            out.tier_metric.push_back(vf.block(0, 0, pk, pk));
        } else {
            const int prev = offset;
            Eigen::MatrixXd v_prev = vf.block(0, 0, prev, prev);
            Eigen::MatrixXd v_cross = vf.block(offset, 0, pk, prev);  // V_{x[k] x[<k]}
            SpdSolver solver(v_prev, 0.0);
            if (!solver.ok())
                throw TierCollinearityError(
                    "leading tier block singular while orthogonalizing tier " +
                        std::to_string(k + 1),
                    static_cast<int>(k + 1));
            Eigen::MatrixXd coef = solver.solve(v_cross.transpose());  // prev x pk
            out.g.middleCols(offset, pk) = xo.middleCols(offset, pk) - xo.leftCols(prev) * coef;
            out.tier_metric.push_back(vf.block(offset, offset, pk, pk) -
                                      v_cross * coef);
        }
        offset += pk;
    }
    return out;
}

PhaseChain draw_sequential_tprs(RandomStream& rng, const FinitePopulation& pop,
                                const Design& design1, const DesignFactory& design2,
                                const BalanceCriterion& criterion) {
    const int p = pop.p();
    if (p < 1) throw ConfigError("sequential rejection requires balance covariates");
    std::vector<std::vector<int>> tiers = criterion.tiers;
    std::vector<double> weights = criterion.tier_weights;
    if (tiers.empty()) {
        tiers.push_back({});
        for (int c = 0; c < p; ++c) tiers[0].push_back(c);
        weights = {1.0};
    }
    {
        BalanceCriterion check = criterion;
        check.tiers = tiers;
        check.tier_weights = weights;
        check.validate_tiers(p);
    }
    const bool rejecting = !std::isinf(criterion.gamma_sq);
    if (rejecting && !(criterion.gamma_sq > 0.0))
        throw ConfigError("balance: gamma_sq must be positive");

    PhaseChain chain;
    chain.pop = &pop;
    chain.normalizer_kind = criterion.normalizer;
    chain.gamma_sq_phase2 = criterion.gamma_sq;
    chain.balance_p_phase2 = p;

    PhaseSample ph1 = make_phase1(rng, pop, design1);
    Design d2 = design2(pop, ph1.global);
    const int n1 = static_cast<int>(ph1.global.size());
    if (d2.parent_size() != n1)
        throw DesignError("phase-II design parent size does not match the phase-I sample");

    Eigen::MatrixXd x_parent(n1, p);
    for (int t = 0; t < n1; ++t) x_parent.row(t) = pop.x.row(ph1.global[t]);
    Eigen::VectorXd pi_star_parent(n1);
    for (int t = 0; t < n1; ++t) pi_star_parent(t) = ph1.pi_star(t) * d2.first_order(t);

    Eigen::MatrixXd metric = balance_metric(criterion, d2, pi_star_parent, ph1.pi_star,
                                            x_parent, pop.n_units());
    GramSchmidtBlocks gs = gram_schmidt_blocks(x_parent, tiers, metric);

    const int K = static_cast<int>(tiers.size());
    std::vector<SpdSolver> solvers;
    solvers.reserve(static_cast<std::size_t>(K));
    std::vector<double> thresholds(static_cast<std::size_t>(K));
    double accept_prob = 1.0;
    for (int k = 0; k < K; ++k) {
        solvers.emplace_back(gs.tier_metric[static_cast<std::size_t>(k)], criterion.ridge);
        if (!solvers.back().ok())
            throw TierCollinearityError("tier " + std::to_string(k + 1) +
                                            " normalizer is singular",
                                        k + 1);
        double thr = criterion.gamma_sq / weights[static_cast<std::size_t>(k)];
        thresholds[static_cast<std::size_t>(k)] = thr;
        if (!std::isinf(thr))
            accept_prob *= chisq_cdf(gs.tier_dim[static_cast<std::size_t>(k)], thr);
    }

    Eigen::VectorXd gbar_outer = hajek_rows(gs.g, ph1.pi_star);
    long cap = rejecting ? criterion.resolved_max_draws(accept_prob) : 1;

    std::vector<double> tier_q(static_cast<std::size_t>(K));
    auto accept = [&](const std::vector<int>& cand) -> std::pair<bool, double> {
        Eigen::VectorXd diff = hajek_over_candidate(gs.g, pi_star_parent, cand) - gbar_outer;
        bool ok = true;
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd dk = diff.segment(gs.tier_offset[static_cast<std::size_t>(k)],
                                              gs.tier_dim[static_cast<std::size_t>(k)]);
            double q = solvers[static_cast<std::size_t>(k)].quadratic(dk);
            tier_q[static_cast<std::size_t>(k)] = q;
            if (rejecting && !(q < thresholds[static_cast<std::size_t>(k)])) {
                ok = false;
                break;
            }
        }
        return {ok, std::numeric_limits<double>::quiet_NaN()};
    };

    PhaseSample ph2 = rejective_loop(rng, d2, ph1, pi_star_parent, rejecting, cap, accept);
    chain.v_xx_phase1 = metric;
    chain.accepted_tier_q = tier_q;
    chain.phases.push_back(std::move(ph1));
    chain.phases.push_back(std::move(ph2));
    return chain;
}

DerivedCovariate derive_phase2_covariate(const PhaseChain& chain, const Eigen::MatrixXd& z_pop) {
    if (chain.n_phases() < 2) throw ConfigError("derive_phase2_covariate: chain has no phase II");
    const auto& ph2 = chain.phase(1);
    const int n2 = static_cast<int>(ph2.global.size());
    Eigen::MatrixXd xb = chain.x_at_phase(1);
    Eigen::MatrixXd zb = chain.rows_at_phase(1, z_pop);

    Eigen::VectorXd w(n2);
    for (int t = 0; t < n2; ++t) w(t) = 1.0 / ph2.pi_star(t);
    double wsum = w.sum();
    Eigen::VectorXd xbar = (xb.transpose() * w) / wsum;
    Eigen::VectorXd zbar = (zb.transpose() * w) / wsum;
    Eigen::MatrixXd xc = xb.rowwise() - xbar.transpose();
    Eigen::MatrixXd zc = zb.rowwise() - zbar.transpose();

    Eigen::MatrixXd gram = xc.transpose() * (w.asDiagonal() * xc);
    SpdSolver solver(gram, 0.0);
    if (!solver.ok())
        throw CollinearityError("derive_phase2_covariate: weighted x covariance is singular");
    Eigen::MatrixXd beta = solver.solve(xc.transpose() * (w.asDiagonal() * zc));  // p x q

    DerivedCovariate out;
    out.beta_zx = beta;
    out.a = zc - xc * beta;
    return out;
}

PhaseChain draw_three_phase(RandomStream& rng, const FinitePopulation& pop,
                            const Design& design1, const DesignFactory& design2,
                            const DesignFactory& design3,
                            const ThreePhaseCriterion& criterion) {
    if (pop.q() < 1) throw ConfigError("three-phase sampling requires z columns");
    for (double g : {criterion.gamma1_sq, criterion.gamma2_sq})
        if (!std::isinf(g) && !(g > 0.0))
            throw ConfigError("three-phase: thresholds must be positive");

    BalanceCriterion c2;
    c2.gamma_sq = criterion.gamma1_sq;
    c2.normalizer = BalanceCriterion::Normalizer::DesignCov;
    c2.max_draws = criterion.max_draws;
    c2.ridge = criterion.ridge;
    PhaseChain chain = draw_tprs(rng, pop, design1, design2, c2);
    chain.gamma_sq_phase3 = criterion.gamma2_sq;

    DerivedCovariate derived = derive_phase2_covariate(chain, pop.z);
    chain.a_block = derived.a;
    chain.beta_zx = derived.beta_zx;

    const auto& ph2 = chain.phase(1);
    const int n2 = static_cast<int>(ph2.global.size());
    Eigen::MatrixXd c_parent = chain.c_at_phase2();
    chain.balance_p_phase3 = static_cast<int>(c_parent.cols());

    Design d3 = design3(pop, ph2.global);
    if (d3.parent_size() != n2)
        throw DesignError("phase-III design parent size does not match the phase-II sample");
    Eigen::VectorXd pi_star_parent(n2);
    for (int t = 0; t < n2; ++t) pi_star_parent(t) = ph2.pi_star(t) * d3.first_order(t);

    Eigen::MatrixXd metric =
        phase_cond_design_cov(d3, pi_star_parent, ph2.pi_star, c_parent, c_parent,
                              pop.n_units());
    SpdSolver solver(metric, criterion.ridge);
    const bool rejecting = !std::isinf(criterion.gamma2_sq);
    if (!solver.ok())
        throw CollinearityError("three-phase: V_cc,II is singular (smallest pivot " +
                                std::to_string(solver.min_pivot()) + ")");

    Eigen::VectorXd cbar_outer = hajek_rows(c_parent, ph2.pi_star);
    long cap = rejecting ? c2.resolved_max_draws(
                               chisq_cdf(chain.balance_p_phase3, criterion.gamma2_sq))
                         : 1;
    auto accept = [&](const std::vector<int>& cand) -> std::pair<bool, double> {
        Eigen::VectorXd diff =
            hajek_over_candidate(c_parent, pi_star_parent, cand) - cbar_outer;
        double q = solver.quadratic(diff);
        return {!rejecting || q < criterion.gamma2_sq, q};
    };

    PhaseSample ph3 = rejective_loop(rng, d3, ph2, pi_star_parent, rejecting, cap, accept);
    chain.v_cc_phase2 = metric;
    chain.phases.push_back(std::move(ph3));
    return chain;
}

}  // namespace rejsamp
