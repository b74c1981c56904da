// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// Feasible cyclic coordinate descent for fixed beamforming directions. Each
// coordinate is bisected until its outage probability lands in the band
// [1 - eps_k, 1 - eps_k + delta_k]; lowering p_k only helps the other users,
// so every iterate stays feasible.

#ifndef ROBUSTPL_POWER_LOADING_HPP
#define ROBUSTPL_POWER_LOADING_HPP

#include "gaussian_quadratic.hpp"
#include "model.hpp"
#include "types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace robustpl
{

enum class DeltaSchedule
{
    Constant,  // delta^(i) = delta_min
    Geometric  // delta^(i) = max(delta_min, delta0 * 2^-i)
};

struct DescentConfig
{
    double delta_min = 1e-3;
    DeltaSchedule schedule = DeltaSchedule::Constant;
    double delta0 = 0.05;
    int max_cycles = 50;
    int max_doublings = 30;
    double power_cap = 1e6;
    double quad_tol = 1e-8;
    int max_bisection_steps = 60;
    std::vector<Eigen::Index> sweep_order; // empty: 0, 1, ..., K-1

    double delta(int cycle) const
    {
        if (schedule == DeltaSchedule::Constant)
            return delta_min;
        return std::max(delta_min, delta0 * std::ldexp(1.0, -cycle));
    }

    void validate(Eigen::Index k) const
    {
        if (!(delta_min > 0.0) || !(delta0 > 0.0))
            throw Error(ErrorCode::InvalidArgument, "delta_min and delta0 must be positive");
        if (max_cycles < 1 || max_doublings < 0 || max_bisection_steps < 1)
            throw Error(ErrorCode::InvalidArgument, "iteration limits must be positive");
        if (!(power_cap > 0.0) || !(quad_tol > 0.0))
            throw Error(ErrorCode::InvalidArgument, "power_cap and quad_tol must be positive");
        if (!sweep_order.empty())
        {
            std::vector<Eigen::Index> sorted = sweep_order;
            std::sort(sorted.begin(), sorted.end());
            for (Eigen::Index i = 0; i < k; ++i)
                if (static_cast<Eigen::Index>(sorted.size()) != k || sorted[static_cast<std::size_t>(i)] != i)
                    throw Error(ErrorCode::InvalidArgument, "sweep_order must be a permutation of the users");
        }
    }

    std::vector<Eigen::Index> order(Eigen::Index k) const
    {
        if (!sweep_order.empty())
            return sweep_order;
        std::vector<Eigen::Index> o(static_cast<std::size_t>(k));
        std::iota(o.begin(), o.end(), Eigen::Index{0});
        return o;
    }
};

enum class SolveStatus
{
    Solved,
    InfeasibleStartNotFound,
    CycleLimit
};

inline const char *to_string(SolveStatus s)
{
    switch (s)
    {
    case SolveStatus::Solved: return "Solved";
    case SolveStatus::InfeasibleStartNotFound: return "InfeasibleStartNotFound";
    case SolveStatus::CycleLimit: return "CycleLimit";
    }
    return "Unknown";
}

struct SolveReport
{
    SolveStatus status = SolveStatus::InfeasibleStartNotFound;
    PowerAllocation powers;
    RVector per_user_prob;   // probability used by the solver's own feasibility test
    double total_power = 0.0;
    int cycles = 0;
    long bisection_steps = 0;
    long integral_evals = 0;
    int doublings = 0;
    bool init_fallback = false;      // initial point came from the gamma*sigma^2 fallback
    bool tolerance_met = true;       // every quadrature certified its tolerance
    std::chrono::duration<double, std::milli> wall_time{0};

    // Filled by the zero-forcing solvers.
    RVector exact_prob;
    bool certified = false;  // exact probabilities all >= 1 - eps
    int eta_refinements = 0;
};

// Passed to the observer after every coordinate update.
struct StepEvent
{
    int cycle;
    Eigen::Index user;
    const RVector &powers;
    int bisection_steps;
};

using StepObserver = std::function<void(const StepEvent &)>;

// Exact Pr(SINR_k >= gamma_k) through the outage integral; counts evaluations.
class ExactOutage
{
public:
    ExactOutage(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, double tol)
        : inst_(inst), b_(b), qos_(qos), tol_(tol) {}

    double operator()(const RVector &p, Eigen::Index k)
    {
        ++evaluations;
        const auto est = outage_probability(build_outage_form(inst_, b_, PowerAllocation(p), qos_, k), tol_);
        all_certified = all_certified && est.tolerance_met;
        return est.value;
    }

    long evaluations = 0;
    bool all_certified = true;

private:
    const ScenarioInstance &inst_;
    const BeamformerMatrix &b_;
    const QoSSpec &qos_;
    double tol_;
};

struct FeasibleStart
{
    PowerAllocation powers;
    RVector probs;
    bool found = false;
    int doublings = 0;
};

struct BisectionResult
{
    double power = 0.0;
    double prob = 0.0;
    int steps = 0;
};

namespace detail
{

template <class Prob>
bool all_feasible(Prob &prob, const RVector &p, const QoSSpec &qos, RVector &probs)
{
    bool ok = true;
    for (Eigen::Index k = 0; k < p.size(); ++k)
    {
        probs(k) = prob(p, k);
        ok = ok && probs(k) >= 1.0 - qos.epsilon(k);
    }
    return ok;
}

template <class Prob>
FeasibleStart double_until_feasible(Prob &prob, RVector p, const QoSSpec &qos, const DescentConfig &cfg)
{
    FeasibleStart out;
    out.probs = RVector::Zero(p.size());
    while (true)
    {
        if (all_feasible(prob, p, qos, out.probs))
        {
            out.found = true;
            break;
        }
        if (out.doublings >= cfg.max_doublings || 2.0 * p.maxCoeff() > cfg.power_cap)
            break;
        p *= 2.0;
        ++out.doublings;
    }
    out.powers = PowerAllocation(std::move(p));
    return out;
}

// Assumes prob(p, k) >= 1 - eps at the current p_k, which is the upper end.
template <class Prob>
BisectionResult bisect_into_band(Prob &prob, RVector &p, Eigen::Index k, double p_prob, double eps, double delta, int max_steps)
{
    BisectionResult out{p(k), p_prob, 0};
    const double lower = 1.0 - eps, upper = 1.0 - eps + delta;
    if (p_prob <= upper)
        return out;
    double lo = 0.0, hi = p(k), hi_prob = p_prob;
    while (out.steps < max_steps)
    {
        const double mid = 0.5 * (lo + hi);
        p(k) = mid;
        const double pm = prob(p, k);
        ++out.steps;
        if (pm >= lower && pm <= upper)
        {
            out.power = mid;
            out.prob = pm;
            return out;
        }
        if (pm > upper)
        {
            hi = mid;
            hi_prob = pm;
        }
        else
            lo = mid;
    }
    p(k) = hi;
    out.power = hi;
    out.prob = hi_prob;
    return out;
}

// Shared control flow of the feasible descent solvers.
template <class Prob>
void descend(Prob &prob, const BeamformerMatrix &b, const QoSSpec &qos, const DescentConfig &cfg, const StepObserver &observer,
             SolveReport &rep)
{
    RVector p = rep.powers.p;
    RVector probs = rep.per_user_prob;
    const Eigen::Index k_users = p.size();
    std::vector<bool> fresh(static_cast<std::size_t>(k_users), true);
    const auto order = cfg.order(k_users);

    auto in_band = [&](Eigen::Index k) {
        return probs(k) >= 1.0 - qos.epsilon(k) && probs(k) <= 1.0 - qos.epsilon(k) + cfg.delta_min;
    };

    rep.status = SolveStatus::CycleLimit;
    for (int cycle = 0;; ++cycle)
    {
        bool done = true;
        for (Eigen::Index k = 0; k < k_users; ++k)
        {
            if (!fresh[static_cast<std::size_t>(k)])
            {
                probs(k) = prob(p, k);
                fresh[static_cast<std::size_t>(k)] = true;
            }
            done = done && in_band(k);
        }
        if (done)
        {
            rep.status = SolveStatus::Solved;
            break;
        }
        if (cycle >= cfg.max_cycles)
            break;

        const double delta = cfg.delta(cycle);
        for (Eigen::Index k : order)
        {
            if (!fresh[static_cast<std::size_t>(k)])
            {
                probs(k) = prob(p, k);
                fresh[static_cast<std::size_t>(k)] = true;
            }
            const double before = p(k);
            const auto step = bisect_into_band(prob, p, k, probs(k), qos.epsilon(k), delta, cfg.max_bisection_steps);
            rep.bisection_steps += step.steps;
            probs(k) = step.prob;
            if (p(k) != before)
                for (Eigen::Index j = 0; j < k_users; ++j)
                    if (j != k)
                        fresh[static_cast<std::size_t>(j)] = false;
            if (observer)
                observer(StepEvent{cycle + 1, k, p, step.steps});
        }
        ++rep.cycles;
    }
    rep.powers = PowerAllocation(p);
    rep.per_user_prob = probs;
    rep.total_power = rep.powers.total_power(b);
}

} // namespace detail

// Eq.-(16)-style start, then simultaneous doubling until every user is feasible.
inline FeasibleStart find_feasible_start(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                         const DescentConfig &cfg = {})
{
    ExactOutage prob(inst, b, qos, cfg.quad_tol);
    const PowerInit init = init_powers_pcsi(inst.est_channels, b, qos, inst.noise_var);
    return detail::double_until_feasible(prob, init.powers.p, qos, cfg);
}

// Lowers p_k inside [0, p_k] until its probability (others fixed) is in the band.
inline BisectionResult bisect_user_power(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                         const PowerAllocation &current, Eigen::Index k, double delta_k, const DescentConfig &cfg = {})
{
    ExactOutage prob(inst, b, qos, cfg.quad_tol);
    RVector p = current.p;
    const double p0 = prob(p, k);
    if (p0 < 1.0 - qos.epsilon(k))
        throw Error(ErrorCode::InvalidArgument, "bisection needs a feasible starting power for this user");
    return detail::bisect_into_band(prob, p, k, p0, qos.epsilon(k), delta_k, cfg.max_bisection_steps);
}

inline SolveReport solve_general(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                 const DescentConfig &cfg = {}, const StepObserver &observer = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate(inst.n_users());
    if (qos.size() != inst.n_users() || b.n_users() != inst.n_users() || b.columns.rows() != inst.n_tx())
        throw Error(ErrorCode::InvalidArgument, "instance, beamformer and QoS sizes differ");

    ExactOutage prob(inst, b, qos, cfg.quad_tol);
    SolveReport rep;
    const PowerInit init = init_powers_pcsi(inst.est_channels, b, qos, inst.noise_var);
    rep.init_fallback = init.fallback;
    const FeasibleStart start = detail::double_until_feasible(prob, init.powers.p, qos, cfg);
    rep.doublings = start.doublings;
    rep.powers = start.powers;
    rep.per_user_prob = start.probs;
    if (start.found)
        detail::descend(prob, b, qos, cfg, observer, rep);
    else
    {
        rep.status = SolveStatus::InfeasibleStartNotFound;
        rep.total_power = rep.powers.total_power(b);
    }
    rep.exact_prob = rep.per_user_prob;
    rep.certified = (rep.status == SolveStatus::Solved);
    rep.integral_evals = prob.evaluations;
    rep.tolerance_met = prob.all_certified;
    rep.wall_time = std::chrono::steady_clock::now() - t0;
    return rep;
}

// Smallest p_k making user k feasible with the other powers fixed, located to
// within a probability band of width `band` above 1 - eps_k.
inline double implicit_update(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, const PowerAllocation &others,
                              Eigen::Index k, double band = 1e-6, double quad_tol = 1e-10, double power_cap = 1e8)
{
    ExactOutage prob(inst, b, qos, quad_tol);
    RVector p = others.p;
    const double target = 1.0 - qos.epsilon(k);
    p(k) = std::max(qos.gamma(k) * inst.noise_var(k), 1e-300);
    double pk = prob(p, k);
    while (pk < target)
    {
        p(k) *= 2.0;
        if (p(k) > power_cap)
            throw Error(ErrorCode::Diverged, "no feasible power below the cap");
        pk = prob(p, k);
    }
    const auto res = detail::bisect_into_band(prob, p, k, pk, qos.epsilon(k), band, 200);
    return res.power;
}

} // namespace robustpl

#endif
