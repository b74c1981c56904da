// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// Zero-forcing specialisation. Replacing the Gaussian linear term 2Re(d^H rt_k)
// by the constant (p_k/gamma_k) eta_k turns the outage integrand into a
// rational function of s, and the probability into a finite sum of residues
//
//   P = 1 + sum_{l: lam_l > 0} f_l     if t >= 0,
//   P =   - sum_{l: lam_l < 0} f_l     if t <  0,
//   f_l = -exp(-t / lam_l) / prod_{j != l} (1 - lam_j / lam_l),
//
// with t = p_k/gamma'_k - sigma_k^2 and lam the eigenvalues of -Q_k.

#ifndef ROBUSTPL_ZF_FAST_HPP
#define ROBUSTPL_ZF_FAST_HPP

#include "gaussian_quadratic.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "power_loading.hpp"
#include "types.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace robustpl
{

struct ZfApproxParams
{
    RVector eta;
    RVector gamma_prime;
    RVector r_tilde_norm; // ||C_k^{1/2} b_k||
    double eta_multiple = -1.3;
};

inline void check_zero_forcing(const ScenarioInstance &inst, const BeamformerMatrix &b)
{
    if (b.n_users() != inst.n_users() || b.columns.rows() != inst.n_tx())
        throw Error(ErrorCode::InvalidArgument, "beamformer size does not match the instance");
    const CMatrix g = inst.est_channels * b.columns;
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - CMatrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw Error(ErrorCode::InvalidArgument, "directions are not zero-forcing for the estimated channels");
}

// eta_k = multiple * 2 ||C_k^{1/2} b_k||, gamma'_k = gamma_k / (1 + eta_k).
inline ZfApproxParams zf_params(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, double eta_multiple = -1.3)
{
    check_zero_forcing(inst, b);
    const Eigen::Index k_users = inst.n_users();
    ZfApproxParams out;
    out.eta_multiple = eta_multiple;
    out.eta.resize(k_users);
    out.gamma_prime.resize(k_users);
    out.r_tilde_norm.resize(k_users);
    for (Eigen::Index k = 0; k < k_users; ++k)
    {
        out.r_tilde_norm(k) = (inst.cov_sqrt[k] * b.col(k)).norm();
        out.eta(k) = eta_multiple * 2.0 * out.r_tilde_norm(k);
        if (!(1.0 + out.eta(k) > 0.0))
            throw Error(ErrorCode::ApproximationInapplicable, "1 + eta_k <= 0 for user " + std::to_string(k));
        out.gamma_prime(k) = qos.gamma(k) / (1.0 + out.eta(k));
    }
    return out;
}

// Scales every eta_k by `factor` (> 1 makes the approximation more conservative).
inline ZfApproxParams scale_eta(const ZfApproxParams &p, const QoSSpec &qos, double factor)
{
    ZfApproxParams out = p;
    out.eta_multiple *= factor;
    out.eta *= factor;
    for (Eigen::Index k = 0; k < out.eta.size(); ++k)
    {
        if (!(1.0 + out.eta(k) > 0.0))
            throw Error(ErrorCode::ApproximationInapplicable, "1 + eta_k <= 0 for user " + std::to_string(k));
        out.gamma_prime(k) = qos.gamma(k) / (1.0 + out.eta(k));
    }
    return out;
}

struct ResidueSpectrum
{
    RVector eigenvalues; // of -Q_k, descending
    Eigen::Index r_index = -1; // last negative eigenvalue, -1 if none
    std::vector<bool> zero_mask;
    double zero_threshold = 0.0;

    int count_negative() const
    {
        int n = 0;
        for (Eigen::Index m = 0; m < eigenvalues.size(); ++m)
            n += (!zero_mask[static_cast<std::size_t>(m)] && eigenvalues(m) < 0.0) ? 1 : 0;
        return n;
    }

    int count_positive() const
    {
        int n = 0;
        for (Eigen::Index m = 0; m < eigenvalues.size(); ++m)
            n += (!zero_mask[static_cast<std::size_t>(m)] && eigenvalues(m) > 0.0) ? 1 : 0;
        return n;
    }
};

inline ResidueSpectrum residue_spectrum(const CMatrix &minus_q)
{
    ResidueSpectrum s;
    s.eigenvalues = hermitian_eigen(minus_q, false).values;
    s.zero_threshold = zero_eigen_threshold(s.eigenvalues);
    s.zero_mask.resize(static_cast<std::size_t>(s.eigenvalues.size()));
    for (Eigen::Index m = 0; m < s.eigenvalues.size(); ++m)
    {
        s.zero_mask[static_cast<std::size_t>(m)] = std::abs(s.eigenvalues(m)) <= s.zero_threshold;
        if (!s.zero_mask[static_cast<std::size_t>(m)] && s.eigenvalues(m) < 0.0)
            s.r_index = m;
    }
    return s;
}

// -Q_k of the approximated constraint: C^{1/2}(sum_{j != k} p_j b_j b_j^H - (p_k/gamma_k) b_k b_k^H)C^{1/2}.
inline CMatrix zf_minus_q(const ScenarioInstance &inst, const BeamformerMatrix &b, const RVector &p, double gamma_k, Eigen::Index k)
{
    const CMatrix &s = inst.cov_sqrt[k];
    CMatrix m = -(s * sinr_margin_matrix(b, p, gamma_k, k) * s);
    return 0.5 * (m + m.adjoint());
}

namespace detail
{

inline std::vector<double> nonzero_eigenvalues(const ResidueSpectrum &spec)
{
    std::vector<double> lam;
    for (Eigen::Index m = 0; m < spec.eigenvalues.size(); ++m)
        if (!spec.zero_mask[static_cast<std::size_t>(m)])
            lam.push_back(spec.eigenvalues(m));
    return lam;
}

inline void require_distinct(const std::vector<double> &lam)
{
    for (std::size_t i = 0; i < lam.size(); ++i)
        for (std::size_t j = i + 1; j < lam.size(); ++j)
            if (std::abs(lam[i] - lam[j]) <= 1e-9 * std::max(std::abs(lam[i]), std::abs(lam[j])))
                throw Error(ErrorCode::DegenerateSpectrum, "nonzero eigenvalues coincide");
}

// prod_{j != l} (1 - lam_j / lam_l) over the given eigenvalues.
inline double residue_denominator(const std::vector<double> &lam, std::size_t l)
{
    double prod = 1.0;
    for (std::size_t j = 0; j < lam.size(); ++j)
        if (j != l)
            prod *= 1.0 - lam[j] / lam[l];
    return prod;
}

} // namespace detail

// f_l for every nonzero eigenvalue (zero modes get 0), in spectrum order.
inline RVector residue_terms(const ResidueSpectrum &spec, double t)
{
    const auto lam = detail::nonzero_eigenvalues(spec);
    detail::require_distinct(lam);
    RVector f = RVector::Zero(spec.eigenvalues.size());
    std::size_t l = 0;
    for (Eigen::Index m = 0; m < spec.eigenvalues.size(); ++m)
    {
        if (spec.zero_mask[static_cast<std::size_t>(m)])
            continue;
        f(m) = -std::exp(-t / lam[l]) / detail::residue_denominator(lam, l);
        ++l;
    }
    return f;
}

// Approximate outage-free probability for user k at power p_k.
inline double residue_probability(const ResidueSpectrum &spec, double p_k, double gamma_prime_k, double sigma2_k)
{
    const double t = p_k / gamma_prime_k - sigma2_k;
    const RVector f = residue_terms(spec, t);
    double raw = (t >= 0.0) ? 1.0 : 0.0;
    for (Eigen::Index m = 0; m < f.size(); ++m)
    {
        const double lam = spec.eigenvalues(m);
        if (spec.zero_mask[static_cast<std::size_t>(m)])
            continue;
        if (t >= 0.0 && lam > 0.0)
            raw += f(m);
        else if (t < 0.0 && lam < 0.0)
            raw -= f(m);
    }
    if (!std::isfinite(raw) || raw < -1e-6 || raw > 1.0 + 1e-6)
        throw Error(ErrorCode::DegenerateSpectrum, "residue sum left [0, 1]; spectrum is numerically ill-conditioned");
    return std::clamp(raw, 0.0, 1.0);
}

// Same quantity via the general quadrature (c = 0, tau = t); used as fallback and oracle.
inline ProbabilityEstimate approx_probability_quadrature(const CMatrix &minus_q, double p_k, double gamma_prime_k, double sigma2_k,
                                                         double tol = 1e-8)
{
    const double t = p_k / gamma_prime_k - sigma2_k;
    const CVector zero = CVector::Zero(minus_q.rows());
    return cdf_quadrature(decompose({minus_q, zero, t}), t, tol);
}

// Residue evaluation of the approximated constraint with quadrature fallback.
class ZfApproxOutage
{
public:
    ZfApproxOutage(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, const ZfApproxParams &params, double tol)
        : inst_(inst), b_(b), qos_(qos), params_(params), tol_(tol) {}

    double operator()(const RVector &p, Eigen::Index k)
    {
        ++evaluations;
        const CMatrix mq = zf_minus_q(inst_, b_, p, qos_.gamma(k), k);
        const auto spec = residue_spectrum(mq);
        try
        {
            return residue_probability(spec, p(k), params_.gamma_prime(k), inst_.noise_var(k));
        }
        catch (const Error &e)
        {
            if (e.code() != ErrorCode::DegenerateSpectrum)
                throw;
        }
        ++quadrature_fallbacks;
        const auto est = approx_probability_quadrature(mq, p(k), params_.gamma_prime(k), inst_.noise_var(k), tol_);
        all_certified = all_certified && est.tolerance_met;
        return est.value;
    }

    long evaluations = 0;
    long quadrature_fallbacks = 0;
    bool all_certified = true;

private:
    const ScenarioInstance &inst_;
    const BeamformerMatrix &b_;
    const QoSSpec &qos_;
    const ZfApproxParams &params_;
    double tol_;
};

struct ZfDescentConfig : DescentConfig
{
    double eta_multiple = -1.3;
    int eta_refinements = 0; // re-solves with eta *= 1.15 after failed certification
};

namespace detail
{

inline void certify_exact(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, double tol, SolveReport &rep)
{
    ExactOutage exact(inst, b, qos, tol);
    rep.exact_prob.resize(inst.n_users());
    rep.certified = true;
    for (Eigen::Index k = 0; k < inst.n_users(); ++k)
    {
        rep.exact_prob(k) = exact(rep.powers.p, k);
        rep.certified = rep.certified && rep.exact_prob(k) >= 1.0 - qos.epsilon(k);
    }
    rep.integral_evals += exact.evaluations;
    rep.tolerance_met = rep.tolerance_met && exact.all_certified;
}

} // namespace detail

// Algorithm-1 control flow with residue evaluations of the approximated constraint.
inline SolveReport solve_zf_coord_descent(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                          const ZfDescentConfig &cfg = {}, const StepObserver &observer = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate(inst.n_users());
    if (qos.size() != inst.n_users())
        throw Error(ErrorCode::InvalidArgument, "QoS size does not match the instance");
    ZfApproxParams params = zf_params(inst, b, qos, cfg.eta_multiple);

    SolveReport total;
    for (int attempt = 0;; ++attempt)
    {
        ZfApproxOutage prob(inst, b, qos, params, cfg.quad_tol);
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
        rep.integral_evals = prob.evaluations;
        rep.tolerance_met = prob.all_certified;
        detail::certify_exact(inst, b, qos, cfg.quad_tol, rep);

        rep.bisection_steps += total.bisection_steps;
        rep.integral_evals += total.integral_evals;
        rep.cycles += total.cycles;
        rep.doublings += total.doublings;
        rep.eta_refinements = attempt;
        total = rep;
        if (rep.certified || rep.status != SolveStatus::Solved || attempt >= cfg.eta_refinements)
            break;
        try
        {
            params = scale_eta(params, qos, 1.15);
        }
        catch (const Error &)
        {
            break;
        }
    }
    total.wall_time = std::chrono::steady_clock::now() - t0;
    return total;
}

// ------------------------------------------------------------------------
// Coordinate update (frozen-spectrum closed forms)

struct ZfUpdateConfig
{
    int i_max = 50;
    double eta_multiple = -1.3;
    bool literal_gamma_in_breve = false; // use gamma_k instead of gamma'_k in the p-breve formula
    double quad_tol = 1e-8;
};

struct UpdateInit
{
    PowerAllocation powers;
    std::vector<bool> fallback; // per user: gamma*sigma^2 or single-user closed form used
};

namespace detail
{

// gamma' sigma^2 - g lam_l ln(c prod_{j != l}(1 - lam_j/lam_l)).
inline double log_root(double gamma_prime, double sigma2, double g, double lam_l, double c, double prod)
{
    return gamma_prime * sigma2 - g * lam_l * std::log(c * prod);
}

inline std::size_t index_of_largest(const std::vector<double> &lam)
{
    return static_cast<std::size_t>(std::max_element(lam.begin(), lam.end()) - lam.begin());
}

inline std::size_t index_of_negative(const std::vector<double> &lam)
{
    return static_cast<std::size_t>(std::min_element(lam.begin(), lam.end()) - lam.begin());
}

// A few ulps above x. The closed forms land on the constraint boundary, where
// p/gamma' - sigma^2 cancels; rounding must not push them to the wrong side.
inline double round_up(double x, int ulps = 8)
{
    for (int i = 0; i < ulps; ++i)
        x = std::nextafter(x, std::numeric_limits<double>::infinity());
    return x;
}

// Exact minimiser for a rank-one form: only the negative eigenvalue -(p/gamma)||rt||^2.
inline double single_user_power(double gamma, double sigma2, double eta, double rt2, double eps)
{
    return gamma * sigma2 / (1.0 + eta - rt2 * std::log(1.0 - eps));
}

} // namespace detail

// Equal-power start solved per user with that user's parameters.
inline UpdateInit coord_update_init(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos, const ZfApproxParams &params)
{
    const Eigen::Index k_users = inst.n_users();
    UpdateInit out;
    out.powers = PowerAllocation(RVector::Zero(k_users));
    out.fallback.assign(static_cast<std::size_t>(k_users), false);
    const RVector ones = RVector::Ones(k_users);
    for (Eigen::Index k = 0; k < k_users; ++k)
    {
        const double sigma2 = inst.noise_var(k), eps = qos.epsilon(k);
        const auto spec = residue_spectrum(zf_minus_q(inst, b, ones, qos.gamma(k), k));
        const auto lam = detail::nonzero_eigenvalues(spec);
        double p0 = std::numeric_limits<double>::quiet_NaN();
        if (spec.count_positive() == 0)
        {
            p0 = detail::single_user_power(qos.gamma(k), sigma2, params.eta(k), params.r_tilde_norm(k) * params.r_tilde_norm(k), eps);
            out.fallback[static_cast<std::size_t>(k)] = true;
        }
        else
        {
            try
            {
                detail::require_distinct(lam);
                const std::size_t one = detail::index_of_largest(lam);
                const double denom = 1.0 / params.gamma_prime(k) + lam[one] * std::log(eps * detail::residue_denominator(lam, one));
                if (denom > 0.0)
                    p0 = sigma2 / denom;
            }
            catch (const Error &e)
            {
                if (e.code() != ErrorCode::DegenerateSpectrum)
                    throw;
            }
            if (!(p0 > 0.0) || !std::isfinite(p0))
            {
                p0 = qos.gamma(k) * sigma2;
                out.fallback[static_cast<std::size_t>(k)] = true;
            }
        }
        out.powers[k] = p0;
    }
    return out;
}

struct UpdateStep
{
    double power = 0.0;
    bool tilde_branch = false; // p-tilde admissible
    bool bisected = false;     // degenerate spectrum, bisection fallback
    int bisection_steps = 0;
};

// New p_k from the spectrum of -Q_hat_k frozen at p_prev.
inline UpdateStep coord_update_step(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                    const ZfApproxParams &params, const RVector &p_prev, Eigen::Index k, const ResidueSpectrum &frozen,
                                    bool literal_gamma_in_breve = false)
{
    UpdateStep out;
    const double gp = params.gamma_prime(k), sigma2 = inst.noise_var(k), eps = qos.epsilon(k);
    const double floor = gp * sigma2;
    const auto lam = detail::nonzero_eigenvalues(frozen);
    try
    {
        detail::require_distinct(lam);
        if (frozen.count_negative() >= 1)
        {
            const std::size_t r = detail::index_of_negative(lam);
            const double tilde = detail::log_root(gp, sigma2, gp, lam[r], 1.0 - eps, detail::residue_denominator(lam, r));
            if (tilde > 0.0 && tilde < floor)
            {
                out.power = detail::round_up(tilde);
                out.tilde_branch = true;
                return out;
            }
        }
        double breve = floor;
        if (frozen.count_positive() >= 1)
        {
            const std::size_t one = detail::index_of_largest(lam);
            const double g = literal_gamma_in_breve ? qos.gamma(k) : gp;
            const double c = literal_gamma_in_breve ? qos.gamma(k) * sigma2 : floor;
            breve = c - g * lam[one] * std::log(eps * detail::residue_denominator(lam, one));
        }
        out.power = detail::round_up(std::max(breve, floor));
        return out;
    }
    catch (const Error &e)
    {
        if (e.code() != ErrorCode::DegenerateSpectrum)
            throw;
    }

    // Degenerate spectrum: smallest p_k meeting the approximated constraint, others at p_prev.
    out.bisected = true;
    ZfApproxOutage prob(inst, b, qos, params, 1e-8);
    RVector p = p_prev;
    p(k) = std::max(floor, 1e-300);
    double pk = prob(p, k);
    int guard = 0;
    while (pk < 1.0 - eps && guard++ < 200)
    {
        p(k) *= 2.0;
        pk = prob(p, k);
    }
    const auto res = detail::bisect_into_band(prob, p, k, pk, eps, 1e-3, 60);
    out.power = res.power;
    out.bisection_steps = res.steps;
    return out;
}

inline SolveReport solve_zf_coord_update(const ScenarioInstance &inst, const BeamformerMatrix &b, const QoSSpec &qos,
                                         const ZfUpdateConfig &cfg = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.i_max < 0)
        throw Error(ErrorCode::InvalidArgument, "i_max must be nonnegative");
    if (qos.size() != inst.n_users())
        throw Error(ErrorCode::InvalidArgument, "QoS size does not match the instance");
    const ZfApproxParams params = zf_params(inst, b, qos, cfg.eta_multiple);
    const Eigen::Index k_users = inst.n_users();

    ZfApproxOutage prob(inst, b, qos, params, cfg.quad_tol);
    SolveReport rep;
    const UpdateInit init = coord_update_init(inst, b, qos, params);
    rep.init_fallback = std::find(init.fallback.begin(), init.fallback.end(), true) != init.fallback.end();
    RVector p = init.powers.p;
    RVector probs(k_users);

    bool feasible = detail::all_feasible(prob, p, qos, probs);
    while (!feasible && rep.cycles < cfg.i_max)
    {
        ++rep.cycles;
        std::vector<ResidueSpectrum> frozen;
        frozen.reserve(static_cast<std::size_t>(k_users));
        for (Eigen::Index k = 0; k < k_users; ++k)
            frozen.push_back(residue_spectrum(zf_minus_q(inst, b, p, qos.gamma(k), k)));
        RVector next = p;
        for (Eigen::Index k = 0; k < k_users; ++k)
        {
            const auto step = coord_update_step(inst, b, qos, params, p, k, frozen[static_cast<std::size_t>(k)], cfg.literal_gamma_in_breve);
            next(k) = step.power;
            rep.bisection_steps += step.bisection_steps;
        }
        p = next;
        feasible = detail::all_feasible(prob, p, qos, probs);
    }

    rep.status = feasible ? SolveStatus::Solved : SolveStatus::CycleLimit;
    rep.powers = PowerAllocation(p);
    rep.per_user_prob = probs;
    rep.total_power = rep.powers.total_power(b);
    rep.integral_evals = prob.evaluations;
    rep.tolerance_met = prob.all_certified;
    detail::certify_exact(inst, b, qos, cfg.quad_tol, rep);
    rep.wall_time = std::chrono::steady_clock::now() - t0;
    return rep;
}

} // namespace robustpl

#endif
