// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// CDF of a Hermitian quadratic form of a standard circular complex Gaussian,
//
//   Pr(||x - z||_M^2 <= tau) = (1/2pi) Int e^{tau s} / s * e^{-c(s)} / det(I + sM) dw,
//   s = beta + iw,  c(s) = sum_m |zt_m|^2 s l_m / (1 + s l_m),
//
// evaluated on the line Re s = beta by adaptive quadrature. Any beta in the
// strip where I + beta M > 0 is admissible. With beta < 0 the pole at s = 0
// (residue 1) is crossed and the same integral yields P - 1.
//
// The default contour runs through the real saddle point of |F(s)| on
// whichever side of the origin gives the smaller peak, which bounds the
// cancellation in the oscillatory integral. Outage forms routinely have
// |zt|^2 in the hundreds, so a fixed beta can leave peaks near e^{|zt|^2}.

#ifndef ROBUSTPL_GAUSSIAN_QUADRATIC_HPP
#define ROBUSTPL_GAUSSIAN_QUADRATIC_HPP

#include "linalg.hpp"
#include "model.hpp"
#include "quadrature.hpp"
#include "types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace robustpl
{

struct GaussianQuadratic
{
    CMatrix M;
    CVector z;
    double tau = 0.0;
};

struct EigenSpectrum
{
    RVector eigenvalues; // descending
    CVector z_tilde;     // V^H z
    double beta = 1.0;   // default contour offset
    double zero_threshold = 0.0;

    // Indices of eigenvalues treated as nonzero.
    std::vector<Eigen::Index> active_modes() const
    {
        std::vector<Eigen::Index> out;
        for (Eigen::Index m = 0; m < eigenvalues.size(); ++m)
            if (std::abs(eigenvalues(m)) > zero_threshold)
                out.push_back(m);
        return out;
    }
};

enum class ProbabilityMethod
{
    Quadrature,
    Residue,
    MonteCarlo
};

struct ProbabilityEstimate
{
    double value = 0.0;           // clamped to [0, 1]
    double raw = 0.0;             // before clamping
    double abs_error_bound = 0.0; // quadrature: certified bound; Monte Carlo: standard error
    ProbabilityMethod method = ProbabilityMethod::Quadrature;
    bool tolerance_met = true;
    int evaluations = 0;
};

// beta = 1 for PSD M, otherwise 0.5 / |lambda_min| (midpoint of the admissible interval).
inline EigenSpectrum decompose(const GaussianQuadratic &g)
{
    if (g.M.rows() != g.M.cols() || g.M.rows() != g.z.size())
        throw Error(ErrorCode::InvalidArgument, "quadratic form dimensions are inconsistent");
    if (hermitian_defect(g.M) > 1e-12 * std::max(1.0, g.M.cwiseAbs().maxCoeff()))
        throw Error(ErrorCode::InvalidArgument, "M is not Hermitian");
    const HermitianEigen eig = hermitian_eigen(g.M);
    EigenSpectrum s;
    s.eigenvalues = eig.values;
    s.z_tilde = eig.vectors.adjoint() * g.z;
    s.zero_threshold = zero_eigen_threshold(eig.values);
    const double lmin = eig.values.size() ? eig.values(eig.values.size() - 1) : 0.0;
    s.beta = (lmin < -s.zero_threshold) ? 0.5 / std::abs(lmin) : 1.0;
    return s;
}

enum class Contour
{
    Saddle, // saddle point of |F| on the better-conditioned side of s = 0
    Fixed   // beta from the spectrum, or QuadratureOptions::beta when set
};

struct QuadratureOptions
{
    double tol = 1e-8;
    Contour contour = Contour::Saddle;
    std::optional<double> beta; // only with Contour::Fixed; negative values evaluate P - 1
    int max_intervals = 4000;
};

namespace detail
{

class LemmaIntegrand
{
public:
    LemmaIntegrand(const EigenSpectrum &spec, double tau) : tau_(tau)
    {
        for (Eigen::Index m : spec.active_modes())
        {
            lam_.push_back(spec.eigenvalues(m));
            w_.push_back(std::norm(spec.z_tilde(m)));
        }
    }

    bool empty() const { return lam_.empty(); }
    std::size_t rank() const { return lam_.size(); }
    double lambda_max() const { return *std::max_element(lam_.begin(), lam_.end()); }
    double lambda_min() const { return *std::min_element(lam_.begin(), lam_.end()); }
    double tau() const { return tau_; }
    double lambda(std::size_t m) const { return lam_[m]; }
    double weight(std::size_t m) const { return w_[m]; }

    bool admissible(double beta) const
    {
        if (!(beta != 0.0) || !std::isfinite(beta))
            return false;
        for (double l : lam_)
            if (!(1.0 + beta * l > 0.0))
                return false;
        return true;
    }

    // log F(s) on the real axis, i.e. log|F(beta)|.
    double log_abs_real(double s) const
    {
        double acc = tau_ * s - std::log(std::abs(s));
        for (std::size_t m = 0; m < lam_.size(); ++m)
        {
            const double d = 1.0 + s * lam_[m];
            acc -= w_[m] * s * lam_[m] / d + std::log(d);
        }
        return acc;
    }

    // d/ds log|F(s)|; strictly increasing on each admissible side of 0.
    double dlog(double s) const
    {
        double acc = tau_ - 1.0 / s;
        for (std::size_t m = 0; m < lam_.size(); ++m)
        {
            const double d = 1.0 + s * lam_[m];
            acc -= w_[m] * lam_[m] / (d * d) + lam_[m] / d;
        }
        return acc;
    }

    double d2log(double s) const
    {
        double acc = 1.0 / (s * s);
        for (std::size_t m = 0; m < lam_.size(); ++m)
        {
            const double d = 1.0 + s * lam_[m];
            const double l2 = lam_[m] * lam_[m];
            acc += 2.0 * w_[m] * l2 / (d * d * d) + l2 / (d * d);
        }
        return acc;
    }

    cdouble log_value(cdouble s) const
    {
        cdouble logf = tau_ * s - std::log(s);
        for (std::size_t m = 0; m < lam_.size(); ++m)
        {
            const cdouble sl = s * lam_[m];
            const cdouble d = 1.0 + sl;
            logf -= w_[m] * (sl / d) + std::log(d);
        }
        return logf;
    }

    // F(s) for complex s.
    cdouble value(cdouble s) const { return std::exp(log_value(s)); }

    // Upper bound on log|F(s)| for every s on the path beyond parameter theta0,
    // without the e^{tau Re s} factor (which the caller bounds separately).
    // Uses |s| >= theta, |1 + s l| >= max(1 + beta l, |l| theta) on the vertical
    // line and |1 + s l| >= |l| theta on any path with Im s = theta.
    double log_rational_bound(double beta, double theta0, bool vertical) const
    {
        double re_c_lower = 0.0, log_prod = 0.0;
        for (std::size_t m = 0; m < lam_.size(); ++m)
        {
            double lower = theta0 * std::abs(lam_[m]);
            if (vertical)
                lower = std::max(lower, 1.0 + beta * lam_[m]);
            re_c_lower += w_[m] * (1.0 - 1.0 / lower);
            log_prod += std::log(std::abs(lam_[m]));
        }
        return -re_c_lower - log_prod;
    }

private:
    double tau_;
    std::vector<double> lam_;
    std::vector<double> w_;
};

// Root of the increasing map y -> dlog(s(y)) by bisection on y.
template <class Map>
double bisect_saddle(const LemmaIntegrand &f, Map s_of_y, double ylo, double yhi, bool increasing)
{
    for (int it = 0; it < 200; ++it)
    {
        const double ym = 0.5 * (ylo + yhi);
        const double d = f.dlog(s_of_y(ym));
        const bool right_of_root = increasing ? (d > 0.0) : (d < 0.0);
        if (!std::isfinite(d))
        {
            // Overflow only happens at an endpoint pole; step away from it.
            (increasing ? ylo : yhi) = ym;
            continue;
        }
        (right_of_root ? yhi : ylo) = ym;
        if (yhi - ylo < 1e-12 * std::max(1.0, std::abs(ym)))
            break;
    }
    return s_of_y(0.5 * (ylo + yhi));
}

inline double logistic(double y) { return 1.0 / (1.0 + std::exp(-y)); }

// Saddle of log|F| on (0, s_hi), or nullopt when |F| decreases without bound.
inline std::optional<double> positive_saddle(const LemmaIntegrand &f)
{
    const double lmin = f.lambda_min();
    if (lmin < 0.0)
    {
        const double s_hi = -1.0 / lmin;
        return bisect_saddle(f, [&](double y) { return s_hi * logistic(y); }, -700.0, 36.0, true);
    }
    if (f.tau() <= 0.0)
        return std::nullopt;
    return bisect_saddle(f, [](double y) { return std::exp(y); }, -700.0, 700.0, true);
}

inline std::optional<double> negative_saddle(const LemmaIntegrand &f)
{
    const double lmax = f.lambda_max();
    if (lmax > 0.0)
    {
        const double s_lo = -1.0 / lmax;
        // s = s_lo * u decreases in u, so dlog decreases in y.
        return bisect_saddle(f, [&](double y) { return s_lo * logistic(y); }, -700.0, 36.0, false);
    }
    if (f.tau() >= 0.0)
        return std::nullopt;
    return bisect_saddle(f, [](double y) { return -std::exp(y); }, -700.0, 700.0, false);
}

} // namespace detail

inline ProbabilityEstimate cdf_quadrature(const EigenSpectrum &spec, double tau, const QuadratureOptions &opts = {})
{
    ProbabilityEstimate out;
    out.method = ProbabilityMethod::Quadrature;
    const detail::LemmaIntegrand f(spec, tau);

    auto exact = [&](double v) {
        out.value = out.raw = v;
        out.abs_error_bound = 0.0;
        return out;
    };
    // Zero form: the event is {0 <= tau}.
    if (f.empty())
        return exact(tau >= 0.0 ? 1.0 : 0.0);
    // Semidefinite forms with tau on the wrong side of 0 (no atom at 0 when rank >= 1).
    if (f.lambda_min() > 0.0 && tau <= 0.0)
        return exact(0.0);
    if (f.lambda_max() < 0.0 && tau >= 0.0)
        return exact(1.0);

    double beta;
    if (opts.contour == Contour::Fixed)
    {
        beta = opts.beta.value_or(spec.beta);
        if (!f.admissible(beta))
            throw Error(ErrorCode::InvalidArgument, "contour offset violates I + beta M > 0");
    }
    else
    {
        const auto pos = detail::positive_saddle(f);
        const auto neg = detail::negative_saddle(f);
        if (pos && neg)
            beta = (f.log_abs_real(*pos) <= f.log_abs_real(*neg)) ? *pos : *neg;
        else if (pos)
            beta = *pos;
        else if (neg)
            beta = *neg;
        else
            throw Error(ErrorCode::InvalidArgument, "no admissible contour");
        if (!f.admissible(beta))
            beta *= 0.999999; // bisection may land on the strip edge in floating point
    }

    // Path s(t) = beta + i t + mu t^2 with t >= 0. The vertical line (mu = 0) is
    // used unless the e^{i tau t} oscillation would need many periods before the
    // algebraic tail decays; then the path bends towards decreasing |e^{tau s}|.
    const double h = 1.0 / std::sqrt(f.d2log(beta));
    const double log_target = std::log(0.1 * opts.tol * std::numbers::pi);
    const double r = static_cast<double>(f.rank());
    auto log_tail_vertical = [&](double t0) {
        return tau * beta + f.log_rational_bound(beta, t0, true) - std::log(r) - r * std::log(t0);
    };

    constexpr int max_panels = 1100;
    std::vector<double> edges{0.0, h};
    while (log_tail_vertical(edges.back()) > log_target && edges.size() < max_panels)
        edges.push_back(2.0 * edges.back());

    double mu = 0.0;
    std::vector<double> vertical_edges = edges;
    std::function<double(double)> log_tail = log_tail_vertical;
    const bool vertical_ok = log_tail_vertical(edges.back()) <= log_target;
    if (tau != 0.0 && (!vertical_ok || std::abs(tau) * edges.back() / (2.0 * std::numbers::pi) > 1000.0))
    {
        double dist = std::abs(beta);
        for (double l : {f.lambda_min(), f.lambda_max()})
            dist = std::min(dist, std::abs(beta + 1.0 / l));
        const double kappa = std::min(1.0 / (2.0 * std::abs(tau)), 0.5 * dist) / (h * h);
        const double mu_bent = (tau > 0.0) ? -kappa : kappa;
        const double a = std::abs(tau) * kappa;
        std::function<double(double)> bent_tail = [&, a, kappa](double t0) {
            const double pref = tau * beta + f.log_rational_bound(beta, t0, false) - (r + 1.0) * std::log(t0);
            return pref - a * t0 * t0 + std::log(1.0 / (2.0 * a * t0) + kappa / a);
        };
        std::vector<double> bent{0.0, h};
        while (bent_tail(bent.back()) > log_target && bent.size() < max_panels)
            bent.push_back(2.0 * bent.back());

        // The bent path must not pass close to a pole of e^{-c}; compare |F s'| with the real peak.
        bool usable = bent_tail(bent.back()) <= log_target;
        std::vector<double> probes;
        for (std::size_t i = 1; i < bent.size(); ++i)
            probes.insert(probes.end(), {0.5 * (bent[i - 1] + bent[i]), bent[i]});
        // Near a crossed pole -1/l, |e^{-c}| peaks where Re(1 + s l) = +-l Im(s).
        for (std::size_t m = 0; m < f.rank(); ++m)
        {
            const double l = f.lambda(m);
            if (l * mu_bent >= 0.0 || f.weight(m) == 0.0)
                continue;
            const double c0 = 1.0 / l + beta;
            probes.push_back(std::sqrt(-c0 / mu_bent));
            for (double sg : {-1.0, 1.0})
            {
                const double disc = 1.0 - 4.0 * mu_bent * c0;
                if (disc < 0.0)
                    continue;
                for (double rt : {(-sg + std::sqrt(disc)) / (2.0 * mu_bent), (-sg - std::sqrt(disc)) / (2.0 * mu_bent)})
                    if (rt > 0.0 && rt < bent.back())
                        probes.push_back(rt);
            }
        }
        const double peak = f.log_abs_real(beta) + 2.0;
        for (double t : probes)
        {
            if (!usable)
                break;
            const cdouble s(beta + mu_bent * t * t, t);
            const double lg = f.log_value(s).real() + std::log(std::abs(cdouble(2.0 * mu_bent * t, 1.0)));
            usable = lg <= peak;
        }
        if (usable)
        {
            mu = mu_bent;
            log_tail = bent_tail;
            edges = std::move(bent);
        }
    }
    auto integrand = [&](double t) {
        const cdouble s(beta + mu * t * t, t);
        return (f.value(s) * cdouble(2.0 * mu * t, 1.0)).imag();
    };
    double tail = std::exp(log_tail(edges.back())) / std::numbers::pi;
    auto res = detail::integrate_adaptive(integrand, edges, std::max(0.9 * opts.tol, opts.tol - tail) * std::numbers::pi, opts.max_intervals);
    if (!std::isfinite(res.value) && mu != 0.0)
    {
        mu = 0.0;
        edges = std::move(vertical_edges);
        tail = std::exp(log_tail_vertical(edges.back())) / std::numbers::pi;
        res = detail::integrate_adaptive(integrand, edges, std::max(0.9 * opts.tol, opts.tol - tail) * std::numbers::pi, opts.max_intervals);
    }
    const bool tail_ok = tail <= 0.1 * opts.tol;

    const double integral = res.value / std::numbers::pi;
    out.raw = (beta > 0.0) ? integral : 1.0 + integral;
    out.value = std::clamp(out.raw, 0.0, 1.0);
    out.abs_error_bound = res.error / std::numbers::pi + tail;
    out.evaluations = res.evaluations;
    out.tolerance_met = tail_ok && res.converged && out.abs_error_bound <= opts.tol;
    return out;
}

inline ProbabilityEstimate cdf_quadrature(const EigenSpectrum &spec, double tau, double tol)
{
    QuadratureOptions o;
    o.tol = tol;
    return cdf_quadrature(spec, tau, o);
}

// Pr(SINR_k >= gamma_k) = Pr(||delta - a||^2_{-Q} <= tau).
inline ProbabilityEstimate outage_probability(const QuadraticOutageForm &form, double tol = 1e-8)
{
    return cdf_quadrature(decompose({-form.Q, form.a, form.tau}), form.tau, tol);
}

// Monte Carlo frequency of SINR_k >= gamma_k with h_k = hhat_k - e_k, e_k ~ CN(0, C_k).
inline ProbabilityEstimate mc_probability(const ScenarioInstance &inst, const BeamformerMatrix &b, const PowerAllocation &p,
                                          const QoSSpec &qos, Eigen::Index k, std::int64_t n_samples, std::uint64_t seed)
{
    if (n_samples < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one Monte Carlo sample");
    ComplexNormalSource src(seed);
    const CVector hhat = inst.est(k);
    const CMatrix &s = inst.cov_sqrt[k];
    const double gamma = qos.gamma(k), sigma2 = inst.noise_var(k);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n_samples; ++i)
    {
        const CVector h = hhat - s * src.vector(inst.n_tx());
        if (sinr(h, b, p, sigma2, k) >= gamma)
            ++hits;
    }
    ProbabilityEstimate out;
    out.method = ProbabilityMethod::MonteCarlo;
    out.value = out.raw = static_cast<double>(hits) / static_cast<double>(n_samples);
    out.abs_error_bound = std::sqrt(out.value * (1.0 - out.value) / static_cast<double>(n_samples));
    out.evaluations = static_cast<int>(std::min<std::int64_t>(n_samples, std::numeric_limits<int>::max()));
    return out;
}

} // namespace robustpl

#endif
