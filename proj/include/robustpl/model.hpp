// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------
//
// Downlink system model: channel and estimate generation, fixed beamforming
// directions (ZF, RCI, perfect-CSI optimal), SINR evaluation and the rewrite
// of each user's SINR chance constraint as a quadratic form in a standard
// complex Gaussian vector.
//
// Conventions: channel matrices are K x N_t with row k equal to h_k^H.
// Beamformer matrices are N_t x K with column k equal to b_k.

#ifndef ROBUSTPL_MODEL_HPP
#define ROBUSTPL_MODEL_HPP

#include "linalg.hpp"
#include "types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace robustpl
{

// ------------------------------------------------------------------------
// Random streams

// splitmix64 finaliser; used to derive independent, reproducible sub-streams.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0)
{
    return mix_seed(mix_seed(mix_seed(base) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

// Draws circular complex Gaussians CN(0, 1): real and imaginary parts each N(0, 1/2).
class ComplexNormalSource
{
public:
    explicit ComplexNormalSource(std::uint64_t seed) : engine_(seed), normal_(0.0, std::sqrt(0.5)) {}

    cdouble operator()()
    {
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {re, im};
    }

    CVector vector(Eigen::Index n)
    {
        CVector v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v(i) = (*this)();
        return v;
    }

    std::mt19937_64 &engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

// ------------------------------------------------------------------------
// Domain types

struct ScenarioInstance
{
    CMatrix true_channels;           // K x N_t, row k = h_k^H
    CMatrix est_channels;            // K x N_t, row k = hhat_k^H
    std::vector<CMatrix> error_cov;  // C_k, N_t x N_t
    RVector noise_var;               // sigma_k^2

    // Derived once at construction.
    std::vector<CMatrix> cov_sqrt;      // C_k^{1/2}
    std::vector<CMatrix> cov_pinv_sqrt; // C_k^{-1/2} (pseudo-inverse)

    Eigen::Index n_tx() const { return est_channels.cols(); }
    Eigen::Index n_users() const { return est_channels.rows(); }

    // hhat_k as a column vector.
    CVector est(Eigen::Index k) const { return est_channels.row(k).adjoint(); }
    CVector truth(Eigen::Index k) const { return true_channels.row(k).adjoint(); }

    static ScenarioInstance make(CMatrix true_channels, CMatrix est_channels, std::vector<CMatrix> error_cov, RVector noise_var)
    {
        ScenarioInstance s;
        s.true_channels = std::move(true_channels);
        s.est_channels = std::move(est_channels);
        s.error_cov = std::move(error_cov);
        s.noise_var = std::move(noise_var);
        const Eigen::Index k = s.est_channels.rows(), n = s.est_channels.cols();
        if (k < 1 || n < 1)
            throw Error(ErrorCode::InvalidArgument, "scenario needs at least one user and one antenna");
        if (s.true_channels.rows() != k || s.true_channels.cols() != n)
            throw Error(ErrorCode::InvalidArgument, "true/estimated channel dimensions differ");
        if (static_cast<Eigen::Index>(s.error_cov.size()) != k || s.noise_var.size() != k)
            throw Error(ErrorCode::InvalidArgument, "need one error covariance and one noise variance per user");
        for (Eigen::Index u = 0; u < k; ++u)
        {
            const CMatrix &c = s.error_cov[u];
            if (c.rows() != n || c.cols() != n)
                throw Error(ErrorCode::InvalidArgument, "error covariance must be N_t x N_t");
            if (hermitian_defect(c) > 1e-12)
                throw Error(ErrorCode::InvalidArgument, "error covariance is not Hermitian");
            if (hermitian_eigen(c, false).values.minCoeff() < -1e-12)
                throw Error(ErrorCode::InvalidArgument, "error covariance is not PSD");
            if (!(s.noise_var(u) > 0.0))
                throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
            s.cov_sqrt.push_back(psd_sqrt(c));
            s.cov_pinv_sqrt.push_back(psd_pinv_sqrt(c));
        }
        return s;
    }
};

struct QoSSpec
{
    RVector gamma;   // linear SINR targets
    RVector epsilon; // outage tolerances

    Eigen::Index size() const { return gamma.size(); }

    static QoSSpec make(RVector gamma, RVector epsilon)
    {
        if (gamma.size() != epsilon.size())
            throw Error(ErrorCode::InvalidArgument, "gamma and epsilon lengths differ");
        for (Eigen::Index k = 0; k < gamma.size(); ++k)
        {
            if (!(gamma(k) > 0.0))
                throw Error(ErrorCode::InvalidArgument, "SINR target must be positive");
            if (!(epsilon(k) > 0.0 && epsilon(k) < 1.0))
                throw Error(ErrorCode::InvalidArgument, "outage tolerance must lie in (0,1)");
        }
        return {std::move(gamma), std::move(epsilon)};
    }

    static QoSSpec uniform(Eigen::Index k, double gamma_linear, double epsilon)
    {
        return make(RVector::Constant(k, gamma_linear), RVector::Constant(k, epsilon));
    }

    static QoSSpec uniform_db(Eigen::Index k, double gamma_db, double epsilon)
    {
        return uniform(k, db_to_linear(gamma_db), epsilon);
    }
};

enum class BeamformerKind
{
    ZF,
    RCI,
    PCSI,
    Custom
};

struct BeamformerMatrix
{
    CMatrix columns; // N_t x K
    BeamformerKind kind = BeamformerKind::Custom;
    double alpha = 0.0; // RCI regulariser

    Eigen::Index n_users() const { return columns.cols(); }
    CVector col(Eigen::Index k) const { return columns.col(k); }
};

struct PowerAllocation
{
    RVector p;

    PowerAllocation() = default;
    explicit PowerAllocation(RVector powers) : p(std::move(powers)) {}

    Eigen::Index size() const { return p.size(); }
    double operator[](Eigen::Index k) const { return p(k); }
    double &operator[](Eigen::Index k) { return p(k); }

    // Tr(B P B^H) = sum_k p_k ||b_k||^2
    double total_power(const BeamformerMatrix &b) const
    {
        return (b.columns.colwise().squaredNorm().transpose().array() * p.array()).sum();
    }
};

struct QuadraticOutageForm
{
    CMatrix Q;  // C^{1/2} X C^{1/2}
    CVector r;  // C^{1/2} X hhat
    double v;   // hhat^H X hhat - sigma^2
    CVector a;  // -C^{-1/2} hhat
    double tau; // v - a^H Q a
};

// ------------------------------------------------------------------------
// Channels and estimates

inline CMatrix generate_rayleigh_channels(Eigen::Index n_tx, Eigen::Index n_users, std::uint64_t seed)
{
    if (n_tx < 1 || n_users < 1)
        throw Error(ErrorCode::InvalidArgument, "n_tx and n_users must be positive");
    ComplexNormalSource src(seed);
    CMatrix h(n_users, n_tx);
    for (Eigen::Index k = 0; k < n_users; ++k)
        for (Eigen::Index n = 0; n < n_tx; ++n)
            h(k, n) = src();
    return h;
}

struct UplinkEstimate
{
    CMatrix est_channels;
    std::vector<CMatrix> error_cov;
    double sigma_e2 = 0.0;
};

inline double training_error_variance(double sigma2_bs, double l_ut, double p_ut)
{
    if (!(sigma2_bs > 0.0) || !(l_ut >= 1.0) || !(p_ut > 0.0))
        throw Error(ErrorCode::InvalidArgument, "training requires sigma2_bs > 0, L_ut >= 1, P_ut > 0");
    return sigma2_bs / (sigma2_bs + l_ut * p_ut);
}

// hhat_k = h_k + e_k with e_k ~ CN(0, sigma_e2 I), independent across users.
inline UplinkEstimate add_estimation_error(const CMatrix &true_channels, double sigma_e2, std::uint64_t seed)
{
    if (!(sigma_e2 >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "error variance must be nonnegative");
    ComplexNormalSource src(seed);
    const Eigen::Index k = true_channels.rows(), n = true_channels.cols();
    UplinkEstimate out;
    out.sigma_e2 = sigma_e2;
    out.est_channels = true_channels;
    const double scale = std::sqrt(sigma_e2);
    for (Eigen::Index u = 0; u < k; ++u)
        for (Eigen::Index i = 0; i < n; ++i)
            out.est_channels(u, i) += scale * src();
    out.error_cov.assign(static_cast<std::size_t>(k), sigma_e2 * CMatrix::Identity(n, n));
    return out;
}

inline UplinkEstimate simulate_uplink_estimate(const CMatrix &true_channels, double sigma2_bs, double l_ut, double p_ut,
                                               std::uint64_t seed)
{
    return add_estimation_error(true_channels, training_error_variance(sigma2_bs, l_ut, p_ut), seed);
}

// ------------------------------------------------------------------------
// Beamforming directions

namespace detail
{
// Returns Hhat^H (Hhat Hhat^H + alpha I)^{-1}.
inline CMatrix regularized_inverse(const CMatrix &h_est, double alpha)
{
    const Eigen::Index k = h_est.rows();
    const CMatrix gram = h_est * h_est.adjoint() + alpha * CMatrix::Identity(k, k);
    const RVector ev = hermitian_eigen(gram, false).values;
    const double lmax = ev(0), lmin = ev(ev.size() - 1);
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
        throw Error(ErrorCode::SingularChannel, "channel Gram matrix is numerically singular");
    // gram is Hermitian, so B^H = gram^{-1} Hhat.
    const CMatrix bh = gram.ldlt().solve(h_est);
    return bh.adjoint();
}
} // namespace detail

inline BeamformerMatrix build_zf(const CMatrix &h_est)
{
    if (h_est.rows() > h_est.cols())
        throw Error(ErrorCode::SingularChannel, "zero forcing needs K <= N_t");
    return {detail::regularized_inverse(h_est, 0.0), BeamformerKind::ZF, 0.0};
}

inline BeamformerMatrix build_rci(const CMatrix &h_est, double alpha)
{
    if (!(alpha >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "RCI regulariser must be nonnegative");
    if (alpha == 0.0)
        return build_zf(h_est);
    return {detail::regularized_inverse(h_est, alpha), BeamformerKind::RCI, alpha};
}

// Optimal perfect-CSI directions (treating hhat as exact), obtained from the
// virtual-uplink fixed point. Noise is absorbed into normalised channels
// g_k = hhat_k / sigma_k so the dual uplink has unit noise.
inline BeamformerMatrix build_pcsi_directions(const CMatrix &h_est, const QoSSpec &qos, const RVector &noise_var,
                                              double rel_tol = 1e-10, int max_sweeps = 10000)
{
    const Eigen::Index k = h_est.rows(), n = h_est.cols();
    if (qos.size() != k || noise_var.size() != k)
        throw Error(ErrorCode::InvalidArgument, "QoS/noise length must equal number of users");
    CMatrix g(n, k);
    for (Eigen::Index u = 0; u < k; ++u)
        g.col(u) = h_est.row(u).adjoint() / std::sqrt(noise_var(u));

    RVector q = RVector::Zero(k);
    auto covariance = [&](const RVector &qv) {
        CMatrix t = CMatrix::Identity(n, n);
        for (Eigen::Index u = 0; u < k; ++u)
            t.noalias() += qv(u) * g.col(u) * g.col(u).adjoint();
        return t;
    };

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps; ++sweep)
    {
        const CMatrix t = covariance(q);
        const CMatrix tinv_g = t.ldlt().solve(g);
        RVector next(k);
        for (Eigen::Index u = 0; u < k; ++u)
        {
            const double x = std::real(g.col(u).dot(tinv_g.col(u)));
            // Uplink MMSE SINR equals gamma exactly when q_u x = gamma / (1 + gamma).
            next(u) = qos.gamma(u) / ((1.0 + qos.gamma(u)) * x);
        }
        const double change = (next - q).cwiseAbs().maxCoeff() / std::max(next.cwiseAbs().maxCoeff(), 1e-300);
        q = next;
        if (!q.allFinite() || q.maxCoeff() > 1e15)
            break;
        if (change < rel_tol)
        {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw Error(ErrorCode::Diverged, "perfect-CSI fixed point did not converge (instance likely infeasible)");

    const CMatrix dirs = covariance(q).ldlt().solve(g);
    BeamformerMatrix b{CMatrix(n, k), BeamformerKind::PCSI, 0.0};
    for (Eigen::Index u = 0; u < k; ++u)
        b.columns.col(u) = dirs.col(u).normalized();
    return b;
}

// ------------------------------------------------------------------------
// SINR and the quadratic outage form

// |h^H b_k|^2 p_k / (sum_{j != k} |h^H b_j|^2 p_j + sigma^2), with h a column vector.
inline double sinr(const CVector &h, const BeamformerMatrix &b, const PowerAllocation &p, double sigma2, Eigen::Index k)
{
    const CVector gains = b.columns.adjoint() * h; // conj(h^H b_j)
    double interference = sigma2;
    for (Eigen::Index j = 0; j < gains.size(); ++j)
        if (j != k)
            interference += std::norm(gains(j)) * p[j];
    return std::norm(gains(k)) * p[k] / interference;
}

// X_k = (p_k/gamma_k) b_k b_k^H - sum_{j != k} p_j b_j b_j^H
inline CMatrix sinr_margin_matrix(const BeamformerMatrix &b, const RVector &p, double gamma_k, Eigen::Index k)
{
    const Eigen::Index n = b.columns.rows();
    CMatrix x = CMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < b.n_users(); ++j)
    {
        const double w = (j == k) ? p(j) / gamma_k : -p(j);
        if (w != 0.0)
            x.noalias() += w * b.columns.col(j) * b.columns.col(j).adjoint();
    }
    return x;
}

inline QuadraticOutageForm build_outage_form(const ScenarioInstance &inst, const BeamformerMatrix &b, const PowerAllocation &p,
                                             const QoSSpec &qos, Eigen::Index k)
{
    const CMatrix x = sinr_margin_matrix(b, p.p, qos.gamma(k), k);
    const CMatrix &s = inst.cov_sqrt[k];
    const CVector hhat = inst.est(k);
    QuadraticOutageForm f;
    f.Q = s * x * s;
    f.Q = 0.5 * (f.Q + f.Q.adjoint());
    f.r = s * (x * hhat);
    f.v = std::real(hhat.dot(x * hhat)) - inst.noise_var(k);
    f.a = -(inst.cov_pinv_sqrt[k] * hhat);
    f.tau = f.v - std::real(f.a.dot(f.Q * f.a));
    return f;
}

// ------------------------------------------------------------------------
// Perfect-CSI power initialisation

struct PowerInit
{
    PowerAllocation powers;
    bool fallback = false; // true when the linear solve failed or gave p_k <= 0
};

// Solves diag(n_k^2) - offdiag(m_ki^2) p = sigma^2, with m_ki = |hhat_k^H b_i| and
// n_k = |hhat_k^H b_k| / sqrt(gamma_k). Falls back to p_k = gamma_k sigma_k^2.
inline PowerInit init_powers_pcsi(const CMatrix &h_est, const BeamformerMatrix &b, const QoSSpec &qos, const RVector &noise_var)
{
    const Eigen::Index k = h_est.rows();
    const CMatrix g = h_est * b.columns; // g(k, i) = hhat_k^H b_i
    RMatrix a(k, k);
    for (Eigen::Index r = 0; r < k; ++r)
        for (Eigen::Index c = 0; c < k; ++c)
            a(r, c) = (r == c) ? std::norm(g(r, c)) / qos.gamma(r) : -std::norm(g(r, c));

    PowerInit out;
    Eigen::FullPivLU<RMatrix> lu(a);
    bool ok = lu.isInvertible() && lu.rcond() > 1e-14;
    RVector p;
    if (ok)
    {
        p = lu.solve(noise_var);
        ok = p.allFinite() && (p.array() > 0.0).all();
    }
    if (!ok)
    {
        p = (qos.gamma.array() * noise_var.array()).matrix();
        out.fallback = true;
    }
    out.powers = PowerAllocation(p);
    return out;
}

} // namespace robustpl

#endif
