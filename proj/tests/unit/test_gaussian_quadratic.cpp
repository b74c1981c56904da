// SPDX-License-Identifier: Apache-2.0

#include "robustpl/gaussian_quadratic.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace robustpl;

namespace
{

CMatrix random_matrix(int n, ComplexNormalSource &src)
{
    CMatrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = src();
    return a;
}

// Pr(|x - z|^2 <= tau) for scalar x ~ CN(0,1): 2|x - z|^2 is noncentral chi-square, 2 dof, nc 2|z|^2.
double ncx2_cdf(double z2, double tau)
{
    if (tau <= 0.0)
        return 0.0;
    return boost::math::cdf(boost::math::non_central_chi_squared(2.0, 2.0 * z2), 2.0 * tau);
}

// Independent sampling oracle for Pr((x - z)^H M (x - z) <= tau).
double sample_cdf(const GaussianQuadratic &g, long n, std::uint64_t seed)
{
    ComplexNormalSource src(seed);
    long hits = 0;
    for (long i = 0; i < n; ++i)
    {
        const CVector d = src.vector(g.z.size()) - g.z;
        if (std::real(d.dot(g.M * d)) <= g.tau)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

ScenarioInstance zf_instance(double sigma_e2, std::uint64_t seed)
{
    const CMatrix h = generate_rayleigh_channels(3, 3, derive_seed(seed, 0));
    const auto est = add_estimation_error(h, sigma_e2, derive_seed(seed, 1));
    return ScenarioInstance::make(h, est.est_channels, est.error_cov, RVector::Constant(3, 0.01));
}

} // namespace

TEST(Decompose, IdentityDefaults)
{
    const auto s = decompose({CMatrix::Identity(2, 2), CVector::Zero(2), 1.0});
    EXPECT_NEAR(s.eigenvalues(0), 1.0, 1e-15);
    EXPECT_NEAR(s.eigenvalues(1), 1.0, 1e-15);
    EXPECT_LT(s.z_tilde.norm(), 1e-15);
    EXPECT_EQ(s.beta, 1.0);
}

TEST(Decompose, IndefiniteBetaRule)
{
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -0.5;
    const auto s = decompose({m, CVector::Zero(2), 0.0});
    EXPECT_NEAR(s.beta, 1.0, 1e-15);
    for (int i = 0; i < 2; ++i)
        EXPECT_GT(1.0 + s.beta * s.eigenvalues(i), 0.0);
    EXPECT_NEAR(1.0 + s.beta * s.eigenvalues(1), 0.5, 1e-15);
}

TEST(Decompose, ReconstructsAndPreservesNorm)
{
    ComplexNormalSource src(3);
    for (int t = 0; t < 20; ++t)
    {
        const CMatrix a = random_matrix(3, src);
        const CMatrix m = a + a.adjoint();
        const CVector z = src.vector(3);
        const auto s = decompose({m, z, 0.0});
        const auto e = hermitian_eigen(m);
        EXPECT_LT((e.vectors * s.eigenvalues.asDiagonal() * e.vectors.adjoint() - m).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_NEAR(s.z_tilde.norm(), z.norm(), 1e-10);
        for (int i = 0; i + 1 < 3; ++i)
            EXPECT_GE(s.eigenvalues(i), s.eigenvalues(i + 1));
        for (int i = 0; i < 3; ++i)
            EXPECT_GT(1.0 + s.beta * s.eigenvalues(i), 0.0);
    }
}

TEST(Decompose, RejectsNonHermitian)
{
    CMatrix m = CMatrix::Identity(2, 2);
    m(0, 1) = 1.0;
    EXPECT_THROW(decompose({m, CVector::Zero(2), 0.0}), Error);
    EXPECT_THROW(decompose({CMatrix::Identity(2, 2), CVector::Zero(3), 0.0}), Error);
}

TEST(Cdf, ExponentialMedian)
{
    const auto e = cdf_quadrature(decompose({CMatrix::Identity(1, 1), CVector::Zero(1), std::log(2.0)}), std::log(2.0), 1e-8);
    EXPECT_TRUE(e.tolerance_met);
    EXPECT_NEAR(e.value, 0.5, 1e-8);
    EXPECT_EQ(e.method, ProbabilityMethod::Quadrature);
}

TEST(Cdf, ExponentialAcrossThresholds)
{
    for (double tau : {1e-3, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0})
    {
        const auto e = cdf_quadrature(decompose({CMatrix::Identity(1, 1), CVector::Zero(1), tau}), tau, 1e-8);
        EXPECT_NEAR(e.value, 1.0 - std::exp(-tau), 1e-8) << "tau " << tau;
        EXPECT_TRUE(e.tolerance_met);
    }
}

TEST(Cdf, ZeroMatrixIsIndicator)
{
    CVector z(3);
    z << 1.0, cdouble(0, 2), -3.0;
    const auto spec = decompose({CMatrix::Zero(3, 3), z, 0.0});
    EXPECT_EQ(cdf_quadrature(spec, 1.0, 1e-8).value, 1.0);
    EXPECT_EQ(cdf_quadrature(spec, -1.0, 1e-8).value, 0.0);
}

TEST(Cdf, NoncentralChiSquare)
{
    CVector z(1);
    z(0) = 1.0;
    const auto e = cdf_quadrature(decompose({CMatrix::Identity(1, 1), z, 2.0}), 2.0, 1e-8);
    EXPECT_NEAR(e.value, ncx2_cdf(1.0, 2.0), 1e-7);
}

TEST(Cdf, NoncentralChiSquareLargeShift)
{
    for (double z2 : {0.01, 4.0, 50.0, 400.0})
        for (double ratio : {0.5, 0.9, 1.0, 1.1, 1.5})
        {
            CVector z(1);
            z(0) = std::sqrt(z2);
            const double tau = ratio * (z2 + 1.0);
            const auto e = cdf_quadrature(decompose({CMatrix::Identity(1, 1), z, tau}), tau, 1e-8);
            EXPECT_NEAR(e.value, ncx2_cdf(z2, tau), 1e-7) << "|z|^2 " << z2 << " tau " << tau;
            EXPECT_TRUE(e.tolerance_met);
        }
}

TEST(Cdf, ScaledMatrixMatchesScaledThreshold)
{
    // Pr(l |x - z|^2 <= tau) with M = l I_2: 2|x - z|^2 / 1 is ncx2 with 4 dof.
    CVector z(2);
    z << 0.7, cdouble(0.0, -0.4);
    const double l = 2.5, tau = 3.0;
    const auto e = cdf_quadrature(decompose({l * CMatrix::Identity(2, 2), z, tau}), tau, 1e-8);
    const double exact = boost::math::cdf(boost::math::non_central_chi_squared(4.0, 2.0 * z.squaredNorm()), 2.0 * tau / l);
    EXPECT_NEAR(e.value, exact, 1e-7);
}

TEST(Cdf, NegativeDefiniteComplement)
{
    // Pr(-|x|^2 <= tau) = 1 - Pr(|x|^2 < -tau) for tau < 0.
    const double tau = -0.7;
    const auto e = cdf_quadrature(decompose({-CMatrix::Identity(1, 1), CVector::Zero(1), tau}), tau, 1e-8);
    EXPECT_NEAR(e.value, std::exp(tau), 1e-8);
}

TEST(Cdf, DifferenceOfExponentials)
{
    // x1, x2 ~ Exp(1) independent: Pr(a x1 - b x2 <= t) has a closed form.
    const double a = 2.0, b = 0.5;
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = -b;
    for (double t : {-1.0, -0.1, 0.0, 0.3, 2.0})
    {
        const double exact = (t >= 0.0) ? 1.0 - a / (a + b) * std::exp(-t / a) : b / (a + b) * std::exp(t / b);
        const auto e = cdf_quadrature(decompose({m, CVector::Zero(2), t}), t, 1e-8);
        EXPECT_NEAR(e.value, exact, 1e-8) << "t " << t;
    }
}

TEST(Cdf, ContourOffsetIndependence)
{
    ComplexNormalSource src(17);
    for (int t = 0; t < 25; ++t)
    {
        const int n = 2 + t % 3;
        const CMatrix a = random_matrix(n, src);
        const CMatrix m = a + a.adjoint();
        const CVector z = 0.5 * src.vector(n);
        const double tau = 0.5 * (t % 5) - 1.0;
        const auto spec = decompose({m, z, tau});
        const double lmin = spec.eigenvalues(n - 1);
        if (lmin >= 0.0)
            continue;
        QuadratureOptions o1, o2;
        o1.contour = o2.contour = Contour::Fixed;
        o1.beta = 0.5 / std::abs(lmin);
        o2.beta = 0.25 / std::abs(lmin);
        const auto e1 = cdf_quadrature(spec, tau, o1);
        const auto e2 = cdf_quadrature(spec, tau, o2);
        const auto e3 = cdf_quadrature(spec, tau, 1e-8);
        EXPECT_NEAR(e1.raw, e2.raw, 10 * 1e-8);
        EXPECT_NEAR(e1.raw, e3.raw, 10 * 1e-8);
    }
}

TEST(Cdf, NegativeOffsetGivesComplement)
{
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -0.5;
    CVector z(2);
    z << 0.3, 0.2;
    const auto spec = decompose({m, z, 0.4});
    QuadratureOptions pos, neg;
    pos.contour = neg.contour = Contour::Fixed;
    pos.beta = 0.5;
    neg.beta = -0.5;
    EXPECT_NEAR(cdf_quadrature(spec, 0.4, pos).value, cdf_quadrature(spec, 0.4, neg).value, 1e-8);
    neg.beta = -1.5; // 1 + beta * 1 < 0
    EXPECT_THROW(cdf_quadrature(spec, 0.4, neg), Error);
}

TEST(Cdf, RawValueStaysInRange)
{
    ComplexNormalSource src(19);
    for (int t = 0; t < 40; ++t)
    {
        const int n = 1 + t % 4;
        const CMatrix a = random_matrix(n, src);
        const CMatrix m = (t % 2) ? CMatrix(a + a.adjoint()) : CMatrix(a * a.adjoint());
        const CVector z = (t % 3 ? 2.0 : 0.2) * src.vector(n);
        const double tau = 2.0 * src().real();
        const auto e = cdf_quadrature(decompose({m, z, tau}), tau, 1e-8);
        EXPECT_GE(e.raw, -1e-7);
        EXPECT_LE(e.raw, 1.0 + 1e-7);
        EXPECT_GE(e.abs_error_bound, 0.0);
        EXPECT_TRUE(e.tolerance_met);
    }
}

TEST(Cdf, SingularMatrixSkipsZeroModes)
{
    // M = diag(1, 0): only the first coordinate matters.
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = 1.0;
    CVector z(2);
    z << 1.0, 5.0;
    const auto e = cdf_quadrature(decompose({m, z, 2.0}), 2.0, 1e-8);
    EXPECT_NEAR(e.value, ncx2_cdf(1.0, 2.0), 1e-7);
}

TEST(Cdf, AgreesWithSampling)
{
    ComplexNormalSource src(23);
    int agree = 0, total = 0;
    for (int t = 0; t < 30; ++t)
    {
        const int n = 1 + t % 4;
        const CMatrix a = random_matrix(n, src);
        const CMatrix m = a + a.adjoint();
        const CVector z = 0.7 * src.vector(n);
        const double tau = src().real();
        const GaussianQuadratic g{m, z, tau};
        const double q = cdf_quadrature(decompose(g), tau, 1e-8).value;
        const long n_samples = 100000;
        const double mc = sample_cdf(g, n_samples, derive_seed(24, t));
        const double se = std::sqrt(std::max(mc * (1.0 - mc), 1e-12) / n_samples);
        agree += std::abs(q - mc) <= 4.0 * se + 1e-12 ? 1 : 0;
        ++total;
    }
    EXPECT_GE(agree, total - 1);
}

TEST(Outage, DeterministicWhenCovarianceVanishes)
{
    const CMatrix h = generate_rayleigh_channels(3, 3, 30);
    std::vector<CMatrix> cov(3, CMatrix::Zero(3, 3));
    const auto inst = ScenarioInstance::make(h, h, cov, RVector::Constant(3, 0.01));
    const auto b = build_zf(h);
    const auto qos = QoSSpec::uniform(3, 2.0, 0.05);
    // p = 0.03 > gamma sigma^2 = 0.02 passes, p = 0.01 fails.
    const PowerAllocation p(RVector::Constant(3, 0.03)), q(RVector::Constant(3, 0.01));
    EXPECT_EQ(outage_probability(build_outage_form(inst, b, p, qos, 0)).value, 1.0);
    EXPECT_EQ(outage_probability(build_outage_form(inst, b, q, qos, 0)).value, 0.0);
    EXPECT_EQ(mc_probability(inst, b, p, qos, 0, 1000, 3).value, 1.0);
    EXPECT_EQ(mc_probability(inst, b, q, qos, 0, 1000, 3).value, 0.0);
}

TEST(Outage, HugeOwnPowerIsAlmostSure)
{
    const auto inst = zf_instance(0.002, 31);
    const auto b = build_zf(inst.est_channels);
    const auto qos = QoSSpec::uniform_db(3, 5.0, 0.05);
    RVector p = RVector::Constant(3, 0.05);
    p(1) = 1e6 * qos.gamma(1) * 0.01;
    EXPECT_GE(outage_probability(build_outage_form(inst, b, PowerAllocation(p), qos, 1)).value, 0.999);
}

TEST(Outage, ZeroPowerNeverSucceeds)
{
    const auto inst = zf_instance(0.002, 32);
    const auto b = build_zf(inst.est_channels);
    const auto qos = QoSSpec::uniform_db(3, 5.0, 0.05);
    RVector p = RVector::Constant(3, 0.05);
    p(0) = 0.0;
    EXPECT_EQ(mc_probability(inst, b, PowerAllocation(p), qos, 0, 10000, 1).value, 0.0);
    EXPECT_LE(outage_probability(build_outage_form(inst, b, PowerAllocation(p), qos, 0)).value, 1e-8);
}

TEST(Outage, MatchesMonteCarloOnZeroForcingInstances)
{
    for (int s = 0; s < 3; ++s)
    {
        const auto inst = zf_instance(0.01, derive_seed(33, s));
        const auto b = build_zf(inst.est_channels);
        const auto qos = QoSSpec::uniform_db(3, 5.0, 0.05);
        const PowerAllocation p(RVector::Constant(3, 0.12));
        for (int k = 0; k < 3; ++k)
        {
            const auto q = outage_probability(build_outage_form(inst, b, p, qos, k));
            const auto mc = mc_probability(inst, b, p, qos, k, 1000000, derive_seed(34, s, k));
            EXPECT_LE(std::abs(q.value - mc.value), 4.0 * std::max(mc.abs_error_bound, 1e-6)) << "trial " << s << " user " << k;
        }
    }
}

TEST(Outage, CalibratedPowerMatchesMonteCarlo)
{
    // Bisect user 0's power until the quadrature says 0.95, then sample.
    const auto inst = zf_instance(0.005, 35);
    const auto b = build_zf(inst.est_channels);
    const auto qos = QoSSpec::uniform_db(3, 5.0, 0.05);
    RVector p = RVector::Constant(3, 0.1);
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 60; ++i)
    {
        p(0) = 0.5 * (lo + hi);
        const double v = outage_probability(build_outage_form(inst, b, PowerAllocation(p), qos, 0)).value;
        (v < 0.95 ? lo : hi) = p(0);
    }
    p(0) = hi;
    const auto mc = mc_probability(inst, b, PowerAllocation(p), qos, 0, 100000, 36);
    EXPECT_NEAR(mc.value, 0.95, 4.0 * mc.abs_error_bound);
}

TEST(Outage, MonotoneInPowers)
{
    int checked = 0;
    for (int s = 0; s < 100; ++s)
    {
        const auto inst = zf_instance(0.004, derive_seed(37, s));
        const auto b = build_rci(inst.est_channels, 0.03);
        const auto qos = QoSSpec::uniform_db(3, 3.0, 0.05);
        const RVector p = RVector::Constant(3, 0.08);
        const int k = s % 3, j = (k + 1) % 3;
        const double base = outage_probability(build_outage_form(inst, b, PowerAllocation(p), qos, k)).value;
        RVector up = p;
        up(k) *= 1.05;
        RVector other = p;
        other(j) *= 1.05;
        EXPECT_GE(outage_probability(build_outage_form(inst, b, PowerAllocation(up), qos, k)).value, base - 1e-8);
        EXPECT_LE(outage_probability(build_outage_form(inst, b, PowerAllocation(other), qos, k)).value, base + 1e-8);
        ++checked;
    }
    EXPECT_EQ(checked, 100);
}

TEST(MonteCarlo, DeterministicUnderSeed)
{
    const auto inst = zf_instance(0.002, 38);
    const auto b = build_zf(inst.est_channels);
    const auto qos = QoSSpec::uniform_db(3, 5.0, 0.05);
    const PowerAllocation p(RVector::Constant(3, 0.035));
    const auto a = mc_probability(inst, b, p, qos, 1, 5000, 99);
    const auto c = mc_probability(inst, b, p, qos, 1, 5000, 99);
    EXPECT_EQ(a.value, c.value);
    EXPECT_EQ(a.method, ProbabilityMethod::MonteCarlo);
    EXPECT_THROW(mc_probability(inst, b, p, qos, 1, 0, 99), Error);
}
