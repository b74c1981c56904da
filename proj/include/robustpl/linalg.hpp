// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------

#ifndef ROBUSTPL_LINALG_HPP
#define ROBUSTPL_LINALG_HPP

#include "types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace robustpl
{

// Eigen-pairs of a Hermitian matrix with eigenvalues in descending order.
struct HermitianEigen
{
    RVector values;  // lambda_1 >= lambda_2 >= ...
    CMatrix vectors; // column m belongs to values(m)
};

inline HermitianEigen hermitian_eigen(const CMatrix &m, bool with_vectors = true)
{
    const CMatrix sym = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(sym, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    HermitianEigen out;
    out.values = solver.eigenvalues().reverse();
    if (with_vectors)
        out.vectors = solver.eigenvectors().rowwise().reverse();
    return out;
}

inline double hermitian_defect(const CMatrix &m)
{
    if (m.size() == 0)
        return 0.0;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// Threshold below which an eigenvalue is treated as an exact zero mode.
inline double zero_eigen_threshold(const RVector &values)
{
    if (values.size() == 0)
        return 0.0;
    return 1e-12 * values.cwiseAbs().maxCoeff();
}

// Principal square root of a Hermitian PSD matrix; negative eigenvalues clamped to 0.
inline CMatrix psd_sqrt(const CMatrix &c)
{
    const auto eig = hermitian_eigen(c);
    RVector s = eig.values.cwiseMax(0.0).cwiseSqrt();
    return eig.vectors * s.asDiagonal() * eig.vectors.adjoint();
}

// Pseudo-inverse square root: eigenvalues below 1e-12 * lambda_max are dropped.
inline CMatrix psd_pinv_sqrt(const CMatrix &c)
{
    const auto eig = hermitian_eigen(c);
    const double lmax = eig.values.size() ? std::max(eig.values.maxCoeff(), 0.0) : 0.0;
    RVector s(eig.values.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
    {
        const double l = eig.values(i);
        s(i) = (lmax > 0.0 && l > 1e-12 * lmax) ? 1.0 / std::sqrt(l) : 0.0;
    }
    return eig.vectors * s.asDiagonal() * eig.vectors.adjoint();
}

} // namespace robustpl

#endif
