// SPDX-License-Identifier: Apache-2.0
//
// robustpl: outage-constrained robust power loading for the MU-MISO downlink
// ------------------------------------------------------------------------

#ifndef ROBUSTPL_TYPES_HPP
#define ROBUSTPL_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace robustpl
{

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

enum class ErrorCode
{
    InvalidArgument,
    SingularChannel,
    SingularSystem,
    Diverged,
    ToleranceNotMet,
    DegenerateSpectrum,
    ApproximationInapplicable,
    NonpositiveDenominator,
    EmptyIntersection,
    Io
};

inline const char *to_string(ErrorCode code)
{
    switch (code)
    {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularChannel: return "SingularChannel";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::ApproximationInapplicable: return "ApproximationInapplicable";
    case ErrorCode::NonpositiveDenominator: return "NonpositiveDenominator";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

// All library failures are reported through this exception type; the code
// lets callers fall back (e.g. residue -> quadrature) without string matching.
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

} // namespace robustpl

#endif
