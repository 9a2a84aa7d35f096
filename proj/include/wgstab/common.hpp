//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file common.hpp
//! Small shared numerics: the axial bracket weight, regression and rank
//! statistics used by the fit-based checkers, deterministic hashing, and a
//! minimal index-deterministic parallel loop.
//---------------------------------------------------------------------------//
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace wgstab
{

inline constexpr double pi = 3.14159265358979323846;
using cplx = std::complex<double>;

//! <s> = sqrt(1 + s^2); smooth axial weight, >= 1 everywhere, ~|s| at infinity.
inline double bracket(double s)
{
    return std::sqrt(1.0 + s * s);
}

//! Least-squares line y ~ slope*x + intercept.
struct LinearFit
{
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

//! Fit log(y) ~ slope*log(x) + c; all y must be positive.
LinearFit fit_loglog(std::span<const double> x, std::span<const double> y);

//! Spearman rank correlation; ties resolved by average rank.
double spearman(std::span<const double> x, std::span<const double> y);

//! FNV-1a 64-bit hash; stable across platforms, used for config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

//! Shortest stable decimal form used by every CSV writer (%.17g).
std::string fmt_g17(double v);

//! Runs fn(i) for i in [0,n) on up to `jobs` threads; results must be written
//! by index so output is independent of scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

//! Trapezoid weight for node i of a uniform m-point axis (endpoints half).
inline double trapezoid_weight(int i, int m)
{
    return (i == 0 || i == m - 1) ? 0.5 : 1.0;
}

//! Throwing helper keeping precondition failures uniform.
inline void require(bool ok, const std::string& msg)
{
    if (!ok)
        throw std::invalid_argument(msg);
}

} // namespace wgstab
