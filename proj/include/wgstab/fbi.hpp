//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file fbi.hpp
//! Localizing transform bridging the time-dependent dispersive problem and
//! the parabolic estimate: a super-Gaussian-spectrum kernel holomorphic in
//! the whole plane, a compactly supported time cutoff with exact plateau,
//! the partial transform of trajectories into fields on the transformed-time
//! window, and checkers for the kernel's growth/decay envelopes, the
//! transformed equation's residual, the smoothing-error rate in the spectral
//! parameter, and the analytic mean-value inequality on time discs.
//!
//! Conventions: the transform evaluation point is z = t - i tau with t in
//! (-T0, T0) and tau in (-1, 1); the compressed physical time is h eta with
//! h = T / (3 T0), so the eta-quadrature over the cutoff support |eta| <=
//! 3 T0 reads the trajectory exactly on (-T, T). Transformed fields reuse
//! the parabolic layout st_index(flat, k, n_levels) over the interior tau
//! lattice.
//---------------------------------------------------------------------------//
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "common.hpp"
#include "detail/stencils.hpp"
#include "geometry.hpp"
#include "parabolic.hpp"
#include "potentials.hpp"

namespace wgstab
{

//! Scalar complex signal of one real (compressed-time) variable.
using TimeSignal = std::function<cplx(double)>;

//! Trajectory sample at (flattened spatial node, physical time).
using TrajectorySource = std::function<cplx(int, double)>;

//! Smallest m with 2m >= n_derivs and 1 - 1/(2m) > mu.
int default_fbi_m(double mu, int n_derivs);

//! Entire kernel with super-Gaussian spectrum e^{-(eta/gamma^rho)^{2m}},
//! normalized so its spectrum at frequency zero is 1 (unit mass on the real
//! axis). Evaluation is a trapezoid quadrature in the scaled spectral
//! variable xi = eta / gamma^rho over |xi| <= xi_half with spacing dxi;
//! symmetric xi pairs are summed together, so values on the real axis are
//! exactly real and even. For points with large |Im z| the effective
//! integrand shifts its mass toward one end; evaluation extends the range
//! per call until the endpoint magnitude is negligible, and `widened`
//! records whether the tabulation rectangle ever needed more than the base
//! range.
struct FbiKernel
{
    double gamma = 0;
    int m = 0;
    double rho = 0; //!< 1 - 1/(2m)
    double mu = 0;  //!< configured rate exponent, < rho

    double xi_half = 6.0;
    double dxi = 1.0 / 64.0;
    bool widened = false;
    double xi_half_used = 6.0; //!< largest half-range any table entry needed

    std::vector<double> re; //!< tabulation abscissae, Re z
    std::vector<double> im; //!< tabulation ordinates, Im z
    std::vector<cplx> table; //!< [i_re * im.size() + i_im]

    double scale() const; //!< gamma^rho
    cplx eval(cplx z) const;
    //! Spectrum e^{-(|zeta|/gamma^rho)^{2m}}.
    double fhat(double zeta) const;
    cplx at(int i_re, int i_im) const
    {
        return table[static_cast<std::size_t>(i_re) * im.size() + i_im];
    }
};

//! Requires gamma > 1, m >= 1, and 1 - 1/(2m) > mu. The kernel is tabulated
//! at the tensor grid re_grid x im_grid (either may be a single value).
FbiKernel eval_kernel(double gamma,
                      int m,
                      std::span<const double> re_grid,
                      std::span<const double> im_grid,
                      double mu = 0.5);

//! Trapezoid mass of the kernel over [-half_width, half_width] on the real
//! axis; 1 up to the spectral tail for adequate width and spacing.
double kernel_real_mass(const FbiKernel& k, double half_width, int n_points);

//! Empirical envelope constants of the kernel on its tabulation rectangle.
//! The peak constant C1 is the real-axis maximum over gamma^rho. The growth
//! constant C2 is the tightest node-wise ratio of log(|F|/(C1 gamma^rho))
//! against gamma |Im z|^{1/rho}; the cone decay constant C3_cone is the
//! tightest node-wise ratio of -log(|F|/(C1 gamma^rho)) against
//! gamma |Re z|^{1/rho} over nodes with |Im z| <= C4 |Re z|. The saddle of
//! exp(izh - (h/gamma^rho)^{2m}) decays only while arg(iz) stays within
//! pi rho / 2 of the imaginary axis, so the half-slope must satisfy
//! C4 < tan(pi / (4m)): any slope below 1 works for the quadratic kernel,
//! while the quartic kernel needs C4 < tan(pi/8) ~ 0.414. C3_axis and
//! decay_power come from least squares through the real-axis envelope
//! crests (oscillation valleys only strengthen the decay bound and are
//! skipped). Ratios are formed only where the comparison scale
//! x = gamma |.|^{1/rho} is at least x_min; raising x_min excludes the
//! transition region near the peak, where the bound is carried by its
//! prefactor rather than the exponent, and tightens the fitted rates.
struct KernelBoundReport
{
    double C1 = 0;
    double C2 = 0;
    double C3_cone = 0;
    double C3_axis = 0;
    double C4 = 0;
    double decay_power = 0; //!< fitted |Re z| exponent, 1/rho when clean
    double decay_r2 = 0;
    double growth_margin = 0; //!< min over nodes of bound - log|F|
    double decay_margin = 0;
    bool growth_fit_ok = true;
    bool decay_fit_ok = true;
    int n_growth_nodes = 0;
    int n_cone_nodes = 0;
};

KernelBoundReport verify_kernel_bounds(const FbiKernel& k,
                                       double C4 = 0.5,
                                       double x_min = 1.0);

//! Cutoff in compressed time: exactly 1 on |eta| <= 2 T0, exactly 0 on
//! |eta| >= 3 T0, glued by the standard e^{-1/x} transition in between, so
//! the derivative is supported in the annulus 2 T0 <= |eta| <= 3 T0.
struct TimeCutoff
{
    double T = 0;  //!< physical horizon
    double T0 = 0; //!< > T/3
    double h = 0;  //!< T / (3 T0), in (0, 1)

    double theta(double eta) const;
    double dtheta(double eta) const;
};

//! Requires T > 0 and T0 > T/3.
TimeCutoff build_time_cutoff(double T, double T0);

//! Default spacing of the eta-quadrature for transform evaluation: fine
//! enough that the kernel spectrum (supported up to a few gamma^rho) and a
//! moderate signal bandwidth both sit below the lattice Nyquist frequency.
double default_eta_spacing(const FbiKernel& k, const TimeCutoff& cut);

//! Transform of one trajectory at a single evaluation time t over the tau
//! lattice: field[st_index(f, k, tau.n_levels)] =
//! sum_j c_j F((t - i tau_k) - eta_j) theta(eta_j) w(f, h eta_j) with
//! trapezoid weights c_j on |eta| <= 3 T0. Requires |t| < T0. deta = 0
//! selects the default spacing; the lattice is snapped so the endpoints
//! land exactly on +-3 T0 where the cutoff vanishes.
SpaceTimeField partial_fbi(const TrajectorySource& w,
                           int n_space,
                           const FbiKernel& k,
                           const TimeCutoff& cut,
                           double t,
                           const TauGrid& tau,
                           double deta = 0);

//! Transform slices over a grid of evaluation times; slice[j] is laid out
//! like any other space-time field over the tau lattice.
struct FbiField
{
    std::vector<double> t;
    TauGrid tau;
    double h = 0;
    double T0 = 0;
    int n_space = 0;
    std::vector<SpaceTimeField> slice;
};

FbiField build_fbi_field(const TrajectorySource& w,
                         int n_space,
                         const FbiKernel& k,
                         const TimeCutoff& cut,
                         std::span<const double> t_grid,
                         const TauGrid& tau,
                         double deta = 0);

//! Residual of the transformed equation for w = chi v: measures
//! (h^{-1} d_tau - Lap + p1) w_{g,t} - A - B at full-stencil interior
//! space-time nodes, where A is minus the cross-section commutator
//! [Lap', chi] applied to the transform of v and B is the cutoff-derivative
//! quadrature -i h^{-1} sum F((t - i tau) - eta) theta'(eta) chi v(h eta).
//! When v solves the dispersive equation with potential p1 the residual is
//! second order in the spatial and tau spacings. chi == 1 collapses A to
//! exact zeros. Norms only count levels with |tau| <= tau_max, so a
//! refinement pair with different tau spacings can be compared over one
//! fixed band instead of letting the finer grid reach deeper into the
//! strip, where the transform grows.
struct FbiResidualReport
{
    double res_norm = 0;
    double lhs_norm = 0; //!< scale reference
    double a_norm = 0;
    double b_norm = 0;
    double a_max = 0; //!< max node |A|; exactly 0 for chi == 1
    int n_nodes = 0;
};

//! The cross-section cutoff chi must be admissible for the collar split: in
//! [0, 1] everywhere and exactly 1 on the wall boundary and on the second
//! collar region, so it can only dip in the shell between the second collar
//! and the inner band (or deeper); anything else is rejected. p1 may be
//! null (free evolution).
FbiResidualReport parabolic_residual(const Grid& grid,
                                     const NestedSubdomains& ns,
                                     const ScalarField& chi,
                                     const TrajectorySource& v,
                                     const ScalarField* p1,
                                     const FbiKernel& k,
                                     const TimeCutoff& cut,
                                     double t,
                                     const TauGrid& tau,
                                     double deta = 0,
                                     double tau_max = 1.0);

//! Attenuation of a single lattice mode e^{i zeta0 eta} under periodic
//! discrete convolution with the kernel on [-L, L) with n samples; equals
//! 1 - e^{-(zeta0/gamma^rho)^{2m}} up to spectral aliasing. zeta0 is
//! snapped to the nearest lattice frequency 2 pi k / (2 L).
double mode_attenuation(
    double gamma, int m, double mu, double zeta0, double L, int n);

//! One spectral parameter of the smoothing-error sweep.
struct RateRow
{
    double gamma = 0;
    double err_time = 0; //!< || theta w~ - F * (theta w~) || by quadrature
    double err_freq = 0; //!< same norm through the spectral factor
};

struct RateReport
{
    std::vector<RateRow> rows;
    double slope = 0; //!< log err vs log gamma
    double r2 = 0;
    double plancherel_gap = 0; //!< max |err_time - err_freq|
    double signal_norm = 0;
};

//! Smoothing error of the cutoff signal across a gamma sweep on the uniform
//! periodic lattice of n samples over [-L, L). The time route convolves
//! with the sampled kernel; the frequency route applies the factor
//! 1 - e^{-(zeta/gamma^rho)^{2m}} mode-wise; both norms and their gap are
//! reported, then the decay slope in gamma is fitted. Requires n >= 64
//! (shorter signals cannot carry the spectral estimate) and L > 3 T0 plus
//! room for the convolution tails.
RateReport approximation_rate(const TimeSignal& wtilde,
                              const TimeCutoff& cut,
                              std::span<const double> gammas,
                              int m,
                              double mu,
                              double L,
                              int n);

//! Mean-value inequality of the squared field on time discs: for each
//! requested center kappa in (-T0/2, T0/2) and each listed spatial node,
//! |w(x, kappa)|^2 is compared against the polar average
//! (2 pi eps)^{-1} int_0^eps int_0^{2pi} |w(x, kappa + r e^{i phi})|^2,
//! sampled by midpoint radii x uniform angles through bilinear
//! interpolation of the field table. Constants give exact equality; an
//! analytic field keeps the average at or above the center value up to
//! interpolation error.
struct DiscAverageReport
{
    double min_margin = 0;        //!< min over (x, kappa) of average - center
    double max_rel_violation = 0; //!< max (center - average) / scale, <= tol
    double scale = 0;             //!< max center value seen
    int n_checked = 0;
    bool saturated = false; //!< every average equalled its center to rounding
};

//! Requires eps > 0, the disc to fit inside the tabulated rectangle
//! ([kappa - eps, kappa + eps] within the t range and eps within the tau
//! range), and every kappa inside (-T0/2, T0/2).
DiscAverageReport cauchy_disc_average(const FbiField& field,
                                      std::span<const int> flats,
                                      double eps,
                                      std::span<const double> kappas,
                                      int n_rho = 8,
                                      int n_phi = 16);

} // namespace wgstab
