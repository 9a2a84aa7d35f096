//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file carleman.hpp
//! Exponential weight system on the symmetric time window (-T,T): an anchored
//! quadratic phase over the cross-section, the two derived space-time weights,
//! the conjugated operator pair they induce, and an empirical boundedness
//! checker for the weighted energy inequality.
//!
//! Layout: space-time fields are indexed flat * n_levels + j, where flat is
//! the spatial grid index and j runs over interior symmetric time levels
//! t_j = -T + (j+1) dt, j = 0 .. 2 nt - 4 (the endpoint levels t = -T, T are
//! excluded because both weights blow up there).
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <span>
#include <vector>

#include "common.hpp"
#include "detail/stencils.hpp"
#include "geometry.hpp"

namespace wgstab
{

//! Separable weight tables: spatial factors per cross-section node, time
//! factor 1/((T+t)(T-t)) formed on demand. All derivatives are analytic, so
//! no stencil error enters the inequality margins.
struct SchrodingerWeights
{
    std::array<double, 2> anchor{}; //!< phase anchor, outside the section
    double r = 0;                   //!< margin factor > 1 defining K
    double lambda = 0;
    double K = 0;          //!< r * sup of the quadratic phase
    double horizon = 0;    //!< T
    double dt = 0;
    int n_onesided = 0;    //!< time levels of the one-sided grid (0..T)
    int n_levels = 0;      //!< interior symmetric levels, 2 n_onesided - 3
    double e2lk = 0;       //!< e^{2 lambda K}
    double beta_tilde_sup = 0; //!< continuum sup of the quadratic phase
    double eta_t0_sup = 0;     //!< max over nodes of eta(., 0)
    double min_eta_numerator = 0;

    std::vector<double> beta_tilde;       //!< |x' - anchor|^2 per node
    std::vector<double> exp_lambda_beta;  //!< e^{lambda (beta_tilde + K)}
    std::vector<std::array<double, 2>> grad_beta_tilde; //!< 2 (x' - anchor)
    std::vector<double> grad_bt_norm2;
    double lap_beta_tilde = 0; //!< 2 * dim, exact for the quadratic phase

    double time_of(int j) const { return dt * (j + 2 - n_onesided); }
    double gfactor(int j) const
    {
        const double t = time_of(j);
        return 1.0 / ((horizon + t) * (horizon - t));
    }
    double phi(int node, int j) const
    {
        return exp_lambda_beta[node] * gfactor(j);
    }
    double eta(int node, int j) const
    {
        return (e2lk - exp_lambda_beta[node]) * gfactor(j);
    }
    double dt_eta(int node, int j) const
    {
        const double g = gfactor(j);
        return (e2lk - exp_lambda_beta[node]) * 2.0 * time_of(j) * g * g;
    }
    std::array<double, 2> grad_eta(int node, int j) const
    {
        const double c = -lambda * exp_lambda_beta[node] * gfactor(j);
        return {c * grad_beta_tilde[node][0], c * grad_beta_tilde[node][1]};
    }
    double grad_eta_norm2(int node, int j) const
    {
        const double c = lambda * exp_lambda_beta[node] * gfactor(j);
        return c * c * grad_bt_norm2[node];
    }
    double lap_eta(int node, int j) const
    {
        return -(lambda * lap_beta_tilde + lambda * lambda * grad_bt_norm2[node])
               * exp_lambda_beta[node] * gfactor(j);
    }
};

// SpaceTimeField and st_index come from detail/stencils.hpp; fields over the
// symmetric window use the layout described above.

//! Tabulates the weight system and verifies its structural sign properties
//! (both weights positive, the decaying weight minimized at t = 0, its t = 0
//! sup below e^{2 lambda K} / T^2).
//! Rejects an anchor inside the section closure and a lambda so large that
//! e^{2 lambda K} leaves the floating range.
SchrodingerWeights eval_schrodinger_weights(const Grid& grid,
                                            std::array<double, 2> anchor,
                                            double r,
                                            double lambda);

//! Geometric lambda ladder {1,2,4,8} rescaled so max(lambda) * K <= 40.
std::vector<double> default_lambda_grid(double K);

//! The symmetric part M1 = i d_t + Laplace + s^2 |grad eta|^2 and the
//! antisymmetric part M2 = i s (d_t eta) + 2 s grad eta . grad + s (Laplace
//! eta) of the conjugation of -i d_t - Laplace by e^{s eta}, applied with
//! centered stencils, plus the defect of the conjugation identity
//! (M1 + M2) w + e^{-s eta} (-i d_t - Laplace)(e^{s eta} w), which vanishes
//! to second stencil order.
struct ConjugatedApplication
{
    SpaceTimeField m1, m2, residual;
    double residual_l2 = 0; //!< discrete L2 norm of the identity defect
};

ConjugatedApplication apply_conjugated_pair(const Grid& grid,
                                            const SpaceTimeField& w,
                                            const SchrodingerWeights& weights,
                                            double s);

//! One parameter value of the weighted inequality probe. Left side: weighted
//! gradient and value terms over the deep-interior region plus both conjugated
//! operator terms; right side: the weighted equation term over the whole
//! domain plus gradient/value terms over the transition ring between the
//! second and third collars.
struct WeightedRatioRow
{
    double s = 0;
    double lhs_grad = 0, lhs_val = 0, lhs_m1 = 0, lhs_m2 = 0, lhs = 0;
    double rhs_op = 0, rhs_ring_grad = 0, rhs_ring_val = 0, rhs = 0;
    double ratio = 0;
    bool degenerate = false;          //!< both sides vanish
    bool violation_candidate = false; //!< right side 0 with nonzero left side
};

//! Flattest decade of a ratio sweep: the window [s, 10 s] minimizing the
//! max/min ratio spread. begin/end are row indices, spread is that minimum,
//! s0 the window's left edge. begin = -1 when no full decade exists.
struct FlattestDecade
{
    int begin = -1, end = -1;
    double spread = 0;
    double s0 = 0;
};

FlattestDecade find_flattest_decade(std::span<const double> s,
                                    std::span<const double> ratio);

struct WeightedRatioTable
{
    std::vector<WeightedRatioRow> rows;
    FlattestDecade flattest;
};

//! Evaluates the weighted inequality sides for each s. The probe asserts
//! nothing itself; callers judge boundedness from the flattest decade.
WeightedRatioTable carleman_ratio_schrodinger(const Grid& grid,
                                              const NestedSubdomains& ns,
                                              const SpaceTimeField& w,
                                              const SchrodingerWeights& weights,
                                              std::span<const double> s_values);

//! Max over y in [0, y_max] (step 1e-3) of (1 - e^{-y^{2m}}) / y^order,
//! reported separately for y <= 1 and y >= 1. Both stay at or below 1
//! whenever 2m >= order.
struct SaturationScan
{
    double max_ratio_below_1 = 0;
    double max_ratio_above_1 = 0;
};

SaturationScan scan_saturation_inequality(int m, int order, double y_max = 10.0);

} // namespace wgstab
