//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file parabolic.hpp
//! Weight system for the parabolic estimate on the collar domain: the
//! generating profile on the widest collar, the singular-in-time weight pair,
//! the conjugated first/second order operator split with its energy identity,
//! node-wise bound scans for the weight derivative family, and the weighted
//! inequality ratio probe with a lateral boundary trace term.
//!
//! Layout: transformed-time fields are indexed st_index(flat, k, n_levels)
//! where k runs over the interior levels tau_k = -1 + (k+1)*dtau of the
//! window (-1,1); both endpoints, where the weights are singular, are off the
//! lattice. The cross-section carrier of every parabolic object is the widest
//! collar: wall boundary nodes and the inner Dirichlet band hold boundary
//! data, the nodes between them hold unknowns.
//---------------------------------------------------------------------------//
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "carleman.hpp"
#include "common.hpp"
#include "detail/stencils.hpp"
#include "geometry.hpp"
#include "potentials.hpp"

namespace wgstab
{

//! Symmetric lattice of interior levels on the transformed-time window
//! (-1,1); endpoints excluded. tau = 0 is required to be a lattice level so
//! evenness checks can compare mirror levels bitwise.
struct TauGrid
{
    double dtau = 0;
    int n_levels = 0;

    double tau_of(int k) const { return dtau * (k + 1) - 1.0; }
};

//! Requires 1/dtau to be an integer >= 3 (so the window divides evenly and
//! tau = 0 lands on the lattice).
TauGrid build_tau_grid(double dtau);

//! Nodes carrying parabolic unknowns: inside the widest collar and off the
//! inner Dirichlet band.
std::vector<char> collar_unknown_mask(const CrossSection& cs,
                                      const NestedSubdomains& ns);

//! Closure carrier of the collar domain: unknown nodes, the inner band, and
//! the wall boundary nodes.
std::vector<char> collar_closure_mask(const CrossSection& cs,
                                      const NestedSubdomains& ns);

//! Generating profile on the widest collar. When the observed strip covers
//! the whole wall an explicit quadratic profile is used and `quadratic` is
//! set: `hess` then holds its constant Hessian (xx, xy, yy) and `grad` is
//! analytic. Otherwise the profile is a discrete harmonic extension of a
//! positive hump on the observed wall arc, with finite-difference gradients.
struct Psi0Field
{
    std::vector<char> member;  //!< closure carrier (see collar_closure_mask)
    std::vector<double> value; //!< profile value; 0 off the carrier
    std::vector<std::array<double, 2>> grad;
    std::array<double, 3> hess{}; //!< constant Hessian when quadratic
    bool quadratic = false;
    double sup = 0;           //!< continuum sup when quadratic, lattice max else
    double min_grad_norm = 0; //!< min |grad| over the carrier
    int n_member = 0;
};

//! Builds the profile for the collar domain and verifies its defining
//! conditions, throwing with the violating node set on failure. The explicit
//! quadratic path requires the strip to cover the whole wall; 1-D sections
//! with an unobserved wall point are rejected outright (no profile can rise
//! from the inner zero level and also fall toward that wall with a
//! nowhere-vanishing slope).
Psi0Field construct_psi0(const CrossSection& cs,
                         const NestedSubdomains& ns,
                         const StripSpec& strip);

//! Node-wise verification of the four profile conditions: positivity on the
//! unknown region, nowhere-vanishing gradient on the carrier, vanishing on
//! the inner band, and non-positive outward wall derivative off the observed
//! strip. Throws listing per-condition counts and sample nodes.
void verify_psi0(const CrossSection& cs,
                 const NestedSubdomains& ns,
                 const StripSpec& strip,
                 const Psi0Field& f);

//! Default offsets {1.2, 1.3} * sup; the admissible chain
//! sup < a < b < 2a - sup then holds for any sup > 0.
std::pair<double, double> default_weight_offsets(double psi_sup);

//! Tabulated weight family on the collar. Everything is generated by
//! E = e^{lambda (psi0 + a)} per node and the time factor 1/ell(tau) with
//! ell(tau) = (1 - tau)(1 + tau):
//!   phi0  = E / ell                        (positive, singular at tau = +-1)
//!   alpha = (E - k_top) / ell              (negative on the open region)
//! with k_top = e^{lambda (sup + b)}. Cross-section derivatives of alpha are
//! E-derivatives over ell; time derivatives are analytic in tau. On the
//! quadratic profile the E-derivative tables are closed-form; otherwise they
//! are finite differences with per-node available depth recorded.
//!
//! Staircase caveat: wall boundary nodes of a curved section can overhang the
//! continuum shape by up to half a spacing, so the profile there may slightly
//! exceed `sup` and alpha may turn slightly positive at such nodes; the
//! negativity property is asserted over interior nodes, and consumers guard
//! sigma * max alpha before exponentiating.
struct ParabolicWeights
{
    double lambda = 0, a_w = 0, b_w = 0;
    double psi_sup = 0;
    double k_top = 0;
    TauGrid tau;
    Psi0Field psi0;

    std::vector<double> E;
    std::vector<std::array<double, 2>> gradE;
    std::vector<std::array<double, 3>> hessE; //!< xx, xy, yy
    std::vector<double> lapE;
    std::vector<double> bilapE;
    //! 0: value only; 1: through second order; 2: through fourth order.
    std::vector<char> deriv_depth;

    static double ell(double t) { return (1.0 - t) * (1.0 + t); }

    double phi0_at(int node, double t) const { return E[node] / ell(t); }
    double alpha_at(int node, double t) const
    {
        return (E[node] - k_top) / ell(t);
    }
    double dtau_alpha_at(int node, double t) const
    {
        const double g = 1.0 / ell(t);
        return (E[node] - k_top) * 2.0 * t * g * g;
    }
    double dtau2_alpha_at(int node, double t) const
    {
        const double g = 1.0 / ell(t);
        return (E[node] - k_top) * (2.0 * g * g + 8.0 * t * t * g * g * g);
    }
    std::array<double, 2> grad_alpha_at(int node, double t) const
    {
        const double g = 1.0 / ell(t);
        return {gradE[node][0] * g, gradE[node][1] * g};
    }
    double grad_alpha_norm2_at(int node, double t) const
    {
        const double g = 1.0 / ell(t);
        const auto& ge = gradE[node];
        return (ge[0] * ge[0] + ge[1] * ge[1]) * g * g;
    }
    double lap_alpha_at(int node, double t) const
    {
        return lapE[node] / ell(t);
    }

    double phi0(int node, int k) const { return phi0_at(node, tau.tau_of(k)); }
    double alpha(int node, int k) const
    {
        return alpha_at(node, tau.tau_of(k));
    }
};

//! Requires lambda > 0 and the offset chain sup < a < b < 2a - sup.
ParabolicWeights eval_parabolic_weights(const CrossSection& cs,
                                        const Psi0Field& psi0,
                                        double lambda,
                                        double a_w,
                                        double b_w,
                                        const TauGrid& tau);

//! Collar sub-regions and margins used by the localisation argument: the
//! profile floor over the mid-collar ring fixes beta0, the inner sleeve
//! where the profile stays below beta0 carries the commutator source, and
//! the window half-width epsilon is the smallest on a fixed ladder for which
//! the ring weight clears the sleeve margin.
struct RegionSelection
{
    double beta0 = 0;  //!< half the profile minimum over the mid-collar ring
    std::vector<char> sleeve; //!< profile <= beta0, outside the second collar
    int sleeve_count = 0;
    double mu1 = 0;    //!< k_top - e^{lambda (beta0 + a)}
    double epsilon = 0;
    double mu2 = 0;    //!< -min alpha over ring x (-epsilon, epsilon)
    double alpha_max_on_sleeve = 0; //!< asserted <= -mu1
};

RegionSelection select_regions(const ParabolicWeights& wt,
                               const NestedSubdomains& ns);

//! Empirical constants for the weight derivative bound family at one lambda.
//! Minima (a1, a6) must stay positive / bounded below; maxima (a2..a5) are
//! the smallest admissible c'-type constants. Ratios are against the stated
//! lambda-power times the matching phi0-power.
struct LemmaA1Row
{
    double lambda = 0;
    double c_a1 = 0;   //!< min D2a(grad a, grad a) / (l^4 phi0^3)
    double cp_a2 = 0;  //!< max |lap' a| / (l^2 phi0^2)
    double cp_a2b = 0; //!< max |lap'^2 a| / (l^4 phi0^3)
    double cp_a3 = 0;  //!< max |(dtau a)(lap' a)| / (l^2 phi0^3)
    double cp_a4 = 0;  //!< max |dtau^2 a| / phi0^3
    double cp_a5 = 0;  //!< max |grad'(dtau a) . grad' a| / (l^2 phi0^3)
    double c_a6 = 0;   //!< min over unit xi of D2a(xi, xi) / (l phi0)
    int excluded_second = 0; //!< scan nodes lacking second-order tables
    int excluded_fourth = 0; //!< scan nodes lacking fourth-order tables
};

struct LemmaA1Report
{
    std::vector<LemmaA1Row> rows;
    //! Smallest grid lambda from which every larger grid lambda has a
    //! positive a1 floor; NaN when the grid never stabilises.
    double lambda0 = 0;
    double tau_window = 0;
    int n_tau_samples = 0;
};

//! Rebuilds the derivative tables of `wt` at each requested lambda (offsets
//! and profile unchanged) and scans nodes x uniform tau samples in
//! [-tau_window, tau_window]. The direction set for the coercivity floor is
//! the coordinate axes plus `n_xi` seeded unit vectors.
LemmaA1Report lemma_A1_scan(const CrossSection& cs,
                            const ParabolicWeights& wt,
                            const NestedSubdomains& ns,
                            std::span<const double> lambdas,
                            double tau_window = 0.99,
                            int n_tau_samples = 201,
                            int n_xi = 64,
                            std::uint64_t seed = 20260822u);

//! Residuals of the conjugated split. residual_identity measures the
//! defect of the product-rule identity relating the split applied to
//! z = e^{sigma alpha} w against the weighted free operator of w (second
//! order in the spacings); residual_parallelogram is the algebraic
//! parallelogram defect with the consistently formed right side (float noise
//! only). Norms are discrete L2 over the integrated window.
struct ParabolicIdentityReport
{
    double residual_identity = 0;
    double residual_parallelogram = 0;
    double g_norm = 0;     //!< scale reference
    double tau_window = 0; //!< |tau| <= this was integrated
    int n_nodes = 0;       //!< space-time points integrated
};

//! Requires w to vanish off the unknown region (lateral wall, inner band,
//! axial caps): the split reads one-sided zeros there.
ParabolicIdentityReport energy_identity_check(const Grid& grid,
                                              const SpaceTimeField& w,
                                              const ParabolicWeights& wt,
                                              const NestedSubdomains& ns,
                                              double sigma,
                                              double h);

//! One row of the weighted inequality probe at a fixed sigma.
struct ParabolicRatioRow
{
    double sigma = 0;
    double lhs_grad = 0;     //!< sigma   * || e^{sa} grad' w ||^2
    double lhs_val = 0;      //!< sigma^3 * || e^{sa} w ||^2
    double lhs = 0;
    double rhs_op = 0;       //!< || e^{sa} (h^{-1} d_tau - Lap + p1) w ||^2
    double rhs_boundary = 0; //!< sigma * || phi0^{1/2} e^{sa} dn w ||^2 strip
    double rhs = 0;
    double ratio = 0;
    bool degenerate = false;
    bool violation_candidate = false;
};

struct ParabolicRatioTable
{
    std::vector<ParabolicRatioRow> rows;
    FlattestDecade flattest;
    double tau_window = 0;
    int n_op_nodes = 0;       //!< spatial nodes in the operator sum
    int n_boundary_nodes = 0; //!< strip nodes in the trace sum
};

//! The operator term is accumulated where the full stencil stays inside the
//! tabulated closure; the outermost ring rows belong to the boundary trace
//! functional. The state may carry nonzero wall values (a free-space solution
//! probing the boundary term); overflow of sigma * alpha at overhanging wall
//! nodes is guarded.
ParabolicRatioTable carleman_ratio_parabolic(const Grid& grid,
                                             const SpaceTimeField& w,
                                             const ParabolicWeights& wt,
                                             const NestedSubdomains& ns,
                                             std::span<const double> sigmas,
                                             double h,
                                             const ObservationStrip& strip,
                                             const ScalarField* p1 = nullptr);

} // namespace wgstab
