//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file carleman.cpp
//! Weight tabulation, conjugated operator pair, and the weighted-inequality
//! ratio probe for the time-symmetric evolution estimate.
//---------------------------------------------------------------------------//
#include "wgstab/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace wgstab
{

namespace
{

//! M1 v and M2 v at one space-time point.
struct OpEval
{
    cplx m1, m2;
};

OpEval eval_pair(const detail::StencilCtx& c,
                 const SchrodingerWeights& wt,
                 const SpaceTimeField& v,
                 double s,
                 int f,
                 int j)
{
    const int node = c.grid.cs_node_of(f);
    const cplx vv = v[st_index(f, j, c.n_levels)];
    const cplx dtv = detail::time_derivative(c, v, f, j);
    const cplx lap = detail::laplacian(c, v, f, j);
    const auto gv = detail::cs_gradient(c, v, f, j);
    const auto ge = wt.grad_eta(node, j);

    OpEval out;
    out.m1 = cplx(0, 1) * dtv + lap + (s * s * wt.grad_eta_norm2(node, j)) * vv;
    out.m2 = cplx(0, s * wt.dt_eta(node, j)) * vv
             + 2.0 * s * (ge[0] * gv[0] + ge[1] * gv[1])
             + s * wt.lap_eta(node, j) * vv;
    return out;
}

//! The unconjugated evolution operator -i d_t - Laplace.
cplx eval_free(const detail::StencilCtx& c, const SpaceTimeField& v, int f, int j)
{
    return -(cplx(0, 1) * detail::time_derivative(c, v, f, j)) - detail::laplacian(c, v, f, j);
}

void require_interior_support(const Grid& grid,
                              const SpaceTimeField& w,
                              int n_levels)
{
    for (int f = 0; f < grid.n_spatial(); ++f)
    {
        if (grid.is_interior(f))
            continue;
        for (int j = 0; j < n_levels; ++j)
            require(detail::is_zero(w[st_index(f, j, n_levels)]),
                    "conjugated operators need a state vanishing on the"
                    " lateral wall and caps");
    }
}

} // namespace

SchrodingerWeights eval_schrodinger_weights(const Grid& grid,
                                            std::array<double, 2> anchor,
                                            double r,
                                            double lambda)
{
    const auto& cs = grid.cross_section();
    require(r > 1.0, "margin factor r must exceed 1");
    require(lambda > 0.0, "lambda must be positive");
    require(cs.wall_distance(anchor) < 0.0,
            "anchor point must lie strictly outside the cross-section closure");
    require(grid.n_time() >= 3, "need at least three time levels");

    SchrodingerWeights wt;
    wt.anchor = anchor;
    wt.r = r;
    wt.lambda = lambda;
    wt.horizon = grid.horizon();
    wt.dt = grid.dt();
    wt.n_onesided = grid.n_time();
    wt.n_levels = 2 * grid.n_time() - 3;

    const int n = cs.node_count();
    wt.beta_tilde.resize(n);
    wt.grad_beta_tilde.resize(n);
    wt.grad_bt_norm2.resize(n);
    for (int node = 0; node < n; ++node)
    {
        const auto x = cs.coord(node);
        const double dx = x[0] - anchor[0];
        const double dy = cs.dim() > 1 ? x[1] - anchor[1] : 0.0;
        wt.beta_tilde[node] = dx * dx + dy * dy;
        wt.grad_beta_tilde[node] = {2.0 * dx, 2.0 * dy};
        wt.grad_bt_norm2[node] = 4.0 * (dx * dx + dy * dy);
    }
    wt.lap_beta_tilde = 2.0 * cs.dim();
    // Sup over the continuum section, not the lattice: staircase boundary
    // nodes can overhang the shape by up to h/2, and tying K to them would
    // make the weights h-dependent.  The quadratic phase is convex, so its
    // sup lives on the section's extreme points.
    switch (cs.kind())
    {
    case ShapeKind::interval: {
        const double L = cs.params()[0];
        wt.beta_tilde_sup = std::max(anchor[0] * anchor[0],
                                     (anchor[0] - L) * (anchor[0] - L));
        break;
    }
    case ShapeKind::rectangle: {
        const double lx = cs.params()[0];
        const double ly = cs.params()[1];
        wt.beta_tilde_sup = 0.0;
        for (double cx : {0.0, lx})
            for (double cy : {0.0, ly})
            {
                const double dx = cx - anchor[0];
                const double dy = cy - anchor[1];
                wt.beta_tilde_sup
                    = std::max(wt.beta_tilde_sup, dx * dx + dy * dy);
            }
        break;
    }
    case ShapeKind::disk: {
        const double reach
            = std::hypot(anchor[0], anchor[1]) + cs.params()[0];
        wt.beta_tilde_sup = reach * reach;
        break;
    }
    }
    wt.K = r * wt.beta_tilde_sup;

    if (2.0 * lambda * wt.K > 700.0)
    {
        std::ostringstream os;
        os << "weight overflow: 2 lambda K = " << 2.0 * lambda * wt.K
           << " exceeds the floating range; keep lambda at or below "
           << 350.0 / wt.K;
        throw std::invalid_argument(os.str());
    }
    wt.e2lk = std::exp(2.0 * lambda * wt.K);
    wt.exp_lambda_beta.resize(n);
    wt.min_eta_numerator = std::numeric_limits<double>::infinity();
    double num_max = 0;
    for (int node = 0; node < n; ++node)
    {
        wt.exp_lambda_beta[node]
            = std::exp(lambda * (wt.beta_tilde[node] + wt.K));
        const double num = wt.e2lk - wt.exp_lambda_beta[node];
        wt.min_eta_numerator = std::min(wt.min_eta_numerator, num);
        num_max = std::max(num_max, num);
    }
    // Structural sign facts; failure would be an implementation bug.
    require(wt.min_eta_numerator >= 0.0,
            "decaying weight lost positivity; the anchor margin r > 1 should"
            " prevent this");
    const double t0g = 1.0 / (wt.horizon * wt.horizon);
    wt.eta_t0_sup = num_max * t0g;
    require(wt.eta_t0_sup <= wt.e2lk * t0g,
            "t = 0 sup of the decaying weight exceeded its analytic cap");
    return wt;
}

std::vector<double> default_lambda_grid(double K)
{
    require(K > 0.0, "K must be positive");
    const double scale = std::min(1.0, 5.0 / K);
    return {scale, 2.0 * scale, 4.0 * scale, 8.0 * scale};
}

ConjugatedApplication apply_conjugated_pair(const Grid& grid,
                                            const SpaceTimeField& w,
                                            const SchrodingerWeights& weights,
                                            double s)
{
    const int nl = weights.n_levels;
    require(static_cast<long>(w.size())
                == static_cast<long>(grid.n_spatial()) * nl,
            "field size does not match the space-time layout");
    require(s >= 0.0, "s must be nonnegative");
    require_interior_support(grid, w, nl);

    // Overflow guard: e^{s eta} is only formed on the support of w.
    double eta_sup = 0;
    for (int f : grid.interior())
    {
        const int node = grid.cs_node_of(f);
        for (int j = 0; j < nl; ++j)
            if (!detail::is_zero(w[st_index(f, j, nl)]))
                eta_sup = std::max(eta_sup, weights.eta(node, j));
    }
    if (s * eta_sup > 700.0)
    {
        std::ostringstream os;
        os << "weight overflow: s * max eta on the state's support = "
           << s * eta_sup << "; keep s at or below " << 700.0 / eta_sup;
        throw std::invalid_argument(os.str());
    }

    SpaceTimeField z(w.size(), cplx(0, 0));
    for (int f : grid.interior())
    {
        const int node = grid.cs_node_of(f);
        for (int j = 0; j < nl; ++j)
        {
            const cplx wv = w[st_index(f, j, nl)];
            if (!detail::is_zero(wv))
                z[st_index(f, j, nl)]
                    = std::exp(s * weights.eta(node, j)) * wv;
        }
    }

    ConjugatedApplication out;
    out.m1.assign(w.size(), cplx(0, 0));
    out.m2.assign(w.size(), cplx(0, 0));
    out.residual.assign(w.size(), cplx(0, 0));
    const detail::StencilCtx ctx(grid, nl, grid.dt());
    const double voxel = grid.cell_volume() * grid.dt();
    double acc2 = 0;
    for (int f : grid.interior())
    {
        const int node = grid.cs_node_of(f);
        for (int j = 1; j + 1 < nl; ++j)
        {
            const auto ops = eval_pair(ctx, weights, w, s, f, j);
            const cplx lz = eval_free(ctx, z, f, j);
            const cplx res = ops.m1 + ops.m2
                             + std::exp(-s * weights.eta(node, j)) * lz;
            out.m1[st_index(f, j, nl)] = ops.m1;
            out.m2[st_index(f, j, nl)] = ops.m2;
            out.residual[st_index(f, j, nl)] = res;
            acc2 += std::norm(res);
        }
    }
    out.residual_l2 = std::sqrt(acc2 * voxel);
    return out;
}

FlattestDecade find_flattest_decade(std::span<const double> s,
                                    std::span<const double> ratio)
{
    require(s.size() == ratio.size(), "mismatched sweep arrays");
    FlattestDecade out;
    out.spread = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i)
    {
        int jj = -1;
        for (int k = i + 1; k < n; ++k)
            if (s[k] >= 10.0 * s[i] * (1.0 - 1e-12))
            {
                jj = k;
                break;
            }
        if (jj < 0)
            break;
        double lo = std::numeric_limits<double>::infinity(), hi = 0;
        bool usable = true;
        for (int k = i; k <= jj; ++k)
        {
            if (!(ratio[k] > 0))
            {
                usable = false;
                break;
            }
            lo = std::min(lo, ratio[k]);
            hi = std::max(hi, ratio[k]);
        }
        if (!usable)
            continue;
        const double spread = hi / lo;
        if (spread < out.spread)
        {
            out.spread = spread;
            out.begin = i;
            out.end = jj;
            out.s0 = s[i];
        }
    }
    return out;
}

WeightedRatioTable carleman_ratio_schrodinger(const Grid& grid,
                                              const NestedSubdomains& ns,
                                              const SpaceTimeField& w,
                                              const SchrodingerWeights& weights,
                                              std::span<const double> s_values)
{
    const int nl = weights.n_levels;
    require(static_cast<long>(w.size())
                == static_cast<long>(grid.n_spatial()) * nl,
            "field size does not match the space-time layout");
    require_interior_support(grid, w, nl);

    const detail::StencilCtx ctx(grid, nl, grid.dt());
    const double voxel = grid.cell_volume() * grid.dt();
    WeightedRatioTable table;
    table.rows.reserve(s_values.size());

    for (double s : s_values)
    {
        require(s > 0.0, "sweep values must be positive");
        WeightedRatioRow row;
        row.s = s;

        // Conjugated variable; eta >= 0 so the factor never overflows.
        SpaceTimeField v(w.size(), cplx(0, 0));
        for (int f : grid.interior())
        {
            const int node = grid.cs_node_of(f);
            for (int j = 0; j < nl; ++j)
                v[st_index(f, j, nl)]
                    = std::exp(-s * weights.eta(node, j))
                      * w[st_index(f, j, nl)];
        }

        double grad2 = 0, val2 = 0, m12 = 0, m22 = 0;
        double op2 = 0, ring_grad2 = 0, ring_val2 = 0;
        for (int f : grid.interior())
        {
            const int node = grid.cs_node_of(f);
            const bool deep = ns.core_member[2][node] != 0;
            const bool ring = ns.collar_member[2][node] != 0
                              && ns.collar_member[3][node] == 0;
            for (int j = 1; j + 1 < nl; ++j)
            {
                const double wgt2
                    = std::exp(-2.0 * s * weights.eta(node, j));
                const cplx wv = w[st_index(f, j, nl)];
                double gw2 = 0;
                if (deep || ring)
                {
                    const auto gw = detail::cs_gradient(ctx, w, f, j);
                    gw2 = std::norm(gw[0]) + std::norm(gw[1]);
                }
                if (deep)
                {
                    grad2 += wgt2 * gw2;
                    val2 += wgt2 * std::norm(wv);
                    const auto ops = eval_pair(ctx, weights, v, s, f, j);
                    m12 += std::norm(ops.m1);
                    m22 += std::norm(ops.m2);
                }
                op2 += wgt2 * std::norm(eval_free(ctx, w, f, j));
                if (ring)
                {
                    ring_grad2 += wgt2 * gw2;
                    ring_val2 += wgt2 * std::norm(wv);
                }
            }
        }
        row.lhs_grad = s * grad2 * voxel;
        row.lhs_val = s * s * s * val2 * voxel;
        row.lhs_m1 = m12 * voxel;
        row.lhs_m2 = m22 * voxel;
        row.lhs = row.lhs_grad + row.lhs_val + row.lhs_m1 + row.lhs_m2;
        row.rhs_op = op2 * voxel;
        row.rhs_ring_grad = ring_grad2 * voxel;
        row.rhs_ring_val = ring_val2 * voxel;
        row.rhs = row.rhs_op + row.rhs_ring_grad + row.rhs_ring_val;
        if (row.rhs > 0)
            row.ratio = row.lhs / row.rhs;
        else if (row.lhs > 0)
            row.violation_candidate = true;
        else
            row.degenerate = true;
        table.rows.push_back(row);
    }

    std::vector<double> ss, rr;
    for (const auto& row : table.rows)
    {
        ss.push_back(row.s);
        rr.push_back(row.degenerate || row.violation_candidate ? -1.0
                                                               : row.ratio);
    }
    table.flattest = find_flattest_decade(ss, rr);
    return table;
}

SaturationScan scan_saturation_inequality(int m, int order, double y_max)
{
    require(m >= 1 && order >= 1, "exponents must be positive");
    require(y_max > 1.0, "scan must cross y = 1");
    SaturationScan out;
    // Integer stepping so y = 1.0, where the left branch peaks, is sampled
    // exactly; an accumulated float step drifts past it.
    const double step = 1e-3;
    const int n_steps = static_cast<int>(std::floor(y_max / step + 1e-9));
    for (int k = 1; k <= n_steps; ++k)
    {
        const double y = k * step;
        const double num = -std::expm1(-std::pow(y, 2.0 * m));
        const double ratio = num / std::pow(y, order);
        if (y <= 1.0)
            out.max_ratio_below_1 = std::max(out.max_ratio_below_1, ratio);
        if (y >= 1.0)
            out.max_ratio_above_1 = std::max(out.max_ratio_above_1, ratio);
    }
    return out;
}

} // namespace wgstab
