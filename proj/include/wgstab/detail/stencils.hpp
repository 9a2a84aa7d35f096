//---------------------------------------------------------------------------//
// Copyright wgstab contributors
// SPDX-License-Identifier: Apache-2.0
//---------------------------------------------------------------------------//
//! \file stencils.hpp
//! Shared finite-difference kernels over space-time fields laid out as
//! flat * n_levels + level. Both weighted operator families build on these
//! so that their zero-parameter collapse checks compare bitwise-identical
//! arithmetic, not merely values that agree to rounding.
//---------------------------------------------------------------------------//
#pragma once

#include "wgstab/common.hpp"
#include "wgstab/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

namespace wgstab
{

//! Space-time vector indexed as flat_spatial * n_levels + level.
using SpaceTimeField = std::vector<cplx>;

inline int st_index(int flat, int j, int n_levels)
{
    return flat * n_levels + j;
}

namespace detail
{

inline bool is_zero(cplx v)
{
    return v.real() == 0.0 && v.imag() == 0.0;
}

//! Stencil context binding a spatial grid to a time-like lattice. The time
//! axis is abstract (physical time on one side, transformed time on the
//! other); only its spacing enters.
struct StencilCtx
{
    const Grid& grid;
    int n_levels;
    double ih2, iha2, i2h, i2dt;

    StencilCtx(const Grid& g, int nl, double level_spacing)
        : grid(g)
        , n_levels(nl)
        , ih2(1.0 / (g.cross_section().spacing() * g.cross_section().spacing()))
        , iha2(1.0 / (g.axial_spacing() * g.axial_spacing()))
        , i2h(0.5 / g.cross_section().spacing())
        , i2dt(0.5 / level_spacing)
    {
    }
};

inline cplx time_derivative(const StencilCtx& c,
                            const SpaceTimeField& v,
                            int f,
                            int j)
{
    return (v[st_index(f, j + 1, c.n_levels)]
            - v[st_index(f, j - 1, c.n_levels)])
           * c.i2dt;
}

//! Full spatial Laplacian; lattice sites outside the shape contribute zero
//! (the fields handled here vanish on the wall and caps).
inline cplx laplacian(const StencilCtx& c, const SpaceTimeField& v, int f, int j)
{
    const auto& cs = c.grid.cross_section();
    const int node = c.grid.cs_node_of(f);
    const int ia = c.grid.axial_of(f);
    cplx acc = -2.0 * (cs.dim() * c.ih2 + c.iha2)
               * v[st_index(f, j, c.n_levels)];
    for (int axis = 0; axis < cs.dim(); ++axis)
        for (int dir : {-1, +1})
        {
            const int nb = cs.neighbor(node, axis, dir);
            if (nb >= 0)
                acc += c.ih2 * v[st_index(c.grid.flat(nb, ia), j, c.n_levels)];
        }
    acc += c.iha2
           * (v[st_index(c.grid.flat(node, ia - 1), j, c.n_levels)]
              + v[st_index(c.grid.flat(node, ia + 1), j, c.n_levels)]);
    return acc;
}

//! Centered cross-section gradient; missing lattice sites read zero.
inline std::array<cplx, 2> cs_gradient(const StencilCtx& c,
                                       const SpaceTimeField& v,
                                       int f,
                                       int j)
{
    const auto& cs = c.grid.cross_section();
    const int node = c.grid.cs_node_of(f);
    const int ia = c.grid.axial_of(f);
    std::array<cplx, 2> g{cplx(0, 0), cplx(0, 0)};
    for (int axis = 0; axis < cs.dim(); ++axis)
    {
        const int e = cs.neighbor(node, axis, +1);
        const int w = cs.neighbor(node, axis, -1);
        const cplx ve
            = e >= 0 ? v[st_index(c.grid.flat(e, ia), j, c.n_levels)] : cplx(0);
        const cplx vw
            = w >= 0 ? v[st_index(c.grid.flat(w, ia), j, c.n_levels)] : cplx(0);
        g[axis] = (ve - vw) * c.i2h;
    }
    return g;
}

//! Bilinear (linear in 1-D) sampling stencil at a cross-section point;
//! lattice sites outside the shape contribute the Dirichlet zero.
struct CsSample
{
    std::array<int, 4> node{-1, -1, -1, -1};
    std::array<double, 4> w{0, 0, 0, 0};
};

inline CsSample make_cs_sample(const CrossSection& cs,
                               const std::array<double, 2>& q)
{
    CsSample s;
    const double h = cs.spacing();
    const auto o = cs.origin();
    const auto ext = cs.lattice_extent();
    const double fx = (q[0] - o[0]) / h;
    int ix = static_cast<int>(std::floor(fx));
    ix = std::clamp(ix, 0, std::max(0, ext[0] - 2));
    const double tx = fx - ix;
    if (cs.dim() == 1)
    {
        s.node[0] = cs.node_at(ix, 0);
        s.node[1] = cs.node_at(ix + 1, 0);
        s.w[0] = 1.0 - tx;
        s.w[1] = tx;
        return s;
    }
    const double fy = (q[1] - o[1]) / h;
    int iy = static_cast<int>(std::floor(fy));
    iy = std::clamp(iy, 0, std::max(0, ext[1] - 2));
    const double ty = fy - iy;
    s.node[0] = cs.node_at(ix, iy);
    s.node[1] = cs.node_at(ix + 1, iy);
    s.node[2] = cs.node_at(ix, iy + 1);
    s.node[3] = cs.node_at(ix + 1, iy + 1);
    s.w[0] = (1.0 - tx) * (1.0 - ty);
    s.w[1] = tx * (1.0 - ty);
    s.w[2] = (1.0 - tx) * ty;
    s.w[3] = tx * ty;
    return s;
}

} // namespace detail

} // namespace wgstab
